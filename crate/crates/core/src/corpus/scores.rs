use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Scores indexed by (segment, system). Absent cells are `None`, never a
/// sentinel value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreMatrix {
    segments: Vec<String>,
    systems: Vec<String>,
    seg_index: HashMap<String, usize>,
    sys_index: HashMap<String, usize>,
    // Row-major over (segment, system); grown on demand.
    cells: Vec<Vec<Option<f64>>>,
}

impl ScoreMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a matrix from `(seg_id, system_id, score)` triples. Segment and
    /// system order is first-seen order.
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String, f64)>,
    {
        let mut m = ScoreMatrix::new();
        for (seg, sys, score) in entries {
            m.insert(seg, sys, score)?;
        }
        Ok(m)
    }

    /// Sets one cell; fails on duplicates and non-finite scores.
    pub fn insert(&mut self, seg_id: String, system_id: String, score: f64) -> Result<()> {
        if !score.is_finite() {
            return Err(Error::InvalidInput(format!(
                "score for ({seg_id}, {system_id}) is not finite"
            )));
        }
        let i = match self.seg_index.get(&seg_id) {
            Some(&i) => i,
            None => {
                self.seg_index.insert(seg_id.clone(), self.segments.len());
                self.segments.push(seg_id.clone());
                self.cells.push(vec![None; self.systems.len()]);
                self.segments.len() - 1
            }
        };
        let j = match self.sys_index.get(&system_id) {
            Some(&j) => j,
            None => {
                self.sys_index.insert(system_id.clone(), self.systems.len());
                self.systems.push(system_id.clone());
                for row in &mut self.cells {
                    row.push(None);
                }
                self.systems.len() - 1
            }
        };
        let cell = &mut self.cells[i][j];
        if cell.is_some() {
            return Err(Error::InvalidInput(format!(
                "duplicate score for ({seg_id}, {system_id})"
            )));
        }
        *cell = Some(score);
        Ok(())
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn systems(&self) -> &[String] {
        &self.systems
    }

    pub fn get(&self, seg_id: &str, system_id: &str) -> Option<f64> {
        let i = *self.seg_index.get(seg_id)?;
        let j = *self.sys_index.get(system_id)?;
        self.cells[i][j]
    }

    /// Number of present cells.
    pub fn len(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Present cells in segment-major order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.cells.iter().enumerate().flat_map(move |(i, row)| {
            row.iter().enumerate().filter_map(move |(j, c)| {
                c.map(|v| (self.segments[i].as_str(), self.systems[j].as_str(), v))
            })
        })
    }

    /// Renders `seg_id<TAB>system_id<TAB>score` lines with a header row.
    /// Scores use Rust's shortest round-trip float formatting.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("seg_id\tsystem_id\tscore\n");
        for (seg, sys, v) in self.entries() {
            writeln!(out, "{seg}\t{sys}\t{v:?}").unwrap();
        }
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    /// Parses a three-column score table. A leading `seg_id system_id score`
    /// header row is optional.
    pub fn parse_tsv(path: &Path, text: &str) -> Result<Self> {
        let mut m = ScoreMatrix::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message,
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if line_no == 1 && cols.len() == 3 && cols[0] == "seg_id" && cols[1] == "system_id" {
                continue;
            }
            if cols.len() != 3 {
                return Err(err(format!("expected 3 tab-separated columns, found {}", cols.len())));
            }
            if cols[0].is_empty() || cols[1].is_empty() {
                return Err(err("empty seg_id or system_id".into()));
            }
            let score: f64 = cols[2]
                .trim()
                .parse()
                .map_err(|_| err(format!("invalid score {:?}", cols[2])))?;
            m.insert(cols[0].to_owned(), cols[1].to_owned(), score)
                .map_err(|e| err(e.to_string()))?;
        }
        Ok(m)
    }

    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(path, &text)
    }
}
