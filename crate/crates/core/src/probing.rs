//! MLP probes on frozen representations.
//!
//! A probe is a one-hidden-layer ReLU network trained with cross-entropy to
//! predict a categorical label from a fixed representation. Accuracy is
//! averaged over several seeds that share one stratified train/test split and
//! is compared against the majority-class baseline of the test labels.

use std::collections::HashMap;
use std::fmt::Debug;
use std::fs;
use std::hash::Hash;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::read_embeddings;
use crate::error::{Error, Result};
use crate::nn::{dropout_mask, Adam, AdamSettings, Affine};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDataset {
    representations: Array2<f64>,
    labels: Vec<usize>,
    class_set: Vec<String>,
}

impl ProbeDataset {
    /// Classes are numbered in first-seen order.
    pub fn new<S: AsRef<str>>(representations: Array2<f64>, labels: &[S]) -> Result<Self> {
        if representations.nrows() != labels.len() {
            return Err(Error::LengthMismatch {
                left: representations.nrows(),
                right: labels.len(),
            });
        }
        if representations.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("representations contain non-finite values".into()));
        }
        let mut class_set: Vec<String> = Vec::new();
        let mut index = HashMap::new();
        let ids = labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                *index.entry(l.to_string()).or_insert_with(|| {
                    class_set.push(l.to_string());
                    class_set.len() - 1
                })
            })
            .collect();
        if class_set.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a probe needs at least 2 classes, found {}",
                class_set.len()
            )));
        }
        Ok(ProbeDataset {
            representations,
            labels: ids,
            class_set,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.representations.ncols()
    }

    pub fn representations(&self) -> ArrayView2<'_, f64> {
        self.representations.view()
    }

    /// Class index of each row.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_set(&self) -> &[String] {
        &self.class_set
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub batch: usize,
    /// Full passes over the training split; there is no early stopping.
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub train_ratio: f64,
    pub split_seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            hidden: 256,
            dropout: 0.1,
            lr: 1e-3,
            batch: 256,
            epochs: 100,
            seeds: vec![0, 1, 2],
            train_ratio: 0.8,
            split_seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch == 0 || self.epochs == 0 {
            return Err(Error::Config("hidden, batch, and epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} must lie in [0, 1)", self.dropout)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::Config(format!("train_ratio {} must lie in (0, 1)", self.train_ratio)));
        }
        Ok(())
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        use crate::kv;
        let mut m = kv::parse(text)?;
        let mut c = ProbeConfig::default();
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = kv::take(&mut m, stringify!($field))? {
                    c.$field = v;
                }
            };
        }
        set!(hidden);
        set!(dropout);
        set!(lr);
        set!(batch);
        set!(epochs);
        set!(train_ratio);
        set!(split_seed);
        if let Some(s) = kv::take_list(&mut m, "seeds")? {
            c.seeds = s;
        }
        kv::finish(m)?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class split: each class contributes `round(ratio · n_c)` training
/// items, kept within `[1, n_c - 1]`. Indices come back sorted.
pub fn stratified_split<T: Eq + Hash + Debug>(labels: &[T], ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidInput(format!("split ratio {ratio} must lie in (0, 1)")));
    }
    let mut classes: Vec<(&T, Vec<usize>)> = Vec::new();
    let mut index: HashMap<&T, usize> = HashMap::new();
    for (i, l) in labels.iter().enumerate() {
        let k = *index.entry(l).or_insert_with(|| {
            classes.push((l, Vec::new()));
            classes.len() - 1
        });
        classes[k].1.push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (name, mut members) in classes {
        let n = members.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!("class {name:?} has a single member")));
        }
        members.shuffle(&mut rng);
        let k = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
        split.train.extend_from_slice(&members[..k]);
        split.test.extend_from_slice(&members[k..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Frequency of the most common label.
pub fn majority_baseline<T: Eq + Hash>(labels: &[T]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("majority baseline of an empty label list".into()));
    }
    let mut counts = HashMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    let best = counts.values().copied().max().expect("non-empty");
    Ok(best as f64 / labels.len() as f64)
}

/// Fraction of positions where `predicted` equals `gold`.
pub fn accuracy<T: PartialEq>(gold: &[T], predicted: &[T]) -> Result<f64> {
    if gold.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: predicted.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::InvalidInput("accuracy of an empty list".into()));
    }
    let hits = gold.iter().zip(predicted).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// A trained probe.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub hidden: Affine,
    pub output: Affine,
}

impl Probe {
    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let h = self.hidden.forward(x).mapv_into(|v| v.max(0.0));
        self.output.forward(h.view())
    }

    /// Arg-max class index per row; ties go to the lowest index.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        self.logits(x)
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                    .0
            })
            .collect()
    }
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let z = row.sum();
        row /= z;
    }
    p
}

pub fn train_probe(dataset: &ProbeDataset, split: &Split, cfg: &ProbeConfig, seed: u64) -> Result<Probe> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(Error::InvalidInput("empty training split".into()));
    }
    if let Some(&i) = split.train.iter().chain(&split.test).find(|&&i| i >= dataset.len()) {
        return Err(Error::InvalidInput(format!("split index {i} is out of range")));
    }
    let classes = dataset.class_set.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = Probe {
        hidden: Affine::uniform(dataset.width(), cfg.hidden, &mut rng),
        output: Affine::uniform(cfg.hidden, classes, &mut rng),
    };
    let mut grad = Probe {
        hidden: Affine::zeros(dataset.width(), cfg.hidden),
        output: Affine::zeros(cfg.hidden, classes),
    };
    let mut opt = Adam::new(AdamSettings::adam(cfg.lr));
    let mut order = split.train.clone();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (step, chunk) in order.chunks(cfg.batch).enumerate() {
            let x = dataset.representations.select(Axis(0), chunk);
            let z = probe.hidden.forward(x.view());
            let a = z.mapv(|v| v.max(0.0));
            let mask = (cfg.dropout > 0.0).then(|| dropout_mask(a.dim(), cfg.dropout, &mut rng));
            let a = match &mask {
                Some(m) => &a * m,
                None => a,
            };
            let logits = probe.output.forward(a.view());
            let mut p = softmax_rows(&logits);
            let n = chunk.len() as f64;
            let mut loss = 0.0;
            for (r, &i) in chunk.iter().enumerate() {
                let y = dataset.labels[i];
                loss -= p[[r, y]].max(f64::MIN_POSITIVE).ln();
                p[[r, y]] -= 1.0;
            }
            if !(loss / n).is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step: step + 1 });
            }
            let dlogits = p / n;
            for g in [&mut grad.hidden, &mut grad.output] {
                g.weight.fill(0.0);
                g.bias.fill(0.0);
            }
            let mut da = probe.output.backward(a.view(), dlogits.view(), &mut grad.output);
            if let Some(m) = &mask {
                da *= m;
            }
            da.zip_mut_with(&z, |g, &zv| {
                if zv <= 0.0 {
                    *g = 0.0
                }
            });
            probe.hidden.accumulate(x.view(), da.view(), &mut grad.hidden);
            let grads = [
                grad.hidden.weight.as_slice().unwrap(),
                grad.hidden.bias.as_slice().unwrap(),
                grad.output.weight.as_slice().unwrap(),
                grad.output.bias.as_slice().unwrap(),
            ];
            let Probe { hidden, output } = &mut probe;
            opt.step(
                &mut [
                    hidden.weight.as_slice_mut().unwrap(),
                    hidden.bias.as_slice_mut().unwrap(),
                    output.weight.as_slice_mut().unwrap(),
                    output.bias.as_slice_mut().unwrap(),
                ],
                &grads,
            );
        }
    }
    Ok(probe)
}

/// Test accuracy of a probe on `indices`.
pub fn evaluate_probe(probe: &Probe, dataset: &ProbeDataset, indices: &[usize]) -> Result<f64> {
    let x = dataset.representations.select(Axis(0), indices);
    let gold: Vec<usize> = indices.iter().map(|&i| dataset.labels[i]).collect();
    accuracy(&gold, &probe.predict(x.view()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub feature: String,
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
    pub baseline: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracies: Vec<f64>,
}

/// Trains one probe per seed on a shared split and summarizes test accuracy.
pub fn probe_accuracy(dataset: &ProbeDataset, cfg: &ProbeConfig) -> Result<ProbeResult> {
    probe_accuracy_with(dataset, cfg, |f| cfg.seeds.iter().map(|&s| f(s)).collect())
}

/// Like [`probe_accuracy`], with the per-seed runs driven by `run_all`
/// (for example in parallel). Results must come back in seed order.
pub fn probe_accuracy_with<F>(dataset: &ProbeDataset, cfg: &ProbeConfig, run_all: F) -> Result<ProbeResult>
where
    F: FnOnce(&(dyn Fn(u64) -> Result<f64> + Sync)) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    let names: Vec<&str> = dataset.labels.iter().map(|&l| dataset.class_set[l].as_str()).collect();
    let split = stratified_split(&names, cfg.train_ratio, cfg.split_seed)?;
    let run = |seed: u64| -> Result<f64> {
        let probe = train_probe(dataset, &split, cfg, seed)?;
        evaluate_probe(&probe, dataset, &split.test)
    };
    let accuracies = run_all(&run)?;
    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let std = (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    let test_labels: Vec<usize> = split.test.iter().map(|&i| dataset.labels[i]).collect();
    Ok(ProbeResult {
        feature: String::new(),
        mean,
        std,
        baseline: majority_baseline(&test_labels)?,
        n_train: split.train.len(),
        n_test: split.test.len(),
        accuracies,
    })
}

/// Reads a probe dataset from an embedding container and a `key<TAB>label`
/// file. Rows follow the label file; multi-frame entries are mean-pooled.
/// A first line of `key<TAB>label` is treated as a header.
pub fn load_probe_dataset(embeddings: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<ProbeDataset> {
    let store = read_embeddings(embeddings)?;
    let path = labels.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut keys = Vec::new();
    let mut names = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line == "key\tlabel") {
            continue;
        }
        let Some((k, l)) = line.split_once('\t') else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected key<TAB>label".into(),
            });
        };
        keys.push(k.to_string());
        names.push(l.to_string());
    }
    let missing: Vec<String> = keys.iter().filter(|k| !store.contains_key(k)).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingEmbeddings(missing));
    }
    let mut reps = Array2::zeros((keys.len(), store.dim()));
    for (mut row, k) in reps.rows_mut().into_iter().zip(&keys) {
        let frames = store.get(k).expect("checked");
        let mean: Array1<f64> = frames.mapv(f64::from).mean_axis(Axis(0)).expect("frames >= 1");
        row.assign(&mean);
    }
    ProbeDataset::new(reps, &names)
}
