//! Synthetic corpora with a known relation between source, hypothesis, and
//! human score.
//!
//! Each segment draws a latent unit source vector `s`. Each system draws a
//! target cosine `c ~ U[-1, 1]` and a hypothesis `h = c·s + sqrt(1 - c²)·u`
//! with `u` a unit vector orthogonal to `s`. The human score is
//! `cos(s, h) + N(0, noise_sd²)`. The text and speech sources either carry
//! `s` (`Channel::Signal`) or are independent random vectors
//! (`Channel::Noise`).

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::corpus::{Corpus, EmbeddingStore, SegmentRecord};
use crate::error::{Error, Result};
use crate::estimator::EmbeddingSources;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Signal,
    Noise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub segments: usize,
    pub systems: usize,
    pub noise_sd: f64,
    pub text: Channel,
    /// `None` leaves records without an `audio_key`.
    pub speech: Option<Channel>,
    /// Frames per speech entry. Signal frames are `s` plus isotropic noise
    /// of norm about `frame_noise`.
    pub frames: usize,
    pub frame_noise: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(dim: usize, segments: usize, systems: usize) -> Self {
        SyntheticConfig {
            dim,
            segments,
            systems,
            noise_sd: 0.05,
            text: Channel::Signal,
            speech: None,
            frames: 1,
            frame_noise: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub corpus: Corpus,
    pub hypothesis: EmbeddingStore,
    pub text: EmbeddingStore,
    pub audio: Option<EmbeddingStore>,
}

impl SyntheticSet {
    pub fn sources(&self) -> EmbeddingSources<'_> {
        EmbeddingSources {
            hypothesis: &self.hypothesis,
            text: Some(&self.text),
            audio: self.audio.as_ref(),
        }
    }

    /// Splits the corpus into consecutive blocks of whole segments.
    pub fn split(&self, segments_per_part: &[usize]) -> Result<Vec<Corpus>> {
        let total: usize = segments_per_part.iter().sum();
        let seg_ids = self.corpus.seg_ids();
        if total > seg_ids.len() {
            return Err(Error::InvalidInput(format!(
                "requested {total} segments, corpus has {}",
                seg_ids.len()
            )));
        }
        let mut part_of = std::collections::HashMap::new();
        let mut next = 0;
        for (p, &n) in segments_per_part.iter().enumerate() {
            for id in &seg_ids[next..next + n] {
                part_of.insert(*id, p);
            }
            next += n;
        }
        let mut parts = vec![Vec::new(); segments_per_part.len()];
        for r in self.corpus.records() {
            if let Some(&p) = part_of.get(r.seg_id.as_str()) {
                parts[p].push(r.clone());
            }
        }
        parts.into_iter().map(Corpus::new).collect()
    }
}

fn unit<R: Rng>(d: usize, rng: &mut R) -> Array1<f64> {
    loop {
        let v: Array1<f64> = Array1::from_shape_simple_fn(d, || StandardNormal.sample(rng));
        let n = v.dot(&v).sqrt();
        if n > 1e-8 {
            return v / n;
        }
    }
}

fn to_f32_row(v: &Array1<f64>) -> Array2<f32> {
    Array2::from_shape_fn((1, v.len()), |(_, j)| v[j] as f32)
}

fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.dot(b) / (a.dot(a).sqrt() * b.dot(b).sqrt())
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticSet> {
    if cfg.dim < 2 || cfg.segments == 0 || cfg.systems == 0 || cfg.frames == 0 {
        return Err(Error::InvalidInput(
            "synthetic data needs dim >= 2 and positive segment, system, and frame counts".into(),
        ));
    }
    let d = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut hypothesis = EmbeddingStore::new(d)?;
    let mut text = EmbeddingStore::new(d)?;
    let mut audio = cfg.speech.map(|_| EmbeddingStore::new(d)).transpose()?;
    let mut records = Vec::with_capacity(cfg.segments * cfg.systems);

    for j in 0..cfg.segments {
        let seg_id = format!("seg{j:05}");
        let src_text = format!("source sentence {j}");
        let audio_key = format!("{seg_id}.wav");
        let s = unit(d, &mut rng);
        let text_vec = match cfg.text {
            Channel::Signal => s.clone(),
            Channel::Noise => unit(d, &mut rng),
        };
        // Scores use the stored (f32) vectors so they match what a model sees.
        let s_stored = to_f32_row(&s).row(0).mapv(f64::from);
        text.insert(src_text.clone(), to_f32_row(&text_vec))?;
        if let (Some(store), Some(channel)) = (audio.as_mut(), cfg.speech) {
            let mut frames = Array2::<f32>::zeros((cfg.frames, d));
            for mut row in frames.rows_mut() {
                let v = match channel {
                    Channel::Signal => &s + &(unit(d, &mut rng) * cfg.frame_noise),
                    Channel::Noise => unit(d, &mut rng),
                };
                row.assign(&v.mapv(|x| x as f32));
            }
            store.insert(audio_key.clone(), frames)?;
        }
        for k in 0..cfg.systems {
            let c: f64 = rng.random_range(-1.0..1.0);
            let mut u = unit(d, &mut rng);
            u = &u - &(&s * u.dot(&s));
            u /= u.dot(&u).sqrt();
            let h = &s * c + &u * (1.0 - c * c).sqrt();
            let mt_text = format!("hypothesis {j} from system {k}");
            let h_row = to_f32_row(&h);
            let score = cosine(&s_stored, &h_row.row(0).mapv(f64::from)) + noise.sample(&mut rng);
            hypothesis.insert(mt_text.clone(), h_row)?;
            records.push(SegmentRecord {
                seg_id: seg_id.clone(),
                system_id: format!("sys{k}"),
                src_text: Some(src_text.clone()),
                mt_text,
                human_score: Some(score),
                lang_pair: "en-de".into(),
                audio_key: cfg.speech.map(|_| audio_key.clone()),
            });
        }
    }
    Ok(SyntheticSet {
        corpus: Corpus::new(records)?,
        hypothesis,
        text,
        audio,
    })
}
