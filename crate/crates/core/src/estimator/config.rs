use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv::{self, KeyValues};

/// How source representations are combined before the estimator head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Source text embedding only.
    TextOnly,
    /// Projected, pooled speech embedding only.
    SpeechOnly,
    /// No source at all: the source slot of the interaction is zero. Used as
    /// a source-blind control.
    HypothesisOnly,
    /// `(s_t + s_a) / 2`.
    Avg,
    /// `s_t + s_a`.
    Sum,
    /// `W [s_t; s_a] + b`.
    ConcatProjection,
    /// Projected speech added to the hypothesis embedding; the head sees a
    /// single `d`-wide vector instead of the four-way features.
    Additive,
}

impl Fusion {
    pub const ALL: [Fusion; 7] = [
        Fusion::TextOnly,
        Fusion::SpeechOnly,
        Fusion::HypothesisOnly,
        Fusion::Avg,
        Fusion::Sum,
        Fusion::ConcatProjection,
        Fusion::Additive,
    ];

    pub fn uses_text(self) -> bool {
        matches!(
            self,
            Fusion::TextOnly | Fusion::Avg | Fusion::Sum | Fusion::ConcatProjection
        )
    }

    pub fn uses_speech(self) -> bool {
        matches!(
            self,
            Fusion::SpeechOnly | Fusion::Avg | Fusion::Sum | Fusion::ConcatProjection | Fusion::Additive
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Fusion::TextOnly => "text_only",
            Fusion::SpeechOnly => "speech_only",
            Fusion::HypothesisOnly => "hypothesis_only",
            Fusion::Avg => "avg",
            Fusion::Sum => "sum",
            Fusion::ConcatProjection => "concat_projection",
            Fusion::Additive => "additive",
        }
    }
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Fusion {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Fusion::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown fusion {s:?}"))
    }
}

/// Aggregation of frame-level speech embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Average,
    Attention,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Average => "average",
            Pooling::Attention => "attention",
        })
    }
}

impl FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "average" => Ok(Pooling::Average),
            "attention" => Ok(Pooling::Attention),
            _ => Err(format!("unknown pooling {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Mse,
}

impl FromStr for Loss {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mse" => Ok(Loss::Mse),
            _ => Err(format!("unknown loss {s:?}")),
        }
    }
}

/// Architecture and training hyperparameters of the estimator.
///
/// Defaults follow the reference recipe: hidden sizes `[2048, 1024]`, Tanh,
/// dropout 0.1, AdamW at 1.5e-5, global-norm clipping at 1.0, effective batch
/// 16, at most 20 epochs with patience 2 on validation τ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub dim: usize,
    pub fusion: Fusion,
    pub pooling: Pooling,
    pub hidden_sizes: Vec<usize>,
    pub dropout: f64,
    pub loss: Loss,
    pub lr: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub effective_batch: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables
    /// early stopping.
    pub patience: usize,
    pub seed: u64,
}

impl EstimatorConfig {
    pub fn new(dim: usize) -> Self {
        EstimatorConfig {
            dim,
            fusion: Fusion::TextOnly,
            pooling: Pooling::Average,
            hidden_sizes: vec![2048, 1024],
            dropout: 0.1,
            loss: Loss::Mse,
            lr: 1.5e-5,
            weight_decay: 0.01,
            grad_clip: 1.0,
            effective_batch: 16,
            max_epochs: 20,
            patience: 2,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.dim == 0 {
            return fail("dim must be positive".into());
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return fail(format!("hidden_sizes {:?} must be non-empty and positive", self.hidden_sizes));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr {} must be positive", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay {} must be non-negative", self.weight_decay));
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return fail(format!("grad_clip {} must be positive", self.grad_clip));
        }
        if self.effective_batch == 0 || self.max_epochs == 0 {
            return fail("effective_batch and max_epochs must be positive".into());
        }
        Ok(())
    }

    /// Width of the estimator head's input.
    pub fn head_input(&self) -> usize {
        match self.fusion {
            Fusion::Additive => self.dim,
            _ => 4 * self.dim,
        }
    }

    /// Parses a key-value file. `dim` is required; other keys default.
    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let dim = kv::take(&mut kv, "dim")?.ok_or_else(|| Error::Config("missing key dim".into()))?;
        let mut c = EstimatorConfig::new(dim);
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = kv::take(&mut kv, stringify!($field))? {
                    c.$field = v;
                }
            };
        }
        set!(fusion);
        set!(pooling);
        set!(dropout);
        set!(loss);
        set!(lr);
        set!(weight_decay);
        set!(grad_clip);
        set!(effective_batch);
        set!(max_epochs);
        set!(patience);
        set!(seed);
        if let Some(h) = kv::take_list(&mut kv, "hidden_sizes")? {
            c.hidden_sizes = h;
        }
        kv::finish(kv)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        Self::from_kv(kv::parse(text)?)
    }

    pub fn to_kv(&self) -> KeyValues {
        let hidden: Vec<String> = self.hidden_sizes.iter().map(|h| h.to_string()).collect();
        [
            ("dim", self.dim.to_string()),
            ("fusion", self.fusion.to_string()),
            ("pooling", self.pooling.to_string()),
            ("hidden_sizes", hidden.join(",")),
            ("dropout", self.dropout.to_string()),
            ("loss", "mse".to_string()),
            ("lr", self.lr.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
            ("effective_batch", self.effective_batch.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}
