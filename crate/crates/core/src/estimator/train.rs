use std::time::Instant;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{EstimatorModel, Example, Params};
use super::{predict, EmbeddingSources};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::metrics::segment_tau;
use crate::nn::{clip_global_norm, Adam, AdamSettings};

/// One line of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean squared error over the epoch's training steps (dropout active).
    pub train_loss: f64,
    /// Segment-level τ on the validation set; `None` if no group was usable.
    pub val_tau: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch, or the last epoch if the
    /// validation τ was never defined.
    pub model: EstimatorModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    /// Wall-clock seconds per epoch. Kept apart from `history` so the
    /// history stays reproducible.
    pub epoch_seconds: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopCheck {
    pub improved: bool,
    pub stop: bool,
}

/// Patience-based early stopping on a score where higher is better.
/// Only strict improvements reset the counter; a patience of 0 never stops.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: Option<usize>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            best_epoch: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, score: Option<f64>) -> StopCheck {
        let improved = match (score, self.best) {
            (Some(s), None) => !s.is_nan(),
            (Some(s), Some(b)) => s > b,
            (None, _) => false,
        };
        if improved {
            self.best = score;
            self.best_epoch = Some(epoch);
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        StopCheck {
            improved,
            stop: self.patience > 0 && self.stale >= self.patience,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }
}

/// Trains on resolved examples. `validate` is called after every epoch and
/// returns the score used for early stopping.
pub fn fit<F>(mut model: EstimatorModel, examples: &[Example], targets: &[f64], mut validate: F) -> Result<TrainOutcome>
where
    F: FnMut(&EstimatorModel) -> Result<Option<f64>>,
{
    if examples.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: examples.len(),
            right: targets.len(),
        });
    }
    if examples.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let cfg = model.config().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut opt = Adam::new(AdamSettings::adamw(cfg.lr, cfg.weight_decay));
    let mut grad = Params::zeros(&cfg);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = None;
    let mut history = Vec::new();
    let mut epoch_seconds = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, chunk) in order.chunks(cfg.effective_batch).enumerate() {
            let step = step + 1;
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let (y, cache) = match model.forward_batch(&batch, Some(&mut rng), true) {
                Err(Error::NonFinite { .. }) => return Err(Error::NonFiniteLoss { epoch, step }),
                other => other?,
            };
            let t: Array1<f64> = chunk.iter().map(|&i| targets[i]).collect();
            let (loss, dy) = EstimatorModel::mse(&y, &t);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            total += loss * chunk.len() as f64;
            grad.slices_mut().into_iter().for_each(|g| g.fill(0.0));
            model.backward(&cache.expect("kept"), &dy, &mut grad);
            clip_global_norm(&mut grad.slices_mut(), cfg.grad_clip);
            opt.step(&mut model.params.slices_mut(), &grad.slices());
            model.params.round_to_f32();
            if !model.params.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
        }
        let train_loss = total / examples.len() as f64;
        let val_tau = validate(&model)?;
        epoch_seconds.push(started.elapsed().as_secs_f64());
        log::info!(
            "epoch {epoch}: train_loss {train_loss:.6}, val_tau {}",
            val_tau.map_or("undefined".to_string(), |t| format!("{t:.4}"))
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_tau,
        });
        let check = stopper.observe(epoch, val_tau);
        if check.improved {
            best = Some(model.clone());
        }
        if check.stop {
            stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    Ok(TrainOutcome {
        model: best.unwrap_or(model),
        history,
        best_epoch: stopper.best_epoch(),
        stopped_early,
        epoch_seconds,
    })
}

/// Trains on `train` against its human scores, selecting on the segment-level
/// τ of `val`.
pub fn train(
    model: EstimatorModel,
    train: &Corpus,
    val: &Corpus,
    sources: &EmbeddingSources<'_>,
) -> Result<TrainOutcome> {
    if val.is_empty() {
        return Err(Error::InvalidInput("validation set is empty".into()));
    }
    let targets = train
        .records()
        .iter()
        .map(|r| {
            r.human_score.ok_or_else(|| {
                Error::InvalidRecord(format!("record ({}, {}) has no human_score", r.seg_id, r.system_id))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let examples = sources.resolve_records(model.config(), train.records())?;
    // Fail on unresolvable validation keys before spending time on training.
    sources.resolve_records(model.config(), val.records())?;
    let human = val.human_scores()?;
    fit(model, &examples, &targets, |m| {
        Ok(segment_tau(&human, &predict(m, val, sources)?).value)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{EstimatorConfig, Fusion};
    use ndarray::Array2;
    use rand::Rng;

    #[test]
    fn early_stopping_contract() {
        let mut s = EarlyStopping::new(2);
        let seq = [0.3, 0.5, 0.5, 0.4];
        let checks: Vec<StopCheck> = seq.iter().enumerate().map(|(i, &t)| s.observe(i + 1, Some(t))).collect();
        assert_eq!(checks.iter().map(|c| c.stop).collect::<Vec<_>>(), [false, false, false, true]);
        assert_eq!(s.best_epoch(), Some(2));
        assert_eq!(s.best(), Some(0.5));

        let mut never = EarlyStopping::new(0);
        assert!((1..50).all(|e| !never.observe(e, Some(0.1)).stop));
    }

    #[test]
    fn fit_stops_and_returns_the_best_epoch() {
        let cfg = EstimatorConfig {
            hidden_sizes: vec![3],
            max_epochs: 10,
            ..EstimatorConfig::new(2)
        };
        let model = EstimatorModel::new(cfg).unwrap();
        let ex = vec![
            Example {
                hypothesis: Array1::from(vec![1.0, 0.0]),
                text: Some(Array1::from(vec![0.0, 1.0])),
                audio: None,
            };
            4
        ];
        let taus = [0.3, 0.5, 0.5, 0.4, 0.9];
        let mut snapshots = Vec::new();
        let mut epoch = 0;
        let out = fit(model, &ex, &[0.1, 0.2, 0.3, 0.4], |m| {
            snapshots.push(m.clone());
            epoch += 1;
            Ok(Some(taus[epoch - 1]))
        })
        .unwrap();
        assert_eq!(out.history.len(), 4);
        assert!(out.stopped_early);
        assert_eq!(out.best_epoch, Some(2));
        assert_eq!(out.model, snapshots[1]);
    }

    fn overfit_data(n: usize, d: usize, seed: u64) -> (Vec<Example>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ex: Vec<Example> = (0..n)
            .map(|_| Example {
                hypothesis: Array1::from_shape_simple_fn(d, || rng.random_range(-1.0..1.0)),
                text: Some(Array1::from_shape_simple_fn(d, || rng.random_range(-1.0..1.0))),
                audio: Some(Array2::from_shape_simple_fn((2, d), || rng.random_range(-1.0..1.0))),
            })
            .collect();
        let targets = ex.iter().map(|e| e.hypothesis[0]).collect();
        (ex, targets)
    }

    #[test]
    fn small_network_overfits_eight_records() {
        let cfg = EstimatorConfig {
            hidden_sizes: vec![32],
            dropout: 0.0,
            lr: 1e-3,
            effective_batch: 1,
            max_epochs: 200,
            patience: 0,
            ..EstimatorConfig::new(4)
        };
        let (ex, targets) = overfit_data(8, 4, 1);
        let out = fit(EstimatorModel::new(cfg).unwrap(), &ex, &targets, |_| Ok(None)).unwrap();
        assert_eq!(out.history.len(), 200);
        let preds = out.model.predict_examples(&ex).unwrap();
        let mse: f64 = preds.iter().zip(&targets).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 8.0;
        assert!(mse < 1e-3, "train mse {mse}");
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let cfg = EstimatorConfig {
            fusion: Fusion::ConcatProjection,
            hidden_sizes: vec![16, 8],
            lr: 1e-3,
            effective_batch: 4,
            max_epochs: 5,
            seed: 42,
            ..EstimatorConfig::new(4)
        };
        let (ex, targets) = overfit_data(20, 4, 2);
        let run = || {
            let mut e = 0;
            fit(EstimatorModel::new(cfg.clone()).unwrap(), &ex, &targets, |m| {
                e += 1;
                Ok(Some(m.predict_examples(&ex[..1]).unwrap()[0] + e as f64))
            })
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
        assert_eq!(a.model.to_checkpoint().to_bytes().unwrap(), b.model.to_checkpoint().to_bytes().unwrap());
    }

    #[test]
    fn diverging_training_reports_the_step() {
        let cfg = EstimatorConfig {
            hidden_sizes: vec![4],
            lr: 1e300,
            effective_batch: 2,
            ..EstimatorConfig::new(2)
        };
        let (ex, _) = overfit_data(4, 2, 3);
        let err = fit(EstimatorModel::new(cfg).unwrap(), &ex, &[1e300, -1e300, 1e300, 0.0], |_| Ok(None)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, .. }), "{err}");
    }
}
