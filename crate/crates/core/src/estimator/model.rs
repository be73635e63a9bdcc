use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{EstimatorConfig, Fusion, Pooling};
use crate::corpus::{read_checkpoint, write_checkpoint, Checkpoint, TensorSpec};
use crate::error::{Error, Result};
use crate::nn::{dropout_mask, Affine};

/// Learnable tensors of an estimator. Optional blocks exist only for the
/// fusion and pooling modes that need them.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `d -> d` map applied to speech frames.
    pub speech_projection: Option<Affine>,
    /// `2d -> d` map over `[s_t; s_a]`.
    pub fusion_projection: Option<Affine>,
    pub attention_query: Option<Array1<f64>>,
    /// Hidden layers (Tanh) followed by the scalar output layer.
    pub mlp: Vec<Affine>,
}

impl Params {
    pub fn zeros(cfg: &EstimatorConfig) -> Self {
        Self::build(cfg, Affine::zeros)
    }

    /// Uniform `±1/sqrt(fan_in)` weights, zero biases, zero attention query.
    pub fn init<R: Rng>(cfg: &EstimatorConfig, rng: &mut R) -> Self {
        let mut p = Self::build(cfg, |i, o| Affine::uniform(i, o, rng));
        p.round_to_f32();
        p
    }

    fn build(cfg: &EstimatorConfig, mut layer: impl FnMut(usize, usize) -> Affine) -> Self {
        let d = cfg.dim;
        let speech_projection = cfg.fusion.uses_speech().then(|| layer(d, d));
        let fusion_projection = (cfg.fusion == Fusion::ConcatProjection).then(|| layer(2 * d, d));
        let mut widths = vec![cfg.head_input()];
        widths.extend(&cfg.hidden_sizes);
        widths.push(1);
        let mlp = widths.windows(2).map(|w| layer(w[0], w[1])).collect();
        let attention_query =
            (cfg.fusion.uses_speech() && cfg.pooling == Pooling::Attention).then(|| Array1::zeros(d));
        Params {
            speech_projection,
            fusion_projection,
            attention_query,
            mlp,
        }
    }

    /// Name, shape, and values of every tensor in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        fn push<'a>(out: &mut Vec<(String, Vec<usize>, &'a [f64])>, name: &str, a: &'a Affine) {
            out.push((format!("{name}.weight"), a.weight.shape().to_vec(), slice(&a.weight)));
            out.push((format!("{name}.bias"), vec![a.bias.len()], a.bias.as_slice().unwrap()));
        }
        if let Some(a) = &self.speech_projection {
            push(&mut out, "speech_projection", a);
        }
        if let Some(a) = &self.fusion_projection {
            push(&mut out, "fusion_projection", a);
        }
        if let Some(q) = &self.attention_query {
            out.push(("attention_query".into(), vec![q.len()], q.as_slice().unwrap()));
        }
        for (k, a) in self.mlp.iter().enumerate() {
            push(&mut out, &format!("mlp.{k}"), a);
        }
        out
    }

    /// Mutable views in the same order as [`Params::tensors`].
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        fn push<'a>(out: &mut Vec<&'a mut [f64]>, a: &'a mut Affine) {
            out.push(a.weight.as_slice_mut().expect("standard layout"));
            out.push(a.bias.as_slice_mut().expect("standard layout"));
        }
        if let Some(a) = &mut self.speech_projection {
            push(&mut out, a);
        }
        if let Some(a) = &mut self.fusion_projection {
            push(&mut out, a);
        }
        if let Some(q) = &mut self.attention_query {
            out.push(q.as_slice_mut().expect("standard layout"));
        }
        for a in &mut self.mlp {
            push(&mut out, a);
        }
        out
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.tensors().into_iter().map(|(_, _, v)| v).collect()
    }

    /// Rounds every parameter to the nearest f32 so that a saved checkpoint
    /// reproduces the in-memory model exactly.
    pub fn round_to_f32(&mut self) {
        for t in self.slices_mut() {
            t.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn num_parameters(&self) -> usize {
        self.slices().iter().map(|t| t.len()).sum()
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

/// One resolved input: hypothesis embedding, optional sentence-level text
/// source, optional frame-level speech source. All are raw encoder outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub hypothesis: Array1<f64>,
    pub text: Option<Array1<f64>>,
    pub audio: Option<Array2<f64>>,
}

/// Intermediate values kept by a training forward pass for backprop.
pub(crate) struct Cache {
    h: Array2<f64>,
    s: Array2<f64>,
    /// Average pooling: pooled raw frames fed to the speech projection.
    pooled_raw: Option<Array2<f64>>,
    /// Attention pooling: per example (raw frames, projected frames, weights).
    attention: Vec<(Array2<f64>, Array2<f64>, Array1<f64>)>,
    concat: Option<Array2<f64>>,
    layer_inputs: Vec<Array2<f64>>,
    activations: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

/// The estimator: speech projection, pooling, fusion, interaction features,
/// and the MLP head.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorModel {
    config: EstimatorConfig,
    pub params: Params,
}

impl EstimatorModel {
    /// A freshly initialized model; initialization draws from `config.seed`.
    pub fn new(config: EstimatorConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = Params::init(&config, &mut rng);
        Ok(EstimatorModel { config, params })
    }

    /// All parameters zero.
    pub fn zeros(config: EstimatorConfig) -> Result<Self> {
        config.validate()?;
        let params = Params::zeros(&config);
        Ok(EstimatorModel { config, params })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    /// Scores one input in evaluation mode.
    pub fn forward(&self, h: &[f64], s_t: Option<&[f64]>, s_a: Option<ArrayView2<'_, f64>>) -> Result<f64> {
        let d = self.dim();
        check_len(d, h.len())?;
        if let Some(t) = s_t {
            check_len(d, t.len())?;
        }
        if let Some(a) = &s_a {
            check_len(d, a.ncols())?;
            if a.nrows() == 0 {
                return Err(Error::InvalidInput("speech input has zero frames".into()));
            }
        }
        let example = Example {
            hypothesis: Array1::from(h.to_vec()),
            text: s_t.map(|t| Array1::from(t.to_vec())),
            audio: s_a.map(|a| a.to_owned()),
        };
        self.check_modalities(&example)?;
        if !example.hypothesis.iter().chain(example.text.iter().flatten()).all(|v| v.is_finite())
            || !example.audio.iter().flatten().all(|v| v.is_finite())
        {
            return Err(Error::NonFinite { stage: "input" });
        }
        Ok(self.predict_examples(&[example])?[0])
    }

    /// Runs the MLP head on an interaction vector.
    pub fn head(&self, e: &[f64]) -> Result<f64> {
        check_len(self.config.head_input(), e.len())?;
        let x = Array2::from_shape_vec((1, e.len()), e.to_vec()).expect("shape matches");
        let (y, _) = self.mlp_forward(x, None::<&mut ChaCha8Rng>, false)?;
        Ok(y[0])
    }

    /// Projects and pools raw speech frames into a `d`-vector.
    pub fn speech_source(&self, frames: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let proj = self
            .params
            .speech_projection
            .as_ref()
            .ok_or_else(|| Error::Config(format!("fusion {} has no speech path", self.config.fusion)))?;
        check_len(self.dim(), frames.ncols())?;
        pool(proj.forward(frames).view(), self.config.pooling, self.params.attention_query.as_ref().map(|q| q.view()))
    }

    /// Combines the text source and the projected speech source.
    pub fn fuse(&self, s_t: Option<&[f64]>, s_a: Option<&[f64]>) -> Result<Array1<f64>> {
        let d = self.dim();
        let row = |v: &[f64]| -> Result<Array2<f64>> {
            check_len(d, v.len())?;
            Ok(Array2::from_shape_vec((1, d), v.to_vec()).expect("shape matches"))
        };
        let t = s_t.map(row).transpose()?;
        let a = s_a.map(row).transpose()?;
        let (s, _) = self.fuse_rows(t.as_ref(), a, 1)?;
        Ok(s.row(0).to_owned())
    }

    fn check_modalities(&self, ex: &Example) -> Result<()> {
        let fusion = self.config.fusion;
        if fusion.uses_text() && ex.text.is_none() {
            return Err(Error::InvalidInput(format!("fusion {fusion} needs a text source")));
        }
        if fusion.uses_speech() && ex.audio.is_none() {
            return Err(Error::InvalidInput(format!("fusion {fusion} needs a speech source")));
        }
        Ok(())
    }

    /// Evaluation-mode scores for a list of examples.
    pub fn predict_examples(&self, examples: &[Example]) -> Result<Vec<f64>> {
        let refs: Vec<&Example> = examples.iter().collect();
        let mut out = Vec::with_capacity(examples.len());
        for chunk in refs.chunks(256) {
            let (y, _) = self.forward_batch(chunk, None::<&mut ChaCha8Rng>, false)?;
            out.extend(y.iter().copied());
        }
        Ok(out)
    }

    /// Batched forward pass. With `rng`, dropout is active; with `keep`, the
    /// intermediates needed by [`EstimatorModel::backward`] are returned.
    pub(crate) fn forward_batch<R: Rng>(
        &self,
        batch: &[&Example],
        rng: Option<&mut R>,
        keep: bool,
    ) -> Result<(Array1<f64>, Option<Cache>)> {
        let d = self.dim();
        let n = batch.len();
        let h = stack(batch.iter().map(|e| e.hypothesis.iter().copied()), d);
        let text = self
            .config
            .fusion
            .uses_text()
            .then(|| stack(batch.iter().map(|e| e.text.as_ref().expect("text resolved").iter().copied()), d));

        let mut pooled_raw = None;
        let mut attention = Vec::new();
        let s_a = match &self.params.speech_projection {
            None => None,
            Some(proj) => {
                let frames = batch.iter().map(|e| e.audio.as_ref().expect("audio resolved"));
                let s_a = match self.config.pooling {
                    // The projection is affine, so pooling raw frames first
                    // gives the same vector with one matmul per batch.
                    Pooling::Average => {
                        let raw = stack(frames.map(|f| f.mean_axis(Axis(0)).expect("frames >= 1")), d);
                        let s_a = proj.forward(raw.view());
                        pooled_raw = Some(raw);
                        s_a
                    }
                    Pooling::Attention => {
                        let q = self.params.attention_query.as_ref().expect("attention query");
                        let mut rows = Array2::zeros((n, d));
                        for (i, f) in frames.enumerate() {
                            let projected = proj.forward(f.view());
                            let w = attention_weights(projected.view(), q.view());
                            rows.row_mut(i).assign(&projected.t().dot(&w));
                            if keep {
                                attention.push((f.clone(), projected, w));
                            }
                        }
                        rows
                    }
                };
                finite(&s_a, "pooling")?;
                Some(s_a)
            }
        };

        let (s, concat) = self.fuse_rows(text.as_ref(), s_a, n)?;
        finite(&s, "fusion")?;
        let e = match self.config.fusion {
            Fusion::Additive => &h + &s,
            _ => interaction_rows(h.view(), s.view()),
        };
        finite(&e, "interaction")?;
        let (y, mlp) = self.mlp_forward(e, rng, keep)?;
        let cache = mlp.map(|(layer_inputs, activations, masks)| Cache {
            h,
            s,
            pooled_raw,
            attention,
            concat,
            layer_inputs,
            activations,
            masks,
        });
        Ok((y, cache))
    }

    fn fuse_rows(
        &self,
        text: Option<&Array2<f64>>,
        s_a: Option<Array2<f64>>,
        n: usize,
    ) -> Result<(Array2<f64>, Option<Array2<f64>>)> {
        let fusion = self.config.fusion;
        let need = |m: &'static str| Error::InvalidInput(format!("fusion {fusion} needs a {m} source"));
        let text = || text.ok_or_else(|| need("text"));
        let speech = || s_a.clone().ok_or_else(|| need("speech"));
        Ok(match fusion {
            Fusion::TextOnly => (text()?.clone(), None),
            Fusion::SpeechOnly | Fusion::Additive => (speech()?, None),
            Fusion::HypothesisOnly => (Array2::zeros((n, self.dim())), None),
            Fusion::Avg => ((text()? + &speech()?) / 2.0, None),
            Fusion::Sum => (text()? + &speech()?, None),
            Fusion::ConcatProjection => {
                let concat = concatenate![Axis(1), *text()?, speech()?];
                let fp = self.params.fusion_projection.as_ref().expect("fusion projection");
                (fp.forward(concat.view()), Some(concat))
            }
        })
    }

    #[allow(clippy::type_complexity)]
    fn mlp_forward<R: Rng>(
        &self,
        e: Array2<f64>,
        mut rng: Option<&mut R>,
        keep: bool,
    ) -> Result<(Array1<f64>, Option<(Vec<Array2<f64>>, Vec<Array2<f64>>, Vec<Option<Array2<f64>>>)>)> {
        let layers = &self.params.mlp;
        let (hidden, output) = layers.split_at(layers.len() - 1);
        let mut inputs = Vec::new();
        let mut activations = Vec::new();
        let mut masks = Vec::new();
        let mut x = e;
        for layer in hidden {
            let a = layer.forward(x.view()).mapv_into(f64::tanh);
            let mask = match rng.as_deref_mut() {
                Some(r) if self.config.dropout > 0.0 => Some(dropout_mask(a.dim(), self.config.dropout, r)),
                _ => None,
            };
            let next = match &mask {
                Some(m) => &a * m,
                None => a.clone(),
            };
            if keep {
                inputs.push(x);
                activations.push(a);
                masks.push(mask);
            }
            x = next;
        }
        let y = output[0].forward(x.view()).column(0).to_owned();
        if keep {
            inputs.push(x);
        }
        finite(&y, "mlp")?;
        Ok((y, keep.then_some((inputs, activations, masks))))
    }

    /// Accumulates `dL/dθ` into `grad` given `dL/dŷ` for each batch row.
    pub(crate) fn backward(&self, cache: &Cache, dy: &Array1<f64>, grad: &mut Params) {
        let p = &self.params;
        let d = self.dim();
        let last = p.mlp.len() - 1;
        let source_has_params = p.speech_projection.is_some();
        let dy = dy.view().insert_axis(Axis(1));
        let mut dx = p.mlp[last].backward(cache.layer_inputs[last].view(), dy, &mut grad.mlp[last]);
        for k in (0..last).rev() {
            if let Some(m) = &cache.masks[k] {
                dx *= m;
            }
            let a = &cache.activations[k];
            let dz = dx * &a.mapv(|v| 1.0 - v * v);
            if k == 0 && !source_has_params {
                p.mlp[0].accumulate(cache.layer_inputs[0].view(), dz.view(), &mut grad.mlp[0]);
                return;
            }
            dx = p.mlp[k].backward(cache.layer_inputs[k].view(), dz.view(), &mut grad.mlp[k]);
        }
        if !source_has_params {
            return;
        }

        let ds = match self.config.fusion {
            Fusion::Additive => dx,
            _ => {
                let diff_sign = (&cache.s - &cache.h).mapv(|v| {
                    if v > 0.0 {
                        1.0
                    } else if v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                &dx.slice(s![.., d..2 * d]) + &(&dx.slice(s![.., 2 * d..3 * d]) * &diff_sign)
                    + &dx.slice(s![.., 3 * d..]) * &cache.h
            }
        };
        let ds_a = match self.config.fusion {
            Fusion::SpeechOnly | Fusion::Additive | Fusion::Sum => ds,
            Fusion::Avg => ds / 2.0,
            Fusion::ConcatProjection => {
                let fp = p.fusion_projection.as_ref().expect("fusion projection");
                let concat = cache.concat.as_ref().expect("cached concat");
                let dc = fp.backward(concat.view(), ds.view(), grad.fusion_projection.as_mut().expect("grad"));
                dc.slice(s![.., d..]).to_owned()
            }
            Fusion::TextOnly | Fusion::HypothesisOnly => unreachable!("no speech parameters"),
        };
        let proj = p.speech_projection.as_ref().expect("speech projection");
        let gproj = grad.speech_projection.as_mut().expect("grad");
        match self.config.pooling {
            Pooling::Average => {
                let raw = cache.pooled_raw.as_ref().expect("cached pooled frames");
                proj.accumulate(raw.view(), ds_a.view(), gproj);
            }
            Pooling::Attention => {
                let q = p.attention_query.as_ref().expect("attention query");
                let gq = grad.attention_query.as_mut().expect("grad");
                let scale = 1.0 / (d as f64).sqrt();
                for (i, (frames, projected, w)) in cache.attention.iter().enumerate() {
                    let g = ds_a.row(i);
                    // s = Σ w_j p_j with w = softmax(P q / √d).
                    let gp = projected.dot(&g);
                    let dl = w * &(&gp - w.dot(&gp));
                    let mut dp = outer(w.view(), g);
                    dp.scaled_add(scale, &outer(dl.view(), q.view()));
                    gq.scaled_add(scale, &projected.t().dot(&dl));
                    proj.accumulate(frames.view(), dp.view(), gproj);
                }
            }
        }
    }

    /// Mean squared error of `predictions` against `targets` and its
    /// gradient with respect to the predictions.
    pub fn mse(predictions: &Array1<f64>, targets: &Array1<f64>) -> (f64, Array1<f64>) {
        let n = predictions.len() as f64;
        let diff = predictions - targets;
        let loss = diff.dot(&diff) / n;
        (loss, diff * (2.0 / n))
    }

    /// Loss and parameter gradient on a batch in evaluation mode (no dropout).
    pub fn loss_and_gradient(&self, batch: &[Example], targets: &[f64]) -> Result<(f64, Params)> {
        let refs: Vec<&Example> = batch.iter().collect();
        let (y, cache) = self.forward_batch(&refs, None::<&mut ChaCha8Rng>, true)?;
        let (loss, dy) = Self::mse(&y, &Array1::from(targets.to_vec()));
        let mut grad = Params::zeros(&self.config);
        self.backward(&cache.expect("kept"), &dy, &mut grad);
        Ok((loss, grad))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let config = serde_json::to_value(&self.config).expect("config serializes");
        let tensors = self
            .params
            .tensors()
            .into_iter()
            .map(|(name, shape, data)| (TensorSpec { name, shape }, data.iter().map(|&v| v as f32).collect()))
            .collect();
        Checkpoint { config, tensors }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config: EstimatorConfig = serde_json::from_value(ckpt.config.clone())
            .map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
        config.validate()?;
        let mut params = Params::zeros(&config);
        let expected: Vec<(String, Vec<usize>)> =
            params.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
        let found: Vec<(String, Vec<usize>)> =
            ckpt.tensors.iter().map(|(s, _)| (s.name.clone(), s.shape.clone())).collect();
        if expected != found {
            return Err(Error::Format(format!(
                "shape table does not match the configuration: expected {expected:?}, found {found:?}"
            )));
        }
        for (dst, (_, src)) in params.slices_mut().into_iter().zip(&ckpt.tensors) {
            for (d, s) in dst.iter_mut().zip(src) {
                if !s.is_finite() {
                    return Err(Error::Format("checkpoint has non-finite parameters".into()));
                }
                *d = *s as f64;
            }
        }
        Ok(EstimatorModel { config, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        if !self.params.is_finite() {
            return Err(Error::NonFinite { stage: "parameters" });
        }
        write_checkpoint(&self.to_checkpoint(), path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&read_checkpoint(path)?)
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

fn finite<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>, stage: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { stage })
    }
}

fn stack<R: IntoIterator<Item = f64>>(rows: impl Iterator<Item = R>, d: usize) -> Array2<f64> {
    let mut flat = Vec::new();
    for r in rows {
        flat.extend(r);
    }
    let n = flat.len() / d;
    Array2::from_shape_vec((n, d), flat).expect("rows have width d")
}

fn outer(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    let a = a.insert_axis(Axis(1));
    let b = b.insert_axis(Axis(0));
    a.dot(&b)
}

fn attention_weights(frames: ArrayView2<'_, f64>, query: ArrayView1<'_, f64>) -> Array1<f64> {
    let scale = 1.0 / (frames.ncols() as f64).sqrt();
    let logits = frames.dot(&query) * scale;
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let w = logits.mapv(|v| (v - max).exp());
    let z = w.sum();
    w / z
}

/// Pools a `frames x d` matrix into one `d`-vector: the column mean, or the
/// softmax(`frames · query / sqrt(d)`)-weighted sum of frames.
pub fn pool(frames: ArrayView2<'_, f64>, mode: Pooling, query: Option<ArrayView1<'_, f64>>) -> Result<Array1<f64>> {
    if frames.nrows() == 0 {
        return Err(Error::InvalidInput("cannot pool zero frames".into()));
    }
    let out = match mode {
        Pooling::Average => frames.mean_axis(Axis(0)).expect("frames >= 1"),
        Pooling::Attention => {
            let q = query.ok_or_else(|| Error::InvalidInput("attention pooling needs a query vector".into()))?;
            check_len(frames.ncols(), q.len())?;
            frames.t().dot(&attention_weights(frames, q))
        }
    };
    finite(&out, "pooling")?;
    Ok(out)
}

/// The four-way interaction `[h; s; |h - s|; h ⊙ s]`.
pub fn interaction(h: &[f64], s: &[f64]) -> Result<Vec<f64>> {
    check_len(h.len(), s.len())?;
    let mut e = Vec::with_capacity(4 * h.len());
    e.extend_from_slice(h);
    e.extend_from_slice(s);
    e.extend(h.iter().zip(s).map(|(a, b)| (a - b).abs()));
    e.extend(h.iter().zip(s).map(|(a, b)| a * b));
    Ok(e)
}

/// `h + s_a`, the input of the additive variant.
pub fn additive_combine(h: &[f64], s_a: &[f64]) -> Result<Vec<f64>> {
    check_len(h.len(), s_a.len())?;
    Ok(h.iter().zip(s_a).map(|(a, b)| a + b).collect())
}

fn interaction_rows(h: ArrayView2<'_, f64>, s: ArrayView2<'_, f64>) -> Array2<f64> {
    let diff = (&h - &s).mapv_into(f64::abs);
    let prod = &h * &s;
    concatenate![Axis(1), h, s, diff, prod]
}
