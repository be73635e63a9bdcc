//! Dense layers and adaptive-moment optimizers shared by the estimator and
//! the probes. Everything is f64 and batched row-major (`batch x features`).

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Affine map `y = W x + b` with `W` stored as `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Affine {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Affine {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn uniform<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Affine {
            weight: Array2::from_shape_simple_fn((outputs, inputs), || rng.random_range(-bound..bound)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight.t());
        y += &self.bias;
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView2<'_, f64>, dy: ArrayView2<'_, f64>, grad: &mut Affine) -> Array2<f64> {
        self.accumulate(x, dy, grad);
        dy.dot(&self.weight)
    }

    /// Like [`Affine::backward`] without the input gradient.
    pub fn accumulate(&self, x: ArrayView2<'_, f64>, dy: ArrayView2<'_, f64>, grad: &mut Affine) {
        grad.weight += &dy.t().dot(&x);
        grad.bias += &dy.sum_axis(Axis(0));
    }
}

/// Inverted-dropout keep mask, already scaled by `1 / (1 - p)`.
pub fn dropout_mask<R: Rng>(shape: (usize, usize), p: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep })
}

/// Global L2 norm over a set of gradient slices.
pub fn global_norm(grads: &[&[f64]]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Rescales gradients so their global norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    let coef = max_norm / (norm + 1e-6);
    if coef < 1.0 {
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|v| *v *= coef);
        }
    }
    norm
}

/// Hyperparameters of Adam / AdamW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay; zero gives plain Adam.
    pub weight_decay: f64,
}

impl AdamSettings {
    pub fn adam(lr: f64) -> Self {
        AdamSettings {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn adamw(lr: f64, weight_decay: f64) -> Self {
        AdamSettings {
            weight_decay,
            ..Self::adam(lr)
        }
    }
}

/// Adam with optional decoupled weight decay, over a fixed list of tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    settings: AdamSettings,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(settings: AdamSettings) -> Self {
        Adam {
            settings,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient lists differ");
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let AdamSettings {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.settings;
        let bias1 = 1.0 - beta1.powi(self.step);
        let bias2 = 1.0 - beta2.powi(self.step);
        let decay = 1.0 - lr * weight_decay;
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let update = (m[i] / bias1) / ((v[i] / bias2).sqrt() + eps);
                p[i] = p[i] * decay - lr * update;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn affine_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = Affine::uniform(3, 2, &mut rng);
        let x = array![[0.5, -1.0, 2.0], [1.5, 0.25, -0.75]];
        // Loss = sum of outputs weighted by fixed coefficients.
        let coef = array![[1.0, -2.0], [0.5, 3.0]];
        let loss = |l: &Affine| (l.forward(x.view()) * &coef).sum();
        let mut grad = Affine::zeros(3, 2);
        let dx = layer.backward(x.view(), coef.view(), &mut grad);
        let h = 1e-6;
        for (idx, g) in grad.weight.indexed_iter() {
            let mut plus = layer.clone();
            plus.weight[idx] += h;
            let mut minus = layer.clone();
            minus.weight[idx] -= h;
            assert!(((loss(&plus) - loss(&minus)) / (2.0 * h) - g).abs() < 1e-8);
        }
        assert_eq!(dx.dim(), (2, 3));
        assert_eq!(grad.bias, array![1.5, 1.0]);
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut a = vec![3.0, 0.0];
        let mut b = vec![4.0];
        let norm = clip_global_norm(&mut [&mut a, &mut b], 1.0);
        assert_eq!(norm, 5.0);
        assert!((global_norm(&[&a, &b]) - 1.0).abs() < 1e-6);

        let mut c = vec![0.1];
        clip_global_norm(&mut [&mut c], 1.0);
        assert_eq!(c, [0.1]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = vec![1.0, -1.0];
        let mut opt = Adam::new(AdamSettings::adam(0.1));
        opt.step(&mut [&mut p], &[&[2.0, -0.5]]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn adamw_decays_weights_without_gradient() {
        let mut p = vec![2.0];
        let mut opt = Adam::new(AdamSettings::adamw(0.5, 0.1));
        opt.step(&mut [&mut p], &[&[0.0]]);
        assert!((p[0] - 2.0 * 0.95).abs() < 1e-12);
    }
}
