//! One-hidden-layer dense network `g: R^J → R^M`.
//!
//! Layer order: affine → normalization → activation → dropout → affine.
//! Dropout is inverted (kept units scaled by `1 / (1 − rate)`), so evaluation
//! needs no rescaling.

pub mod gradcheck;
pub mod loss;
pub mod train;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::{self, Stream};

pub use gradcheck::{grad_check, grad_check_batch};
pub use loss::{smooth_l1, smooth_l1_grad};
pub use train::{evaluate_loss, mse, risk_min_mse, train, EarlyStopper, EpochRecord, TrainReport, Trainer};

pub(crate) const NORM_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;
const EVAL_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    Layer,
    Batch,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub output_dim: usize,
    pub dropout_rate: f64,
    pub norm: Norm,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Hard cap on epochs per training call.
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            input_dim: 1,
            hidden_width: 512,
            output_dim: 1,
            dropout_rate: 0.5,
            norm: Norm::Layer,
            activation: Activation::Relu,
            optimizer: OptimizerKind::Adam,
            learning_rate: 3e-4,
            batch_size: 128,
            max_epochs: 500,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        NetConfig {
            input_dim,
            output_dim,
            ..NetConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_width == 0 || self.output_dim == 0 {
            return Err(Error::Config("network dimensions must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Forward pass flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active.
    Train,
    /// Deterministic.
    Eval,
}

/// How batch normalization obtains its statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum NormStats {
    /// Statistics of the current batch (training).
    Batch,
    /// Running estimates (inference).
    Running,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateNet {
    pub(crate) config: NetConfig,
    /// hidden × J
    pub(crate) w1: Array2<f64>,
    pub(crate) b1: Array1<f64>,
    /// Normalization gain and bias; empty when `norm = none`.
    pub(crate) gain: Array1<f64>,
    pub(crate) bias: Array1<f64>,
    /// Batch-norm running statistics; empty unless `norm = batch`.
    pub(crate) running_mean: Array1<f64>,
    pub(crate) running_var: Array1<f64>,
    /// M × hidden
    pub(crate) w2: Array2<f64>,
    pub(crate) b2: Array1<f64>,
}

/// Intermediate values kept for backpropagation.
pub(crate) struct ForwardCache {
    pub x: Array2<f64>,
    /// Normalized pre-activations (or raw pre-activations without norm).
    pub xhat: Array2<f64>,
    /// Per-row (layer) or per-column (batch) inverse standard deviations.
    pub inv_std: Array1<f64>,
    pub act: Array2<f64>,
    pub mask: Option<Array2<f64>>,
    pub dropped: Array2<f64>,
    pub out: Array2<f64>,
    pub batch_mean: Array1<f64>,
    pub batch_var: Array1<f64>,
}

/// Parameter gradients, laid out like [`SurrogateNet`].
#[derive(Debug, Clone)]
pub(crate) struct Grads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Grads {
    pub fn slices(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.gain.as_slice().unwrap(),
            self.bias.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
        ]
    }
}

impl SurrogateNet {
    /// Kaiming-uniform (fan-in) weights, zero biases, unit norm gain.
    pub fn new(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(config.seed, Stream::NnInit);
        Ok(Self::init_with(config, &mut r))
    }

    pub fn init_with<R: Rng + ?Sized>(config: NetConfig, r: &mut R) -> Self {
        let (j, h, m) = (config.input_dim, config.hidden_width, config.output_dim);
        let bound1 = (6.0 / j as f64).sqrt();
        let bound2 = (6.0 / h as f64).sqrt();
        let u1 = Uniform::new_inclusive(-bound1, bound1).unwrap();
        let u2 = Uniform::new_inclusive(-bound2, bound2).unwrap();
        let w1 = Array2::from_shape_fn((h, j), |_| u1.sample(r));
        let w2 = Array2::from_shape_fn((m, h), |_| u2.sample(r));
        let norm_len = if config.norm == Norm::None { 0 } else { h };
        let running_len = if config.norm == Norm::Batch { h } else { 0 };
        SurrogateNet {
            w1,
            b1: Array1::zeros(h),
            gain: Array1::ones(norm_len),
            bias: Array1::zeros(norm_len),
            running_mean: Array1::zeros(running_len),
            running_var: Array1::ones(running_len),
            w2,
            b2: Array1::zeros(m),
            config,
        }
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim
    }

    /// Parameter tensors in declaration order with their shapes.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        vec![
            ("w1", self.w1.shape().to_vec(), self.w1.as_slice().unwrap()),
            ("b1", self.b1.shape().to_vec(), self.b1.as_slice().unwrap()),
            ("norm_gain", self.gain.shape().to_vec(), self.gain.as_slice().unwrap()),
            ("norm_bias", self.bias.shape().to_vec(), self.bias.as_slice().unwrap()),
            (
                "running_mean",
                self.running_mean.shape().to_vec(),
                self.running_mean.as_slice().unwrap(),
            ),
            (
                "running_var",
                self.running_var.shape().to_vec(),
                self.running_var.as_slice().unwrap(),
            ),
            ("w2", self.w2.shape().to_vec(), self.w2.as_slice().unwrap()),
            ("b2", self.b2.shape().to_vec(), self.b2.as_slice().unwrap()),
        ]
    }

    /// Mutable views of every tensor, in the order of [`Self::tensors`].
    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.gain.as_slice_mut().unwrap(),
            self.bias.as_slice_mut().unwrap(),
            self.running_mean.as_slice_mut().unwrap(),
            self.running_var.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
        ]
    }

    /// Trainable tensors, matching [`Grads::slices`].
    pub(crate) fn trainable_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.gain.as_slice_mut().unwrap(),
            self.bias.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
        ]
    }

    /// Rebuild a network from a configuration and flat tensors.
    pub fn from_tensors(config: NetConfig, tensors: Vec<Vec<f64>>) -> Result<Self> {
        config.validate()?;
        let mut net = Self::init_with(config, &mut rng::seeded(0));
        check_dim("tensor count", 8, tensors.len())?;
        for (dst, src) in net.tensors_mut().into_iter().zip(&tensors) {
            check_dim("tensor length", dst.len(), src.len())?;
            dst.copy_from_slice(src);
        }
        if net.tensors().iter().any(|(_, _, t)| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(net)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, t)| t.len()).sum()
    }

    /// Inverted-dropout scale matrix: 0 for dropped units, `1 / (1 − rate)`
    /// for kept ones.
    pub fn sample_mask<R: Rng + ?Sized>(&self, rows: usize, r: &mut R) -> Array2<f64> {
        let p = self.config.dropout_rate;
        let scale = 1.0 / (1.0 - p);
        Array2::from_shape_fn((rows, self.config.hidden_width), |_| {
            if r.random::<f64>() < p {
                0.0
            } else {
                scale
            }
        })
    }

    /// Hidden activations (before dropout) for a batch.
    pub(crate) fn hidden(&self, x: ArrayView2<f64>, stats: NormStats) -> ForwardCache {
        let mut z = x.dot(&self.w1.t());
        z += &self.b1;
        let h = self.config.hidden_width;
        let rows = z.nrows();
        let mut inv_std = Array1::zeros(0);
        let mut batch_mean = Array1::zeros(0);
        let mut batch_var = Array1::zeros(0);
        match self.config.norm {
            Norm::None => {}
            Norm::Layer => {
                inv_std = Array1::zeros(rows);
                for (mut row, is) in z.rows_mut().into_iter().zip(inv_std.iter_mut()) {
                    let mean = row.sum() / h as f64;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
                    let inv = 1.0 / (var + NORM_EPS).sqrt();
                    row.mapv_inplace(|v| (v - mean) * inv);
                    *is = inv;
                }
            }
            Norm::Batch => {
                let (mean, var) = match stats {
                    NormStats::Batch => {
                        let mean = z.mean_axis(Axis(0)).expect("nonempty batch");
                        let var = z.var_axis(Axis(0), 0.0);
                        (mean, var)
                    }
                    NormStats::Running => (self.running_mean.clone(), self.running_var.clone()),
                };
                inv_std = var.mapv(|v| 1.0 / (v + NORM_EPS).sqrt());
                Zip::from(z.rows_mut()).for_each(|mut row| {
                    Zip::from(&mut row)
                        .and(&mean)
                        .and(&inv_std)
                        .for_each(|v, &mu, &is| *v = (*v - mu) * is);
                });
                batch_mean = mean;
                batch_var = var;
            }
        }
        let xhat = z;
        let act = if self.config.norm == Norm::None {
            xhat.mapv(|v| self.config.activation.apply(v))
        } else {
            let mut a = xhat.clone();
            let activation = self.config.activation;
            Zip::from(a.rows_mut()).for_each(|mut row| {
                Zip::from(&mut row)
                    .and(&self.gain)
                    .and(&self.bias)
                    .for_each(|v, &g, &b| *v = activation.apply(*v * g + b));
            });
            a
        };
        ForwardCache {
            x: x.to_owned(),
            xhat,
            inv_std,
            dropped: Array2::zeros((0, 0)),
            act,
            mask: None,
            out: Array2::zeros((0, 0)),
            batch_mean,
            batch_var,
        }
    }

    /// Output layer applied to (possibly dropped-out) hidden activations.
    pub(crate) fn output_layer(&self, hidden: ArrayView2<f64>) -> Array2<f64> {
        let mut out = hidden.dot(&self.w2.t());
        out += &self.b2;
        out
    }

    /// Full batch forward keeping intermediates.
    pub(crate) fn forward_cached(
        &self,
        x: ArrayView2<f64>,
        mask: Option<Array2<f64>>,
        stats: NormStats,
    ) -> ForwardCache {
        let mut cache = self.hidden(x, stats);
        cache.dropped = match &mask {
            Some(m) => &cache.act * m,
            None => cache.act.clone(),
        };
        cache.mask = mask;
        cache.out = self.output_layer(cache.dropped.view());
        cache
    }

    /// Backpropagate `d_out = dL/d(out)` through a cached forward pass.
    pub(crate) fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<f64>) -> Grads {
        let gw2 = d_out.t().dot(&cache.dropped).as_standard_layout().into_owned();
        let gb2 = d_out.sum_axis(Axis(0));
        let mut d_hidden = d_out.dot(&self.w2);
        if let Some(m) = &cache.mask {
            d_hidden *= m;
        }
        let activation = self.config.activation;
        Zip::from(&mut d_hidden)
            .and(&cache.act)
            .for_each(|d, &a| *d *= activation.derivative_from_output(a));
        // d_hidden now holds dL/d(normalized affine output n).

        let h = self.config.hidden_width;
        let (dz, ggain, gbias) = match self.config.norm {
            Norm::None => (d_hidden, Array1::zeros(0), Array1::zeros(0)),
            Norm::Layer => {
                let ggain = (&d_hidden * &cache.xhat).sum_axis(Axis(0));
                let gbias = d_hidden.sum_axis(Axis(0));
                let mut dz = d_hidden;
                Zip::from(dz.rows_mut())
                    .and(cache.xhat.rows())
                    .and(&cache.inv_std)
                    .for_each(|mut drow, xrow, &inv| {
                        drow *= &self.gain;
                        let mean_g = drow.sum() / h as f64;
                        let mean_gx = drow.dot(&xrow) / h as f64;
                        Zip::from(&mut drow)
                            .and(&xrow)
                            .for_each(|d, &xh| *d = inv * (*d - mean_g - xh * mean_gx));
                    });
                (dz, ggain, gbias)
            }
            Norm::Batch => {
                let ggain = (&d_hidden * &cache.xhat).sum_axis(Axis(0));
                let gbias = d_hidden.sum_axis(Axis(0));
                let mut dz = d_hidden;
                dz *= &self.gain;
                let b = dz.nrows() as f64;
                let mean_g = dz.sum_axis(Axis(0)) / b;
                let mean_gx = (&dz * &cache.xhat).sum_axis(Axis(0)) / b;
                Zip::from(dz.rows_mut())
                    .and(cache.xhat.rows())
                    .for_each(|mut drow, xrow| {
                        Zip::from(&mut drow)
                            .and(&xrow)
                            .and(&mean_g)
                            .and(&mean_gx)
                            .and(&cache.inv_std)
                            .for_each(|d, &xh, &mg, &mgx, &inv| *d = inv * (*d - mg - xh * mgx));
                    });
                (dz, ggain, gbias)
            }
        };
        let gw1 = dz.t().dot(&cache.x).as_standard_layout().into_owned();
        let gb1 = dz.sum_axis(Axis(0));
        Grads {
            w1: gw1,
            b1: gb1,
            gain: ggain,
            bias: gbias,
            w2: gw2,
            b2: gb2,
        }
    }

    /// Fold batch statistics into the running estimates.
    pub(crate) fn update_running_stats(&mut self, cache: &ForwardCache) {
        if self.config.norm != Norm::Batch || cache.batch_mean.is_empty() {
            return;
        }
        let b = cache.x.nrows() as f64;
        let unbias = if b > 1.0 { b / (b - 1.0) } else { 1.0 };
        Zip::from(&mut self.running_mean)
            .and(&cache.batch_mean)
            .for_each(|r, &m| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m);
        Zip::from(&mut self.running_var)
            .and(&cache.batch_var)
            .for_each(|r, &v| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbias);
    }

    /// Deterministic batch prediction (N×J → N×M).
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim("input columns", self.input_dim(), x.ncols())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.output_dim()));
        for (xs, mut os) in x
            .axis_chunks_iter(Axis(0), EVAL_CHUNK)
            .zip(out.axis_chunks_iter_mut(Axis(0), EVAL_CHUNK))
        {
            let cache = self.hidden(xs, NormStats::Running);
            os.assign(&self.output_layer(cache.act.view()));
        }
        out
    }

    /// Single-input forward pass. `Train` mode draws a dropout mask from `r`.
    pub fn forward<R: Rng + ?Sized>(&self, x: &[f64], mode: Mode, r: &mut R) -> Result<Vec<f64>> {
        check_dim("input", self.input_dim(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        let xv = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        let mask = match mode {
            Mode::Train if self.config.dropout_rate > 0.0 => Some(self.sample_mask(1, r)),
            _ => None,
        };
        let cache = self.forward_cached(xv, mask, NormStats::Running);
        Ok(cache.out.into_raw_vec_and_offset().0)
    }

    /// Deterministic single-input forward pass.
    pub fn forward_eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x, Mode::Eval, &mut rng::seeded(0))
    }

    /// `k` independent dropout passes for one input; column `i` is pass `i`.
    pub fn mc_dropout_predict<R: Rng + ?Sized>(&self, x: &[f64], k: usize, r: &mut R) -> Result<Array2<f64>> {
        check_dim("input", self.input_dim(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        let xv = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        let cache = self.hidden(xv, NormStats::Running);
        let mut out = Array2::zeros((self.output_dim(), k));
        for pass in 0..k {
            let dropped = if self.config.dropout_rate > 0.0 {
                &cache.act * &self.sample_mask(1, r)
            } else {
                cache.act.clone()
            };
            let o = self.output_layer(dropped.view());
            out.column_mut(pass).assign(&o.row(0));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy(norm: Norm, activation: Activation, dropout: f64) -> SurrogateNet {
        let cfg = NetConfig {
            input_dim: 3,
            hidden_width: 6,
            output_dim: 2,
            dropout_rate: dropout,
            norm,
            activation,
            seed: 4,
            ..NetConfig::default()
        };
        SurrogateNet::new(cfg).unwrap()
    }

    #[test]
    fn no_dropout_means_train_equals_eval() {
        let net = toy(Norm::Layer, Activation::Relu, 0.0);
        let x = [0.2, 0.7, -0.1];
        let a = net.forward(&x, Mode::Train, &mut rng::seeded(1)).unwrap();
        let b = net.forward(&x, Mode::Eval, &mut rng::seeded(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_output_layer_gives_zero() {
        let mut net = toy(Norm::Batch, Activation::Tanh, 0.5);
        net.w2.fill(0.0);
        net.b2.fill(0.0);
        for x in [[0.0, 0.0, 0.0], [1.0, -2.0, 3.0]] {
            assert_eq!(net.forward(&x, Mode::Train, &mut rng::seeded(3)).unwrap(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn eval_forward_matches_hand_computation() {
        // 2 inputs, 3 hidden units, 2 outputs, no normalization.
        let cfg = NetConfig {
            input_dim: 2,
            hidden_width: 3,
            output_dim: 2,
            norm: Norm::None,
            ..NetConfig::default()
        };
        let mut net = SurrogateNet::new(cfg).unwrap();
        net.w1 = array![[1.0, -1.0], [0.5, 2.0], [-1.5, 0.25]];
        net.b1 = array![0.1, -0.2, 0.3];
        net.w2 = array![[1.0, 2.0, -1.0], [0.5, -0.5, 3.0]];
        net.b2 = array![0.05, -0.05];
        let x = [0.4, 0.3];
        // hidden pre-activations
        let h0: f64 = 1.0 * 0.4 - 1.0 * 0.3 + 0.1; // 0.2
        let h1: f64 = 0.5 * 0.4 + 2.0 * 0.3 - 0.2; // 0.6
        let h2: f64 = -1.5 * 0.4 + 0.25 * 0.3 + 0.3; // -0.225
        let a = [h0.max(0.0), h1.max(0.0), h2.max(0.0)];
        let o0 = 1.0 * a[0] + 2.0 * a[1] - 1.0 * a[2] + 0.05;
        let o1 = 0.5 * a[0] - 0.5 * a[1] + 3.0 * a[2] - 0.05;
        let y = net.forward_eval(&x).unwrap();
        assert!((y[0] - o0).abs() < 1e-15 && (y[1] - o1).abs() < 1e-15);

        // Same weights with layer norm (unit gain, zero bias).
        let mut ln = SurrogateNet::new(NetConfig {
            norm: Norm::Layer,
            ..net.config.clone()
        })
        .unwrap();
        ln.w1 = net.w1.clone();
        ln.b1 = net.b1.clone();
        ln.w2 = net.w2.clone();
        ln.b2 = net.b2.clone();
        let mean = (h0 + h1 + h2) / 3.0;
        let var = ((h0 - mean).powi(2) + (h1 - mean).powi(2) + (h2 - mean).powi(2)) / 3.0;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        let a: Vec<f64> = [h0, h1, h2].iter().map(|h| ((h - mean) * inv).max(0.0)).collect();
        let o0 = 1.0 * a[0] + 2.0 * a[1] - 1.0 * a[2] + 0.05;
        let o1 = 0.5 * a[0] - 0.5 * a[1] + 3.0 * a[2] - 0.05;
        let y = ln.forward_eval(&x).unwrap();
        assert!((y[0] - o0).abs() < 1e-14 && (y[1] - o1).abs() < 1e-14);
    }

    #[test]
    fn eval_is_bitwise_stable_and_batch_consistent() {
        let net = toy(Norm::Layer, Activation::Relu, 0.5);
        let x = Array2::from_shape_fn((5, 3), |(i, k)| (i as f64 - k as f64) * 0.3);
        let a = net.predict(x.view()).unwrap();
        let b = net.predict(x.view()).unwrap();
        assert_eq!(a, b);
        for i in 0..5 {
            let single = net.forward_eval(&x.row(i).to_vec()).unwrap();
            for (u, v) in single.iter().zip(a.row(i)) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let net = toy(Norm::None, Activation::Relu, 0.0);
        assert!(net.forward_eval(&[1.0, 2.0]).is_err());
        assert!(matches!(net.forward_eval(&[1.0, f64::NAN, 0.0]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn mc_dropout_shape_and_degenerate_case() {
        let net = toy(Norm::Layer, Activation::Relu, 0.0);
        let out = net.mc_dropout_predict(&[0.1, 0.2, 0.3], 7, &mut rng::seeded(1)).unwrap();
        assert_eq!(out.dim(), (2, 7));
        for k in 1..7 {
            assert_eq!(out.column(k), out.column(0));
        }
        let net = toy(Norm::Layer, Activation::Relu, 0.5);
        let out = net.mc_dropout_predict(&[0.1, 0.2, 0.3], 7, &mut rng::seeded(1)).unwrap();
        assert!((1..7).any(|k| out.column(k) != out.column(0)));
    }

    #[test]
    fn mc_dropout_column_mean_concentrates() {
        let cfg = NetConfig {
            input_dim: 2,
            hidden_width: 32,
            output_dim: 3,
            seed: 8,
            ..NetConfig::default()
        };
        let net = SurrogateNet::new(cfg).unwrap();
        let x = [0.3, 0.8];
        let spread = |k: usize| {
            let means: Vec<f64> = (0..40)
                .map(|rep| {
                    let out = net.mc_dropout_predict(&x, k, &mut rng::seeded(100 + rep)).unwrap();
                    out.row(0).mean().unwrap()
                })
                .collect();
            let mu = means.iter().sum::<f64>() / means.len() as f64;
            (means.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / means.len() as f64).sqrt()
        };
        let (s10, s40, s160) = (spread(10), spread(40), spread(160));
        assert!(s40 < s10 && s160 < s40, "{s10} {s40} {s160}");
        // Quadrupling K roughly halves the spread.
        assert!((s10 / s160) > 2.0 && (s10 / s160) < 8.0, "{s10} / {s160}");
    }

    #[test]
    fn config_validation() {
        assert!(NetConfig { dropout_rate: 1.0, ..NetConfig::new(1, 1) }.validate().is_err());
        assert!(NetConfig { hidden_width: 0, ..NetConfig::new(1, 1) }.validate().is_err());
        assert!(NetConfig::new(3, 4).validate().is_ok());
        let parsed: NetConfig = serde_json::from_str(r#"{"input_dim": 2, "output_dim": 5, "norm": "batch"}"#).unwrap();
        assert_eq!(parsed.norm, Norm::Batch);
        assert!(serde_json::from_str::<NetConfig>(r#"{"widht": 3}"#).is_err());
    }

    #[test]
    fn tensor_round_trip() {
        let net = toy(Norm::Batch, Activation::Relu, 0.5);
        let tensors: Vec<Vec<f64>> = net.tensors().iter().map(|(_, _, t)| t.to_vec()).collect();
        let back = SurrogateNet::from_tensors(net.config.clone(), tensors).unwrap();
        assert_eq!(back, net);
        assert_eq!(net.parameter_count(), 18 + 6 + 6 + 6 + 6 + 6 + 12 + 2);
    }
}
