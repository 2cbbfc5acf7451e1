//! Finite-difference verification of backpropagation.

use ndarray::{ArrayView2, Array2};

use super::train::batch_loss_and_grad;
use super::{NormStats, SurrogateNet};
use crate::error::{check_dim, Error, Result};

const STEP: f64 = 1e-5;
/// Denominator floor, so parameters with vanishing gradient are compared
/// absolutely rather than relatively.
const FLOOR: f64 = 1e-4;

fn loss_at(net: &SurrogateNet, x: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
    let cache = net.forward_cached(x, None, NormStats::Batch);
    batch_loss_and_grad(cache.out.view(), y).0
}

/// Mean Smooth L1 over the batch and its analytic parameter gradient,
/// flattened in trainable order.
pub fn loss_and_gradient(net: &SurrogateNet, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<(f64, Vec<f64>)> {
    check_dim("input columns", net.input_dim(), x.ncols())?;
    check_dim("label columns", net.output_dim(), y.ncols())?;
    check_dim("label rows", x.nrows(), y.nrows())?;
    if x.nrows() == 0 {
        return Err(Error::Empty("gradient batch"));
    }
    let cache = net.forward_cached(x, None, NormStats::Batch);
    let (loss, d_out) = batch_loss_and_grad(cache.out.view(), y);
    let grads = net.backward(&cache, d_out.view());
    Ok((loss, grads.slices().iter().flat_map(|s| s.iter().copied()).collect()))
}

/// Largest relative discrepancy between the analytic gradient and central
/// differences over every trainable parameter, for a batch with dropout off.
/// Batch normalization uses the statistics of this batch.
///
/// The relative error is `|a − n| / max(|a|, |n|, 1e-4)`.
pub fn grad_check_batch(net: &SurrogateNet, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    let (_, analytic) = loss_and_gradient(net, x, y)?;
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let mut offset = 0;
    for t in 0..6 {
        let len = probe.trainable_mut()[t].len();
        for i in 0..len {
            let orig = probe.trainable_mut()[t][i];
            probe.trainable_mut()[t][i] = orig + STEP;
            let up = loss_at(&probe, x, y);
            probe.trainable_mut()[t][i] = orig - STEP;
            let down = loss_at(&probe, x, y);
            probe.trainable_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic[offset + i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(rel);
        }
        offset += len;
    }
    Ok(worst)
}

/// [`grad_check_batch`] for a single example.
pub fn grad_check(net: &SurrogateNet, x: &[f64], y: &[f64]) -> Result<f64> {
    let xv = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row");
    let yv = Array2::from_shape_vec((1, y.len()), y.to_vec()).expect("row");
    grad_check_batch(net, xv.view(), yv.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::surrogate::{Activation, Mode, NetConfig, Norm};
    use rand::Rng;

    fn random_net(seed: u64, norm: Norm, activation: Activation) -> SurrogateNet {
        let mut r = rng::seeded(seed);
        let cfg = NetConfig {
            input_dim: r.random_range(1..=4),
            hidden_width: r.random_range(2..=16),
            output_dim: r.random_range(1..=3),
            dropout_rate: 0.0,
            norm,
            activation,
            seed,
            ..NetConfig::default()
        };
        let mut net = SurrogateNet::new(cfg).unwrap();
        // Non-trivial biases and gains so every parameter carries signal.
        for v in net.b1.iter_mut().chain(net.b2.iter_mut()).chain(net.bias.iter_mut()) {
            *v = r.random_range(-0.5..0.5);
        }
        for v in net.gain.iter_mut() {
            *v = r.random_range(0.5..1.5);
        }
        net
    }

    #[test]
    fn twenty_random_toy_nets() {
        let combos = [
            (Norm::Layer, Activation::Relu),
            (Norm::Layer, Activation::Tanh),
            (Norm::Batch, Activation::Relu),
            (Norm::Batch, Activation::Tanh),
            (Norm::None, Activation::Relu),
        ];
        for seed in 0..20u64 {
            let (norm, act) = combos[seed as usize % combos.len()];
            let net = random_net(seed, norm, act);
            let mut r = rng::seeded(1000 + seed);
            let rows = if norm == Norm::Batch { 4 } else { 1 };
            let x = Array2::from_shape_fn((rows, net.input_dim()), |_| r.random_range(-1.0..1.0));
            // Mix of quadratic and linear loss branches.
            let out = net.predict(x.view()).unwrap();
            let y = Array2::from_shape_fn(out.raw_dim(), |(i, k)| out[[i, k]] + r.random_range(-2.0..2.0));
            let err = grad_check_batch(&net, x.view(), y.view()).unwrap();
            assert!(err < 1e-5, "seed {seed} ({norm:?}, {act:?}): {err}");
        }
    }

    #[test]
    fn zero_loss_point_has_zero_gradient() {
        let net = random_net(5, Norm::Layer, Activation::Tanh);
        let x = vec![0.3; net.input_dim()];
        let y = net.forward(&x, Mode::Eval, &mut rng::seeded(0)).unwrap();
        let xv = Array2::from_shape_vec((1, x.len()), x).unwrap();
        let yv = Array2::from_shape_vec((1, y.len()), y).unwrap();
        let (loss, g) = loss_and_gradient(&net, xv.view(), yv.view()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn linear_branch_output_gradient_is_one_over_m() {
        let net = random_net(9, Norm::None, Activation::Relu);
        let m = net.output_dim();
        let x = vec![0.1; net.input_dim()];
        let out = net.forward_eval(&x).unwrap();
        let y: Vec<f64> = out.iter().map(|o| o - 3.0).collect();
        let xv = Array2::from_shape_vec((1, x.len()), x).unwrap();
        let yv = Array2::from_shape_vec((1, m), y).unwrap();
        let (_, g) = loss_and_gradient(&net, xv.view(), yv.view()).unwrap();
        // Gradient with respect to b2 is dL/dŷ directly.
        let b2 = &g[g.len() - m..];
        assert!(b2.iter().all(|&v| (v - 1.0 / m as f64).abs() < 1e-15));
    }
}
