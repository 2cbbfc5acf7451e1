//! Reference Monte Carlo predictor.
//!
//! For an input `x` each posterior draw contributes its conditional mean
//! `E[Y | x, φ_m]`; the risk-minimizing prediction under squared loss is
//! their average.

use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{check_dim, Result};
use crate::model::ParamDraw;
use crate::posterior::PosteriorDraws;

/// Per-draw conditional means for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionVector {
    pub values: Vec<f64>,
}

impl PredictionVector {
    pub fn mean(&self) -> f64 {
        draw_mean(self.values.iter().copied())
    }
}

/// Mean over draws, accumulated as offsets from the first value so that
/// identical draws return that value exactly.
pub fn draw_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut it = values.into_iter();
    let Some(first) = it.next() else {
        return f64::NAN;
    };
    let (mut acc, mut n) = (0.0, 1usize);
    for v in it {
        acc += v - first;
        n += 1;
    }
    first + acc / n as f64
}

/// Output shape of a batch prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    /// N×M matrix of per-draw means.
    PerDraw,
    /// N vector of risk-minimizing means.
    RiskMin,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BatchPredictions {
    PerDraw(Array2<f64>),
    RiskMin(Array1<f64>),
}

#[derive(Debug, Clone)]
pub struct TimedBatchResult {
    pub predictions: BatchPredictions,
    pub wall_time: Duration,
    pub threads_used: usize,
}

pub fn predict_draws(draws: &PosteriorDraws, x: &[f64]) -> Result<PredictionVector> {
    check_dim("input", draws.j(), x.len())?;
    let link = draws.spec().link;
    Ok(PredictionVector {
        values: draws
            .draws()
            .iter()
            .map(|d| d.mean_unchecked(link, x))
            .collect(),
    })
}

pub fn predict_risk_min(draws: &PosteriorDraws, x: &[f64]) -> Result<f64> {
    Ok(predict_draws(draws, x)?.mean())
}

fn fill_block(
    link: crate::model::LinkFunction,
    block: &[ParamDraw],
    x: ArrayView2<f64>,
    out: &mut [f64],
) {
    // out is N×block.len(), row-major.
    let width = block.len();
    for (n, row) in x.rows().into_iter().enumerate() {
        let row = row.to_vec();
        for (m, d) in block.iter().enumerate() {
            out[n * width + m] = d.mean_unchecked(link, &row);
        }
    }
}

/// Full N×M matrix of per-draw means, partitioned over the draw axis across
/// `threads` workers. The result does not depend on `threads`.
pub fn predict_matrix(draws: &PosteriorDraws, x: ArrayView2<f64>, threads: usize) -> Result<Array2<f64>> {
    check_dim("input columns", draws.j(), x.ncols())?;
    let (n, m) = (x.nrows(), draws.m());
    if n == 0 {
        return Ok(Array2::zeros((0, m)));
    }
    let threads = threads.clamp(1, m);
    let link = draws.spec().link;
    if threads == 1 {
        let mut out = vec![0.0; n * m];
        fill_block(link, draws.draws(), x, &mut out);
        return Ok(Array2::from_shape_vec((n, m), out).expect("shape"));
    }

    let chunk = m.div_ceil(threads);
    let blocks: Vec<Vec<f64>> = std::thread::scope(|s| {
        let handles: Vec<_> = draws
            .draws()
            .chunks(chunk)
            .map(|block| {
                s.spawn(move || {
                    let mut out = vec![0.0; n * block.len()];
                    fill_block(link, block, x, &mut out);
                    out
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("prediction worker panicked"))
            .collect()
    });

    let mut out = Array2::zeros((n, m));
    for (b, block) in blocks.iter().enumerate() {
        let width = block.len() / n;
        let start = b * chunk;
        for r in 0..n {
            out.row_mut(r)
                .slice_mut(ndarray::s![start..start + width])
                .as_slice_mut()
                .expect("contiguous row")
                .copy_from_slice(&block[r * width..(r + 1) * width]);
        }
    }
    Ok(out)
}

/// Time one batch prediction. The clock covers computation only.
pub fn predict_batch_timed(
    draws: &PosteriorDraws,
    x: ArrayView2<f64>,
    threads: usize,
    mode: BatchMode,
) -> Result<TimedBatchResult> {
    let threads = threads.max(1);
    let start = Instant::now();
    let matrix = predict_matrix(draws, x, threads)?;
    let predictions = match mode {
        BatchMode::PerDraw => BatchPredictions::PerDraw(matrix),
        BatchMode::RiskMin => BatchPredictions::RiskMin(
            matrix
                .rows()
                .into_iter()
                .map(|r| draw_mean(r.iter().copied()))
                .collect(),
        ),
    };
    let wall_time = start.elapsed();
    Ok(TimedBatchResult {
        predictions,
        wall_time,
        threads_used: threads.min(draws.m()),
    })
}

/// Median and minimum of repeated timings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingSummary {
    pub median_s: f64,
    pub min_s: f64,
}

/// Run `f` once untimed, then `reps` timed repetitions.
pub fn time_repeated<F: FnMut() -> Duration>(reps: usize, mut f: F) -> TimingSummary {
    f();
    let mut times: Vec<f64> = (0..reps.max(1)).map(|_| f().as_secs_f64()).collect();
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    let median_s = if times.len() % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    };
    TimingSummary {
        median_s,
        min_s: times[0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{self, LinkFunction, ModelSpec};
    use crate::rng;

    fn random_posterior(j: usize, m: usize, seed: u64) -> PosteriorDraws {
        let spec = ModelSpec::new(j);
        let mut r = rng::seeded(seed);
        let draws = (0..m)
            .map(|_| model::sample_ground_truth(&spec, 0.01, &mut r).draw)
            .collect();
        PosteriorDraws::from_draws(spec, draws).unwrap()
    }

    #[test]
    fn degenerate_posterior_reduces_to_single_draw() {
        let spec = ModelSpec::new(3).with_link(LinkFunction::Sine);
        let d = model::sample_ground_truth(&spec, 0.01, &mut rng::seeded(1)).draw;
        let post = PosteriorDraws::from_draws(spec.clone(), vec![d.clone(); 7]).unwrap();
        let x = [0.3, -0.2, 0.9];
        let expected = model::eval_mean(&spec, &d, &x).unwrap();
        let v = predict_draws(&post, &x).unwrap();
        assert!(v.values.iter().all(|&e| e == expected));
        assert_eq!(predict_risk_min(&post, &x).unwrap(), expected);
    }

    #[test]
    fn single_draw_and_two_value_mean() {
        let post = random_posterior(2, 1, 3);
        assert_eq!(predict_draws(&post, &[0.1, 0.2]).unwrap().values.len(), 1);
        let v = PredictionVector {
            values: vec![1.0, 3.0],
        };
        assert_eq!(v.mean(), 2.0);
    }

    #[test]
    fn draw_mean_of_identical_values_is_exact() {
        for v in [0.1, -3.7e5, 1.0 / 3.0, 5e-300] {
            assert_eq!(draw_mean(std::iter::repeat_n(v, 2_000)), v);
        }
        assert!(draw_mean(std::iter::empty()).is_nan());
        assert_eq!(draw_mean([1.0, 2.0, 3.0, 4.0]), 2.5);
    }

    #[test]
    fn entries_match_naive_per_draw_loop() {
        let post = random_posterior(4, 25, 8);
        let x = [0.5, 0.1, 0.9, 0.3];
        let v = predict_draws(&post, &x).unwrap();
        for (m, d) in post.draws().iter().enumerate() {
            let mut f = d.gamma;
            for k in 0..4 {
                f += d.beta[k] / (1.0 + (-(x[k] * d.alpha[k])).exp());
            }
            assert!((v.values[m] - f).abs() < 1e-14);
        }
        let mean = v.values.iter().sum::<f64>() / v.values.len() as f64;
        let rm = predict_risk_min(&post, &x).unwrap();
        assert!((rm - mean).abs() <= f64::EPSILON * mean.abs());
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let post = random_posterior(5, 33, 2);
        let x = Array2::from_shape_fn((40, 5), |(i, k)| ((i * 7 + k * 3) % 11) as f64 / 11.0);
        let one = predict_matrix(&post, x.view(), 1).unwrap();
        for t in [2, 3, 4, 8, 64] {
            let many = predict_matrix(&post, x.view(), t).unwrap();
            assert!(one.iter().zip(many.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        for (r, row) in x.rows().into_iter().enumerate() {
            let v = predict_draws(&post, &row.to_vec()).unwrap();
            assert_eq!(one.row(r).to_vec(), v.values);
        }
    }

    #[test]
    fn empty_batch_is_defined() {
        let post = random_posterior(2, 4, 1);
        let x = Array2::zeros((0, 2));
        let r = predict_batch_timed(&post, x.view(), 4, BatchMode::PerDraw).unwrap();
        match r.predictions {
            BatchPredictions::PerDraw(m) => assert_eq!(m.dim(), (0, 4)),
            _ => unreachable!(),
        }
        assert!(predict_matrix(&post, Array2::zeros((3, 5)).view(), 1).is_err());
    }

    #[test]
    fn risk_min_mode_averages_rows() {
        let post = random_posterior(3, 10, 4);
        let x = Array2::from_elem((6, 3), 0.4);
        let r = predict_batch_timed(&post, x.view(), 2, BatchMode::RiskMin).unwrap();
        assert!(r.wall_time > Duration::ZERO);
        let BatchPredictions::RiskMin(v) = r.predictions else {
            unreachable!()
        };
        let expected = predict_risk_min(&post, &[0.4, 0.4, 0.4]).unwrap();
        assert!(v.iter().all(|&e| (e - expected).abs() < 1e-14));
    }

    #[test]
    fn timing_summary_median() {
        let mut calls = 0u64;
        let s = time_repeated(5, || {
            calls += 1;
            Duration::from_millis(calls * 10)
        });
        assert_eq!(calls, 6);
        assert!((s.median_s - 0.04).abs() < 1e-12);
        assert!((s.min_s - 0.02).abs() < 1e-12);
    }
}
