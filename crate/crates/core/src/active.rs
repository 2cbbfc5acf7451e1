//! Active learning: grow the surrogate's training set where MC-dropout
//! uncertainty is high.
//!
//! Round 0 trains on an Algorithm-1 set. Every later round scores a fresh
//! uniform pool, samples `i_al` candidates with replacement from the softmax
//! of their uncertainties, labels them with the reference model, and resumes
//! training. Rounds stop once the best validation loss has not improved for
//! `inter_patience` rounds.

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::posterior::PosteriorDraws;
use crate::predict::predict_matrix;
use crate::rng::{self, Stream};
use crate::surrogate::{evaluate_loss, EarlyStopper, NetConfig, NormStats, SurrogateNet, Trainer};
use crate::synth::{self, DataGenConfig, InputDist, LabeledSet};

/// How AL rounds pick new inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acquisition {
    /// Softmax of MC-dropout uncertainty.
    #[default]
    Uncertainty,
    /// Uniform over the pool (baseline).
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ALConfig {
    pub i_init: usize,
    pub i_al: usize,
    /// Dropout passes per candidate.
    pub k: usize,
    pub pool_size: usize,
    pub inter_patience: usize,
    pub intra_patience: usize,
    /// Keep-probability for the round-0 set.
    pub tau: f64,
    pub val_size: usize,
    /// Optional hard cap on AL rounds after round 0.
    pub max_rounds: Option<usize>,
    pub acquisition: Acquisition,
    pub threads: usize,
    pub seed: u64,
}

impl Default for ALConfig {
    fn default() -> Self {
        ALConfig {
            i_init: 10_000,
            i_al: 1_000,
            k: 50,
            pool_size: 10_000,
            inter_patience: 10,
            intra_patience: 20,
            tau: 0.8,
            val_size: 5_000,
            max_rounds: None,
            acquisition: Acquisition::Uncertainty,
            threads: 1,
            seed: 0,
        }
    }
}

impl ALConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("i_init", self.i_init),
            ("i_al", self.i_al),
            ("pool_size", self.pool_size),
            ("inter_patience", self.inter_patience),
            ("intra_patience", self.intra_patience),
            ("val_size", self.val_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {}", self.k)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        Ok(())
    }

    /// Dataset size after `rounds` AL rounds.
    pub fn dataset_size_after(&self, rounds: usize) -> usize {
        self.i_init + rounds * self.i_al
    }
}

/// Per-candidate uncertainty and the resulting acquisition distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport {
    pub sigma: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Dropout stream for one input: derived from a base seed and the bit
/// pattern of the row, so scores do not depend on where the row sits.
fn row_rng(base: u64, row: &[f64]) -> rng::Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in row {
        for b in v.to_bits().to_le_bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    let mut r = rng::Rng::seed_from_u64(base);
    r.set_stream(h);
    r
}

/// Population standard deviation over the `K` passes (rows) of each output
/// column, averaged over the `M` columns. `labels`, when given, also yields the
/// mean absolute error over all `K×M` entries.
fn pass_stats(passes: ArrayView2<f64>, labels: Option<&[f64]>) -> (f64, f64) {
    let (k, m) = passes.dim();
    let mut sigma = 0.0;
    let mut abs_err = 0.0;
    for (col_idx, col) in passes.axis_iter(Axis(1)).enumerate() {
        // Shifting by the first pass keeps identical passes at exactly zero.
        let first = col[0];
        let mean = col.iter().map(|v| v - first).sum::<f64>() / k as f64;
        let var = col.iter().map(|v| (v - first - mean).powi(2)).sum::<f64>() / k as f64;
        sigma += var.sqrt();
        if let Some(y) = labels {
            abs_err += col.iter().map(|v| (v - y[col_idx]).abs()).sum::<f64>();
        }
    }
    (sigma / m as f64, abs_err / (k * m) as f64)
}

/// Score rows `x` with `k` dropout passes each. Returns (σ, μ_RMSE) per row;
/// μ_RMSE is NaN without labels.
fn score_rows(
    net: &SurrogateNet,
    x: ArrayView2<f64>,
    labels: Option<ArrayView2<f64>>,
    k: usize,
    base: u64,
    threads: usize,
) -> Vec<(f64, f64)> {
    let n = x.nrows();
    let work = |lo: usize, hi: usize| -> Vec<(f64, f64)> {
        let xs = x.slice(ndarray::s![lo..hi, ..]);
        let act = net.hidden(xs, NormStats::Running).act;
        let mut out = Vec::with_capacity(hi - lo);
        for (i, a) in act.rows().into_iter().enumerate() {
            let row = x.row(lo + i).to_vec();
            let mut r = row_rng(base, &row);
            let mut passes = net.sample_mask(k, &mut r);
            passes *= &a;
            let o = net.output_layer(passes.view());
            let y = labels.map(|l| l.row(lo + i).to_vec());
            let (s, mu) = pass_stats(o.view(), y.as_deref());
            out.push((s, if labels.is_some() { mu } else { f64::NAN }));
        }
        out
    };
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return work(0, n);
    }
    let chunk = n.div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..n)
            .step_by(chunk)
            .map(|lo| {
                let work = &work;
                s.spawn(move || work(lo, (lo + chunk).min(n)))
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("scoring worker panicked"))
            .collect()
    })
}

fn check_pool(net: &SurrogateNet, x: ArrayView2<f64>, k: usize) -> Result<()> {
    check_dim("pool columns", net.input_dim(), x.ncols())?;
    if k < 2 {
        return Err(Error::Contract(format!("uncertainty needs k >= 2, got {k}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pool inputs"));
    }
    Ok(())
}

/// Mean over outputs of the across-pass standard deviation, per pool row.
pub fn uncertainty<R: Rng + ?Sized>(
    net: &SurrogateNet,
    x_pool: ArrayView2<f64>,
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    uncertainty_threaded(net, x_pool, k, rng, 1)
}

pub fn uncertainty_threaded<R: Rng + ?Sized>(
    net: &SurrogateNet,
    x_pool: ArrayView2<f64>,
    k: usize,
    rng: &mut R,
    threads: usize,
) -> Result<Vec<f64>> {
    check_pool(net, x_pool, k)?;
    let base = rng.next_u64();
    Ok(score_rows(net, x_pool, None, k, base, threads)
        .into_iter()
        .map(|(s, _)| s)
        .collect())
}

/// Softmax with max-shift.
pub fn acquisition_probs(sigma: &[f64]) -> Result<Vec<f64>> {
    if sigma.is_empty() {
        return Err(Error::Empty("uncertainty vector"));
    }
    if sigma.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("uncertainty vector"));
    }
    let max = sigma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = sigma.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub fn uncertainty_report<R: Rng + ?Sized>(
    net: &SurrogateNet,
    x_pool: ArrayView2<f64>,
    k: usize,
    rng: &mut R,
) -> Result<UncertaintyReport> {
    let sigma = uncertainty(net, x_pool, k, rng)?;
    let probs = acquisition_probs(&sigma)?;
    Ok(UncertaintyReport { sigma, probs })
}

/// `n` iid categorical draws from `probs`, with replacement.
pub fn acquire<R: Rng + ?Sized>(probs: &[f64], n: usize, rng: &mut R) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(probs)
        .map_err(|e| Error::Contract(format!("invalid acquisition probabilities: {e}")))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// One row per pool input: Eq.-4 uncertainty and the mean absolute error
/// of all `K×M` dropout predictions against the reference labels.
pub fn calibration_data<R: Rng + ?Sized>(
    net: &SurrogateNet,
    draws: &PosteriorDraws,
    x_pool: ArrayView2<f64>,
    k: usize,
    rng: &mut R,
    threads: usize,
) -> Result<Vec<(f64, f64)>> {
    check_pool(net, x_pool, k)?;
    check_dim("network outputs", draws.m(), net.output_dim())?;
    let labels = predict_matrix(draws, x_pool, threads)?;
    let base = rng.next_u64();
    Ok(score_rows(net, x_pool, Some(labels.view()), k, base, threads))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub dataset_size: usize,
    /// Loss of the round's restored network on the whole training set.
    pub train_loss: f64,
    pub val_loss: f64,
    /// Validation loss at the start of the round's training.
    pub start_val_loss: f64,
    pub epochs: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct ALOutcome {
    pub net: SurrogateNet,
    pub history: Vec<RoundRecord>,
    pub data: LabeledSet,
    /// Round whose network was restored.
    pub best_round: usize,
}

/// Number of AL rounds run for a sequence of per-round validation losses,
/// where `losses[0]` belongs to round 0. Uses the same stopping rule as
/// [`al_train`]; if the sequence ends first, every provided round runs.
pub fn rounds_run(cfg: &ALConfig, losses: &[f64]) -> usize {
    let Some((&first, rest)) = losses.split_first() else {
        return 0;
    };
    let mut stopper = EarlyStopper::new(cfg.inter_patience, first, ());
    let cap = cfg.max_rounds.unwrap_or(usize::MAX);
    for (i, &loss) in rest.iter().enumerate() {
        let round = i + 1;
        if round > cap {
            return cap;
        }
        if stopper.observe(round, loss, || ()) {
            return round;
        }
    }
    rest.len().min(cap)
}

/// Validation set: `val_size` unmasked uniform inputs.
pub fn validation_set(draws: &PosteriorDraws, cfg: &ALConfig) -> Result<LabeledSet> {
    synth::evaluation_set(draws, cfg.val_size, cfg.seed, Stream::Validation, cfg.threads)
}

pub fn al_train(
    draws: &PosteriorDraws,
    cfg: &ALConfig,
    net_cfg: &NetConfig,
    val: &LabeledSet,
) -> Result<ALOutcome> {
    cfg.validate()?;
    check_dim("network inputs", draws.j(), net_cfg.input_dim)?;
    check_dim("network outputs", draws.m(), net_cfg.output_dim)?;
    if cfg.acquisition == Acquisition::Uncertainty && net_cfg.dropout_rate <= 0.0 {
        return Err(Error::Config(
            "uncertainty acquisition needs dropout_rate > 0".into(),
        ));
    }
    let j = draws.j();
    let mut net = SurrogateNet::new(net_cfg.clone())?;
    let mut trainer = Trainer::new(&net);
    let mut pool_rng = rng::stream(cfg.seed, Stream::AlPool);
    let mut acquire_rng = rng::stream(cfg.seed, Stream::AlAcquire);

    let start = Instant::now();
    let mut data = synth::generate(
        draws,
        &DataGenConfig {
            examples: cfg.i_init,
            tau: cfg.tau,
            input_dist: InputDist::Uniform01,
            seed: cfg.seed,
            threads: cfg.threads,
        },
    )?;
    let mut history = Vec::new();
    let report = trainer.fit(&mut net, &data, val, cfg.intra_patience)?;
    history.push(RoundRecord {
        round: 0,
        dataset_size: data.len(),
        train_loss: evaluate_loss(&net, &data)?,
        val_loss: report.best_val_loss,
        start_val_loss: report.initial_val_loss,
        epochs: report.epochs_run(),
        wall_time_s: start.elapsed().as_secs_f64(),
    });
    let mut inter = EarlyStopper::new(cfg.inter_patience, report.best_val_loss, net.clone());

    let cap = cfg.max_rounds.unwrap_or(usize::MAX);
    let mut round = 0;
    while round < cap {
        round += 1;
        let start = Instant::now();
        let pool = InputDist::Uniform01.sample_matrix(cfg.pool_size, j, &mut pool_rng);
        let picks = match cfg.acquisition {
            Acquisition::Uncertainty => {
                let sigma = uncertainty_threaded(&net, pool.view(), cfg.k, &mut acquire_rng, cfg.threads)?;
                acquire(&acquisition_probs(&sigma)?, cfg.i_al, &mut acquire_rng)?
            }
            Acquisition::Uniform => (0..cfg.i_al)
                .map(|_| acquire_rng.random_range(0..cfg.pool_size))
                .collect(),
        };
        let chosen: Array2<f64> = pool.select(Axis(0), &picks);
        let labeled = synth::generate_at(draws, chosen.view(), cfg.threads)?;
        data.extend(&labeled)?;
        let report = trainer.fit(&mut net, &data, val, cfg.intra_patience)?;
        history.push(RoundRecord {
            round,
            dataset_size: data.len(),
            train_loss: evaluate_loss(&net, &data)?,
            val_loss: report.best_val_loss,
            start_val_loss: report.initial_val_loss,
            epochs: report.epochs_run(),
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        if inter.observe(round, report.best_val_loss, || net.clone()) {
            break;
        }
    }
    let best_round = inter.best_step();
    Ok(ALOutcome {
        net: inter.into_best(),
        history,
        data,
        best_round,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{self, ModelSpec};
    use crate::surrogate::Mode;
    use proptest::prelude::*;

    fn toy_net(dropout: f64, m: usize) -> SurrogateNet {
        SurrogateNet::new(NetConfig {
            input_dim: 3,
            hidden_width: 12,
            output_dim: m,
            dropout_rate: dropout,
            seed: 2,
            ..NetConfig::default()
        })
        .unwrap()
    }

    fn pool(rows: usize, seed: u64) -> Array2<f64> {
        InputDist::Uniform01.sample_matrix(rows, 3, &mut rng::seeded(seed))
    }

    #[test]
    fn no_dropout_means_no_uncertainty() {
        let net = toy_net(0.0, 4);
        let s = uncertainty(&net, pool(20, 1).view(), 10, &mut rng::seeded(0)).unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_point_population_std() {
        let passes = ndarray::array![[1.0], [4.0]];
        let (s, _) = pass_stats(passes.view(), None);
        assert!((s - 3.0 / 2.0).abs() < 1e-15);
        // |a − b| / 2 is the population std of two points; |a − b| / √2 would
        // be the sample std.
        assert!((s - (4.0f64 - 1.0).abs() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn uncertainty_matches_brute_force() {
        let net = toy_net(0.5, 3);
        let x = pool(6, 2);
        let k = 8;
        let base = 77u64;
        let scored = score_rows(&net, x.view(), None, k, base, 1);
        for (i, row) in x.rows().into_iter().enumerate() {
            let row = row.to_vec();
            let mut r = row_rng(base, &row);
            let passes = net.mc_dropout_predict(&row, k, &mut r).unwrap();
            let mut total = 0.0;
            for m in 0..3 {
                let vals: Vec<f64> = (0..k).map(|c| passes[[m, c]]).collect();
                let mean = vals.iter().sum::<f64>() / k as f64;
                let mut ss = 0.0;
                for v in &vals {
                    ss += (v - mean) * (v - mean);
                }
                total += (ss / k as f64).sqrt();
            }
            assert!((scored[i].0 - total / 3.0).abs() < 1e-12, "row {i}");
        }
    }

    #[test]
    fn uncertainty_is_permutation_and_thread_invariant() {
        let net = toy_net(0.5, 2);
        let x = pool(30, 3);
        let a = uncertainty(&net, x.view(), 6, &mut rng::seeded(9)).unwrap();
        let reversed = x.slice(ndarray::s![..;-1, ..]).to_owned();
        let b = uncertainty(&net, reversed.view(), 6, &mut rng::seeded(9)).unwrap();
        for i in 0..30 {
            assert_eq!(a[i], b[29 - i]);
        }
        let c = uncertainty_threaded(&net, x.view(), 6, &mut rng::seeded(9), 4).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn uncertainty_rejects_k_below_two() {
        let net = toy_net(0.5, 2);
        assert!(matches!(
            uncertainty(&net, pool(3, 1).view(), 1, &mut rng::seeded(0)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn softmax_examples() {
        let p = acquisition_probs(&[0.7; 4]).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let p = acquisition_probs(&[0.0, 3f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        assert!(acquisition_probs(&[]).is_err());
        assert!(acquisition_probs(&[1.0, f64::NAN]).is_err());
        // Large values stay finite thanks to the shift.
        let p = acquisition_probs(&[1000.0, 1000.0]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn one_hot_acquisition() {
        let idx = acquire(&[0.0, 1.0, 0.0], 50, &mut rng::seeded(1)).unwrap();
        assert_eq!(idx.len(), 50);
        assert!(idx.iter().all(|&i| i == 1));
    }

    #[test]
    fn acquisition_frequencies_match_probs() {
        let probs = [0.1, 0.2, 0.3, 0.4];
        let n = 100_000;
        let idx = acquire(&probs, n, &mut rng::seeded(5)).unwrap();
        let mut counts = [0usize; 4];
        for i in idx {
            counts[i] += 1;
        }
        for (c, p) in counts.iter().zip(probs) {
            let freq = *c as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() < 4.0 * se, "{freq} vs {p}");
        }
    }

    #[test]
    fn calibration_table_shape_and_memorized_net() {
        let spec = ModelSpec::new(3);
        let d = model::sample_ground_truth(&spec, 0.01, &mut rng::seeded(3)).draw;
        let post = PosteriorDraws::from_draws(spec, vec![d; 2]).unwrap();
        // A network whose output is the constant label at one input.
        let mut net = toy_net(0.0, 2);
        net.w2.fill(0.0);
        let x = pool(1, 4);
        let label = predict_matrix(&post, x.view(), 1).unwrap();
        net.b2.assign(&label.row(0));
        let table = calibration_data(&net, &post, x.view(), 5, &mut rng::seeded(0), 1).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table[0], (0.0, 0.0));
        let table = calibration_data(&net, &post, pool(17, 5).view(), 5, &mut rng::seeded(0), 2).unwrap();
        assert_eq!(table.len(), 17);
    }

    #[test]
    fn default_floor_is_twenty_thousand() {
        let cfg = ALConfig::default();
        // Validation loss never improves after round 0.
        let losses: Vec<f64> = std::iter::once(1.0).chain(std::iter::repeat_n(2.0, 50)).collect();
        let rounds = rounds_run(&cfg, &losses);
        assert_eq!(rounds, 10);
        assert_eq!(cfg.dataset_size_after(rounds), 20_000);
    }

    #[test]
    fn patience_one_with_single_improvement_runs_two_rounds() {
        let cfg = ALConfig {
            inter_patience: 1,
            ..ALConfig::default()
        };
        assert_eq!(rounds_run(&cfg, &[1.0, 0.5, 0.6, 0.4, 0.3]), 2);
    }

    #[test]
    fn round_cap_is_respected() {
        let cfg = ALConfig {
            max_rounds: Some(3),
            ..ALConfig::default()
        };
        let losses: Vec<f64> = (0..20).map(|i| 1.0 / (i + 1) as f64).collect();
        assert_eq!(rounds_run(&cfg, &losses), 3);
    }

    proptest! {
        #[test]
        fn floor_holds_for_any_loss_sequence(losses in proptest::collection::vec(0.0..10.0f64, 40..80)) {
            let cfg = ALConfig::default();
            let rounds = rounds_run(&cfg, &losses);
            prop_assert!(cfg.dataset_size_after(rounds) >= 20_000);
        }

        #[test]
        fn probs_sum_to_one_and_are_shift_invariant(
            sigma in proptest::collection::vec(0.0..5.0f64, 1..200),
            shift in -50.0..50.0f64,
        ) {
            let p = acquisition_probs(&sigma).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            let shifted: Vec<f64> = sigma.iter().map(|s| s + shift).collect();
            let q = acquisition_probs(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    fn tiny_posterior() -> PosteriorDraws {
        let spec = ModelSpec::new(2);
        let mut r = rng::seeded(11);
        let draws = (0..4)
            .map(|_| model::sample_ground_truth(&spec, 0.01, &mut r).draw)
            .collect();
        PosteriorDraws::from_draws(spec, draws).unwrap()
    }

    fn tiny_configs() -> (ALConfig, NetConfig) {
        let cfg = ALConfig {
            i_init: 200,
            i_al: 50,
            k: 4,
            pool_size: 300,
            inter_patience: 2,
            intra_patience: 3,
            val_size: 100,
            max_rounds: Some(4),
            seed: 7,
            ..ALConfig::default()
        };
        let net_cfg = NetConfig {
            input_dim: 2,
            hidden_width: 16,
            output_dim: 4,
            learning_rate: 3e-3,
            batch_size: 32,
            max_epochs: 15,
            seed: 7,
            ..NetConfig::default()
        };
        (cfg, net_cfg)
    }

    #[test]
    fn al_loop_bookkeeping() {
        let post = tiny_posterior();
        let (cfg, net_cfg) = tiny_configs();
        let val = validation_set(&post, &cfg).unwrap();
        let out = al_train(&post, &cfg, &net_cfg, &val).unwrap();
        assert!(!out.history.is_empty());
        for (r, rec) in out.history.iter().enumerate() {
            assert_eq!(rec.round, r);
            assert_eq!(rec.dataset_size, cfg.dataset_size_after(r));
        }
        for w in out.history.windows(2) {
            assert_eq!(w[1].start_val_loss, w[0].val_loss);
        }
        let final_loss = evaluate_loss(&out.net, &val).unwrap();
        assert!(out.history.iter().all(|r| final_loss <= r.val_loss));
        assert_eq!(final_loss, out.history[out.best_round].val_loss);
        assert_eq!(out.data.len(), out.history.last().unwrap().dataset_size);
        // Eval forward of the returned net is usable.
        out.net.forward(&[0.1, 0.2], Mode::Eval, &mut rng::seeded(0)).unwrap();
    }

    #[test]
    fn al_loop_is_seed_deterministic() {
        let post = tiny_posterior();
        let (cfg, net_cfg) = tiny_configs();
        let cfg = ALConfig {
            max_rounds: Some(2),
            ..cfg
        };
        let val = validation_set(&post, &cfg).unwrap();
        let a = al_train(&post, &cfg, &net_cfg, &val).unwrap();
        let b = al_train(&post, &cfg, &net_cfg, &val).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.data, b.data);
    }
}
