//! Benchmarks comparing the reference predictor with the surrogate:
//! prediction time against model size, test error, the complexity
//! crossover, and effect-curve invariance experiments.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::active::{al_train, validation_set, ALConfig, ALOutcome};
use crate::error::{check_dim, Error, Result};
use crate::model::{self, GroundTruth, LinkFunction, ModelSpec, DEFAULT_TRUTH_SIGMA2};
use crate::posterior::{sample_posterior, PosteriorDraws, SamplerConfig};
use crate::predict::{predict_batch_timed, predict_matrix, time_repeated, BatchMode, TimingSummary};
use crate::rng::{self, Stream};
use crate::surrogate::{mse, train, NetConfig, SurrogateNet};
use crate::synth::{self, DataGenConfig, InputDist, LabeledSet};

/// Smallest integer `n` with `n ≥ κ·m / (m − 1)`.
pub fn crossover(kappa: u64, m: u64) -> Result<u64> {
    if m < 2 {
        return Err(Error::Contract(format!("crossover needs m >= 2, got {m}")));
    }
    let num = u128::from(kappa) * u128::from(m);
    let den = u128::from(m - 1);
    let n = num.div_ceil(den);
    u64::try_from(n).map_err(|_| Error::Contract("crossover overflows u64".into()))
}

/// Least-squares line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    check_dim("fit points", x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::Empty("linear fit needs two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Contract("linear fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept,
        r2,
    })
}

/// Ranks starting at 1, ties receiving their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim("paired samples", a.len(), b.len())?;
    if a.len() < 2 {
        return Err(Error::Empty("correlation needs two pairs"));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Anything that maps an `N×J` batch to `N×M` per-draw outputs.
pub trait Predictor {
    fn input_dim(&self) -> usize;
    fn predict_outputs(&self, x: ArrayView2<f64>) -> Result<Array2<f64>>;
}

impl Predictor for PosteriorDraws {
    fn input_dim(&self) -> usize {
        self.j()
    }

    fn predict_outputs(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        predict_matrix(self, x, 1)
    }
}

impl Predictor for SurrogateNet {
    fn input_dim(&self) -> usize {
        SurrogateNet::input_dim(self)
    }

    fn predict_outputs(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.predict(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectMode {
    /// Average over `n_mc` uniform draws of the other coordinates.
    Marginalized { n_mc: usize },
    /// Other coordinates held at `c`.
    Fixed { c: f64 },
}

impl EffectMode {
    pub fn label(&self) -> String {
        match self {
            EffectMode::Marginalized { .. } => "marginalized_na".into(),
            EffectMode::Fixed { c } => format!("fixed_{c}"),
        }
    }
}

/// Relative effect `g(x) − g(x with x_j = 0)` at one grid value,
/// summarized over the `M` outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectPoint {
    pub x_j: f64,
    pub mean: f64,
    /// Population std over the `M` outputs.
    pub std: f64,
    /// Std over the marginalization draws of the output-averaged effect;
    /// zero in fixed mode.
    pub mc_sd: f64,
}

impl EffectPoint {
    pub fn lo95(&self) -> f64 {
        self.mean - 1.96 * self.std
    }

    pub fn hi95(&self) -> f64 {
        self.mean + 1.96 * self.std
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn effect_curve<P: Predictor + ?Sized, R: Rng + ?Sized>(
    predictor: &P,
    j: usize,
    grid: &[f64],
    mode: EffectMode,
    rng: &mut R,
) -> Result<Vec<EffectPoint>> {
    let dim = predictor.input_dim();
    if grid.is_empty() {
        return Err(Error::Empty("effect grid"));
    }
    if j >= dim {
        return Err(Error::Contract(format!("predictor index {j} out of range for J = {dim}")));
    }
    let base = match mode {
        EffectMode::Fixed { c } => Array2::from_elem((1, dim), c),
        EffectMode::Marginalized { n_mc } => {
            if n_mc == 0 {
                return Err(Error::Config("n_mc must be at least 1".into()));
            }
            InputDist::Uniform01.sample_matrix(n_mc, dim, rng)
        }
    };
    let rows = base.nrows();
    // One stacked batch: x_j = 0 block first, then one block per grid value.
    let mut x = Array2::zeros(((grid.len() + 1) * rows, dim));
    for (b, v) in std::iter::once(0.0).chain(grid.iter().copied()).enumerate() {
        let mut block = x.slice_mut(ndarray::s![b * rows..(b + 1) * rows, ..]);
        block.assign(&base);
        block.column_mut(j).fill(v);
    }
    let out = predictor.predict_outputs(x.view())?;
    let m = out.ncols();
    let reference = out.slice(ndarray::s![0..rows, ..]);
    let mut points = Vec::with_capacity(grid.len());
    for (g, &v) in grid.iter().enumerate() {
        let block = out.slice(ndarray::s![(g + 1) * rows..(g + 2) * rows, ..]);
        let diff = &block - &reference;
        let per_output: Array1<f64> = diff.mean_axis(Axis(0)).expect("rows >= 1");
        let (mean, std) = mean_std(per_output.as_slice().expect("contiguous"));
        let per_row: Vec<f64> = diff.rows().into_iter().map(|r| r.sum() / m as f64).collect();
        let mc_sd = if rows > 1 { mean_std(&per_row).1 } else { 0.0 };
        // x_j = 0 reproduces the reference rows exactly.
        let (mean, std, mc_sd) = if v == 0.0 { (0.0, 0.0, 0.0) } else { (mean, std, mc_sd) };
        points.push(EffectPoint {
            x_j: v,
            mean,
            std,
            mc_sd,
        });
    }
    Ok(points)
}

/// Largest absolute gap between two curves' means on a common grid.
pub fn max_abs_deviation(a: &[EffectPoint], b: &[EffectPoint]) -> Result<f64> {
    check_dim("curve length", a.len(), b.len())?;
    Ok(a.iter()
        .zip(b)
        .map(|(p, q)| (p.mean - q.mean).abs())
        .fold(0.0, f64::max))
}

/// Ground truth with predictor `weak` forced to β̂ = 0.1 and, optionally,
/// `strong` to β̂ = 1.0.
pub fn weak_strong_truth<R: Rng + ?Sized>(
    spec: &ModelSpec,
    weak: usize,
    strong: Option<usize>,
    sigma2: f64,
    rng: &mut R,
) -> Result<GroundTruth> {
    if weak >= spec.j || strong.is_some_and(|s| s >= spec.j || s == weak) {
        return Err(Error::Config("weak/strong predictor indices out of range".into()));
    }
    let mut truth = model::sample_ground_truth(spec, sigma2, rng);
    truth.draw.beta[weak] = 0.1;
    if let Some(s) = strong {
        truth.draw.beta[s] = 1.0;
    }
    Ok(truth)
}

/// Observed data and posterior for a synthetic problem with known truth.
#[derive(Debug, Clone)]
pub struct SyntheticFit {
    pub truth: GroundTruth,
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub draws: PosteriorDraws,
}

/// Generate `n_obs` observations from `truth` and sample the posterior.
pub fn fit_synthetic<R: Rng + ?Sized>(
    spec: &ModelSpec,
    truth: GroundTruth,
    n_obs: usize,
    obs_rng: &mut R,
    sampler: &SamplerConfig,
) -> Result<SyntheticFit> {
    let (x, y) = model::generate_observed(spec, &truth, n_obs, obs_rng)?;
    let draws = sample_posterior(spec, x.view(), y.view(), sampler)?;
    Ok(SyntheticFit { truth, x, y, draws })
}

/// Desk-scale sweep over model sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub j_values: Vec<usize>,
    pub link: LinkFunction,
    pub truth_sigma2: f64,
    /// Observations per fit.
    pub n_obs: usize,
    pub n_test: usize,
    pub timing_reps: usize,
    /// Threads used by the reference predictor while timing.
    pub threads: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            j_values: vec![2, 5, 10, 20],
            link: LinkFunction::Sigmoid,
            truth_sigma2: DEFAULT_TRUTH_SIGMA2,
            n_obs: 5_000,
            n_test: 5_000,
            timing_reps: 5,
            threads: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedRow {
    pub j: usize,
    pub bm_time_s: f64,
    pub bm_time_min_s: f64,
    pub nn_time_s: f64,
    pub nn_time_min_s: f64,
    pub test_mse: f64,
    pub dataset_size: usize,
    pub al_rounds: usize,
    pub train_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub threads: usize,
    pub precision: String,
    pub timing_reps: usize,
    pub m: usize,
    pub n_test: usize,
    pub hidden_width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<SpeedRow>,
    pub environment: Environment,
}

impl BenchReport {
    /// Linear fit of median reference-predictor time against J.
    pub fn bm_time_fit(&self) -> Result<LinearFit> {
        let j: Vec<f64> = self.rows.iter().map(|r| r.j as f64).collect();
        let t: Vec<f64> = self.rows.iter().map(|r| r.bm_time_s).collect();
        linear_fit(&j, &t)
    }

    /// Surrogate time at the largest J over that at the smallest.
    pub fn nn_time_ratio(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => b.nn_time_s / a.nn_time_s,
            _ => f64::NAN,
        }
    }
}

/// Everything produced for one J of the sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub j: usize,
    pub fit: SyntheticFit,
    pub outcome: ALOutcome,
    pub test: LabeledSet,
}

/// Seed of the sweep cell for model size `j`.
pub fn cell_seed(seed: u64, j: usize) -> u64 {
    seed ^ (j as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Fit, train and time one model size.
pub fn run_sweep_cell(
    j: usize,
    sweep: &SweepConfig,
    sampler: &SamplerConfig,
    net_cfg: &NetConfig,
    al_cfg: &ALConfig,
) -> Result<(SpeedRow, SweepCell)> {
    let seed = cell_seed(sweep.seed, j);
    let spec = ModelSpec::new(j).with_link(sweep.link);
    let mut data_rng = rng::stream(seed, Stream::BmData);
    let truth = model::sample_ground_truth(&spec, sweep.truth_sigma2, &mut data_rng);
    let sampler = SamplerConfig {
        seed,
        ..sampler.clone()
    };
    let fit = fit_synthetic(&spec, truth, sweep.n_obs, &mut data_rng, &sampler)?;
    let draws = &fit.draws;

    let al = ALConfig {
        seed,
        ..al_cfg.clone()
    };
    let net_cfg = NetConfig {
        input_dim: j,
        output_dim: draws.m(),
        seed,
        ..net_cfg.clone()
    };
    let val = validation_set(draws, &al)?;
    let start = Instant::now();
    let outcome = al_train(draws, &al, &net_cfg, &val)?;
    let train_time_s = start.elapsed().as_secs_f64();
    let (timing, test) = time_cell(draws, &outcome.net, sweep, seed)?;
    let row = SpeedRow {
        j,
        bm_time_s: timing.bm.median_s,
        bm_time_min_s: timing.bm.min_s,
        nn_time_s: timing.nn.median_s,
        nn_time_min_s: timing.nn.min_s,
        test_mse: timing.test_mse,
        dataset_size: outcome.data.len(),
        al_rounds: outcome.history.len() - 1,
        train_time_s,
    };
    Ok((row, SweepCell { j, fit, outcome, test }))
}

/// Timings and test error of one trained cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTiming {
    pub bm: TimingSummary,
    pub nn: TimingSummary,
    pub test_mse: f64,
}

/// Time both predictors on the cell's test set (regenerated from `seed`).
pub fn time_cell(
    draws: &PosteriorDraws,
    net: &SurrogateNet,
    sweep: &SweepConfig,
    seed: u64,
) -> Result<(CellTiming, LabeledSet)> {
    let test = synth::evaluation_set(draws, sweep.n_test, seed, Stream::Test, sweep.threads)?;
    check_dim("surrogate input", draws.j(), net.input_dim())?;
    check_dim("surrogate output", draws.m(), net.output_dim())?;
    let bm = time_repeated(sweep.timing_reps, || {
        predict_batch_timed(draws, test.x.view(), sweep.threads, BatchMode::PerDraw)
            .expect("validated shapes")
            .wall_time
    });
    let nn = time_repeated(sweep.timing_reps, || {
        let start = Instant::now();
        let out = net.predict(test.x.view()).expect("validated shapes");
        let elapsed = start.elapsed();
        std::hint::black_box(out);
        elapsed
    });
    let test_mse = mse(net, &test)?;
    Ok((CellTiming { bm, nn, test_mse }, test))
}

/// Run every cell of the sweep in order of increasing J.
pub fn run_speed_sweep(
    sweep: &SweepConfig,
    sampler: &SamplerConfig,
    net_cfg: &NetConfig,
    al_cfg: &ALConfig,
) -> Result<(BenchReport, Vec<SweepCell>)> {
    if sweep.j_values.is_empty() {
        return Err(Error::Empty("sweep J values"));
    }
    let mut j_values = sweep.j_values.clone();
    j_values.sort_unstable();
    j_values.dedup();
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for j in j_values {
        let (row, cell) = run_sweep_cell(j, sweep, sampler, net_cfg, al_cfg)?;
        rows.push(row);
        cells.push(cell);
    }
    let report = BenchReport {
        rows,
        environment: Environment {
            threads: sweep.threads,
            precision: "f64".into(),
            timing_reps: sweep.timing_reps,
            m: sampler.samples,
            n_test: sweep.n_test,
            hidden_width: net_cfg.hidden_width,
        },
    };
    Ok((report, cells))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvarianceConfig {
    /// Target predictor index.
    pub j: usize,
    pub tau_values: Vec<f64>,
    pub c_values: Vec<f64>,
    pub n_mc: usize,
    pub grid: Vec<f64>,
    /// Training-set size per τ (equal across τ).
    pub examples: usize,
    pub val_size: usize,
    pub intra_patience: usize,
    pub seed: u64,
}

impl Default for InvarianceConfig {
    fn default() -> Self {
        InvarianceConfig {
            j: 0,
            tau_values: vec![0.2, 0.5, 0.8, 1.0],
            c_values: vec![0.0, 0.5, 1.0],
            n_mc: 1000,
            grid: (0..=20).map(|i| i as f64 / 20.0).collect(),
            examples: 20_000,
            val_size: 5_000,
            intra_patience: 20,
            seed: 0,
        }
    }
}

impl InvarianceConfig {
    pub fn validate(&self, j_total: usize) -> Result<()> {
        if self.j >= j_total {
            return Err(Error::Config(format!(
                "invariance predictor {} out of range for J = {j_total}",
                self.j
            )));
        }
        if self.n_mc == 0 || self.examples == 0 || self.val_size == 0 || self.intra_patience == 0 {
            return Err(Error::Config("invariance counts must be at least 1".into()));
        }
        if self.grid.is_empty() || self.tau_values.is_empty() {
            return Err(Error::Config("invariance grid and tau list must be nonempty".into()));
        }
        if self.tau_values.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::Config("tau values must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Modes evaluated by the suite: one fixed mode per `c`, then the
    /// marginalized mode.
    pub fn modes(&self) -> Vec<EffectMode> {
        self.c_values
            .iter()
            .map(|&c| EffectMode::Fixed { c })
            .chain(std::iter::once(EffectMode::Marginalized { n_mc: self.n_mc }))
            .collect()
    }
}

/// One effect curve: `tau = None` is the reference model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectTable {
    pub tau: Option<f64>,
    pub mode: EffectMode,
    pub points: Vec<EffectPoint>,
}

impl EffectTable {
    /// File stem `invariance_<tau|bm>_<mode>_<c|na>`.
    pub fn file_stem(&self) -> String {
        let who = self.tau.map_or_else(|| "bm".to_string(), |t| t.to_string());
        format!("invariance_{who}_{}", self.mode.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationRow {
    pub tau: f64,
    pub mode: EffectMode,
    pub max_abs_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceSuite {
    pub tables: Vec<EffectTable>,
    pub deviations: Vec<DeviationRow>,
    /// Validation MSE of each τ-net, in `tau_values` order.
    pub val_mse: Vec<f64>,
}

impl InvarianceSuite {
    pub fn deviation(&self, tau: f64, mode: EffectMode) -> Option<f64> {
        self.deviations
            .iter()
            .find(|d| d.tau == tau && d.mode == mode)
            .map(|d| d.max_abs_dev)
    }
}

/// Marginalization draws are shared between all predictors for a mode.
fn curve_rng(seed: u64) -> rng::Rng {
    rng::stream(seed, Stream::Invariance)
}

/// Effect curves of the reference model and of one surrogate per τ, each
/// trained on an equally sized Algorithm-1 set.
pub fn run_invariance_suite(
    draws: &PosteriorDraws,
    inv: &InvarianceConfig,
    net_cfg: &NetConfig,
    threads: usize,
) -> Result<InvarianceSuite> {
    inv.validate(draws.j())?;
    let modes = inv.modes();
    let mut tables = Vec::new();
    let mut reference = Vec::new();
    for &mode in &modes {
        let points = effect_curve(draws, inv.j, &inv.grid, mode, &mut curve_rng(inv.seed))?;
        reference.push(points.clone());
        tables.push(EffectTable {
            tau: None,
            mode,
            points,
        });
    }
    let val = synth::evaluation_set(draws, inv.val_size, inv.seed, Stream::Validation, threads)?;
    let net_cfg = NetConfig {
        input_dim: draws.j(),
        output_dim: draws.m(),
        seed: inv.seed,
        ..net_cfg.clone()
    };
    let mut deviations = Vec::new();
    let mut val_mse = Vec::new();
    for &tau in &inv.tau_values {
        let data = synth::generate(
            draws,
            &DataGenConfig {
                examples: inv.examples,
                tau,
                input_dist: InputDist::Uniform01,
                seed: inv.seed,
                threads,
            },
        )?;
        let mut net = SurrogateNet::new(net_cfg.clone())?;
        train(&mut net, &data, &val, inv.intra_patience)?;
        val_mse.push(mse(&net, &val)?);
        for (mode, bm_points) in modes.iter().zip(&reference) {
            let points = effect_curve(&net, inv.j, &inv.grid, *mode, &mut curve_rng(inv.seed))?;
            deviations.push(DeviationRow {
                tau,
                mode: *mode,
                max_abs_dev: max_abs_deviation(&points, bm_points)?,
            });
            tables.push(EffectTable {
                tau: Some(tau),
                mode: *mode,
                points,
            });
        }
    }
    Ok(InvarianceSuite {
        tables,
        deviations,
        val_mse,
    })
}
