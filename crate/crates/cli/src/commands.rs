use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use surrogate_forge::active::{al_train, calibration_data, validation_set, RoundRecord};
use surrogate_forge::bench::{
    self, cell_seed, crossover, run_invariance_suite, spearman, time_cell, BenchReport, Environment,
    SpeedRow,
};
use surrogate_forge::io::{self, CalibrationSummary, CrossoverSummary, InvarianceSummary, SpeedSummary};
use surrogate_forge::model::{self, GroundTruth};
use surrogate_forge::predict::{draw_mean, predict_matrix, BatchPredictions};
use surrogate_forge::rng::{self, Stream};
use surrogate_forge::surrogate::{evaluate_loss, Trainer};
use surrogate_forge::synth::{self, InputDist};
use surrogate_forge::{DataGenConfig, ModelSpec, NetConfig, PosteriorDraws, SurrogateNet};

use crate::config::RunConfig;
use crate::{CliError, Engine, GlobalArgs};

pub const POSTERIOR_DIR: &str = "posterior";
pub const DATASET_DIR: &str = "dataset";
pub const NET_DIR: &str = "net";
pub const TRAIN_DATA_DIR: &str = "train_data";
pub const SWEEP_DIR: &str = "sweep";
pub const HISTORY_FILE: &str = "history.csv";
pub const EPOCHS_FILE: &str = "epochs.csv";

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub threads: usize,
    pub auto: bool,
}

impl Context {
    pub fn new(args: &GlobalArgs) -> Result<Self, CliError> {
        let cfg = match &args.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let threads = match args.threads {
            Some(0) => return Err(CliError::config("--threads must be at least 1")),
            Some(t) => t,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let cfg = cfg.finalize(args.seed, threads)?;
        let out = cfg.artifact_dir(args.out.as_deref())?;
        fs::create_dir_all(&out)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", out.display())))?;
        Ok(Context {
            cfg,
            out,
            threads,
            auto: args.auto,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn posterior(&self) -> Result<PosteriorDraws, CliError> {
        let dir = self.path(POSTERIOR_DIR);
        if !dir.join(io::POSTERIOR_MANIFEST).exists() {
            if !self.auto {
                return Err(CliError::missing(format!(
                    "no posterior at {} (run fit-bm or pass --auto)",
                    dir.display()
                )));
            }
            fit_bm(self)?;
        }
        Ok(io::load_posterior(&dir)?)
    }

    fn net(&self) -> Result<SurrogateNet, CliError> {
        let dir = self.path(NET_DIR);
        if !dir.join(io::NET_MANIFEST).exists() {
            if !self.auto {
                return Err(CliError::missing(format!(
                    "no surrogate at {} (run train or pass --auto)",
                    dir.display()
                )));
            }
            train(self, true)?;
        }
        Ok(io::load_net(&dir)?)
    }

    fn net_config(&self, draws: &PosteriorDraws) -> NetConfig {
        NetConfig {
            input_dim: draws.j(),
            output_dim: draws.m(),
            ..self.cfg.net.clone()
        }
    }

    fn update_report(&self, f: impl FnOnce(&mut io::Report)) -> Result<(), CliError> {
        let mut report = io::load_report(&self.out)?;
        f(&mut report);
        Ok(io::save_report(&self.out, &report)?)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::from_core(e.into()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::from_core(e.into()))
}

fn ground_truth(ctx: &Context, spec: &ModelSpec, rng: &mut rng::Rng) -> GroundTruth {
    match ctx.cfg.truth.preset.as_deref() {
        Some("simple-bm") => GroundTruth::simple_bm(),
        _ => model::sample_ground_truth(spec, ctx.cfg.truth.sigma2, rng),
    }
}

pub fn fit_bm(ctx: &Context) -> Result<(), CliError> {
    let spec = &ctx.cfg.model;
    let mut data_rng = rng::stream(ctx.cfg.seed, Stream::BmData);
    let truth = ground_truth(ctx, spec, &mut data_rng);
    let fit = bench::fit_synthetic(spec, truth, ctx.cfg.truth.n_obs, &mut data_rng, &ctx.cfg.sampler)?;
    let dir = ctx.path(POSTERIOR_DIR);
    io::save_posterior(&dir, &fit.draws)?;
    write_json(&dir.join("diagnostics.json"), fit.draws.diagnostics())?;
    write_json(&dir.join("truth.json"), &fit.truth)?;
    let d = fit.draws.diagnostics();
    println!(
        "posterior: {} draws, J = {}, accept {:.3}, step {:.4}, divergences {}",
        fit.draws.m(),
        fit.draws.j(),
        d.mean_accept,
        d.step_size,
        d.divergences
    );
    for w in &d.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn gen_data(ctx: &Context) -> Result<(), CliError> {
    let draws = ctx.posterior()?;
    let data = synth::generate(&draws, &ctx.cfg.data)?;
    let dir = ctx.path(DATASET_DIR);
    io::save_labeled_set(&dir, &data, ctx.cfg.data.tau, ctx.cfg.data.seed, ctx.cfg.data.input_dist)?;
    println!("dataset: {} rows, J = {}, M = {}", data.len(), data.input_dim(), data.output_dim());
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn train(ctx: &Context, al: bool) -> Result<(), CliError> {
    let draws = ctx.posterior()?;
    let net_cfg = ctx.net_config(&draws);
    let al_cfg = &ctx.cfg.al;
    let val = validation_set(&draws, al_cfg)?;
    let (net, history, data) = if al {
        let outcome = al_train(&draws, al_cfg, &net_cfg, &val)?;
        (outcome.net, outcome.history, outcome.data)
    } else {
        let start = Instant::now();
        let gen = DataGenConfig {
            examples: al_cfg.i_init,
            tau: al_cfg.tau,
            input_dist: InputDist::Uniform01,
            seed: al_cfg.seed,
            threads: ctx.threads,
        };
        let data = synth::generate(&draws, &gen)?;
        let mut net = SurrogateNet::new(net_cfg)?;
        let report = Trainer::new(&net).fit(&mut net, &data, &val, al_cfg.intra_patience)?;
        write_epochs(&ctx.path(EPOCHS_FILE), &report.history)?;
        let record = RoundRecord {
            round: 0,
            dataset_size: data.len(),
            train_loss: evaluate_loss(&net, &data)?,
            val_loss: report.best_val_loss,
            start_val_loss: report.initial_val_loss,
            epochs: report.epochs_run(),
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        (net, vec![record], data)
    };
    io::save_net(&ctx.path(NET_DIR), &net)?;
    io::save_labeled_set(
        &ctx.path(TRAIN_DATA_DIR),
        &data,
        al_cfg.tau,
        al_cfg.seed,
        InputDist::Uniform01,
    )?;
    io::write_history_csv(&ctx.path(HISTORY_FILE), &history)?;
    let last = history.last().expect("round 0 always runs");
    println!(
        "surrogate: {} rounds, |D| = {}, best val loss {:.3e}",
        history.len(),
        data.len(),
        history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min)
    );
    println!("last round {} val loss {:.3e}", last.round, last.val_loss);
    println!("wrote {}", ctx.path(NET_DIR).display());
    Ok(())
}

fn write_epochs(path: &Path, history: &[surrogate_forge::surrogate::EpochRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::from_core(e.into()))?;
    let mut put = |rec: [String; 3]| w.write_record(&rec).map_err(|e| CliError::from_core(e.into()));
    put(["epoch".into(), "train_loss".into(), "val_loss".into()])?;
    for r in history {
        put([r.epoch.to_string(), r.train_loss.to_string(), r.val_loss.to_string()])?;
    }
    w.flush().map_err(|e| CliError::from_core(e.into()))
}

pub fn predict(
    ctx: &Context,
    engine: Engine,
    input: &Path,
    mean: bool,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    let draws = ctx.posterior()?;
    let x = io::read_inputs_csv(input, draws.j())?;
    let per_row: Array2<f64> = match engine {
        Engine::Bm => predict_matrix(&draws, x.view(), ctx.threads)?,
        Engine::Nn => ctx.net()?.predict(x.view())?,
    };
    let pred = if mean {
        BatchPredictions::RiskMin(per_row.rows().into_iter().map(|r| draw_mean(r.iter().copied())).collect())
    } else {
        BatchPredictions::PerDraw(per_row)
    };
    let path = output.unwrap_or_else(|| ctx.path("predictions.csv"));
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::from_core(e.into()))?;
    }
    io::write_predictions_csv(&path, x.view(), &pred)?;
    println!("wrote {} rows to {}", x.nrows(), path.display());
    Ok(())
}

/// Training facts of one sweep cell, kept next to its artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellMeta {
    j: usize,
    dataset_size: usize,
    al_rounds: usize,
    train_time_s: f64,
}

pub fn bench_speed(ctx: &Context) -> Result<(), CliError> {
    let sweep = bench::SweepConfig {
        threads: ctx.cfg.sweep.threads.max(1),
        ..ctx.cfg.sweep.clone()
    };
    let mut j_values = sweep.j_values.clone();
    j_values.sort_unstable();
    j_values.dedup();
    if j_values.is_empty() {
        return Err(CliError::config("sweep.j_values is empty"));
    }
    let cell_dir = |j: usize| ctx.path(SWEEP_DIR).join(format!("J{j}"));
    let missing: Vec<usize> = j_values
        .iter()
        .copied()
        .filter(|&j| !cell_dir(j).join("cell.json").exists())
        .collect();
    if !missing.is_empty() && !ctx.auto {
        return Err(CliError::missing(format!(
            "missing sweep artifacts for J = {missing:?} under {} (pass --auto to build them)",
            ctx.path(SWEEP_DIR).display()
        )));
    }
    let mut rows = Vec::new();
    for &j in &j_values {
        let dir = cell_dir(j);
        if missing.contains(&j) {
            eprintln!("building sweep cell J = {j}");
            let (row, cell) = bench::run_sweep_cell(j, &sweep, &ctx.cfg.sampler, &ctx.cfg.net, &ctx.cfg.al)?;
            io::save_posterior(&dir.join(POSTERIOR_DIR), &cell.fit.draws)?;
            io::save_net(&dir.join(NET_DIR), &cell.outcome.net)?;
            io::write_history_csv(&dir.join(HISTORY_FILE), &cell.outcome.history)?;
            write_json(
                &dir.join("cell.json"),
                &CellMeta {
                    j,
                    dataset_size: row.dataset_size,
                    al_rounds: row.al_rounds,
                    train_time_s: row.train_time_s,
                },
            )?;
            rows.push(row);
        } else {
            let meta: CellMeta = serde_json::from_str(
                &fs::read_to_string(dir.join("cell.json")).map_err(|e| CliError::from_core(e.into()))?,
            )
            .map_err(|e| CliError::from_core(e.into()))?;
            let draws = io::load_posterior(&dir.join(POSTERIOR_DIR))?;
            let net = io::load_net(&dir.join(NET_DIR))?;
            let (t, _) = time_cell(&draws, &net, &sweep, cell_seed(sweep.seed, j))?;
            rows.push(SpeedRow {
                j,
                bm_time_s: t.bm.median_s,
                bm_time_min_s: t.bm.min_s,
                nn_time_s: t.nn.median_s,
                nn_time_min_s: t.nn.min_s,
                test_mse: t.test_mse,
                dataset_size: meta.dataset_size,
                al_rounds: meta.al_rounds,
                train_time_s: meta.train_time_s,
            });
        }
        let r = rows.last().expect("just pushed");
        println!(
            "J = {:>2}: bm {:.4}s  nn {:.4}s  test mse {:.2e}  |D| = {}",
            r.j, r.bm_time_s, r.nn_time_s, r.test_mse, r.dataset_size
        );
    }
    let report = BenchReport {
        rows,
        environment: Environment {
            threads: sweep.threads,
            precision: "f64".into(),
            timing_reps: sweep.timing_reps,
            m: ctx.cfg.sampler.samples,
            n_test: sweep.n_test,
            hidden_width: ctx.cfg.net.hidden_width,
        },
    };
    io::write_speed_sweep_csv(&ctx.path("speed_sweep.csv"), &report)?;
    let fit = if report.rows.len() >= 2 { Some(report.bm_time_fit()?) } else { None };
    if let Some(f) = &fit {
        println!("bm time fit: slope {:.3e} s/J, R² {:.4}", f.slope, f.r2);
    }
    println!("nn time ratio {:.3}", report.nn_time_ratio());
    let nn_time_ratio = report.nn_time_ratio();
    ctx.update_report(|r| {
        r.speed = Some(SpeedSummary {
            report,
            bm_time_fit: fit,
            nn_time_ratio,
        })
    })
}

pub fn bench_calibration(ctx: &Context) -> Result<(), CliError> {
    let draws = ctx.posterior()?;
    let net = ctx.net()?;
    let c = &ctx.cfg.calibration;
    let mut pool_rng = rng::named(ctx.cfg.seed, "calibration-pool");
    let x = InputDist::Uniform01.sample_matrix(c.pool, draws.j(), &mut pool_rng);
    let mut dropout_rng = rng::named(ctx.cfg.seed, "calibration-dropout");
    let table = calibration_data(&net, &draws, x.view(), c.k, &mut dropout_rng, ctx.threads)?;
    io::write_calibration_csv(&ctx.path("calibration.csv"), &table)?;
    let (sigma, err): (Vec<f64>, Vec<f64>) = table.iter().copied().unzip();
    let rho = spearman(&sigma, &err)?;
    println!("calibration: {} rows, K = {}, Spearman {:.4}", c.pool, c.k, rho);
    ctx.update_report(|r| {
        r.calibration = Some(CalibrationSummary {
            rows: c.pool,
            k: c.k,
            spearman: rho,
        })
    })
}

pub fn bench_crossover(ctx: &Context, kappa: Option<u64>, m: Option<u64>) -> Result<(), CliError> {
    let kappa = kappa.unwrap_or(ctx.cfg.al.dataset_size_after(ctx.cfg.al.inter_patience) as u64);
    let m = m.unwrap_or(ctx.cfg.sampler.samples as u64);
    let n = crossover(kappa, m)?;
    println!("{n}");
    ctx.update_report(|r| r.crossover = Some(CrossoverSummary { kappa, m, n }))
}

pub fn invariance(ctx: &Context) -> Result<(), CliError> {
    let draws = ctx.posterior()?;
    let suite = run_invariance_suite(&draws, &ctx.cfg.invariance, &ctx.net_config(&draws), ctx.threads)?;
    for t in &suite.tables {
        io::write_effect_table(&ctx.out, t)?;
    }
    for d in &suite.deviations {
        println!("tau {:<4} {:<18} max |dev| {:.4}", d.tau, d.mode.label(), d.max_abs_dev);
    }
    ctx.update_report(|r| {
        r.invariance = Some(InvarianceSummary {
            j: ctx.cfg.invariance.j,
            deviations: suite.deviations.clone(),
            val_mse: suite.val_mse.clone(),
        })
    })
}
