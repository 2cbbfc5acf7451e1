//! Browser demo: a one-feature reference fit, a surrogate trained on it, and
//! the crossover curve. Every export returns a JSON string.

use ndarray::Array2;
use serde::Serialize;
use surrogate_forge::bench::crossover;
use surrogate_forge::model::{self, GroundTruth, LinkFunction, ModelSpec, ParamDraw};
use surrogate_forge::predict::predict_matrix;
use surrogate_forge::rng::{self, Stream};
use surrogate_forge::surrogate::{mse, train};
use surrogate_forge::synth::{self, DataGenConfig, InputDist};
use surrogate_forge::{NetConfig, PosteriorDraws, SamplerConfig, SurrogateNet};
use wasm_bindgen::prelude::*;

const MAX_SCATTER: usize = 300;
const GRID_POINTS: usize = 61;

fn msg(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn grid(lo: f64, hi: f64) -> Vec<f64> {
    (0..GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64)
        .collect()
}

/// Nearest-rank quantile of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    sorted[(q * (sorted.len() - 1) as f64).round() as usize]
}

#[derive(Debug, Serialize)]
struct Band {
    x: Vec<f64>,
    mean: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    truth: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct FitView {
    obs_x: Vec<f64>,
    obs_y: Vec<f64>,
    band: Band,
    accept: f64,
    step_size: f64,
    draws: usize,
    /// Posterior means of (α, β, γ, σ²).
    posterior_mean: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct TrainView {
    epochs: Vec<usize>,
    train_loss: Vec<f64>,
    val_loss: Vec<f64>,
    best_epoch: usize,
    x: Vec<f64>,
    reference: Vec<f64>,
    surrogate: Vec<f64>,
    test_mse: f64,
}

/// A fitted one-feature reference model.
#[wasm_bindgen]
pub struct Demo {
    truth: GroundTruth,
    obs_x: Vec<f64>,
    obs_y: Vec<f64>,
    draws: PosteriorDraws,
}

#[wasm_bindgen]
impl Demo {
    /// Simulate `n_obs` points from `y = β ψ(α x) + ε`, `x ~ N(0, 1)`, and
    /// sample `samples` posterior draws.
    #[wasm_bindgen(constructor)]
    pub fn new(
        link: &str,
        alpha: f64,
        beta: f64,
        sigma2: f64,
        n_obs: usize,
        samples: usize,
        seed: u32,
    ) -> Result<Demo, JsValue> {
        Demo::fit(link, alpha, beta, sigma2, n_obs, samples, seed.into()).map_err(JsValue::from)
    }

    /// Posterior predictive band over `x ∈ [-3, 3]` with the observations.
    #[wasm_bindgen(js_name = fitView)]
    pub fn fit_view_js(&self) -> Result<String, JsValue> {
        self.fit_view().map_err(JsValue::from)
    }

    /// Train a surrogate on `examples` masked uniform inputs and compare it
    /// with the reference mean on `[0, 1]`.
    #[wasm_bindgen(js_name = trainView)]
    pub fn train_view_js(
        &self,
        examples: usize,
        hidden: usize,
        tau: f64,
        max_epochs: usize,
        seed: u32,
    ) -> Result<String, JsValue> {
        self.train_view(examples, hidden, tau, max_epochs, seed.into())
            .map_err(JsValue::from)
    }
}

impl Demo {
    /// Simulate `n_obs` points from `y = β ψ(α x) + ε`, `x ~ N(0, 1)`, and
    /// sample `samples` posterior draws.
    pub fn fit(
        link: &str,
        alpha: f64,
        beta: f64,
        sigma2: f64,
        n_obs: usize,
        samples: usize,
        seed: u64,
    ) -> Result<Demo, String> {
        let link: LinkFunction = link.parse().map_err(msg)?;
        let spec = ModelSpec::new(1).with_link(link);
        if !(sigma2 > 0.0) || n_obs == 0 || samples == 0 {
            return Err(msg("sigma2, n_obs and samples must be positive"));
        }
        let truth = GroundTruth {
            draw: ParamDraw {
                alpha: vec![alpha],
                beta: vec![beta],
                gamma: 0.0,
                sigma2,
            },
        };
        let mut r = rng::stream(seed, Stream::BmData);
        let (x, y) = model::generate_observed(&spec, &truth, n_obs, &mut r).map_err(msg)?;
        let sampler = SamplerConfig {
            warmup: samples.max(200),
            samples,
            seed,
            ..SamplerConfig::default()
        };
        let draws = surrogate_forge::posterior::sample_posterior(&spec, x.view(), y.view(), &sampler)
            .map_err(msg)?;
        Ok(Demo {
            truth,
            obs_x: x.column(0).to_vec(),
            obs_y: y.to_vec(),
            draws,
        })
    }

    /// Posterior predictive band over `x ∈ [-3, 3]` with the observations.
    pub fn fit_view(&self) -> Result<String, String> {
        let xs = grid(-3.0, 3.0);
        let band = self.band(&xs)?;
        let d = self.draws.diagnostics();
        let step = self.obs_x.len().div_ceil(MAX_SCATTER);
        let view = FitView {
            obs_x: self.obs_x.iter().step_by(step).copied().collect(),
            obs_y: self.obs_y.iter().step_by(step).copied().collect(),
            band,
            accept: d.mean_accept,
            step_size: d.step_size,
            draws: self.draws.m(),
            posterior_mean: self.draws.mean_flat(),
        };
        serde_json::to_string(&view).map_err(msg)
    }

    /// Train a surrogate on `examples` masked uniform inputs and compare it
    /// with the reference mean on `[0, 1]`.
    pub fn train_view(
        &self,
        examples: usize,
        hidden: usize,
        tau: f64,
        max_epochs: usize,
        seed: u64,
    ) -> Result<String, String> {
        let net_cfg = NetConfig {
            input_dim: 1,
            output_dim: self.draws.m(),
            hidden_width: hidden,
            max_epochs,
            batch_size: 64,
            learning_rate: 1e-3,
            seed,
            ..NetConfig::default()
        };
        let data = synth::generate(
            &self.draws,
            &DataGenConfig {
                examples,
                tau,
                input_dist: InputDist::Uniform01,
                seed,
                threads: 1,
            },
        )
        .map_err(msg)?;
        let val = synth::evaluation_set(&self.draws, 500, seed, Stream::Validation, 1).map_err(msg)?;
        let mut net = SurrogateNet::new(net_cfg).map_err(msg)?;
        let report = train(&mut net, &data, &val, 10).map_err(msg)?;

        let xs = grid(0.0, 1.0);
        let x = Array2::from_shape_vec((xs.len(), 1), xs.clone()).expect("column");
        let reference = predict_matrix(&self.draws, x.view(), 1).map_err(msg)?;
        let surrogate = net.predict(x.view()).map_err(msg)?;
        let row_mean = |m: &Array2<f64>| m.rows().into_iter().map(|r| r.mean().unwrap_or(0.0)).collect();
        let view = TrainView {
            epochs: report.history.iter().map(|e| e.epoch).collect(),
            train_loss: report.history.iter().map(|e| e.train_loss).collect(),
            val_loss: report.history.iter().map(|e| e.val_loss).collect(),
            best_epoch: report.best_epoch,
            x: xs,
            reference: row_mean(&reference),
            surrogate: row_mean(&surrogate),
            test_mse: mse(&net, &val).map_err(msg)?,
        };
        serde_json::to_string(&view).map_err(msg)
    }

    fn band(&self, xs: &[f64]) -> Result<Band, String> {
        let x = Array2::from_shape_vec((xs.len(), 1), xs.to_vec()).expect("column");
        let per_draw = predict_matrix(&self.draws, x.view(), 1).map_err(msg)?;
        let spec = self.draws.spec();
        let mut band = Band {
            x: xs.to_vec(),
            mean: Vec::new(),
            lo: Vec::new(),
            hi: Vec::new(),
            truth: Vec::new(),
        };
        for (row, &xv) in per_draw.rows().into_iter().zip(xs) {
            let mut v = row.to_vec();
            v.sort_by(f64::total_cmp);
            band.mean.push(row.mean().expect("M ≥ 1"));
            band.lo.push(quantile(&v, 0.025));
            band.hi.push(quantile(&v, 0.975));
            band.truth.push(self.truth.draw.mean_unchecked(spec.link, &[xv]));
        }
        Ok(band)
    }
}

/// Crossover dataset size for `m` from 2 to `m_max`, as JSON `[[m, n], ...]`.
#[wasm_bindgen(js_name = crossoverCurve)]
pub fn crossover_curve_js(kappa: u32, m_max: u32) -> Result<String, JsValue> {
    crossover_curve(kappa.into(), m_max.into()).map_err(JsValue::from)
}

/// At most about 200 points, always including `m_max`.
pub fn crossover_curve(kappa: u64, m_max: u64) -> Result<String, String> {
    if m_max < 2 {
        return Err(msg("m_max must be at least 2"));
    }
    let step = (m_max - 2).div_ceil(200).max(1);
    let mut pts = Vec::new();
    let mut m = 2;
    while m <= m_max {
        pts.push((m, crossover(kappa, m).map_err(msg)?));
        m += step;
    }
    if pts.last().map(|p| p.0) != Some(m_max) {
        pts.push((m_max, crossover(kappa, m_max).map_err(msg)?));
    }
    serde_json::to_string(&pts).map_err(msg)
}
