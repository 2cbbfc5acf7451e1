//! Posterior inference for the regression family.
//!
//! A single-chain Hamiltonian Monte Carlo sampler with a fixed number of
//! leapfrog steps, identity mass matrix and dual-averaging step-size
//! adaptation during warmup. σ² is sampled on the log scale.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::{ModelSpec, ParamDraw};
use crate::rng::{self, Stream};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Settings of one HMC run. `samples` is the number of retained draws `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub warmup: usize,
    pub samples: usize,
    /// Initial step size; refined before warmup and adapted during it.
    pub step_size: f64,
    pub leapfrog_steps: usize,
    pub target_accept: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            warmup: 2000,
            samples: 2000,
            step_size: 0.01,
            leapfrog_steps: 20,
            target_accept: 0.8,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("sampler needs at least one sample".into()));
        }
        if self.leapfrog_steps == 0 {
            return Err(Error::Config("leapfrog_steps must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config("step_size must be positive".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("target_accept must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Sampler health summary. Reported, never used to gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mean_accept: f64,
    /// Effective sample size per flattened parameter `(α, β, γ, σ²)`.
    pub ess: Vec<f64>,
    pub step_size: f64,
    pub divergences: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// The fixed set of `M` posterior draws everything downstream conditions on.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    spec: ModelSpec,
    draws: Vec<ParamDraw>,
    diagnostics: Diagnostics,
}

impl PosteriorDraws {
    pub fn new(spec: ModelSpec, draws: Vec<ParamDraw>, diagnostics: Diagnostics) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Empty("posterior draws"));
        }
        for d in &draws {
            d.check(&spec)?;
        }
        Ok(PosteriorDraws {
            spec,
            draws,
            diagnostics,
        })
    }

    /// Draws without sampler diagnostics (e.g. hand-built test posteriors).
    pub fn from_draws(spec: ModelSpec, draws: Vec<ParamDraw>) -> Result<Self> {
        let diagnostics = Diagnostics {
            mean_accept: 1.0,
            ess: vec![draws.len() as f64; ParamDraw::flat_len(spec.j)],
            step_size: 0.0,
            divergences: 0,
            warnings: Vec::new(),
        };
        Self::new(spec, draws, diagnostics)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn draws(&self) -> &[ParamDraw] {
        &self.draws
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn m(&self) -> usize {
        self.draws.len()
    }

    pub fn j(&self) -> usize {
        self.spec.j
    }

    /// Posterior mean of the flattened `(α, β, γ, σ²)` vector.
    pub fn mean_flat(&self) -> Vec<f64> {
        let mut acc = vec![0.0; ParamDraw::flat_len(self.j())];
        for d in &self.draws {
            for (a, v) in acc.iter_mut().zip(d.to_flat()) {
                *a += v;
            }
        }
        let m = self.m() as f64;
        acc.iter_mut().for_each(|a| *a /= m);
        acc
    }
}

/// A differentiable log density over `R^dim`.
pub trait LogDensity {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log density.
    fn logp_grad(&mut self, theta: &[f64], grad: &mut [f64]) -> f64;
}

/// Parameters held constant during sampling.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixedParams {
    pub alpha: Option<Vec<f64>>,
    pub gamma: Option<f64>,
    pub sigma2: Option<f64>,
}

/// The regression posterior over the free parameters, flattened as
/// `(α?, β, γ?, ln σ²?)`.
pub struct BmTarget<'a> {
    spec: &'a ModelSpec,
    x: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    fixed: FixedParams,
    link_vals: Vec<f64>,
    link_derivs: Vec<f64>,
    resid: Vec<f64>,
}

impl<'a> BmTarget<'a> {
    pub fn new(
        spec: &'a ModelSpec,
        x: ArrayView2<'a, f64>,
        y: ArrayView1<'a, f64>,
        fixed: FixedParams,
    ) -> Result<Self> {
        spec.validate()?;
        check_dim("observed columns", spec.j, x.ncols())?;
        check_dim("observed rows", x.nrows(), y.len())?;
        if let Some(a) = &fixed.alpha {
            check_dim("fixed alpha", spec.j, a.len())?;
        }
        if let Some(s2) = fixed.sigma2 {
            if !(s2 > 0.0) {
                return Err(Error::Contract("fixed sigma2 must be positive".into()));
            }
        }
        let n = x.nrows();
        Ok(BmTarget {
            spec,
            x,
            y,
            fixed,
            link_vals: vec![0.0; n * spec.j],
            link_derivs: vec![0.0; n * spec.j],
            resid: vec![0.0; n],
        })
    }

    fn free_alpha(&self) -> bool {
        self.fixed.alpha.is_none()
    }

    fn free_gamma(&self) -> bool {
        self.fixed.gamma.is_none()
    }

    fn free_sigma(&self) -> bool {
        self.fixed.sigma2.is_none()
    }

    /// Unconstrained point corresponding to a draw.
    pub fn pack(&self, draw: &ParamDraw) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.dim());
        if self.free_alpha() {
            theta.extend_from_slice(&draw.alpha);
        }
        theta.extend_from_slice(&draw.beta);
        if self.free_gamma() {
            theta.push(draw.gamma);
        }
        if self.free_sigma() {
            theta.push(draw.sigma2.ln());
        }
        theta
    }

    /// Draw corresponding to an unconstrained point.
    pub fn unpack(&self, theta: &[f64]) -> ParamDraw {
        let j = self.spec.j;
        let mut at = 0;
        let alpha = match &self.fixed.alpha {
            Some(a) => a.clone(),
            None => {
                at += j;
                theta[..j].to_vec()
            }
        };
        let beta = theta[at..at + j].to_vec();
        at += j;
        let gamma = match self.fixed.gamma {
            Some(g) => g,
            None => {
                at += 1;
                theta[at - 1]
            }
        };
        let sigma2 = match self.fixed.sigma2 {
            Some(s) => s,
            None => theta[at].exp(),
        };
        ParamDraw {
            alpha,
            beta,
            gamma,
            sigma2,
        }
    }
}

impl LogDensity for BmTarget<'_> {
    fn dim(&self) -> usize {
        let j = self.spec.j;
        j + usize::from(self.free_alpha()) * j
            + usize::from(self.free_gamma())
            + usize::from(self.free_sigma())
    }

    fn logp_grad(&mut self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let spec = self.spec;
        let j = spec.j;
        let link = spec.link;
        let d = self.unpack(theta);
        let u = d.sigma2.ln();
        let n = self.x.nrows();

        let mut ssr = 0.0;
        for (row_idx, (row, &yn)) in self.x.rows().into_iter().zip(self.y.iter()).enumerate() {
            let base = row_idx * j;
            let mut f = d.gamma;
            for (k, &xk) in row.iter().enumerate() {
                let (s, ds) = link.apply_with_derivative(xk * d.alpha[k]);
                self.link_vals[base + k] = s;
                self.link_derivs[base + k] = ds;
                f += d.beta[k] * s;
            }
            let r = yn - f;
            self.resid[row_idx] = r;
            ssr += r * r;
        }

        let inv_s2 = 1.0 / d.sigma2;
        let mut logp = -0.5 * n as f64 * (LN_2PI + u) - 0.5 * ssr * inv_s2;

        grad.iter_mut().for_each(|g| *g = 0.0);
        let beta_off = if self.free_alpha() { j } else { 0 };
        let mut gamma_grad = 0.0;
        for (row_idx, row) in self.x.rows().into_iter().enumerate() {
            let r = self.resid[row_idx] * inv_s2;
            let base = row_idx * j;
            gamma_grad += r;
            for (k, &xk) in row.iter().enumerate() {
                grad[beta_off + k] += r * self.link_vals[base + k];
                if beta_off > 0 {
                    grad[k] += r * d.beta[k] * self.link_derivs[base + k] * xk;
                }
            }
        }

        // Gaussian priors on α, β, γ.
        let gauss = |v: f64, mean: f64, var: f64| {
            let dv = v - mean;
            (-0.5 * (LN_2PI + var.ln() + dv * dv / var), -dv / var)
        };
        if self.free_alpha() {
            for k in 0..j {
                let (lp, g) = gauss(d.alpha[k], spec.prior_alpha_mean, spec.prior_alpha_var);
                logp += lp;
                grad[k] += g;
            }
        } else {
            for &a in &d.alpha {
                logp += gauss(a, spec.prior_alpha_mean, spec.prior_alpha_var).0;
            }
        }
        for k in 0..j {
            let (lp, g) = gauss(d.beta[k], spec.prior_beta_mean, spec.prior_beta_var);
            logp += lp;
            grad[beta_off + k] += g;
        }
        let mut at = beta_off + j;
        let (lp, g) = gauss(d.gamma, spec.prior_gamma_mean, spec.prior_gamma_var);
        logp += lp;
        if self.free_gamma() {
            grad[at] = gamma_grad + g;
            at += 1;
        }
        logp += spec.prior_sigma2.log_density_log_scale(u);
        if self.free_sigma() {
            grad[at] = -0.5 * n as f64 + 0.5 * ssr * inv_s2 + spec.prior_sigma2.grad_log_scale(u);
        }
        logp
    }
}

/// Dual-averaging step-size adaptation.
#[derive(Debug, Clone)]
struct DualAverage {
    target: f64,
    mu: f64,
    hbar: f64,
    log_step: f64,
    log_step_avg: f64,
    count: f64,
}

impl DualAverage {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(initial_step: f64, target: f64) -> Self {
        DualAverage {
            target,
            mu: (10.0 * initial_step).ln(),
            hbar: 0.0,
            log_step: initial_step.ln(),
            log_step_avg: initial_step.ln(),
            count: 1.0,
        }
    }

    fn advance(&mut self, accept_stat: f64) {
        let w = 1.0 / (self.count + Self::T0);
        self.hbar = (1.0 - w) * self.hbar + w * (self.target - accept_stat);
        self.log_step = self.mu - self.hbar * self.count.sqrt() / Self::GAMMA;
        let mk = self.count.powf(-Self::KAPPA);
        self.log_step_avg = mk * self.log_step + (1.0 - mk) * self.log_step_avg;
        self.count += 1.0;
    }

    fn current(&self) -> f64 {
        self.log_step.exp()
    }

    fn adapted(&self) -> f64 {
        self.log_step_avg.exp()
    }
}

struct Transition {
    accept_stat: f64,
    divergent: bool,
}

struct Hmc<'t, T: LogDensity> {
    target: &'t mut T,
    theta: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
    scratch_theta: Vec<f64>,
    scratch_grad: Vec<f64>,
    momentum: Vec<f64>,
}

impl<'t, T: LogDensity> Hmc<'t, T> {
    fn new(target: &'t mut T, init: Vec<f64>) -> Result<Self> {
        let dim = target.dim();
        check_dim("initial point", dim, init.len())?;
        let mut grad = vec![0.0; dim];
        let logp = target.logp_grad(&init, &mut grad);
        if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::SamplerInit(format!(
                "log posterior is {logp} at the initial point {init:?}"
            )));
        }
        Ok(Hmc {
            target,
            theta: init,
            grad,
            logp,
            scratch_theta: vec![0.0; dim],
            scratch_grad: vec![0.0; dim],
            momentum: vec![0.0; dim],
        })
    }

    /// One trajectory of `steps` leapfrog steps followed by a Metropolis test.
    fn transition<R: Rng + ?Sized>(&mut self, step: f64, steps: usize, rng: &mut R) -> Transition {
        for p in self.momentum.iter_mut() {
            *p = StandardNormal.sample(rng);
        }
        let kinetic0: f64 = 0.5 * self.momentum.iter().map(|p| p * p).sum::<f64>();
        let h0 = -self.logp + kinetic0;

        self.scratch_theta.copy_from_slice(&self.theta);
        self.scratch_grad.copy_from_slice(&self.grad);
        let mut logp = self.logp;
        for _ in 0..steps {
            for (p, g) in self.momentum.iter_mut().zip(&self.scratch_grad) {
                *p += 0.5 * step * g;
            }
            for (q, p) in self.scratch_theta.iter_mut().zip(&self.momentum) {
                *q += step * p;
            }
            logp = self
                .target
                .logp_grad(&self.scratch_theta, &mut self.scratch_grad);
            if !logp.is_finite() {
                break;
            }
            for (p, g) in self.momentum.iter_mut().zip(&self.scratch_grad) {
                *p += 0.5 * step * g;
            }
        }
        let kinetic1: f64 = 0.5 * self.momentum.iter().map(|p| p * p).sum::<f64>();
        let h1 = -logp + kinetic1;
        let delta = h0 - h1;
        if !delta.is_finite() || delta < -1000.0 {
            // Draw the uniform anyway so the stream does not depend on divergence.
            let _: f64 = rng.random();
            return Transition {
                accept_stat: 0.0,
                divergent: true,
            };
        }
        let accept_stat = delta.exp().min(1.0);
        let u: f64 = rng.random();
        if u.ln() < delta {
            std::mem::swap(&mut self.theta, &mut self.scratch_theta);
            std::mem::swap(&mut self.grad, &mut self.scratch_grad);
            self.logp = logp;
        }
        Transition {
            accept_stat,
            divergent: false,
        }
    }

    /// Single-leapfrog heuristic: scale the step by 2 until the acceptance
    /// probability crosses one half.
    fn reasonable_step<R: Rng + ?Sized>(&mut self, initial: f64, rng: &mut R) -> f64 {
        let mut step = initial;
        let probe = |hmc: &mut Self, step: f64, rng: &mut R| -> f64 {
            let saved = (hmc.theta.clone(), hmc.grad.clone(), hmc.logp);
            let t = hmc.transition(step, 1, rng);
            hmc.theta = saved.0;
            hmc.grad = saved.1;
            hmc.logp = saved.2;
            t.accept_stat
        };
        let first = probe(self, step, rng);
        let grow = first > 0.5;
        for _ in 0..60 {
            let next = if grow { step * 2.0 } else { step * 0.5 };
            let a = probe(self, next, rng);
            if (grow && a < 0.5) || (!grow && a > 0.5) {
                return if grow { step } else { next };
            }
            step = next;
        }
        step
    }
}

/// Output of a generic HMC run.
pub struct ChainOutput {
    pub draws: Vec<Vec<f64>>,
    pub mean_accept: f64,
    pub step_size: f64,
    pub divergences: usize,
}

/// Run warmup with step-size adaptation, then collect `cfg.samples` draws.
pub fn run_hmc<T: LogDensity, R: Rng + ?Sized>(
    target: &mut T,
    init: Vec<f64>,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<ChainOutput> {
    cfg.validate()?;
    let mut hmc = Hmc::new(target, init)?;
    let mut step = hmc.reasonable_step(cfg.step_size, rng);
    let mut adapt = DualAverage::new(step, cfg.target_accept);
    for _ in 0..cfg.warmup {
        let t = hmc.transition(step, cfg.leapfrog_steps, rng);
        adapt.advance(t.accept_stat);
        step = adapt.current();
    }
    if cfg.warmup > 0 {
        step = adapt.adapted();
    }

    let mut draws = Vec::with_capacity(cfg.samples);
    let mut accept_sum = 0.0;
    let mut divergences = 0;
    for _ in 0..cfg.samples {
        let t = hmc.transition(step, cfg.leapfrog_steps, rng);
        accept_sum += t.accept_stat;
        divergences += usize::from(t.divergent);
        draws.push(hmc.theta.clone());
    }
    Ok(ChainOutput {
        draws,
        mean_accept: accept_sum / cfg.samples as f64,
        step_size: step,
        divergences,
    })
}

/// Posterior draws of the full parameter vector.
pub fn sample_posterior(
    spec: &ModelSpec,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    cfg: &SamplerConfig,
) -> Result<PosteriorDraws> {
    sample_posterior_with(spec, x, y, cfg, FixedParams::default())
}

/// Posterior draws with some parameters held fixed.
pub fn sample_posterior_with(
    spec: &ModelSpec,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    cfg: &SamplerConfig,
    fixed: FixedParams,
) -> Result<PosteriorDraws> {
    cfg.validate()?;
    if x.nrows() == 0 {
        return Err(Error::Empty("observed dataset"));
    }
    let mut target = BmTarget::new(spec, x, y, fixed)?;
    let init = target.pack(&spec.prior_mean_draw(0.1));
    let mut rng = rng::stream(cfg.seed, Stream::Mcmc);
    let out = run_hmc(&mut target, init, cfg, &mut rng)?;

    let draws: Vec<ParamDraw> = out.draws.iter().map(|t| target.unpack(t)).collect();
    let flat_len = ParamDraw::flat_len(spec.j);
    let ess = (0..flat_len)
        .map(|k| {
            let chain: Vec<f64> = draws.iter().map(|d| d.to_flat()[k]).collect();
            effective_sample_size(&chain)
        })
        .collect();
    let mut warnings = Vec::new();
    if out.mean_accept < 0.1 {
        warnings.push(format!(
            "mean acceptance rate {:.3} is below 0.1",
            out.mean_accept
        ));
    }
    if out.divergences > 0 {
        warnings.push(format!("{} divergent transitions", out.divergences));
    }
    let diagnostics = Diagnostics {
        mean_accept: out.mean_accept,
        ess,
        step_size: out.step_size,
        divergences: out.divergences,
        warnings,
    };
    PosteriorDraws::new(spec.clone(), draws, diagnostics)
}

/// Effective sample size via Geyer's initial monotone sequence estimator.
///
/// A constant chain reports its length.
pub fn effective_sample_size(chain: &[f64]) -> f64 {
    let n = chain.len();
    if n < 4 {
        return n as f64;
    }
    let mean = chain.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = chain.iter().map(|v| v - mean).collect();
    let c0 = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return n as f64;
    }
    let autocorr = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * c0)
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let mut pair = autocorr(lag) + autocorr(lag + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = tau.max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64 * (n as f64).log10())
}

/// Exact Gaussian posterior of `y = Xβ + ε`, `ε ~ N(0, σ²)`, under the prior
/// `β ~ N(prior_mean, diag(prior_var))`.
pub fn analytic_conjugate_posterior(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    sigma2: f64,
    prior_mean: &[f64],
    prior_var: &[f64],
) -> Result<(Array1<f64>, Array2<f64>)> {
    let p = prior_mean.len();
    check_dim("prior variance", p, prior_var.len())?;
    check_dim("design columns", p, x.ncols())?;
    check_dim("design rows", x.nrows(), y.len())?;
    if !(sigma2 > 0.0) {
        return Err(Error::Contract("sigma2 must be positive".into()));
    }
    if prior_var.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Contract("prior variances must be positive".into()));
    }
    if x.nrows() == 0 {
        let cov = Array2::from_shape_fn((p, p), |(r, c)| if r == c { prior_var[r] } else { 0.0 });
        return Ok((Array1::from_vec(prior_mean.to_vec()), cov));
    }

    let xm = DMatrix::from_fn(x.nrows(), p, |r, c| x[[r, c]]);
    let yv = DVector::from_iterator(y.len(), y.iter().copied());
    let prior_prec = DMatrix::from_diagonal(&DVector::from_iterator(
        p,
        prior_var.iter().map(|v| 1.0 / v),
    ));
    let precision = &prior_prec + xm.transpose() * &xm / sigma2;
    let rhs = &prior_prec * DVector::from_column_slice(prior_mean) + xm.transpose() * yv / sigma2;
    let chol = precision
        .cholesky()
        .ok_or_else(|| Error::Contract("posterior precision is not positive definite".into()))?;
    let mean = chol.solve(&rhs);
    let cov = chol.inverse();
    Ok((
        Array1::from_iter(mean.iter().copied()),
        Array2::from_shape_fn((p, p), |(r, c)| cov[(r, c)]),
    ))
}
