//! The additive Bayesian regression family.
//!
//! `f(x) = γ + Σ_j β_j ψ(α_j x_j)` with Gaussian observation noise of variance
//! `σ²`. Because the noise is zero-mean, `f(x)` is also the conditional
//! expectation `E[Y | x, φ]` for a single parameter draw `φ = (α, β, γ, σ²)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Per-feature nonlinearity ψ.
///
/// `Sqrt` and `Log1p` act on `|z|` so that the family is total on Gaussian
/// inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFunction {
    #[default]
    Sigmoid,
    Sine,
    Sqrt,
    Log1p,
    Identity,
}

impl LinkFunction {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            LinkFunction::Sigmoid => sigmoid(z),
            LinkFunction::Sine => z.sin(),
            LinkFunction::Sqrt => z.abs().sqrt(),
            LinkFunction::Log1p => z.abs().ln_1p(),
            LinkFunction::Identity => z,
        }
    }

    /// `dψ/dz`. The sqrt link has an infinite slope at zero; it is reported as
    /// zero there.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            LinkFunction::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            LinkFunction::Sine => z.cos(),
            LinkFunction::Sqrt => {
                let a = z.abs();
                if a == 0.0 {
                    0.0
                } else {
                    z.signum() / (2.0 * a.sqrt())
                }
            }
            LinkFunction::Log1p => {
                if z == 0.0 {
                    0.0
                } else {
                    z.signum() / (1.0 + z.abs())
                }
            }
            LinkFunction::Identity => 1.0,
        }
    }

    /// Value and derivative in one call; cheaper than two calls for sigmoid.
    #[inline]
    pub fn apply_with_derivative(self, z: f64) -> (f64, f64) {
        match self {
            LinkFunction::Sigmoid => {
                let s = sigmoid(z);
                (s, s * (1.0 - s))
            }
            LinkFunction::Sine => z.sin_cos(),
            _ => (self.apply(z), self.derivative(z)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LinkFunction::Sigmoid => "sigmoid",
            LinkFunction::Sine => "sine",
            LinkFunction::Sqrt => "sqrt",
            LinkFunction::Log1p => "log1p",
            LinkFunction::Identity => "identity",
        }
    }
}

impl std::str::FromStr for LinkFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(LinkFunction::Sigmoid),
            "sine" | "sin" => Ok(LinkFunction::Sine),
            "sqrt" => Ok(LinkFunction::Sqrt),
            "log1p" | "log" => Ok(LinkFunction::Log1p),
            "identity" => Ok(LinkFunction::Identity),
            other => Err(Error::Config(format!("unknown link function `{other}`"))),
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Prior on the noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sigma2Prior {
    /// Half-Gaussian on σ² with the given scale.
    HalfNormal { scale: f64 },
    /// Gamma(shape, rate) on the noise standard deviation σ.
    GammaOnSigma { shape: f64, rate: f64 },
}

impl Default for Sigma2Prior {
    fn default() -> Self {
        Sigma2Prior::HalfNormal { scale: 1.0 }
    }
}

impl Sigma2Prior {
    /// Log density of `u = ln σ²`, Jacobian included. The Gamma normalizer
    /// `ln Γ(shape)` is omitted.
    pub fn log_density_log_scale(&self, u: f64) -> f64 {
        match *self {
            Sigma2Prior::HalfNormal { scale } => {
                let v = u.exp();
                0.5 * (2.0 / std::f64::consts::PI).ln() - scale.ln() - v * v / (2.0 * scale * scale)
                    + u
            }
            Sigma2Prior::GammaOnSigma { shape, rate } => {
                let sigma = (0.5 * u).exp();
                shape * rate.ln() + (shape - 1.0) * 0.5 * u - rate * sigma + 0.5 * u
                    - std::f64::consts::LN_2
            }
        }
    }

    /// Derivative of [`Self::log_density_log_scale`] with respect to `u`.
    pub fn grad_log_scale(&self, u: f64) -> f64 {
        match *self {
            Sigma2Prior::HalfNormal { scale } => {
                let v = u.exp();
                1.0 - v * v / (scale * scale)
            }
            Sigma2Prior::GammaOnSigma { shape, rate } => {
                let sigma = (0.5 * u).exp();
                0.5 * shape - 0.5 * rate * sigma
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Sigma2Prior::HalfNormal { scale } => scale > 0.0 && scale.is_finite(),
            Sigma2Prior::GammaOnSigma { shape, rate } => {
                shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid sigma2 prior {self:?}")))
        }
    }
}

/// Structure and priors of one member of the regression family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Number of features `J`.
    pub j: usize,
    #[serde(default)]
    pub link: LinkFunction,
    #[serde(default = "defaults::alpha_mean")]
    pub prior_alpha_mean: f64,
    #[serde(default = "defaults::alpha_var")]
    pub prior_alpha_var: f64,
    #[serde(default = "defaults::beta_mean")]
    pub prior_beta_mean: f64,
    #[serde(default = "defaults::beta_var")]
    pub prior_beta_var: f64,
    #[serde(default)]
    pub prior_gamma_mean: f64,
    #[serde(default = "defaults::gamma_var")]
    pub prior_gamma_var: f64,
    #[serde(default)]
    pub prior_sigma2: Sigma2Prior,
}

mod defaults {
    pub fn alpha_mean() -> f64 {
        1.5
    }
    pub fn alpha_var() -> f64 {
        1.0
    }
    pub fn beta_mean() -> f64 {
        0.5
    }
    pub fn beta_var() -> f64 {
        0.25
    }
    pub fn gamma_var() -> f64 {
        0.5
    }
}

impl ModelSpec {
    /// Default priors: α ~ N(1.5, I), β ~ N(0.5, 0.25 I), γ ~ N(0, 0.5),
    /// σ² ~ half-N(1), sigmoid link.
    pub fn new(j: usize) -> Self {
        ModelSpec {
            j,
            link: LinkFunction::default(),
            prior_alpha_mean: defaults::alpha_mean(),
            prior_alpha_var: defaults::alpha_var(),
            prior_beta_mean: defaults::beta_mean(),
            prior_beta_var: defaults::beta_var(),
            prior_gamma_mean: 0.0,
            prior_gamma_var: defaults::gamma_var(),
            prior_sigma2: Sigma2Prior::default(),
        }
    }

    pub fn with_link(mut self, link: LinkFunction) -> Self {
        self.link = link;
        self
    }

    /// The two-feature "simple-bm" reference preset. Only priors are encoded;
    /// see [`GroundTruth::simple_bm`] for the matching ground truth.
    pub fn simple_bm() -> Self {
        ModelSpec {
            j: 2,
            link: LinkFunction::default(),
            prior_alpha_mean: 15.0,
            prior_alpha_var: 15.0,
            prior_beta_mean: 1.0,
            prior_beta_var: 1.0,
            prior_gamma_mean: 0.0,
            prior_gamma_var: defaults::gamma_var(),
            prior_sigma2: Sigma2Prior::GammaOnSigma {
                shape: 1.0,
                rate: 1.0,
            },
        }
    }

    /// Look up a named preset.
    pub fn preset(name: &str, j: usize) -> Result<Self> {
        match name {
            "default" => Ok(ModelSpec::new(j)),
            "simple-bm" => Ok(ModelSpec::simple_bm()),
            other => Err(Error::Config(format!("unknown model preset `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.j == 0 {
            return Err(Error::Config("model needs at least one feature".into()));
        }
        for (name, v) in [
            ("prior_alpha_var", self.prior_alpha_var),
            ("prior_beta_var", self.prior_beta_var),
            ("prior_gamma_var", self.prior_gamma_var),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("prior_alpha_mean", self.prior_alpha_mean),
            ("prior_beta_mean", self.prior_beta_mean),
            ("prior_gamma_mean", self.prior_gamma_mean),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        self.prior_sigma2.validate()
    }

    /// Draw with every Gaussian component at its prior mean and the given σ².
    pub fn prior_mean_draw(&self, sigma2: f64) -> ParamDraw {
        ParamDraw {
            alpha: vec![self.prior_alpha_mean; self.j],
            beta: vec![self.prior_beta_mean; self.j],
            gamma: self.prior_gamma_mean,
            sigma2,
        }
    }
}

/// One parameter vector `φ = (α, β, γ, σ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDraw {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub sigma2: f64,
}

impl ParamDraw {
    pub fn j(&self) -> usize {
        self.alpha.len()
    }

    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        check_dim("alpha", spec.j, self.alpha.len())?;
        check_dim("beta", spec.j, self.beta.len())?;
        if !(self.sigma2 >= 0.0) {
            return Err(Error::Contract(format!(
                "sigma2 must be non-negative, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }

    /// `γ + Σ β_j ψ(x_j α_j)` without shape checks.
    #[inline]
    pub fn mean_unchecked(&self, link: LinkFunction, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.alpha.len());
        let mut acc = self.gamma;
        for ((&xj, &a), &b) in x.iter().zip(&self.alpha).zip(&self.beta) {
            acc += b * link.apply(xj * a);
        }
        acc
    }

    /// Number of scalars in the flattened layout `(α, β, γ, σ²)`.
    pub fn flat_len(j: usize) -> usize {
        2 * j + 2
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::flat_len(self.j()));
        v.extend_from_slice(&self.alpha);
        v.extend_from_slice(&self.beta);
        v.push(self.gamma);
        v.push(self.sigma2);
        v
    }

    pub fn from_flat(j: usize, flat: &[f64]) -> Result<Self> {
        check_dim("flattened draw", Self::flat_len(j), flat.len())?;
        Ok(ParamDraw {
            alpha: flat[..j].to_vec(),
            beta: flat[j..2 * j].to_vec(),
            gamma: flat[2 * j],
            sigma2: flat[2 * j + 1],
        })
    }
}

/// The pre-sampled parameters that generate the observed data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub draw: ParamDraw,
}

impl GroundTruth {
    /// Ground truth of the "simple-bm" preset (γ̂ is not part of the preset
    /// and is set to zero).
    pub fn simple_bm() -> Self {
        GroundTruth {
            draw: ParamDraw {
                alpha: vec![40.0, 4.0],
                beta: vec![0.9, 0.5],
                gamma: 0.0,
                sigma2: 0.25,
            },
        }
    }
}

/// Default ground-truth noise variance.
pub const DEFAULT_TRUTH_SIGMA2: f64 = 0.01;

/// Checked conditional mean `E[Y | x, φ]`.
pub fn eval_mean(spec: &ModelSpec, draw: &ParamDraw, x: &[f64]) -> Result<f64> {
    check_dim("input", spec.j, x.len())?;
    draw.check(spec)?;
    Ok(draw.mean_unchecked(spec.link, x))
}

/// γ̂ ~ U(−0.5, 0.5), α̂_j ~ U(0.3, 3.0), β̂_j ~ U(0.1, 1.0); σ̂² is supplied.
pub fn sample_ground_truth<R: Rng + ?Sized>(
    spec: &ModelSpec,
    sigma2: f64,
    rng: &mut R,
) -> GroundTruth {
    let gamma = Uniform::new_inclusive(-0.5, 0.5).unwrap().sample(rng);
    let ua = Uniform::new_inclusive(0.3, 3.0).unwrap();
    let ub = Uniform::new_inclusive(0.1, 1.0).unwrap();
    let alpha = (0..spec.j).map(|_| ua.sample(rng)).collect();
    let beta = (0..spec.j).map(|_| ub.sample(rng)).collect();
    GroundTruth {
        draw: ParamDraw {
            alpha,
            beta,
            gamma,
            sigma2,
        },
    }
}

/// Observed data `D^BM`: standard-Gaussian inputs and noisy responses.
pub fn generate_observed<R: Rng + ?Sized>(
    spec: &ModelSpec,
    truth: &GroundTruth,
    n: usize,
    rng: &mut R,
) -> Result<(Array2<f64>, Array1<f64>)> {
    truth.draw.check(spec)?;
    let j = spec.j;
    let x = Array2::from_shape_fn((n, j), |_| StandardNormal.sample(rng));
    let sd = truth.draw.sigma2.sqrt();
    let mut y = Array1::zeros(n);
    for (row, yn) in x.rows().into_iter().zip(y.iter_mut()) {
        let mean = truth.draw.mean_unchecked(spec.link, row.as_slice().unwrap());
        let eps: f64 = if sd > 0.0 {
            sd * Distribution::<f64>::sample(&StandardNormal, rng)
        } else {
            0.0
        };
        *yn = mean + eps;
    }
    Ok((x, y))
}

fn gaussian_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Gaussian log-likelihood `Σ_n ln N(y_n | f(x_n), σ²)`.
pub fn log_likelihood(
    spec: &ModelSpec,
    draw: &ParamDraw,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
) -> Result<f64> {
    draw.check(spec)?;
    check_dim("observed columns", spec.j, x.ncols())?;
    check_dim("observed rows", x.nrows(), y.len())?;
    if !(draw.sigma2 > 0.0) {
        return Err(Error::Contract(format!(
            "sigma2 must be positive, got {}",
            draw.sigma2
        )));
    }
    let mut ll = 0.0;
    for (row, &yn) in x.rows().into_iter().zip(y.iter()) {
        let f = draw.mean_unchecked(spec.link, &row.to_vec());
        ll += gaussian_log_pdf(yn, f, draw.sigma2);
    }
    Ok(ll)
}

/// Log prior of a draw with σ² expressed on the log scale (Jacobian included).
pub fn log_prior(spec: &ModelSpec, draw: &ParamDraw) -> Result<f64> {
    draw.check(spec)?;
    if !(draw.sigma2 > 0.0) {
        return Err(Error::Contract(format!(
            "sigma2 must be positive, got {}",
            draw.sigma2
        )));
    }
    let mut lp = 0.0;
    for &a in &draw.alpha {
        lp += gaussian_log_pdf(a, spec.prior_alpha_mean, spec.prior_alpha_var);
    }
    for &b in &draw.beta {
        lp += gaussian_log_pdf(b, spec.prior_beta_mean, spec.prior_beta_var);
    }
    lp += gaussian_log_pdf(draw.gamma, spec.prior_gamma_mean, spec.prior_gamma_var);
    lp += spec.prior_sigma2.log_density_log_scale(draw.sigma2.ln());
    Ok(lp)
}

/// Unnormalized log posterior `ln p(y | X, φ) + ln p(φ)`.
pub fn log_posterior(
    spec: &ModelSpec,
    draw: &ParamDraw,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
) -> Result<f64> {
    Ok(log_likelihood(spec, draw, x, y)? + log_prior(spec, draw)?)
}
