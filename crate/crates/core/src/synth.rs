//! Surrogate training data.
//!
//! Inputs are sampled from `input_dist`, each coordinate is zeroed with
//! probability `1 − τ`, and the masked input is labeled with the per-draw
//! conditional means of the reference model.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::posterior::PosteriorDraws;
use crate::predict::predict_matrix;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputDist {
    #[default]
    Uniform01,
    StandardGaussian,
}

impl InputDist {
    pub fn sample_matrix<R: Rng + ?Sized>(self, rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
        match self {
            InputDist::Uniform01 => Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>()),
            InputDist::StandardGaussian => {
                Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataGenConfig {
    /// Number of examples `I`.
    pub examples: usize,
    /// Bernoulli keep-probability τ.
    pub tau: f64,
    pub input_dist: InputDist,
    pub seed: u64,
    /// Worker threads used for labeling.
    pub threads: usize,
}

impl Default for DataGenConfig {
    fn default() -> Self {
        DataGenConfig {
            examples: 10_000,
            tau: 0.8,
            input_dist: InputDist::Uniform01,
            seed: 0,
            threads: 1,
        }
    }
}

impl DataGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.examples == 0 {
            return Err(Error::Config("data generation needs at least one example".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        Ok(())
    }
}

/// Surrogate dataset: `x` is I×J inputs, `y` is I×M per-draw expectations.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl LabeledSet {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        check_dim("label rows", x.nrows(), y.nrows())?;
        Ok(LabeledSet { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.y.ncols()
    }

    /// Append the rows of `other`.
    pub fn extend(&mut self, other: &LabeledSet) -> Result<()> {
        check_dim("appended input columns", self.input_dim(), other.input_dim())?;
        check_dim("appended label columns", self.output_dim(), other.output_dim())?;
        self.x.append(ndarray::Axis(0), other.x.view()).expect("matching columns");
        self.y.append(ndarray::Axis(0), other.y.view()).expect("matching columns");
        Ok(())
    }
}

/// Zero the coordinates of `x` whose mask entry is false.
pub fn apply_mask(x: &mut [f64], mask: &[bool]) {
    for (v, &keep) in x.iter_mut().zip(mask) {
        if !keep {
            *v = 0.0;
        }
    }
}

/// Sample `cfg.examples` masked inputs and label them.
pub fn generate(draws: &PosteriorDraws, cfg: &DataGenConfig) -> Result<LabeledSet> {
    cfg.validate()?;
    let j = draws.j();
    let mut r = rng::stream(cfg.seed, Stream::DataGen);
    let keep = Bernoulli::new(cfg.tau).expect("validated tau");
    let mut x = Array2::zeros((cfg.examples, j));
    let mut mask = vec![true; j];
    for mut row in x.rows_mut() {
        for m in mask.iter_mut() {
            *m = keep.sample(&mut r);
        }
        let raw = cfg.input_dist.sample_matrix(1, j, &mut r);
        let row = row.as_slice_mut().expect("contiguous row");
        row.copy_from_slice(raw.as_slice().expect("contiguous"));
        apply_mask(row, &mask);
    }
    let y = predict_matrix(draws, x.view(), cfg.threads)?;
    LabeledSet::new(x, y)
}

/// Label given inputs without masking or resampling.
pub fn generate_at(draws: &PosteriorDraws, x: ArrayView2<f64>, threads: usize) -> Result<LabeledSet> {
    check_dim("input columns", draws.j(), x.ncols())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("inputs to label"));
    }
    let y = predict_matrix(draws, x, threads)?;
    LabeledSet::new(x.to_owned(), y)
}

/// Unmasked evaluation set (τ = 1) of `rows` uniform inputs.
pub fn evaluation_set(draws: &PosteriorDraws, rows: usize, seed: u64, stream: Stream, threads: usize) -> Result<LabeledSet> {
    let mut r = rng::stream(seed, stream);
    let x = InputDist::Uniform01.sample_matrix(rows, draws.j(), &mut r);
    generate_at(draws, x.view(), threads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{self, ModelSpec, ParamDraw};
    use crate::predict::predict_draws;
    use proptest::prelude::*;

    fn posterior(j: usize, m: usize) -> PosteriorDraws {
        let spec = ModelSpec::new(j);
        let mut r = rng::seeded(42);
        let draws = (0..m)
            .map(|_| model::sample_ground_truth(&spec, 0.01, &mut r).draw)
            .collect();
        PosteriorDraws::from_draws(spec, draws).unwrap()
    }

    #[test]
    fn tau_one_never_masks() {
        let post = posterior(4, 3);
        let cfg = DataGenConfig {
            examples: 500,
            tau: 1.0,
            ..DataGenConfig::default()
        };
        let set = generate(&post, &cfg).unwrap();
        assert!(set.x.iter().all(|&v| v != 0.0));
    }

    #[test]
    fn zeroed_fraction_matches_binomial_rate() {
        let post = posterior(5, 2);
        let tau = 0.8;
        let cfg = DataGenConfig {
            examples: 4000,
            tau,
            seed: 9,
            ..DataGenConfig::default()
        };
        let set = generate(&post, &cfg).unwrap();
        let trials = (set.len() * set.input_dim()) as f64;
        let zeros = set.x.iter().filter(|&&v| v == 0.0).count() as f64;
        let frac = zeros / trials;
        let bound = 4.0 * (tau * (1.0 - tau) / trials).sqrt();
        assert!((frac - (1.0 - tau)).abs() < bound, "zero fraction {frac}");
    }

    #[test]
    fn default_size_and_labels_are_consistent() {
        let post = posterior(3, 6);
        let set = generate(&post, &DataGenConfig::default()).unwrap();
        assert_eq!(set.x.dim(), (10_000, 3));
        assert_eq!(set.y.dim(), (10_000, 6));
        for i in (0..set.len()).step_by(100) {
            let v = predict_draws(&post, &set.x.row(i).to_vec()).unwrap();
            assert_eq!(set.y.row(i).to_vec(), v.values);
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let post = posterior(3, 4);
        let cfg = DataGenConfig {
            examples: 300,
            seed: 5,
            ..DataGenConfig::default()
        };
        let a = generate(&post, &cfg).unwrap();
        let b = generate(&post, &cfg).unwrap();
        assert_eq!(a, b);
        let c = generate(&post, &DataGenConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn labeling_zero_row_with_sigmoid() {
        let spec = ModelSpec::new(3);
        let draws = vec![
            ParamDraw {
                alpha: vec![1.0, 2.0, 3.0],
                beta: vec![0.2, 0.4, 0.6],
                gamma: 0.1,
                sigma2: 0.01,
            },
            ParamDraw {
                alpha: vec![0.5, 0.5, 0.5],
                beta: vec![1.0, -1.0, 2.0],
                gamma: -0.3,
                sigma2: 0.01,
            },
        ];
        let post = PosteriorDraws::from_draws(spec, draws.clone()).unwrap();
        let set = generate_at(&post, Array2::zeros((1, 3)).view(), 1).unwrap();
        for (m, d) in draws.iter().enumerate() {
            let expected = d.gamma + 0.5 * d.beta.iter().sum::<f64>();
            assert!((set.y[[0, m]] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn generate_at_keeps_row_order_and_matches_unmasked_generate() {
        let post = posterior(2, 5);
        let cfg = DataGenConfig {
            examples: 64,
            tau: 1.0,
            seed: 12,
            ..DataGenConfig::default()
        };
        let a = generate(&post, &cfg).unwrap();
        let b = generate_at(&post, a.x.view(), 3).unwrap();
        assert_eq!(a, b);
        let reversed = a.x.slice(ndarray::s![..;-1, ..]).to_owned();
        let c = generate_at(&post, reversed.view(), 1).unwrap();
        for i in 0..64 {
            assert_eq!(c.y.row(i), a.y.row(63 - i));
        }
    }

    #[test]
    fn generate_at_rejects_bad_inputs() {
        let post = posterior(2, 2);
        assert!(generate_at(&post, Array2::zeros((2, 3)).view(), 1).is_err());
        let mut x = Array2::zeros((2, 2));
        x[[1, 1]] = f64::INFINITY;
        assert!(matches!(
            generate_at(&post, x.view(), 1),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(DataGenConfig { tau: 0.0, ..DataGenConfig::default() }.validate().is_err());
        assert!(DataGenConfig { tau: 1.5, ..DataGenConfig::default() }.validate().is_err());
        assert!(DataGenConfig { examples: 0, ..DataGenConfig::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn masking_is_idempotent(
            x in proptest::collection::vec(-5.0..5.0f64, 6),
            mask in proptest::collection::vec(any::<bool>(), 6),
        ) {
            let mut once = x.clone();
            apply_mask(&mut once, &mask);
            let mut twice = once.clone();
            apply_mask(&mut twice, &mask);
            prop_assert_eq!(once, twice);
        }
    }
}
