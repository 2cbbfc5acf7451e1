//! Neural-network surrogates for Bayesian regression posterior predictions.
//!
//! A Bayesian model with `M` posterior draws predicts by averaging `M`
//! conditional means. This crate fits such a model, synthesizes training data
//! from its draws, trains a one-hidden-layer network that outputs all `M`
//! means in one pass, grows the training set by uncertainty-driven active
//! learning, and benchmarks the two predictors against each other.

pub mod active;
pub mod bench;
pub mod error;
pub mod io;
pub mod model;
pub mod posterior;
pub mod predict;
pub mod rng;
pub mod surrogate;
pub mod synth;

pub use error::{Error, Result};
pub use model::{GroundTruth, LinkFunction, ModelSpec, ParamDraw, Sigma2Prior};
pub use posterior::{PosteriorDraws, SamplerConfig};
pub use synth::{DataGenConfig, InputDist, LabeledSet};
pub use surrogate::{NetConfig, SurrogateNet};
