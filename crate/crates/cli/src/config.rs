//! Run configuration: one strict JSON document.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use surrogate_forge::active::ALConfig;
use surrogate_forge::bench::{InvarianceConfig, SweepConfig};
use surrogate_forge::model::DEFAULT_TRUTH_SIGMA2;
use surrogate_forge::{DataGenConfig, ModelSpec, NetConfig, SamplerConfig};

use crate::CliError;

pub const WORKDIR_ENV: &str = "SURROGATE_FORGE_WORKDIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Base directory for relative paths.
    pub workdir: PathBuf,
    /// Artifact directory, relative to `workdir` unless absolute.
    pub artifacts: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            workdir: PathBuf::from("."),
            artifacts: PathBuf::from("artifacts"),
        }
    }
}

/// Ground truth and observed data behind the reference fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthConfig {
    /// Named preset; replaces `model` and the sampled truth when set.
    pub preset: Option<String>,
    pub sigma2: f64,
    pub n_obs: usize,
}

impl Default for TruthConfig {
    fn default() -> Self {
        TruthConfig {
            preset: None,
            sigma2: DEFAULT_TRUTH_SIGMA2,
            n_obs: 5_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub pool: usize,
    pub k: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { pool: 2_000, k: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every section's own seed is overwritten by it.
    pub seed: u64,
    pub paths: Paths,
    pub model: ModelSpec,
    pub truth: TruthConfig,
    pub sampler: SamplerConfig,
    pub data: DataGenConfig,
    pub net: NetConfig,
    pub al: ALConfig,
    pub invariance: InvarianceConfig,
    pub sweep: SweepConfig,
    pub calibration: CalibrationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            paths: Paths::default(),
            model: ModelSpec::new(2),
            truth: TruthConfig::default(),
            sampler: SamplerConfig::default(),
            data: DataGenConfig::default(),
            net: NetConfig::default(),
            al: ALConfig::default(),
            invariance: InvarianceConfig::default(),
            sweep: SweepConfig::default(),
            calibration: CalibrationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))
    }

    /// Apply the root seed and thread count to every section, then validate.
    pub fn finalize(mut self, seed: Option<u64>, threads: usize) -> Result<Self, CliError> {
        if let Some(s) = seed {
            self.seed = s;
        }
        let s = self.seed;
        if let Some(name) = &self.truth.preset {
            self.model = ModelSpec::preset(name, self.model.j).map_err(CliError::from_core)?;
        }
        self.sampler.seed = s;
        self.data.seed = s;
        self.data.threads = threads;
        self.net.seed = s;
        self.al.seed = s;
        self.al.threads = threads;
        self.invariance.seed = s;
        self.sweep.seed = s;
        let checks = [
            self.model.validate(),
            self.sampler.validate(),
            self.data.validate(),
            self.al.validate(),
        ];
        for c in checks {
            c.map_err(|e| CliError::config(e.to_string()))?;
        }
        if !(self.truth.sigma2 > 0.0) || self.truth.n_obs == 0 {
            return Err(CliError::config("truth.sigma2 must be positive and truth.n_obs at least 1"));
        }
        if self.calibration.pool == 0 || self.calibration.k == 0 {
            return Err(CliError::config("calibration.pool and calibration.k must be at least 1"));
        }
        Ok(self)
    }

    /// Resolve the artifact directory: `--out` wins, then the environment
    /// workdir override, then the config.
    pub fn artifact_dir(&self, out: Option<&Path>) -> Result<PathBuf, CliError> {
        if let Some(o) = out {
            return Ok(o.to_path_buf());
        }
        let workdir = std::env::var_os(WORKDIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.paths.workdir.clone());
        if !workdir.is_dir() {
            return Err(CliError::config(format!("workdir {} is not a directory", workdir.display())));
        }
        Ok(workdir.join(&self.paths.artifacts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.sampler.samples, 2_000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"net": {"widht": 3}}"#).is_err());
    }

    #[test]
    fn seed_reaches_every_section() {
        let c = RunConfig::default().finalize(Some(42), 3).unwrap();
        assert_eq!(
            (c.sampler.seed, c.data.seed, c.net.seed, c.al.seed, c.invariance.seed, c.sweep.seed),
            (42, 42, 42, 42, 42, 42)
        );
        assert_eq!((c.data.threads, c.al.threads), (3, 3));
    }

    #[test]
    fn preset_replaces_model() {
        let mut c = RunConfig::default();
        c.truth.preset = Some("simple-bm".into());
        let c = c.finalize(None, 1).unwrap();
        assert_eq!(c.model, ModelSpec::simple_bm());
    }

    #[test]
    fn out_flag_wins() {
        let c = RunConfig::default();
        assert_eq!(c.artifact_dir(Some(Path::new("/x"))).unwrap(), PathBuf::from("/x"));
    }
}
