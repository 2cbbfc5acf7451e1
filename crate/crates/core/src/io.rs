//! Artifact persistence.
//!
//! Binary artifacts are a JSON manifest next to a raw little-endian `f64`
//! blob. Every manifest carries `format_version`; loaders reject versions
//! they do not know. Tables are CSV with a header row.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::active::RoundRecord;
use crate::bench::{BenchReport, DeviationRow, EffectTable, LinearFit};
use crate::error::{Error, Result};
use crate::model::{LinkFunction, ModelSpec, ParamDraw};
use crate::posterior::{Diagnostics, PosteriorDraws};
use crate::predict::BatchPredictions;
use crate::surrogate::{NetConfig, SurrogateNet};
use crate::synth::{InputDist, LabeledSet};

pub const FORMAT_VERSION: u32 = 1;

pub const POSTERIOR_MANIFEST: &str = "posterior.json";
pub const POSTERIOR_BLOB: &str = "posterior.bin";
pub const NET_MANIFEST: &str = "net.json";
pub const NET_BLOB: &str = "net.bin";
pub const DATASET_SIDECAR: &str = "dataset.json";
pub const DATASET_X: &str = "X.csv";
pub const DATASET_Y: &str = "Y.csv";

fn artifact_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Artifact {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| artifact_err(path, e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| artifact_err(path, e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn check_version(path: &Path, version: u32) -> Result<()> {
    if version == FORMAT_VERSION {
        Ok(())
    } else {
        Err(artifact_err(
            path,
            format!("unsupported format_version {version} (expected {FORMAT_VERSION})"),
        ))
    }
}

fn write_blob(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let bytes: Vec<u8> = values.flat_map(f64::to_le_bytes).collect();
    fs::write(path, bytes)?;
    Ok(())
}

fn read_blob(path: &Path, expected_len: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| artifact_err(path, e.to_string()))?;
    if bytes.len() != expected_len * 8 {
        return Err(artifact_err(
            path,
            format!("expected {} bytes, found {}", expected_len * 8, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorManifest {
    pub format_version: u32,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub link: LinkFunction,
    /// Layout of each blob row.
    pub field_order: Vec<String>,
    pub blob: String,
    pub spec: ModelSpec,
    pub diagnostics: Diagnostics,
}

fn posterior_field_order() -> Vec<String> {
    ["alpha[0..J)", "beta[0..J)", "gamma", "sigma2"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Write `posterior.json` and `posterior.bin` into `dir`.
pub fn save_posterior(dir: &Path, draws: &PosteriorDraws) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = PosteriorManifest {
        format_version: FORMAT_VERSION,
        j: draws.j(),
        m: draws.m(),
        link: draws.spec().link,
        field_order: posterior_field_order(),
        blob: POSTERIOR_BLOB.into(),
        spec: draws.spec().clone(),
        diagnostics: draws.diagnostics().clone(),
    };
    write_blob(&dir.join(POSTERIOR_BLOB), draws.draws().iter().flat_map(ParamDraw::to_flat))?;
    write_json(&dir.join(POSTERIOR_MANIFEST), &manifest)
}

pub fn load_posterior(dir: &Path) -> Result<PosteriorDraws> {
    let path = dir.join(POSTERIOR_MANIFEST);
    let manifest: PosteriorManifest = read_json(&path)?;
    check_version(&path, manifest.format_version)?;
    if manifest.field_order != posterior_field_order() {
        return Err(artifact_err(&path, "unknown field order"));
    }
    if manifest.j != manifest.spec.j || manifest.link != manifest.spec.link {
        return Err(artifact_err(&path, "header disagrees with embedded model spec"));
    }
    let width = ParamDraw::flat_len(manifest.j);
    let blob = read_blob(&dir.join(&manifest.blob), manifest.m * width)?;
    let draws = blob
        .chunks_exact(width)
        .map(|row| ParamDraw::from_flat(manifest.j, row))
        .collect::<Result<Vec<_>>>()?;
    PosteriorDraws::new(manifest.spec, draws, manifest.diagnostics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob, in `f64` elements.
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetManifest {
    pub format_version: u32,
    pub config: NetConfig,
    pub tensors: Vec<TensorEntry>,
    pub blob: String,
}

/// Write `net.json` and `net.bin` into `dir`.
pub fn save_net(dir: &Path, net: &SurrogateNet) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut offset = 0;
    let mut entries = Vec::new();
    let mut flat = Vec::with_capacity(net.parameter_count());
    for (name, shape, data) in net.tensors() {
        entries.push(TensorEntry {
            name: name.into(),
            shape,
            offset,
            len: data.len(),
        });
        offset += data.len();
        flat.extend_from_slice(data);
    }
    write_blob(&dir.join(NET_BLOB), flat.into_iter())?;
    write_json(
        &dir.join(NET_MANIFEST),
        &NetManifest {
            format_version: FORMAT_VERSION,
            config: net.config().clone(),
            tensors: entries,
            blob: NET_BLOB.into(),
        },
    )
}

pub fn load_net(dir: &Path) -> Result<SurrogateNet> {
    let path = dir.join(NET_MANIFEST);
    let manifest: NetManifest = read_json(&path)?;
    check_version(&path, manifest.format_version)?;
    let total = manifest.tensors.iter().map(|t| t.len).sum();
    let blob = read_blob(&dir.join(&manifest.blob), total)?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for t in &manifest.tensors {
        if t.offset + t.len > blob.len() || t.shape.iter().product::<usize>() != t.len {
            return Err(artifact_err(&path, format!("inconsistent tensor entry {}", t.name)));
        }
        tensors.push(blob[t.offset..t.offset + t.len].to_vec());
    }
    SurrogateNet::from_tensors(manifest.config, tensors).map_err(|e| artifact_err(&path, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub format_version: u32,
    #[serde(rename = "I")]
    pub i: usize,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub tau: f64,
    pub seed: u64,
    pub input_dist: InputDist,
}

fn header(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}_{i}")).collect()
}

fn write_matrix_csv(path: &Path, prefix: &str, m: ArrayView2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header(prefix, m.ncols()))?;
    for row in m.rows() {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

fn read_matrix_csv(path: &Path, cols: usize) -> Result<Array2<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| artifact_err(path, e.to_string()))?;
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(artifact_err(path, format!("row {rows} has {} columns, expected {cols}", rec.len())));
        }
        for field in rec.iter() {
            values.push(
                field
                    .parse::<f64>()
                    .map_err(|e| artifact_err(path, format!("row {rows}: {e}")))?,
            );
        }
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, cols), values).expect("counted shape"))
}

/// Write `X.csv`, `Y.csv` and `dataset.json` into `dir`.
pub fn save_labeled_set(dir: &Path, set: &LabeledSet, tau: f64, seed: u64, input_dist: InputDist) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix_csv(&dir.join(DATASET_X), "x", set.x.view())?;
    write_matrix_csv(&dir.join(DATASET_Y), "y", set.y.view())?;
    write_json(
        &dir.join(DATASET_SIDECAR),
        &DatasetMeta {
            format_version: FORMAT_VERSION,
            i: set.len(),
            j: set.input_dim(),
            m: set.output_dim(),
            tau,
            seed,
            input_dist,
        },
    )
}

pub fn load_labeled_set(dir: &Path) -> Result<(LabeledSet, DatasetMeta)> {
    let path = dir.join(DATASET_SIDECAR);
    let meta: DatasetMeta = read_json(&path)?;
    check_version(&path, meta.format_version)?;
    let x = read_matrix_csv(&dir.join(DATASET_X), meta.j)?;
    let y = read_matrix_csv(&dir.join(DATASET_Y), meta.m)?;
    if x.nrows() != meta.i || y.nrows() != meta.i {
        return Err(artifact_err(&path, "row counts disagree with sidecar"));
    }
    Ok((LabeledSet::new(x, y)?, meta))
}

/// Batch predictions with their inputs: `x_0..x_{J-1},y_0..y_{M-1}` or
/// `x_0..x_{J-1},y_mean`.
pub fn write_predictions_csv(path: &Path, x: ArrayView2<f64>, pred: &BatchPredictions) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = header("x", x.ncols());
    match pred {
        BatchPredictions::PerDraw(y) => head.extend(header("y", y.ncols())),
        BatchPredictions::RiskMin(_) => head.push("y_mean".into()),
    }
    w.write_record(&head)?;
    for (i, row) in x.rows().into_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(f64::to_string).collect();
        match pred {
            BatchPredictions::PerDraw(y) => rec.extend(y.row(i).iter().map(f64::to_string)),
            BatchPredictions::RiskMin(y) => rec.push(y[i].to_string()),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Read an input matrix from CSV with a header row.
pub fn read_inputs_csv(path: &Path, j: usize) -> Result<Array2<f64>> {
    read_matrix_csv(path, j)
}

fn write_rows<const N: usize>(path: &Path, head: [&str; N], rows: impl Iterator<Item = [String; N]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(head)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// `round,dataset_size,train_loss,val_loss,wall_time_s`
pub fn write_history_csv(path: &Path, history: &[RoundRecord]) -> Result<()> {
    write_rows(
        path,
        ["round", "dataset_size", "train_loss", "val_loss", "wall_time_s"],
        history.iter().map(|r| {
            [
                r.round.to_string(),
                r.dataset_size.to_string(),
                r.train_loss.to_string(),
                r.val_loss.to_string(),
                r.wall_time_s.to_string(),
            ]
        }),
    )
}

/// `sigma,mu_rmse`
pub fn write_calibration_csv(path: &Path, table: &[(f64, f64)]) -> Result<()> {
    write_rows(
        path,
        ["sigma", "mu_rmse"],
        table.iter().map(|(s, m)| [s.to_string(), m.to_string()]),
    )
}

/// `J,bm_time_s,nn_time_s,test_mse,dataset_size`
pub fn write_speed_sweep_csv(path: &Path, report: &BenchReport) -> Result<()> {
    write_rows(
        path,
        ["J", "bm_time_s", "nn_time_s", "test_mse", "dataset_size"],
        report.rows.iter().map(|r| {
            [
                r.j.to_string(),
                r.bm_time_s.to_string(),
                r.nn_time_s.to_string(),
                r.test_mse.to_string(),
                r.dataset_size.to_string(),
            ]
        }),
    )
}

/// `x_j,mean,lo95,hi95`, written as `<dir>/<table.file_stem()>.csv`.
pub fn write_effect_table(dir: &Path, table: &EffectTable) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.csv", table.file_stem()));
    write_rows(
        &path,
        ["x_j", "mean", "lo95", "hi95"],
        table.points.iter().map(|p| {
            [
                p.x_j.to_string(),
                p.mean.to_string(),
                p.lo95().to_string(),
                p.hi95().to_string(),
            ]
        }),
    )?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedSummary {
    pub report: BenchReport,
    /// Absent with fewer than two model sizes.
    pub bm_time_fit: Option<LinearFit>,
    pub nn_time_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSummary {
    pub rows: usize,
    pub k: usize,
    pub spearman: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossoverSummary {
    pub kappa: u64,
    pub m: u64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvarianceSummary {
    pub j: usize,
    pub deviations: Vec<DeviationRow>,
    pub val_mse: Vec<f64>,
}

/// Aggregate of every suite run into one output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub format_version: u32,
    #[serde(default)]
    pub speed: Option<SpeedSummary>,
    #[serde(default)]
    pub calibration: Option<CalibrationSummary>,
    #[serde(default)]
    pub crossover: Option<CrossoverSummary>,
    #[serde(default)]
    pub invariance: Option<InvarianceSummary>,
}

impl Default for Report {
    fn default() -> Self {
        Report {
            format_version: FORMAT_VERSION,
            speed: None,
            calibration: None,
            crossover: None,
            invariance: None,
        }
    }
}

pub const REPORT_FILE: &str = "report.json";

/// Load `report.json` from `dir`, or start a fresh one if absent.
pub fn load_report(dir: &Path) -> Result<Report> {
    let path = dir.join(REPORT_FILE);
    if !path.exists() {
        return Ok(Report::default());
    }
    let report: Report = read_json(&path)?;
    check_version(&path, report.format_version)?;
    Ok(report)
}

pub fn save_report(dir: &Path, report: &Report) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join(REPORT_FILE), report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{self, ModelSpec};
    use crate::rng;
    use crate::surrogate::Norm;

    fn posterior() -> PosteriorDraws {
        let spec = ModelSpec::new(3).with_link(LinkFunction::Sine);
        let mut r = rng::seeded(1);
        let draws = (0..5)
            .map(|_| model::sample_ground_truth(&spec, 0.01, &mut r).draw)
            .collect();
        PosteriorDraws::from_draws(spec, draws).unwrap()
    }

    #[test]
    fn posterior_round_trip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let post = posterior();
        save_posterior(dir.path(), &post).unwrap();
        let back = load_posterior(dir.path()).unwrap();
        assert_eq!(back, post);
        let bytes = fs::read(dir.path().join(POSTERIOR_BLOB)).unwrap();
        assert_eq!(bytes.len(), 5 * 8 * 8);
        // Second row, first β entry: offset (8 + 3) doubles.
        let v = f64::from_le_bytes(bytes[11 * 8..12 * 8].try_into().unwrap());
        assert_eq!(v, post.draws()[1].beta[0]);
    }

    #[test]
    fn unknown_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_posterior(dir.path(), &posterior()).unwrap();
        let path = dir.path().join(POSTERIOR_MANIFEST);
        let text = fs::read_to_string(&path).unwrap().replace("\"format_version\": 1", "\"format_version\": 99");
        fs::write(&path, text).unwrap();
        let err = load_posterior(dir.path()).unwrap_err();
        assert!(err.to_string().contains("format_version 99"), "{err}");
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_posterior(dir.path(), &posterior()).unwrap();
        let path = dir.path().join(POSTERIOR_BLOB);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_posterior(dir.path()), Err(Error::Artifact { .. })));
    }

    #[test]
    fn net_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let net = SurrogateNet::new(NetConfig {
            input_dim: 3,
            hidden_width: 7,
            output_dim: 4,
            norm: Norm::Batch,
            seed: 5,
            ..NetConfig::default()
        })
        .unwrap();
        save_net(dir.path(), &net).unwrap();
        let back = load_net(dir.path()).unwrap();
        assert_eq!(back, net);
        let x = [0.1, 0.5, 0.9];
        let a = net.forward_eval(&x).unwrap();
        let b = back.forward_eval(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn labeled_set_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = Array2::from_shape_fn((4, 2), |(i, j)| (i as f64 + 0.1) / (j as f64 + 3.0));
        let y = Array2::from_shape_fn((4, 3), |(i, j)| (i * j) as f64 / 7.0 - 1e-300);
        let set = LabeledSet::new(x, y).unwrap();
        save_labeled_set(dir.path(), &set, 0.8, 9, InputDist::Uniform01).unwrap();
        let (back, meta) = load_labeled_set(dir.path()).unwrap();
        assert_eq!(back, set);
        assert_eq!((meta.i, meta.j, meta.m, meta.tau, meta.seed), (4, 2, 3, 0.8, 9));
        let head = fs::read_to_string(dir.path().join(DATASET_Y)).unwrap();
        assert!(head.starts_with("y_0,y_1,y_2\n"));
    }

    #[test]
    fn prediction_csv_headers() {
        let dir = tempfile::tempdir().unwrap();
        let x = Array2::from_elem((2, 2), 0.5);
        let per = BatchPredictions::PerDraw(Array2::from_elem((2, 3), 1.0));
        let p = dir.path().join("p.csv");
        write_predictions_csv(&p, x.view(), &per).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("x_0,x_1,y_0,y_1,y_2\n0.5,0.5,1,1,1\n"));
        let rm = BatchPredictions::RiskMin(ndarray::array![2.5, 3.0]);
        write_predictions_csv(&p, x.view(), &rm).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "x_0,x_1,y_mean\n0.5,0.5,2.5\n0.5,0.5,3\n");
        assert_eq!(read_inputs_csv(&p, 2).err().map(|_| ()), Some(()));
    }

    #[test]
    fn report_round_trip_and_strictness() {
        let dir = tempfile::tempdir().unwrap();
        let mut report = load_report(dir.path()).unwrap();
        report.crossover = Some(CrossoverSummary {
            kappa: 20_000,
            m: 2_000,
            n: 20_011,
        });
        save_report(dir.path(), &report).unwrap();
        assert_eq!(load_report(dir.path()).unwrap(), report);
        let bad = r#"{"format_version": 1, "extra": 3}"#;
        assert!(serde_json::from_str::<Report>(bad).is_err());
    }
}
