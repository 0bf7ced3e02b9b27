//! Run reports (JSON), per-epoch history (JSON lines) and sweep tables (CSV).

use std::fs;
use std::io::Write;
use std::path::Path;

use agnn_core::train::{EpochRecord, RegressionMetrics, RepeatOutcome};
use serde::{Deserialize, Serialize};

use crate::{file_error, Result};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Writes through a temporary sibling and renames, so a path either holds
/// the complete file or is untouched.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(file_error(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(file_error(&tmp))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(file_error(&tmp))?;
    fs::rename(&tmp, path).map_err(file_error(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEcho {
    pub name: String,
    pub nodes: usize,
    pub edges: usize,
    pub classes: usize,
    pub labeled: usize,
    pub feature_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainEcho {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden: usize,
    pub layers: usize,
    pub epochs: usize,
    pub patience: usize,
    pub lambda: f64,
    pub regularizer: String,
    pub fusion: String,
    pub mode: String,
    pub symmetrize: bool,
    pub per_class: usize,
    pub val_size: usize,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub repeat: usize,
    pub seed: u64,
    pub test_accuracy: f64,
    pub best_val_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub warnings: Vec<String>,
}

impl From<&RepeatOutcome> for RunEntry {
    fn from(r: &RepeatOutcome) -> Self {
        RunEntry {
            repeat: r.repeat,
            seed: r.seed,
            test_accuracy: r.test_accuracy,
            best_val_accuracy: r.best_val_acc,
            best_epoch: r.best_epoch,
            epochs_run: r.epochs_run,
            warnings: r.split_warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub engine_version: String,
    pub seed: u64,
    pub dataset: DatasetEcho,
    pub config: TrainEcho,
    pub runs: Vec<RunEntry>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsEcho {
    pub rmse: f64,
    pub mae: f64,
    pub mape: Option<f64>,
    pub mape_excluded: usize,
}

impl From<RegressionMetrics> for MetricsEcho {
    fn from(m: RegressionMetrics) -> Self {
        MetricsEcho {
            rmse: m.rmse,
            mae: m.mae,
            mape: m.mape,
            mape_excluded: m.mape_excluded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionEcho {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden: usize,
    pub layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub mode: String,
    pub train_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub command: String,
    pub engine_version: String,
    pub seed: u64,
    pub dataset: String,
    pub graphs: usize,
    pub train_graphs: usize,
    pub test_graphs: usize,
    pub config: RegressionEcho,
    pub test: MetricsEcho,
    pub mean_baseline: MetricsEcho,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub command: String,
    pub engine_version: String,
    pub checkpoint: String,
    pub dataset: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluated_nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regression: Option<MetricsEcho>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryLine {
    pub repeat: usize,
    pub epoch: usize,
    pub error: f64,
    pub reg: f64,
    pub total: f64,
    pub val_acc: f64,
    pub val_loss: f64,
}

impl HistoryLine {
    pub fn new(repeat: usize, r: &EpochRecord) -> Self {
        HistoryLine {
            repeat,
            epoch: r.epoch,
            error: r.error,
            reg: r.reg,
            total: r.total,
            val_acc: r.val_acc,
            val_loss: r.val_loss,
        }
    }
}

/// One JSON object per line.
pub fn history_jsonl<'a>(lines: impl IntoIterator<Item = &'a HistoryLine>) -> Result<String> {
    let mut out = String::new();
    for l in lines {
        out.push_str(&serde_json::to_string(l)?);
        out.push('\n');
    }
    Ok(out)
}

/// CSV with a header row; `rows` are `(key, mean, std)`.
pub fn sweep_csv(key: &str, rows: &[(String, f64, f64)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([key, "mean_acc", "std_acc"])?;
    for (k, mean, std) in rows {
        w.write_record([k.as_str(), &mean.to_string(), &std.to_string()])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_first() {
        let text = sweep_csv(
            "lambda",
            &[("0".into(), 0.5, 0.0), ("0.1".into(), 0.75, 0.01)],
        )
        .unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("lambda,mean_acc,std_acc"));
        assert_eq!(lines.next(), Some("0,0.5,0"));
        assert_eq!(lines.count(), 1);
    }

    #[test]
    fn history_lines_parse_back() {
        let line = HistoryLine {
            repeat: 1,
            epoch: 3,
            error: 1.5,
            reg: 0.69,
            total: 1.569,
            val_acc: 0.5,
            val_loss: 10.0,
        };
        let text = history_jsonl([&line, &line]).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: HistoryLine = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back, line);
    }

    #[test]
    fn atomic_write_leaves_no_partial_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/report.json");
        write_atomic(&path, b"{}").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "{}");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
