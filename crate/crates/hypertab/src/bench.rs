//! Benchmark runner: evaluates local datasets against published score bands.
//!
//! A manifest lists datasets with their label column, an optional checksum,
//! an expected-score band (mean, std; the pass threshold is mean - 2 std),
//! and either fixed hyperparameters or a grid-search request. Missing
//! datasets are skipped with a warning, never silently passed.

use crate::cli::{self, GridSpec, HyperTabParams};
use crate::data::{self, LabelColumn};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreBand {
    /// Published mean balanced accuracy, percent.
    pub mean: f64,
    /// Published run-to-run standard deviation, percent.
    pub std: f64,
}

impl ScoreBand {
    /// Pass threshold: the published mean minus two standard deviations.
    pub fn threshold(&self) -> f64 {
        self.mean - 2.0 * self.std
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchDataset {
    pub name: String,
    pub path: PathBuf,
    pub label_column: LabelColumn,
    #[serde(default)]
    pub sha256: Option<String>,
    pub band: ScoreBand,
    /// Fixed hyperparameters; when absent, a grid search runs first.
    #[serde(default)]
    pub params: Option<HyperTabParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub datasets: Vec<BenchDataset>,
}

impl BenchmarkManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::fs::File::open(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        serde_json::to_writer_pretty(std::fs::File::create(path)?, self)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BenchStatus {
    Pass,
    Fail,
    /// Dataset file missing or unreadable; never counts as a pass.
    Skipped(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub name: String,
    pub status: BenchStatus,
    /// Achieved mean and std, percent, when the dataset ran.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "dataset,status,mean,std,threshold")?;
        for row in &self.rows {
            let status = match &row.status {
                BenchStatus::Pass => "pass".to_string(),
                BenchStatus::Fail => "fail".to_string(),
                BenchStatus::Skipped(reason) => format!("skipped: {reason}"),
            };
            writeln!(
                f,
                "{},{},{},{},{}",
                row.name,
                status,
                row.mean.map_or(String::new(), |v| format!("{v:.2}")),
                row.std.map_or(String::new(), |v| format!("{v:.2}")),
                row.threshold
            )?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let line = match (&row.status, row.mean, row.std) {
                (BenchStatus::Skipped(reason), _, _) => {
                    format!("{}: SKIPPED ({reason})", row.name)
                }
                (status, Some(mean), Some(std)) => format!(
                    "{}: {:?} {:.2} ({:.2}) vs threshold {:.2}",
                    row.name, status, mean, std, row.threshold
                ),
                _ => format!("{}: {:?}", row.name, row.status),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// Runs every manifest dataset: optional grid search, then
/// `folds x seeds` cross-validation compared against the band threshold.
pub fn run_benchmark(
    manifest: &BenchmarkManifest,
    folds: usize,
    seeds: &[u64],
    budget: usize,
) -> Result<BenchReport> {
    let mut rows = Vec::with_capacity(manifest.datasets.len());
    for entry in &manifest.datasets {
        rows.push(run_entry(entry, folds, seeds, budget)?);
    }
    Ok(BenchReport { rows })
}

fn run_entry(
    entry: &BenchDataset,
    folds: usize,
    seeds: &[u64],
    budget: usize,
) -> Result<BenchRow> {
    let threshold = entry.band.threshold();
    if !entry.path.exists() {
        log::warn!("benchmark: dataset {} missing at {}", entry.name, entry.path.display());
        return Ok(BenchRow {
            name: entry.name.clone(),
            status: BenchStatus::Skipped(format!("missing file {}", entry.path.display())),
            mean: None,
            std: None,
            threshold,
        });
    }
    if let Some(expected) = &entry.sha256 {
        let actual = data::file_sha256(&entry.path)?;
        if &actual != expected {
            return Err(Error::Data(format!(
                "benchmark: checksum mismatch for {}: expected {expected}, got {actual}",
                entry.name
            )));
        }
    }
    let ds = data::load_csv(&entry.path, &entry.label_column, true)?;
    let params = match &entry.params {
        Some(p) => p.clone(),
        None => {
            let grid = GridSpec::small_dataset(ds.d());
            let base = HyperTabParams::default();
            let inner_folds = 3;
            cli::gridsearch(&ds, &grid, &base, inner_folds, budget, seeds[0])?.0
        }
    };
    let scores = cli::evaluate(&ds, &params, folds, seeds)?;
    let values: Vec<f64> = scores.iter().map(|s| 100.0 * s.score).collect();
    let (mean, std) = cli::mean_std(&values);
    let status = if mean >= threshold {
        BenchStatus::Pass
    } else {
        BenchStatus::Fail
    };
    Ok(BenchRow {
        name: entry.name.clone(),
        status,
        mean: Some(mean),
        std: Some(std),
        threshold,
    })
}
