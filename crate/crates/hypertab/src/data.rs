//! Dataset ingestion, standardization, stratified splits, and the synthetic
//! generator used by the noise-robustness experiment.
//!
//! Features must be numeric; missing or unparsable cells are hard errors with
//! row-numbered messages. Labels are mapped to dense indices in order of first
//! appearance.

use crate::{Error, Matrix, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// How the label column is identified in a CSV file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    /// Dense class indices in `[0, K)`.
    pub y: Vec<usize>,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Row subset, preserving order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }
}

/// Loads a rectangular numeric CSV, mapping labels to dense indices in
/// first-appearance order.
pub fn load_csv(path: &Path, label_column: &LabelColumn, has_header: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_path(path)?;

    let headers: Option<Vec<String>> = if has_header {
        Some(reader.headers()?.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut label_idx: Option<usize> = match label_column {
        LabelColumn::Index(i) => Some(*i),
        LabelColumn::Name(name) => match &headers {
            Some(h) => Some(h.iter().position(|c| c == name).ok_or_else(|| {
                Error::Data(format!("label column '{name}' not found in header"))
            })?),
            None => {
                return Err(Error::Data(
                    "label column by name requires a header row".into(),
                ))
            }
        },
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels_raw: Vec<String> = Vec::new();
    let mut width: Option<usize> = None;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = line + 1 + usize::from(has_header);
        match width {
            None => width = Some(record.len()),
            Some(w) if record.len() != w => {
                return Err(Error::Data(format!(
                    "row {row_no}: expected {w} cells, got {}",
                    record.len()
                )))
            }
            _ => {}
        }
        let li = match label_idx {
            Some(i) if i < record.len() => i,
            Some(i) => {
                return Err(Error::Data(format!(
                    "label column index {i} out of range for {} columns",
                    record.len()
                )))
            }
            None => unreachable!(),
        };
        label_idx = Some(li);
        let mut features = Vec::with_capacity(record.len() - 1);
        for (j, cell) in record.iter().enumerate() {
            if j == li {
                labels_raw.push(cell.trim().to_string());
                continue;
            }
            let value: f64 = cell.trim().parse().map_err(|_| {
                Error::Data(format!("row {row_no}, column {j}: non-numeric cell '{cell}'"))
            })?;
            if !value.is_finite() {
                return Err(Error::Data(format!(
                    "row {row_no}, column {j}: non-finite value"
                )));
            }
            features.push(value);
        }
        rows.push(features);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }

    let li = label_idx.unwrap();
    let mut class_names: Vec<String> = Vec::new();
    let y: Vec<usize> = labels_raw
        .iter()
        .map(|name| {
            class_names
                .iter()
                .position(|c| c == name)
                .unwrap_or_else(|| {
                    class_names.push(name.clone());
                    class_names.len() - 1
                })
        })
        .collect();

    let feature_names = match headers {
        Some(h) => h
            .into_iter()
            .enumerate()
            .filter(|(j, _)| *j != li)
            .map(|(_, name)| name)
            .collect(),
        None => (0..rows[0].len()).map(|j| format!("f{j}")).collect(),
    };

    Ok(Dataset {
        x: Matrix::from_rows(&rows),
        y,
        feature_names,
        class_names,
    })
}

/// Writes a dataset back out as CSV with a header, label column last.
pub fn save_csv(path: &Path, ds: &Dataset) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ds.feature_names.clone();
    header.push("label".into());
    writer.write_record(&header)?;
    for i in 0..ds.n() {
        let mut record: Vec<String> = ds.x.row(i).iter().map(|v| format!("{v}")).collect();
        record.push(ds.class_names[ds.y[i]].clone());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Total rows ever seen by [`standardize_fit`]. Instrumentation for the
/// no-leakage audit: cross-validation must fit on train folds only, so the
/// delta across an evaluation equals the sum of train-fold sizes.
pub static STANDARDIZE_FIT_ROWS: std::sync::atomic::AtomicU64 =
    std::sync::atomic::AtomicU64::new(0);

/// Per-feature z-score parameters fitted on training data. Features with zero
/// variance get std 1 so they pass through unchanged after centering.
pub fn standardize_fit(x: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::Data("standardize_fit: need at least 2 rows".into()));
    }
    STANDARDIZE_FIT_ROWS.fetch_add(n as u64, std::sync::atomic::Ordering::Relaxed);
    let d = x.cols();
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (j, &v) in x.row(i).iter().enumerate() {
            mean[j] += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for i in 0..n {
        for (j, &v) in x.row(i).iter().enumerate() {
            var[j] += (v - mean[j]).powi(2);
        }
    }
    let std = var
        .iter()
        .map(|&v| {
            let s = (v / n as f64).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    Ok((mean, std))
}

pub fn standardize_apply(x: &Matrix, mean: &[f64], std: &[f64]) -> Matrix {
    assert_eq!(x.cols(), mean.len());
    assert_eq!(x.cols(), std.len());
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        for j in 0..row.len() {
            row[j] = (row[j] - mean[j]) / std[j];
        }
    }
    out
}

/// Stratified k-fold assignment: every sample in exactly one test fold,
/// per-class proportions preserved within one sample per fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    fold_of: Vec<usize>,
    folds: usize,
}

impl SplitPlan {
    pub fn folds(&self) -> usize {
        self.folds
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }
}

pub fn stratified_kfold(ds: &Dataset, folds: usize, seed: u64) -> Result<SplitPlan> {
    let n = ds.n();
    if folds < 2 {
        return Err(Error::Config("folds: must be >= 2".into()));
    }
    if folds > n {
        return Err(Error::Config(format!(
            "folds: {folds} exceeds sample count {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; n];
    for class in 0..ds.n_classes() {
        let mut members: Vec<usize> = (0..n).filter(|&i| ds.y[i] == class).collect();
        if members.len() < folds {
            log::warn!(
                "stratified_kfold: class {class} has {} members, fewer than {folds} folds",
                members.len()
            );
        }
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            fold_of[i] = pos % folds;
        }
    }
    Ok(SplitPlan { fold_of, folds })
}

/// A synthetic dataset plus the (seed-randomized) position of its single
/// informative column.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub informative_col: usize,
}

/// 50 samples, 50 columns, 5 balanced classes. 49 columns are Uniform[0,1]
/// noise; one column is `class_index / 4` exactly.
pub fn make_synthetic(seed: u64) -> Synthetic {
    let (n, d, k) = (50, 50, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let informative_col = rng.gen_range(0..d);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for &slot in &order {
        let class = slot % k;
        let mut row: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        row[informative_col] = class as f64 / (k - 1) as f64;
        rows.push(row);
        y.push(class);
    }
    Synthetic {
        dataset: Dataset {
            x: Matrix::from_rows(&rows),
            y,
            feature_names: (0..d).map(|j| format!("f{j}")).collect(),
            class_names: (0..k).map(|c| format!("{c}")).collect(),
        },
        informative_col,
    }
}

/// Dataset manifest entry: identity and shape of one local CSV file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub label_column: LabelColumn,
    pub sha256: String,
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use tempfile::tempdir;

    fn write_file(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn loads_hand_written_csv() {
        let dir = tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "tiny.csv",
            "a,b,label\n1.0,2.0,yes\n3.0,4.0,no\n5.0,6.0,yes\n",
        );
        let ds = load_csv(&path, &LabelColumn::Name("label".into()), true).unwrap();
        assert_eq!((ds.n(), ds.d(), ds.n_classes()), (3, 2, 2));
        assert_eq!(ds.x.row(1), &[3.0, 4.0]);
        assert_eq!(ds.y, vec![0, 1, 0]);
        assert_eq!(ds.class_names, vec!["yes", "no"]);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
    }

    #[test]
    fn header_only_file_is_empty_dataset_error() {
        let dir = tempdir().unwrap();
        let path = write_file(dir.path(), "empty.csv", "a,b,label\n");
        assert!(matches!(
            load_csv(&path, &LabelColumn::Name("label".into()), true),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn non_numeric_cell_names_the_row() {
        let dir = tempdir().unwrap();
        let path = write_file(dir.path(), "bad.csv", "a,label\n1.0,x\noops,y\n");
        let err = load_csv(&path, &LabelColumn::Name("label".into()), true).unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
    }

    #[test]
    fn ragged_rows_rejected() {
        let dir = tempdir().unwrap();
        let path = write_file(dir.path(), "ragged.csv", "a,b,label\n1,2,x\n1,2,3,x\n");
        assert!(load_csv(&path, &LabelColumn::Name("label".into()), true).is_err());
    }

    #[test]
    fn missing_label_column_rejected() {
        let dir = tempdir().unwrap();
        let path = write_file(dir.path(), "nolabel.csv", "a,b\n1,2\n");
        assert!(load_csv(&path, &LabelColumn::Name("label".into()), true).is_err());
    }

    #[test]
    fn label_by_index_without_header() {
        let dir = tempdir().unwrap();
        let path = write_file(dir.path(), "noheader.csv", "1,2,0\n3,4,1\n");
        let ds = load_csv(&path, &LabelColumn::Index(2), false).unwrap();
        assert_eq!((ds.n(), ds.d()), (2, 2));
        assert_eq!(ds.y, vec![0, 1]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempdir().unwrap();
        let synth = make_synthetic(1);
        let path = dir.path().join("synth.csv");
        save_csv(&path, &synth.dataset).unwrap();
        let loaded = load_csv(&path, &LabelColumn::Name("label".into()), true).unwrap();
        assert_eq!(loaded.x, synth.dataset.x);
        // class indices are assigned in first-appearance order, so compare names
        for i in 0..loaded.n() {
            assert_eq!(
                loaded.class_names[loaded.y[i]],
                synth.dataset.class_names[synth.dataset.y[i]]
            );
        }
    }

    #[test]
    fn standardize_constant_feature_passes_through() {
        let x = Matrix::from_rows(&[vec![2.0, 1.0], vec![2.0, 3.0], vec![2.0, 5.0]]);
        let (mean, std) = standardize_fit(&x).unwrap();
        assert_eq!(std[0], 1.0);
        let z = standardize_apply(&x, &mean, &std);
        for i in 0..3 {
            assert_eq!(z[(i, 0)], 0.0);
        }
    }

    #[test]
    fn standardized_columns_have_zero_mean_unit_std() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Matrix::from_vec(
            100,
            3,
            (0..300).map(|_| rng.gen_range(-5.0..5.0)).collect(),
        );
        let (mean, std) = standardize_fit(&x).unwrap();
        let z = standardize_apply(&x, &mean, &std);
        let (zm, zs) = standardize_fit(&z).unwrap();
        for j in 0..3 {
            assert!(zm[j].abs() < 1e-10);
            assert!((zs[j] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn standardize_is_idempotent_on_standardized_data() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::from_vec(50, 2, (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let (mean, std) = standardize_fit(&x).unwrap();
        let z = standardize_apply(&x, &mean, &std);
        let (m2, s2) = standardize_fit(&z).unwrap();
        let z2 = standardize_apply(&z, &m2, &s2);
        for (a, b) in z.data().iter().zip(z2.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    fn balanced_toy(n: usize, k: usize) -> Dataset {
        Dataset {
            x: Matrix::zeros(n, 2),
            y: (0..n).map(|i| i % k).collect(),
            feature_names: vec!["a".into(), "b".into()],
            class_names: (0..k).map(|c| c.to_string()).collect(),
        }
    }

    #[test]
    fn kfold_balanced_two_classes() {
        let ds = balanced_toy(10, 2);
        let plan = stratified_kfold(&ds, 5, 0).unwrap();
        for fold in 0..5 {
            let test = plan.test_indices(fold);
            assert_eq!(test.len(), 2);
            let classes: Vec<usize> = test.iter().map(|&i| ds.y[i]).collect();
            assert!(classes.contains(&0) && classes.contains(&1));
        }
    }

    #[test]
    fn kfold_deterministic_per_seed() {
        let ds = balanced_toy(30, 3);
        assert_eq!(
            stratified_kfold(&ds, 5, 7).unwrap(),
            stratified_kfold(&ds, 5, 7).unwrap()
        );
        assert_ne!(
            stratified_kfold(&ds, 5, 7).unwrap(),
            stratified_kfold(&ds, 5, 8).unwrap()
        );
    }

    #[test]
    fn kfold_proportions_within_one() {
        let synth = make_synthetic(4);
        let plan = stratified_kfold(&synth.dataset, 5, 1).unwrap();
        for fold in 0..5 {
            let test = plan.test_indices(fold);
            for class in 0..5 {
                let count = test.iter().filter(|&&i| synth.dataset.y[i] == class).count();
                // 10 members per class over 5 folds -> 2 each
                assert!((count as i64 - 2).abs() <= 1, "fold {fold} class {class}: {count}");
            }
        }
    }

    #[test]
    fn kfold_rejects_too_many_folds() {
        let ds = balanced_toy(4, 2);
        assert!(stratified_kfold(&ds, 5, 0).is_err());
    }

    #[test]
    fn synthetic_shape_and_balance() {
        let synth = make_synthetic(0);
        let ds = &synth.dataset;
        assert_eq!((ds.n(), ds.d(), ds.n_classes()), (50, 50, 5));
        for class in 0..5 {
            assert_eq!(ds.y.iter().filter(|&&c| c == class).count(), 10);
        }
    }

    #[test]
    fn synthetic_informative_column_separates_classes() {
        let synth = make_synthetic(3);
        let ds = &synth.dataset;
        // thresholding the informative column classifies perfectly
        for i in 0..ds.n() {
            let v = ds.x[(i, synth.informative_col)];
            let recovered = (v * 4.0).round() as usize;
            assert_eq!(recovered, ds.y[i]);
        }
    }

    #[test]
    fn synthetic_seeds_differ_in_noise_not_mapping() {
        let a = make_synthetic(1);
        let b = make_synthetic(2);
        assert_ne!(a.dataset.x, b.dataset.x);
        for synth in [a, b] {
            for i in 0..synth.dataset.n() {
                let v = synth.dataset.x[(i, synth.informative_col)];
                assert_eq!((v * 4.0).round() as usize, synth.dataset.y[i]);
            }
        }
    }
}
