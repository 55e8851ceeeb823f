//! Evaluation measures: balanced accuracy and cross-method mean ranks.

use crate::{Error, Matrix, Result};

/// K x K counts; rows are true classes, columns predicted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_pairs(n_classes: usize, y_true: &[usize], y_pred: &[usize]) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::Data(
                "confusion matrix: prediction count != label count".into(),
            ));
        }
        let mut counts = vec![vec![0u64; n_classes]; n_classes];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            if t >= n_classes || p >= n_classes {
                return Err(Error::Data(format!(
                    "confusion matrix: class {} out of range",
                    t.max(p)
                )));
            }
            counts[t][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Recall of one class, or `None` when the class is absent from the truth.
    pub fn recall(&self, class: usize) -> Option<f64> {
        let row_total: u64 = self.counts[class].iter().sum();
        (row_total > 0).then(|| self.counts[class][class] as f64 / row_total as f64)
    }
}

/// Mean over classes of per-class recall; classes absent from `y_true` are
/// excluded. Equals plain accuracy on balanced classes; when all present
/// classes have equal counts the algebraically identical `hits / n` form is
/// used so that identity holds exactly in floating point.
pub fn balanced_accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    if y_true.is_empty() {
        return Err(Error::Data("balanced_accuracy: empty input".into()));
    }
    let n_classes = y_true
        .iter()
        .chain(y_pred)
        .max()
        .map_or(0, |&m| m + 1);
    let cm = ConfusionMatrix::from_pairs(n_classes, y_true, y_pred)?;
    let per_class: Vec<(u64, u64)> = (0..n_classes)
        .filter_map(|c| {
            let count: u64 = cm.counts[c].iter().sum();
            (count > 0).then(|| (cm.counts[c][c], count))
        })
        .collect();
    if per_class.iter().all(|&(_, count)| count == per_class[0].1) {
        let hits: u64 = per_class.iter().map(|&(h, _)| h).sum();
        let total: u64 = per_class.iter().map(|&(_, c)| c).sum();
        return Ok(hits as f64 / total as f64);
    }
    let sum: f64 = per_class.iter().map(|&(h, c)| h as f64 / c as f64).sum();
    Ok(sum / per_class.len() as f64)
}

/// Scores of several methods over several datasets; higher is better.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    /// `scores[dataset][method]`.
    pub scores: Matrix,
}

impl ScoreTable {
    pub fn new(methods: Vec<String>, datasets: Vec<String>, scores: Matrix) -> Result<Self> {
        if methods.len() < 2 {
            return Err(Error::Data("score table: need at least 2 methods".into()));
        }
        if scores.rows() != datasets.len() || scores.cols() != methods.len() {
            return Err(Error::Data("score table: shape mismatch".into()));
        }
        if !scores.is_finite() {
            return Err(Error::Data("score table: non-finite score".into()));
        }
        Ok(Self {
            methods,
            datasets,
            scores,
        })
    }

    /// Reads a CSV with a method header row; first column is the dataset name.
    pub fn read_csv(path: &std::path::Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let methods: Vec<String> = reader.headers()?.iter().skip(1).map(str::to_string).collect();
        let mut datasets = Vec::new();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            datasets.push(record[0].to_string());
            let row: Vec<f64> = record
                .iter()
                .skip(1)
                .map(|c| {
                    c.trim()
                        .parse()
                        .map_err(|_| Error::Data(format!("score table: bad cell '{c}'")))
                })
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        Self::new(methods, datasets, Matrix::from_rows(&rows))
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header = vec!["dataset".to_string()];
        header.extend(self.methods.iter().cloned());
        writer.write_record(&header)?;
        for (i, name) in self.datasets.iter().enumerate() {
            let mut record = vec![name.clone()];
            record.extend(self.scores.row(i).iter().map(|v| v.to_string()));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Ranks one dataset's scores descending (rank 1 = best); ties receive the
/// average of the tied rank positions.
fn rank_row(scores: &[f64]) -> Vec<f64> {
    let m = scores.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut ranks = vec![0.0; m];
    let mut i = 0;
    while i < m {
        let mut j = i;
        while j + 1 < m && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the average rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Per-method mean rank over all datasets.
pub fn mean_ranks(table: &ScoreTable) -> Vec<f64> {
    let m = table.methods.len();
    let mut sums = vec![0.0; m];
    for i in 0..table.datasets.len() {
        for (j, r) in rank_row(table.scores.row(i)).into_iter().enumerate() {
            sums[j] += r;
        }
    }
    let n = table.datasets.len() as f64;
    sums.iter().map(|s| s / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_predictions_score_one() {
        let y = [0, 1, 2, 1, 0];
        assert_eq!(balanced_accuracy(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn two_class_recall_average() {
        // class 0 recall 1.0 (2/2), class 1 recall 0.5 (1/2)
        let y_true = [0, 0, 1, 1];
        let y_pred = [0, 0, 1, 0];
        assert_eq!(balanced_accuracy(&y_true, &y_pred).unwrap(), 0.75);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(balanced_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn absent_classes_excluded() {
        // only class 1 present in truth
        let y_true = [1, 1];
        let y_pred = [1, 0];
        assert_eq!(balanced_accuracy(&y_true, &y_pred).unwrap(), 0.5);
    }

    #[test]
    fn equals_plain_accuracy_on_balanced_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let k = rng.gen_range(2..=4);
            let per_class = rng.gen_range(2..=10);
            let mut y_true = Vec::new();
            for c in 0..k {
                y_true.extend(std::iter::repeat(c).take(per_class));
            }
            let y_pred: Vec<usize> = y_true.iter().map(|_| rng.gen_range(0..k)).collect();
            let plain = y_true
                .iter()
                .zip(&y_pred)
                .filter(|(a, b)| a == b)
                .count() as f64
                / y_true.len() as f64;
            assert_eq!(balanced_accuracy(&y_true, &y_pred).unwrap(), plain);
        }
    }

    #[test]
    fn constant_predictor_on_balanced_classes_scores_one_over_k() {
        for k in 2..=5 {
            let y_true: Vec<usize> = (0..k * 6).map(|i| i % k).collect();
            let y_pred = vec![0usize; y_true.len()];
            assert_eq!(balanced_accuracy(&y_true, &y_pred).unwrap(), 1.0 / k as f64);
        }
    }

    #[test]
    fn joint_permutation_invariance() {
        let y_true = [0, 1, 1, 2, 0, 2];
        let y_pred = [0, 1, 2, 2, 1, 2];
        let base = balanced_accuracy(&y_true, &y_pred).unwrap();
        let perm = [3, 0, 5, 1, 4, 2];
        let pt: Vec<usize> = perm.iter().map(|&i| y_true[i]).collect();
        let pp: Vec<usize> = perm.iter().map(|&i| y_pred[i]).collect();
        assert_eq!(balanced_accuracy(&pt, &pp).unwrap(), base);
    }

    fn table(methods: usize, rows: Vec<Vec<f64>>) -> ScoreTable {
        ScoreTable::new(
            (0..methods).map(|m| format!("m{m}")).collect(),
            (0..rows.len()).map(|d| format!("d{d}")).collect(),
            Matrix::from_rows(&rows),
        )
        .unwrap()
    }

    #[test]
    fn strictly_best_method_ranks_one() {
        let t = table(3, vec![vec![0.9, 0.5, 0.1], vec![0.8, 0.2, 0.3]]);
        assert_eq!(mean_ranks(&t)[0], 1.0);
    }

    #[test]
    fn all_ties_average() {
        let t = table(2, vec![vec![0.5, 0.5], vec![0.3, 0.3]]);
        assert_eq!(mean_ranks(&t), vec![1.5, 1.5]);
    }

    #[test]
    fn matches_brute_force_on_random_tables() {
        // brute force: rank of method j = 1 + #better + (#tied - 1)/2
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let rows: Vec<Vec<f64>> = (0..10)
                .map(|_| (0..5).map(|_| (rng.gen_range(0..20) as f64) / 20.0).collect())
                .collect();
            let t = table(5, rows.clone());
            let got = mean_ranks(&t);
            for j in 0..5 {
                let mut sum = 0.0;
                for row in &rows {
                    let better = row.iter().filter(|&&v| v > row[j]).count() as f64;
                    let tied = row.iter().filter(|&&v| v == row[j]).count() as f64;
                    sum += 1.0 + better + (tied - 1.0) / 2.0;
                }
                assert!((got[j] - sum / 10.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn paper_small_dataset_table_puts_hypertab_first() {
        // balanced-accuracy means of the five methods on the 14 small datasets
        let methods = ["XGBoost", "DN", "RF", "HyperTab", "Node"];
        let rows = vec![
            vec![93.85, 95.58, 95.96, 97.58, 96.19],
            vec![83.52, 79.02, 83.50, 87.09, 85.61],
            vec![96.05, 97.80, 97.21, 97.82, 97.99],
            vec![94.74, 46.96, 97.02, 98.36, 44.90],
            vec![81.88, 78.91, 85.94, 89.06, 83.75],
            vec![90.67, 93.43, 92.43, 94.52, 91.03],
            vec![74.38, 81.54, 77.42, 85.22, 82.72],
            vec![85.94, 85.74, 87.19, 83.90, 83.93],
            vec![86.35, 74.96, 86.84, 95.27, 80.20],
            vec![92.86, 72.62, 92.62, 95.27, 89.05],
            vec![65.53, 56.39, 57.33, 70.59, 52.71],
            vec![58.45, 56.06, 55.66, 70.16, 51.09],
            vec![60.61, 33.33, 51.24, 76.60, 68.39],
            vec![79.17, 82.62, 81.10, 83.33, 82.38],
        ];
        let t = ScoreTable::new(
            methods.iter().map(|s| s.to_string()).collect(),
            (0..rows.len()).map(|d| format!("d{d}")).collect(),
            Matrix::from_rows(&rows),
        )
        .unwrap();
        let ranks = mean_ranks(&t);
        let hypertab = ranks[3];
        for (j, r) in ranks.iter().enumerate() {
            if j != 3 {
                assert!(hypertab < *r, "HyperTab rank {hypertab} vs {} {r}", methods[j]);
            }
        }
    }

    proptest! {
        #[test]
        fn ranks_invariant_under_monotone_transform(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..3).map(|_| rng.gen_range(0.0..1.0)).collect())
                .collect();
            let t1 = table(3, rows.clone());
            let transformed: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| r.iter().map(|&v| (3.0 * v).exp()).collect())
                .collect();
            let t2 = table(3, transformed);
            prop_assert_eq!(mean_ranks(&t1), mean_ranks(&t2));
        }
    }
}
