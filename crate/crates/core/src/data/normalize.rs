use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{check_dim, Result};
use crate::linalg::Matrix;

/// Per-column mean and standard deviation, computed on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub target_means: Vec<f64>,
    pub target_stds: Vec<f64>,
}

/// Column means and population standard deviations. Constant columns get std 1.
fn column_stats(m: &Matrix, what: &str) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows().max(1) as f64;
    let mut means = vec![0.0; m.cols()];
    for row in m.row_iter() {
        for (acc, v) in means.iter_mut().zip(row) {
            *acc += v;
        }
    }
    means.iter_mut().for_each(|v| *v /= n);
    let mut vars = vec![0.0; m.cols()];
    for row in m.row_iter() {
        for ((acc, v), mu) in vars.iter_mut().zip(row).zip(&means) {
            *acc += (v - mu) * (v - mu);
        }
    }
    let stds = vars
        .iter()
        .zip(&means)
        .enumerate()
        .map(|(j, (v, mu))| {
            let s = (v / n).sqrt();
            if s <= 1e-12 * mu.abs().max(1.0) {
                log::warn!("{what} column {j} is constant; leaving it unscaled");
                1.0
            } else {
                s
            }
        })
        .collect();
    (means, stds)
}

fn standardize(m: &Matrix, means: &[f64], stds: &[f64]) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        for ((v, mu), s) in out.row_mut(i).iter_mut().zip(means).zip(stds) {
            *v = (*v - mu) / s;
        }
    }
    out
}

impl NormalizationStats {
    pub fn fit(train: &Dataset) -> Self {
        let (feature_means, feature_stds) = column_stats(&train.features, "feature");
        let (target_means, target_stds) = column_stats(&train.targets, "target");
        Self {
            feature_means,
            feature_stds,
            target_means,
            target_stds,
        }
    }

    pub fn normalize_features(&self, x: &Matrix) -> Result<Matrix> {
        check_dim("normalize features", self.feature_means.len(), x.cols())?;
        Ok(standardize(x, &self.feature_means, &self.feature_stds))
    }

    pub fn normalize_targets(&self, y: &Matrix) -> Result<Matrix> {
        check_dim("normalize targets", self.target_means.len(), y.cols())?;
        Ok(standardize(y, &self.target_means, &self.target_stds))
    }

    pub fn normalize_feature_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.feature_means)
            .zip(&self.feature_stds)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        Ok(Dataset {
            name: ds.name.clone(),
            feature_names: ds.feature_names.clone(),
            target_names: ds.target_names.clone(),
            features: self.normalize_features(&ds.features)?,
            targets: self.normalize_targets(&ds.targets)?,
        })
    }

    pub fn denormalize_target_mean(&self, d: usize, value: f64) -> f64 {
        value * self.target_stds[d] + self.target_means[d]
    }

    pub fn denormalize_features(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, mu), s) in out.row_mut(i).iter_mut().zip(&self.feature_means).zip(&self.feature_stds) {
                *v = *v * s + mu;
            }
        }
        out
    }

    pub fn denormalize_targets(&self, y: &Matrix) -> Matrix {
        let mut out = y.clone();
        for i in 0..out.rows() {
            for ((v, mu), s) in out.row_mut(i).iter_mut().zip(&self.target_means).zip(&self.target_stds) {
                *v = *v * s + mu;
            }
        }
        out
    }
}

/// Normalizes both sets with statistics computed on `train` alone.
pub fn normalize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, NormalizationStats)> {
    let stats = NormalizationStats::fit(train);
    Ok((stats.apply(train)?, stats.apply(test)?, stats))
}

/// NLL in original target units: `nll_normalized + Σ_d ln(std_d)`.
pub fn denormalized_nll(nll_normalized: f64, target_stds: &[f64]) -> f64 {
    nll_normalized + target_stds.iter().map(|s| s.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(x: Vec<f64>, p: usize, y: Vec<f64>) -> Dataset {
        let n = y.len();
        Dataset::from_matrices("t", Matrix::from_vec(n, p, x).unwrap(), Matrix::from_vec(n, 1, y).unwrap()).unwrap()
    }

    #[test]
    fn standardized_columns() {
        let train = ds(vec![1.0, 10.0, 2.0, 20.0, 4.0, 35.0, 7.0, 1.0], 2, vec![3.0, 1.0, 4.0, 1.5]);
        let test = ds(vec![0.0, 0.0], 2, vec![2.0]);
        let (tr, _, stats) = normalize(&train, &test).unwrap();
        for j in 0..2 {
            let col = tr.features.column(j);
            let m = col.iter().sum::<f64>() / 4.0;
            let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 4.0).sqrt();
            assert!(m.abs() < 1e-10);
            assert!((s - 1.0).abs() < 1e-10);
        }
        let back = stats.denormalize_features(&tr.features);
        for (a, b) in back.as_slice().iter().zip(train.features.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        let back = stats.denormalize_targets(&tr.targets);
        for (a, b) in back.as_slice().iter().zip(train.targets.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_is_centered_only() {
        let train = ds(vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0], 2, vec![1.0, 2.0, 3.0]);
        let stats = NormalizationStats::fit(&train);
        assert_eq!(stats.feature_stds[0], 1.0);
        let tr = stats.apply(&train).unwrap();
        assert_eq!(tr.features.column(0), vec![0.0; 3]);
    }

    #[test]
    fn test_rows_do_not_affect_stats() {
        let train = ds(vec![1.0, 2.0, 3.0], 1, vec![1.0, 0.0, 2.0]);
        let a = normalize(&train, &ds(vec![100.0], 1, vec![7.0])).unwrap().2;
        let b = normalize(&train, &ds(vec![-3.0], 1, vec![1e6])).unwrap().2;
        assert_eq!(a, b);
    }

    #[test]
    fn denormalized_nll_shifts_by_log_std() {
        let e = std::f64::consts::E;
        assert_eq!(denormalized_nll(0.7, &[1.0]), 0.7);
        assert!((denormalized_nll(0.7, &[e]) - 1.7).abs() < 1e-15);
        assert!((denormalized_nll(0.7, &[e, e * e]) - 3.7).abs() < 1e-15);
    }
}
