//! Identifiability scores: Hungarian matching, MCC and nonlinear R².

mod assign;
mod krr;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixtures::Dataset;
use crate::numerics::{Matrix, Rng};

pub use assign::{hungarian, pearson};
pub use krr::{krr_fit_predict, median_heuristic, KrrModel};

/// Ridge used for every R² regression.
pub const KRR_RIDGE: f64 = 1e-3;
/// Largest KRR training set; larger train splits are subsampled.
pub const KRR_MAX_TRAIN: usize = 2000;
/// Share of samples in the train split.
pub const TRAIN_FRACTION: f64 = 0.9;

/// Ground-truth latents of a generated dataset.
pub fn ground_truth(ds: &Dataset) -> &Matrix<f64> {
    &ds.latents
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// Train points actually used by the regressions.
    pub n_fit: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `permutation[i]` is the estimate matched to true latent `i`.
    pub permutation: Vec<usize>,
    pub mcc: Vec<f64>,
    pub r2: Vec<f64>,
    pub mean_mcc: f64,
    pub mean_r2: f64,
    /// `heatmap[i][j]`: R² of predicting true latent `i` from estimate `j`.
    pub heatmap: Vec<Vec<f64>>,
    pub split: SplitInfo,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Heatmap as CSV: header `truth,e1..ed`, one row per true latent.
    pub fn heatmap_csv(&self) -> String {
        let d = self.heatmap.len();
        let mut s = String::from("truth");
        for j in 1..=d {
            s.push_str(&format!(",e{j}"));
        }
        s.push('\n');
        for (i, row) in self.heatmap.iter().enumerate() {
            s.push_str(&format!("s{}", i + 1));
            for v in row {
                s.push_str(&format!(",{v:?}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn write(&self, json_path: &Path, heatmap_path: &Path) -> Result<()> {
        std::fs::write(json_path, self.to_json() + "\n").map_err(|e| Error::io(json_path, e))?;
        std::fs::write(heatmap_path, self.heatmap_csv()).map_err(|e| Error::io(heatmap_path, e))
    }
}

fn r2_score(pred: &[f64], truth: &[f64]) -> Result<f64> {
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let sst: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::ZeroVariance("true latent on the test split".into()));
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

fn column_at(m: &Matrix<f64>, j: usize, rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&r| m[(r, j)]).collect()
}

/// Picks, for every target, the bandwidth from `median · grid` with the
/// lowest validation error on the last fifth of the fit rows.
fn select_bandwidths(
    x_fit: &Matrix<f64>,
    targets: &[Vec<f64>],
    median: f64,
    grid: &[f64],
    ridge: f64,
) -> Result<Vec<f64>> {
    if grid.len() == 1 {
        return Ok(vec![median * grid[0]; targets.len()]);
    }
    let n = x_fit.rows();
    let n_in = n - n / 5;
    let x_in = Matrix::new(n_in, 1, x_fit.as_slice()[..n_in].to_vec())?;
    let x_val = Matrix::new(n - n_in, 1, x_fit.as_slice()[n_in..].to_vec())?;
    let mut best = vec![(f64::INFINITY, median * grid[0]); targets.len()];
    for &g in grid {
        let bw = median * g;
        let f = krr::KrrFactor::new(&x_in, bw, ridge)?;
        let cross = f.cross_kernel(&x_val);
        for (t, b) in targets.iter().zip(best.iter_mut()) {
            let pred = f.fit_predict_with(&t[..n_in], &cross);
            let mse: f64 = pred.iter().zip(&t[n_in..]).map(|(p, y)| (p - y).powi(2)).sum();
            if mse < b.0 {
                *b = (mse, bw);
            }
        }
    }
    Ok(best.into_iter().map(|(_, bw)| bw).collect())
}

/// Regression settings for [`score_with`].
#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    /// Bandwidth candidates as multiples of the median pairwise distance.
    /// A single entry disables validation.
    pub bandwidth_grid: Vec<f64>,
    pub ridge: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { bandwidth_grid: vec![1.0, 0.5, 0.25, 0.125], ridge: KRR_RIDGE }
    }
}

/// Scores estimated latents against the truth.
///
/// Components are matched by Hungarian assignment on `1 − |pearson|`
/// (full data); each matched pair's R² comes from an RBF kernel ridge
/// regression of the true component on the estimate, fit on (a subsample
/// of) the train split and scored on the test split. The kernel bandwidth
/// is the median pairwise distance times a factor picked on a validation
/// slice of the train split.
pub fn score(latents_true: &Matrix<f64>, latents_est: &Matrix<f64>, seed: u64) -> Result<EvalReport> {
    score_with(latents_true, latents_est, seed, &EvalOptions::default())
}

/// [`score`] with explicit regression settings.
pub fn score_with(
    latents_true: &Matrix<f64>,
    latents_est: &Matrix<f64>,
    seed: u64,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let (n, d) = latents_true.shape();
    if latents_est.shape() != (n, d) {
        return Err(Error::InvalidDims(format!(
            "latent shapes differ: {:?} vs {:?}",
            latents_true.shape(),
            latents_est.shape()
        )));
    }
    if options.bandwidth_grid.is_empty() || options.bandwidth_grid.iter().any(|&g| !(g > 0.0)) {
        return Err(Error::Config("bandwidth grid must be non-empty and positive".into()));
    }
    if n < 20 {
        return Err(Error::InvalidDims(format!("scoring needs at least 20 samples, got {n}")));
    }
    let all: Vec<usize> = (0..n).collect();
    let truth_cols: Vec<Vec<f64>> = (0..d).map(|i| column_at(latents_true, i, &all)).collect();
    let est_cols: Vec<Vec<f64>> = (0..d).map(|j| column_at(latents_est, j, &all)).collect();
    let mut corr = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            corr[(i, j)] = pearson(&truth_cols[i], &est_cols[j]).map_err(|e| match e {
                Error::ZeroVariance(_) => Error::ZeroVariance(format!("true latent {} or estimate {}", i + 1, j + 1)),
                other => other,
            })?;
        }
    }
    let cost = corr.map(|c| 1.0 - c.abs());
    let permutation = hungarian(&cost);
    let mcc: Vec<f64> = (0..d).map(|i| corr[(i, permutation[i])].abs()).collect();

    let mut idx = all;
    Rng::new(seed).shuffle(&mut idx);
    let n_train = ((n as f64) * TRAIN_FRACTION).round() as usize;
    let (train, test) = idx.split_at(n_train);
    let fit_rows = &train[..train.len().min(KRR_MAX_TRAIN)];

    let mut heatmap = vec![vec![0.0; d]; d];
    let truth_fit: Vec<Vec<f64>> = (0..d).map(|i| column_at(latents_true, i, fit_rows)).collect();
    let truth_test: Vec<Vec<f64>> = (0..d).map(|i| column_at(latents_true, i, test)).collect();
    for j in 0..d {
        let x_fit = Matrix::new(fit_rows.len(), 1, column_at(latents_est, j, fit_rows))?;
        let x_test = Matrix::new(test.len(), 1, column_at(latents_est, j, test))?;
        let median = median_heuristic(&x_fit);
        let median = if median > 0.0 { median } else { 1.0 };
        let chosen = select_bandwidths(&x_fit, &truth_fit, median, &options.bandwidth_grid, options.ridge)?;
        let mut factors: Vec<(f64, krr::KrrFactor, Vec<f64>)> = Vec::new();
        for (i, row) in heatmap.iter_mut().enumerate() {
            let bw = chosen[i];
            if !factors.iter().any(|(b, _, _)| *b == bw) {
                let f = krr::KrrFactor::new(&x_fit, bw, options.ridge)?;
                let cross = f.cross_kernel(&x_test);
                factors.push((bw, f, cross));
            }
            let (_, f, cross) = factors.iter().find(|(b, _, _)| *b == bw).expect("factor present");
            let pred = f.fit_predict_with(&truth_fit[i], cross);
            row[j] = r2_score(&pred, &truth_test[i])?;
        }
    }
    let r2: Vec<f64> = (0..d).map(|i| heatmap[i][permutation[i]]).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(EvalReport {
        mean_mcc: mean(&mcc),
        mean_r2: mean(&r2),
        permutation,
        mcc,
        r2,
        heatmap,
        split: SplitInfo { seed, n_train, n_test: test.len(), n_fit: fit_rows.len() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(n: usize, d: usize, seed: u64) -> Matrix<f64> {
        let mut rng = Rng::new(seed);
        Matrix::from_fn(n, d, |_, _| rng.normal())
    }

    #[test]
    fn identity_scores_perfectly() {
        let s = gaussian(1000, 3, 1);
        let r = score(&s, &s, 0).unwrap();
        assert_eq!(r.permutation, vec![0, 1, 2]);
        assert!((r.mean_mcc - 1.0).abs() < 1e-12);
        assert!(r.mean_r2 >= 0.999, "{}", r.mean_r2);
    }

    #[test]
    fn ambiguity_class_is_recovered() {
        let mut rng = Rng::new(2);
        let s = Matrix::from_fn(3000, 3, |_, _| rng.uniform_range(-1.0, 1.0));
        let perm = [2, 0, 1];
        let est = Matrix::from_fn(3000, 3, |r, j| {
            let src = perm[j];
            let v = s[(r, src)];
            if j == 1 { -v.powi(3) } else { v.powi(3) }
        });
        let rep = score(&s, &est, 5).unwrap();
        // truth i ↦ estimate with perm[j] == i
        assert_eq!(rep.permutation, vec![1, 2, 0]);
        assert!(rep.mean_mcc >= 0.9);
        assert!(rep.mean_r2 >= 0.99, "{}", rep.mean_r2);
    }

    #[test]
    fn independent_noise_scores_low() {
        for seed in 0..3 {
            let s = gaussian(1000, 2, 10 + seed);
            let e = gaussian(1000, 2, 100 + seed);
            let r = score(&s, &e, seed).unwrap();
            assert!(r.mean_r2 <= 0.1, "{}", r.mean_r2);
            assert!(r.r2.iter().all(|&v| v <= 1.0));
        }
    }

    #[test]
    fn rejects_constant_estimate() {
        let s = gaussian(100, 2, 3);
        let e = Matrix::from_fn(100, 2, |r, j| if j == 0 { 1.0 } else { r as f64 });
        assert!(matches!(score(&s, &e, 0), Err(Error::ZeroVariance(_))));
    }
}
