//! RBF kernel ridge regression.

use crate::error::{Error, Result};
use crate::numerics::linalg::{cholesky_blocked_in_place, cholesky_solve_in_place};
use crate::numerics::Matrix;

/// Fitted kernel ridge regressor `ŷ(x) = ȳ + Σ_i α_i k(x, x_i)`.
///
/// Targets are centered before fitting so constant targets are reproduced
/// exactly.
#[derive(Clone, Debug)]
pub struct KrrModel {
    support: Matrix<f64>,
    coef: Vec<f64>,
    offset: f64,
    bandwidth: f64,
    ridge: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Factorized `K + ridge·I` over a fixed set of training inputs, reusable
/// for several target vectors.
pub(crate) struct KrrFactor {
    support: Matrix<f64>,
    chol: Vec<f64>,
    bandwidth: f64,
    ridge: f64,
}

impl KrrFactor {
    pub(crate) fn new(x_train: &Matrix<f64>, bandwidth: f64, ridge: f64) -> Result<Self> {
        let n = x_train.rows();
        if n < 2 {
            return Err(Error::InvalidDims(format!("kernel ridge regression needs >= 2 points, got {n}")));
        }
        if !(bandwidth > 0.0 && ridge > 0.0) {
            return Err(Error::Config(format!("bandwidth {bandwidth} and ridge {ridge} must be positive")));
        }
        let g = -0.5 / (bandwidth * bandwidth);
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            let xi = x_train.row(i);
            for j in 0..i {
                k[i * n + j] = (g * sq_dist(xi, x_train.row(j))).exp();
            }
            k[i * n + i] = 1.0 + ridge;
        }
        cholesky_blocked_in_place(&mut k, n)?;
        Ok(Self { support: x_train.clone(), chol: k, bandwidth, ridge })
    }

    pub(crate) fn fit(&self, y: &[f64]) -> KrrModel {
        let n = self.support.rows();
        assert_eq!(y.len(), n, "target length mismatch");
        let offset = y.iter().sum::<f64>() / n as f64;
        let mut coef: Vec<f64> = y.iter().map(|v| v - offset).collect();
        cholesky_solve_in_place(&self.chol, n, &mut coef);
        KrrModel { support: self.support.clone(), coef, offset, bandwidth: self.bandwidth, ridge: self.ridge }
    }

    /// Kernel matrix between `x` and the support, row-major.
    pub(crate) fn cross_kernel(&self, x: &Matrix<f64>) -> Vec<f64> {
        let g = -0.5 / (self.bandwidth * self.bandwidth);
        let n = self.support.rows();
        let mut out = Vec::with_capacity(x.rows() * n);
        for r in x.row_iter() {
            out.extend(self.support.row_iter().map(|s| (g * sq_dist(r, s)).exp()));
        }
        out
    }

    /// Fits `y` and predicts at the points behind a precomputed cross kernel.
    pub(crate) fn fit_predict_with(&self, y: &[f64], cross: &[f64]) -> Vec<f64> {
        let model = self.fit(y);
        let n = self.support.rows();
        cross.chunks_exact(n).map(|row| model.offset + row.iter().zip(&model.coef).map(|(k, a)| k * a).sum::<f64>()).collect()
    }
}

impl KrrModel {
    pub fn fit(x_train: &Matrix<f64>, y_train: &[f64], bandwidth: f64, ridge: f64) -> Result<Self> {
        Ok(KrrFactor::new(x_train, bandwidth, ridge)?.fit(y_train))
    }

    pub fn predict(&self, x: &Matrix<f64>) -> Vec<f64> {
        let g = -0.5 / (self.bandwidth * self.bandwidth);
        x.row_iter()
            .map(|r| {
                self.offset
                    + self.support.row_iter().zip(&self.coef).map(|(s, a)| a * (g * sq_dist(r, s)).exp()).sum::<f64>()
            })
            .collect()
    }

    pub fn support_count(&self) -> usize {
        self.support.rows()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }
}

/// Fits on `(x_train, y_train)` and predicts at `x_test`.
pub fn krr_fit_predict(
    x_train: &Matrix<f64>,
    y_train: &[f64],
    x_test: &Matrix<f64>,
    bandwidth: f64,
    ridge: f64,
) -> Result<Vec<f64>> {
    Ok(KrrModel::fit(x_train, y_train, bandwidth, ridge)?.predict(x_test))
}

/// Median pairwise Euclidean distance (zero distances included).
pub fn median_heuristic(x: &Matrix<f64>) -> f64 {
    let n = x.rows();
    let mut d = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in 0..i {
            d.push(sq_dist(x.row(i), x.row(j)).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}
