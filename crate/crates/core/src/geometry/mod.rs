//! Convex geometry behind the sufficiently-diverse-influence (SDI)
//! condition: weighted L1 balls, their inscribed ellipsoids and polars,
//! hulls of gradient sets and the certifier.

mod hull;
mod sdi;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{determinant, dot, Matrix};

pub use hull::{hull_facets, hull_halfspaces, vertex_enumerate, vertices_by_duality, Halfspace, MAX_HULL_DIM};
pub use sdi::{certify_sdi, Condition2Report, SdiCertificate, SignVectorReport, DEFAULT_EXACT_TOL, DEFAULT_SAMPLED_TOL};

fn check_weights(w: &[f64]) -> Result<()> {
    if w.is_empty() || w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidDims("ball weights must be non-empty, positive and finite".into()));
    }
    Ok(())
}

/// `{y : Σ_k |y_k| / w_k ≤ 1}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightedL1Ball {
    w: Vec<f64>,
}

impl WeightedL1Ball {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        check_weights(&w)?;
        Ok(Self { w })
    }

    pub fn unit(d: usize) -> Self {
        Self { w: vec![1.0; d] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn norm(&self, y: &[f64]) -> f64 {
        y.iter().zip(&self.w).map(|(v, w)| v.abs() / w).sum()
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        self.norm(y) <= 1.0 + tol
    }

    /// The 2d vertices `±w_k·e_k`.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut out = Vec::with_capacity(2 * d);
        for k in 0..d {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; d];
                v[k] = s * self.w[k];
                out.push(v);
            }
        }
        out
    }

    /// The 2^d facets `Σ_k ±y_k/w_k ≤ 1`.
    pub fn to_hpolytope(&self) -> HPolytope {
        let d = self.dim();
        let rows: Vec<Vec<f64>> =
            sign_vectors(d).iter().map(|s| s.iter().zip(&self.w).map(|(&si, w)| si / w).collect()).collect();
        HPolytope::new(Matrix::from_rows(&rows).expect("consistent rows")).expect("finite normals")
    }
}

/// `{y : max_k w_k·|y_k| ≤ 1}`, the polar of [`WeightedL1Ball`] with the
/// same weights.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightedLinfBall {
    w: Vec<f64>,
}

impl WeightedLinfBall {
    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        y.iter().zip(&self.w).all(|(v, w)| w * v.abs() <= 1.0 + tol)
    }

    /// The 2^d corners `(±1/w_1, …, ±1/w_d)`.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        sign_vectors(self.w.len())
            .iter()
            .map(|s| s.iter().zip(&self.w).map(|(&si, w)| si / w).collect())
            .collect()
    }

    /// Polar set, the weighted L1 ball again.
    pub fn polar(&self) -> WeightedL1Ball {
        WeightedL1Ball { w: self.w.clone() }
    }

    pub fn to_hpolytope(&self) -> HPolytope {
        let d = self.w.len();
        let mut a = Matrix::zeros(2 * d, d);
        for k in 0..d {
            a[(2 * k, k)] = self.w[k];
            a[(2 * k + 1, k)] = -self.w[k];
        }
        HPolytope::new(a).expect("finite normals")
    }
}

/// Polar of the weighted L1 ball.
pub fn polar_weighted_l1(ball: &WeightedL1Ball) -> WeightedLinfBall {
    WeightedLinfBall { w: ball.w.clone() }
}

/// All `±1` vectors of length `d`, in binary order with `+1` first.
pub fn sign_vectors(d: usize) -> Vec<Vec<f64>> {
    (0..1usize << d)
        .map(|bits| (0..d).map(|k| if bits >> (d - 1 - k) & 1 == 0 { 1.0 } else { -1.0 }).collect())
        .collect()
}

/// `{B·u : ‖u‖₂ ≤ 1} + center` with symmetric positive definite `B`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ellipsoid {
    shape: Matrix<f64>,
    center: Vec<f64>,
}

impl Ellipsoid {
    /// Centered ellipsoid; `shape` must be symmetric positive definite.
    pub fn centered(shape: Matrix<f64>) -> Result<Self> {
        if !shape.is_square() {
            return Err(Error::InvalidDims("ellipsoid shape must be square".into()));
        }
        let asym = shape.asymmetry();
        if asym > 1e-12 * shape.max_abs().max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        crate::numerics::cholesky(&shape)?;
        let d = shape.rows();
        Ok(Self { shape, center: vec![0.0; d] })
    }

    pub fn shape(&self) -> &Matrix<f64> {
        &self.shape
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// `max_{y ∈ E} aᵀy`.
    pub fn support(&self, a: &[f64]) -> f64 {
        let ba = self.shape.tr_mat_vec(a);
        dot(a, &self.center) + ba.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Maximum-volume inscribed ellipsoid of the weighted L1 ball:
/// `diag(w)/√d` applied to the unit ball.
pub fn mvie_weighted_l1(ball: &WeightedL1Ball) -> Ellipsoid {
    let r = 1.0 / (ball.dim() as f64).sqrt();
    let diag: Vec<f64> = ball.w.iter().map(|w| w * r).collect();
    Ellipsoid { shape: Matrix::from_diag(&diag), center: vec![0.0; ball.dim()] }
}

/// `{y : aᵢᵀy ≤ 1}`; each row of `normals` is one `aᵢ`, so the origin is
/// interior.
#[derive(Clone, Debug, PartialEq)]
pub struct HPolytope {
    normals: Matrix<f64>,
}

impl HPolytope {
    pub fn new(normals: Matrix<f64>) -> Result<Self> {
        if normals.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("facet normals".into()));
        }
        Ok(Self { normals })
    }

    pub fn normals(&self) -> &Matrix<f64> {
        &self.normals
    }

    pub fn facet_count(&self) -> usize {
        self.normals.rows()
    }

    pub fn dim(&self) -> usize {
        self.normals.cols()
    }

    /// Largest `aᵢᵀy − 1`; nonpositive iff `y` is inside.
    pub fn max_violation(&self, y: &[f64]) -> f64 {
        self.normals.row_iter().map(|a| dot(a, y) - 1.0).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Vertices by subset scan (see [`vertex_enumerate`]).
    pub fn vertices(&self) -> Result<Vec<Vec<f64>>> {
        vertex_enumerate(self)
    }
}

/// `min_i (1 − ‖Bᵀaᵢ‖₂)`: nonnegative iff the ellipsoid lies in the
/// polytope.
pub fn ellipsoid_in_polytope(e: &Ellipsoid, p: &HPolytope) -> f64 {
    p.normals.row_iter().map(|a| 1.0 - e.support(a)).fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DetBound {
    pub det: f64,
    /// `|det h| ≤ 1` (to 1e-9).
    pub bound_holds: bool,
    /// `hᵀh = I` (to 1e-8).
    pub is_orthogonal_scaled: bool,
}

/// For `h` with `‖hᵀu‖₂ ≤ √d` on every sign vector `u`, checks
/// `|det h| ≤ 1` and whether `h` is orthogonal (the equality case).
pub fn check_det_bound(h: &Matrix<f64>) -> Result<DetBound> {
    if !h.is_square() || h.rows() == 0 {
        return Err(Error::InvalidDims(format!("expected a square matrix, got {:?}", h.shape())));
    }
    let d = h.rows();
    let lim = (d as f64).sqrt() * (1.0 + 1e-12);
    for u in sign_vectors(d) {
        let v = h.tr_mat_vec(&u);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > lim {
            return Err(Error::PreconditionViolated(format!("‖hᵀu‖ = {n} exceeds √d for u = {u:?}")));
        }
    }
    let det = determinant(h)?;
    let g = h.gram();
    let orth = (0..d).all(|i| (0..d).all(|j| (g[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs() <= 1e-8));
    Ok(DetBound { det, bound_holds: det.abs() <= 1.0 + 1e-9, is_orthogonal_scaled: orth })
}
