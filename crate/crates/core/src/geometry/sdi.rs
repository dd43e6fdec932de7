//! Certification of the SDI condition for a finite gradient set.
//!
//! Condition 1 asks that the maximum-volume inscribed ellipsoid of the
//! weighted L1 ball fit inside the gradient hull. Condition 2 is checked
//! after rescaling `zᵢ = diag(w)⁻¹·∇fᵢ`: the polar polytope
//! `{y : zᵢᵀy ≤ 1}` may touch the sphere of radius √d only at the sign
//! vectors `{±1}^d`. Its vertices are the facet normals of `conv{zᵢ}`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{hull_halfspaces, mvie_weighted_l1, sign_vectors, WeightedL1Ball};
use crate::numerics::{dot, Matrix};

/// Tolerance for exact constructions.
pub const DEFAULT_EXACT_TOL: f64 = 1e-6;
/// Tolerance for sampled or approximate gradient sets.
pub const DEFAULT_SAMPLED_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignVectorReport {
    pub sign: Vec<f64>,
    /// `max_i zᵢᵀu`; 1 when `u` lies on the polar boundary.
    pub tightness: f64,
    /// Some polar vertex of norm ≥ √d − tol lies within tol of `u`.
    pub matched: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Condition2Report {
    /// Infinite when the polar is unbounded.
    pub max_vertex_norm: f64,
    pub sign_vectors: Vec<SignVectorReport>,
    /// Polar vertices of norm ≥ √d − tol that are not near a sign vector.
    pub stray_vertices: Vec<Vec<f64>>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SdiCertificate {
    pub satisfied: bool,
    /// Signed slack of the inscribed ellipsoid in the gradient hull.
    pub condition1_margin: f64,
    pub condition2: Condition2Report,
    pub tol: f64,
}

/// `min_i (1 − ‖Bᵀaᵢ‖)` when the origin is interior; otherwise the most
/// negative Euclidean slack `bᵢ − ‖Bᵀnᵢ‖`, which is then negative.
fn condition1_margin(points: &Matrix<f64>, ball: &WeightedL1Ball) -> Result<f64> {
    let e = mvie_weighted_l1(ball);
    let hs = hull_halfspaces(points)?;
    let interior = hs.iter().all(|h| h.offset > 1e-10 * points.max_abs());
    let slack = |n: &[f64], b: f64| b - e.support(n);
    Ok(if interior {
        hs.iter().map(|h| slack(&h.normal, h.offset) / h.offset).fold(f64::INFINITY, f64::min)
    } else {
        hs.iter().map(|h| slack(&h.normal, h.offset)).fold(f64::INFINITY, f64::min).min(-f64::MIN_POSITIVE)
    })
}

fn condition2(z: &Matrix<f64>, tol: f64) -> Result<Condition2Report> {
    let d = z.cols();
    let root_d = (d as f64).sqrt();
    let hs = hull_halfspaces(z)?;
    let interior = hs.iter().all(|h| h.offset > 1e-10 * z.max_abs());
    let signs = sign_vectors(d);
    let tightness = |u: &[f64]| z.row_iter().map(|r| dot(r, u)).fold(f64::NEG_INFINITY, f64::max);
    if !interior {
        let sign_vectors = signs
            .into_iter()
            .map(|u| SignVectorReport { tightness: tightness(&u), sign: u, matched: false })
            .collect();
        return Ok(Condition2Report {
            max_vertex_norm: f64::INFINITY,
            sign_vectors,
            stray_vertices: Vec::new(),
            passed: false,
        });
    }
    let vertices: Vec<Vec<f64>> =
        hs.iter().map(|h| h.normal.iter().map(|v| v / h.offset).collect()).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let max_vertex_norm = vertices.iter().map(|v| norm(v)).fold(0.0, f64::max);
    let near = |v: &[f64], u: &[f64]| v.iter().zip(u).all(|(a, b)| (a - b).abs() <= tol);
    let tight: Vec<&Vec<f64>> = vertices.iter().filter(|v| norm(v) >= root_d - tol).collect();
    let stray_vertices: Vec<Vec<f64>> =
        tight.iter().filter(|v| !signs.iter().any(|u| near(v, u))).map(|v| v.to_vec()).collect();
    let sign_vectors: Vec<SignVectorReport> = signs
        .into_iter()
        .map(|u| SignVectorReport { tightness: tightness(&u), matched: tight.iter().any(|v| near(v, &u)), sign: u })
        .collect();
    let passed = (max_vertex_norm - root_d).abs() <= tol
        && stray_vertices.is_empty()
        && sign_vectors.iter().all(|s| s.matched);
    Ok(Condition2Report { max_vertex_norm, sign_vectors, stray_vertices, passed })
}

/// Certifies the SDI condition for the gradient rows of `gradients`
/// against the weighted L1 ball `ball` at tolerance `tol`.
pub fn certify_sdi(gradients: &Matrix<f64>, ball: &WeightedL1Ball, tol: f64) -> Result<SdiCertificate> {
    let (m, d) = gradients.shape();
    if d != ball.dim() {
        return Err(Error::InvalidDims(format!("gradients have {d} columns, ball has dimension {}", ball.dim())));
    }
    if d == 0 || d > 5 || m < 2 * d {
        return Err(Error::InvalidDims(format!("need 1 <= d <= 5 and m >= 2d, got d={d}, m={m}")));
    }
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(Error::Config(format!("tolerance {tol} must be finite and >= 0")));
    }
    for (index, g) in gradients.row_iter().enumerate() {
        let norm = ball.norm(g);
        if !(norm <= 1.0 + tol) {
            return Err(Error::GradientOutsideBall { index, norm });
        }
    }
    let margin = condition1_margin(gradients, ball)?;
    let w = ball.weights();
    let z = Matrix::from_fn(m, d, |i, k| gradients[(i, k)] / w[k]);
    let c2 = condition2(&z, tol)?;
    Ok(SdiCertificate { satisfied: margin >= -tol && c2.passed, condition1_margin: margin, condition2: c2, tol })
}
