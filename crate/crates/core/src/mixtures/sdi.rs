//! Mixing matrices whose rows fill a weighted L1 ball.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// `Σ_k |y_k| / w_k`.
pub fn weighted_l1_norm(y: &[f64], w: &[f64]) -> f64 {
    y.iter().zip(w).map(|(v, wk)| v.abs() / wk).sum()
}

/// Euclidean projection of `v` onto `{y : Σ_k |y_k|/w_k ≤ 1}`.
///
/// The minimizer is the weighted soft threshold
/// `y_k = sign(v_k)·max(|v_k| − λ/w_k, 0)`; `λ` is found by bisection and
/// the feasible end of the final bracket is returned.
pub fn project_weighted_l1(v: &[f64], w: &[f64]) -> Vec<f64> {
    if weighted_l1_norm(v, w) <= 1.0 {
        return v.to_vec();
    }
    let shrink = |lam: f64| -> Vec<f64> {
        v.iter()
            .zip(w)
            .map(|(&x, &wk)| x.signum() * (x.abs() - lam / wk).max(0.0))
            .collect()
    };
    let mut lo = 0.0;
    let mut hi = v.iter().zip(w).map(|(x, wk)| x.abs() * wk).fold(0.0, f64::max);
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if weighted_l1_norm(&shrink(mid), w) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    shrink(hi)
}

/// Uniform draw from the L2 ball of radius `r` in `d` dimensions.
fn uniform_in_ball(rng: &mut Rng, d: usize, r: f64) -> Vec<f64> {
    let mut g: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let radius = r * rng.uniform().powf(1.0 / d as f64);
    for v in &mut g {
        *v *= radius / norm;
    }
    g
}

/// m×d matrix whose rows lie in the weighted L1 ball `B₁ʷ`, with the 2d
/// axis points `±w_k·e_k` as the first rows.
pub fn gen_sdi_matrix(rng: &mut Rng, d: usize, m: usize, w: &[f64]) -> Result<Matrix<f64>> {
    gen_sdi_matrix_with(rng, d, m, w, true)
}

/// [`gen_sdi_matrix`] with the axis-point injection optional. Rows are
/// drawn uniformly from the L2 ball of radius `1.5·max(w)` and projected
/// onto `B₁ʷ`.
pub fn gen_sdi_matrix_with(
    rng: &mut Rng,
    d: usize,
    m: usize,
    w: &[f64],
    inject_axis_points: bool,
) -> Result<Matrix<f64>> {
    if d == 0 || m < 2 * d {
        return Err(Error::InvalidDims(format!("need m >= 2d >= 2, got d={d}, m={m}")));
    }
    if w.len() != d || w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidDims(format!("need {d} positive finite weights")));
    }
    let radius = 1.5 * w.iter().copied().fold(0.0, f64::max);
    let mut data = Vec::with_capacity(m * d);
    for _ in 0..m {
        let p = uniform_in_ball(rng, d, radius);
        data.extend(project_weighted_l1(&p, w));
    }
    if inject_axis_points {
        for k in 0..d {
            for (r, sign) in [(2 * k, 1.0), (2 * k + 1, -1.0)] {
                let row = &mut data[r * d..(r + 1) * d];
                row.fill(0.0);
                row[k] = sign * w[k];
            }
        }
    }
    Matrix::new(m, d, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_matrix_is_the_axis_points() {
        let a = gen_sdi_matrix(&mut Rng::new(1), 2, 4, &[1.0, 1.0]).unwrap();
        let rows: Vec<Vec<f64>> = a.row_iter().map(<[f64]>::to_vec).collect();
        assert_eq!(rows, vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]);
    }

    #[test]
    fn rows_satisfy_ball_constraint() {
        let w = [0.5, 2.0, 1.0];
        let a = gen_sdi_matrix(&mut Rng::new(2), 3, 200, &w).unwrap();
        for r in a.row_iter() {
            assert!(weighted_l1_norm(r, &w) <= 1.0 + 1e-10);
        }
        assert!(gen_sdi_matrix(&mut Rng::new(2), 3, 5, &w).is_err());
    }

    #[test]
    fn projection_is_optimal() {
        // optimality: (v − p)·(q − p) ≤ 0 for feasible q
        let mut rng = Rng::new(3);
        let w = [1.0, 3.0];
        for _ in 0..200 {
            let v = [rng.normal() * 4.0, rng.normal() * 4.0];
            let p = project_weighted_l1(&v, &w);
            assert!(weighted_l1_norm(&p, &w) <= 1.0 + 1e-10);
            for q in [[1.0, 0.0], [-1.0, 0.0], [0.0, 3.0], [0.0, -3.0]] {
                let ip = (v[0] - p[0]) * (q[0] - p[0]) + (v[1] - p[1]) * (q[1] - p[1]);
                assert!(ip <= 1e-9, "{v:?} -> {p:?}");
            }
        }
    }
}
