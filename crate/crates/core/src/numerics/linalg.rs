//! Small dense factorizations: Cholesky, log-determinants of Gram matrices,
//! and LU-based solves for the low-dimensional geometry code.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::scalar::Scalar;

/// Relative symmetry tolerance accepted by [`cholesky`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = a`.
///
/// A pivot counts as non-positive when it is below `n·ε·max|a_ii|`; exact
/// rank deficiency otherwise survives as a rounding-level positive pivot.
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    if !a.is_square() {
        return Err(Error::InvalidDims(format!(
            "cholesky needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    let scale = a.max_abs().max(T::min_positive_value());
    let asym = a.asymmetry();
    if asym.as_f64() > SYMMETRY_TOL * scale.as_f64() {
        return Err(Error::NotSymmetric(asym.as_f64()));
    }
    let mut l = Matrix::zeros(n, n);
    cholesky_into(a.as_slice(), n, l.as_mut_slice())?;
    Ok(l)
}

/// Cholesky on raw row-major storage, writing the lower factor into `l`.
/// Symmetry is not checked; only the lower triangle of `a` is read.
pub(crate) fn cholesky_into<T: Scalar>(a: &[T], n: usize, l: &mut [T]) -> Result<()> {
    let max_diag = (0..n).fold(T::zero(), |acc, i| acc.max(a[i * n + i].abs()));
    let floor = T::lit(n as f64 * T::EPS) * max_diag;
    for v in l[..n * n].iter_mut() {
        *v = T::zero();
    }
    for j in 0..n {
        let mut pivot = a[j * n + j];
        for k in 0..j {
            pivot -= l[j * n + k] * l[j * n + k];
        }
        if !(pivot > floor) || !(pivot > T::zero()) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: pivot.as_f64() });
        }
        let ljj = pivot.sqrt();
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    Ok(())
}

/// Blocked in-place Cholesky of a large row-major SPD matrix. On success
/// the lower triangle of `a` holds `L` (the strict upper triangle is left
/// untouched). The trailing updates run through GEMM.
pub(crate) fn cholesky_blocked_in_place<T: Scalar>(a: &mut [T], n: usize) -> Result<()> {
    const NB: usize = 64;
    let max_diag = (0..n).fold(T::zero(), |acc, i| acc.max(a[i * n + i].abs()));
    let floor = T::lit(n as f64 * T::EPS) * max_diag;
    let mut kb = 0;
    while kb < n {
        let nb = NB.min(n - kb);
        if kb > 0 {
            // A[kb.., kb..kb+nb] -= L[kb.., ..kb] · L[kb..kb+nb, ..kb]ᵀ
            // SAFETY: the read regions (columns ..kb) and the written region
            // (columns kb..kb+nb) are disjoint parts of the same n×n buffer.
            unsafe {
                let base = a.as_mut_ptr();
                T::gemm_raw(
                    n - kb,
                    kb,
                    nb,
                    -T::one(),
                    base.add(kb * n),
                    n as isize,
                    1,
                    base.add(kb * n),
                    1,
                    n as isize,
                    T::one(),
                    base.add(kb * n + kb),
                    n as isize,
                    1,
                );
            }
        }
        // diagonal block
        for j in kb..kb + nb {
            let mut pivot = a[j * n + j];
            for k in kb..j {
                pivot -= a[j * n + k] * a[j * n + k];
            }
            if !(pivot > floor) || !(pivot > T::zero()) {
                return Err(Error::NotPositiveDefinite { index: j, pivot: pivot.as_f64() });
            }
            let ljj = pivot.sqrt();
            a[j * n + j] = ljj;
            for i in (j + 1)..kb + nb {
                let mut s = a[i * n + j];
                for k in kb..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / ljj;
            }
        }
        // panel below the diagonal block
        for i in kb + nb..n {
            for c in kb..kb + nb {
                let mut s = a[i * n + c];
                for t in kb..c {
                    s -= a[i * n + t] * a[c * n + t];
                }
                a[i * n + c] = s / a[c * n + c];
            }
        }
        kb += nb;
    }
    Ok(())
}

/// Solves `L Lᵀ x = b` in place, `L` stored in the lower triangle of `l`.
pub(crate) fn cholesky_solve_in_place<T: Scalar>(l: &[T], n: usize, b: &mut [T]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        let s = b[i] - row.iter().zip(&b[..i]).map(|(&p, &q)| p * q).sum::<T>();
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// `log det(Jᵀ J)` through the Cholesky factor of the d×d Gram matrix.
pub fn logdet_gram<T: Scalar>(j: &Matrix<T>) -> Result<T> {
    let (m, d) = j.shape();
    if m < d {
        return Err(Error::InvalidDims(format!("logdet_gram needs m >= d, got {m}x{d}")));
    }
    let gram = j.gram();
    let l = cholesky(&gram).map_err(|_| Error::SingularJacobian)?;
    Ok(logdet_from_cholesky(&l))
}

/// `log det(L Lᵀ) = 2 Σ log L_ii`.
pub fn logdet_from_cholesky<T: Scalar>(l: &Matrix<T>) -> T {
    T::lit(2.0) * l.diag().into_iter().map(|v| v.ln()).sum::<T>()
}

/// Inverse of `L Lᵀ` given its lower Cholesky factor.
pub fn cholesky_inverse<T: Scalar>(l: &Matrix<T>) -> Matrix<T> {
    let n = l.rows();
    let mut out = Matrix::zeros(n, n);
    cholesky_inverse_into(l.as_slice(), n, out.as_mut_slice());
    out
}

pub(crate) fn cholesky_inverse_into<T: Scalar>(l: &[T], n: usize, out: &mut [T]) {
    // L⁻¹ by forward substitution, then (L Lᵀ)⁻¹ = L⁻ᵀ L⁻¹.
    let mut linv = vec![T::zero(); n * n];
    for col in 0..n {
        for i in col..n {
            let mut s = if i == col { T::one() } else { T::zero() };
            for k in col..i {
                s -= l[i * n + k] * linv[k * n + col];
            }
            linv[i * n + col] = s / l[i * n + i];
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let mut s = T::zero();
            for k in i..n {
                s += linv[k * n + i] * linv[k * n + j];
            }
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
}

/// Solves `L Lᵀ x = b`.
pub fn cholesky_solve<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    assert_eq!(b.len(), n);
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// LU factorization with partial pivoting of a square matrix.
pub(crate) struct Lu<T> {
    lu: Vec<T>,
    perm: Vec<usize>,
    sign: T,
    n: usize,
    singular: bool,
}

impl<T: Scalar> Lu<T> {
    /// Factorizes row-major `a` (n×n). Pivots below `rel_tol · max|a|`
    /// flag the matrix as singular.
    pub(crate) fn new(a: &[T], n: usize, rel_tol: T) -> Self {
        let mut lu = a[..n * n].to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = T::one();
        let scale = lu.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        let mut singular = scale == T::zero();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -T::one()), |best, c| if c.1 > best.1 { c } else { best });
            if pmax <= rel_tol * scale {
                singular = true;
                continue;
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let piv = lu[k * n + k];
            for i in (k + 1)..n {
                let f = lu[i * n + k] / piv;
                lu[i * n + k] = f;
                for c in (k + 1)..n {
                    let v = lu[k * n + c];
                    lu[i * n + c] -= f * v;
                }
            }
        }
        Self { lu, perm, sign, n, singular }
    }

    pub(crate) fn det(&self) -> T {
        if self.singular {
            return T::zero();
        }
        (0..self.n).fold(self.sign, |acc, i| acc * self.lu[i * self.n + i])
    }

    pub(crate) fn solve(&self, b: &[T]) -> Option<Vec<T>> {
        if self.singular {
            return None;
        }
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                let v = x[k];
                x[i] -= self.lu[i * n + k] * v;
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let v = x[k];
                x[i] -= self.lu[i * n + k] * v;
            }
            x[i] /= self.lu[i * n + i];
        }
        Some(x)
    }
}

/// Determinant of a square matrix via LU.
pub fn determinant<T: Scalar>(a: &Matrix<T>) -> Result<T> {
    if !a.is_square() {
        return Err(Error::InvalidDims("determinant of a non-square matrix".into()));
    }
    Ok(Lu::new(a.as_slice(), a.rows(), T::zero()).det())
}

/// Numerical rank by Gaussian elimination with a relative pivot tolerance.
pub fn rank<T: Scalar>(a: &Matrix<T>, rel_tol: T) -> usize {
    let (r, c) = a.shape();
    let mut m = a.as_slice().to_vec();
    let scale = a.max_abs();
    if scale == T::zero() {
        return 0;
    }
    let mut rank = 0;
    let mut row = 0;
    for col in 0..c {
        if row == r {
            break;
        }
        let (p, pmax) = (row..r)
            .map(|i| (i, m[i * c + col].abs()))
            .fold((row, -T::one()), |best, x| if x.1 > best.1 { x } else { best });
        if pmax <= rel_tol * scale {
            continue;
        }
        for k in 0..c {
            m.swap(row * c + k, p * c + k);
        }
        for i in (row + 1)..r {
            let f = m[i * c + col] / m[row * c + col];
            for k in col..c {
                let v = m[row * c + k];
                m[i * c + k] -= f * v;
            }
        }
        row += 1;
        rank += 1;
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_identity_is_identity() {
        let l = cholesky(&Matrix::<f64>::identity(3)).unwrap();
        assert_eq!(l, Matrix::identity(3));
    }

    #[test]
    fn cholesky_two_by_two() {
        let a = Matrix::<f64>::from_rows(&[[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        assert!((l[(0, 0)] - 2.0).abs() < 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
        assert!((l[(1, 0)] - 1.0).abs() < 1e-15);
        assert!((l[(1, 1)] - 2f64.sqrt()).abs() < 1e-15);
        let back = l.matmul(&l.transpose()).unwrap();
        assert!(back.sub(&a).frobenius_norm() <= 1e-8 * a.frobenius_norm());
    }

    #[test]
    fn cholesky_rejects_indefinite_and_asymmetric() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&a), Err(Error::NotPositiveDefinite { .. })));
        let b = Matrix::from_rows(&[[1.0, 0.5], [0.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&b), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn logdet_gram_examples() {
        assert_eq!(logdet_gram(&Matrix::<f64>::identity(2)).unwrap(), 0.0);
        let j = Matrix::from_rows(&[[2.0, 0.0], [0.0, 3.0], [0.0, 0.0], [0.0, 0.0]]).unwrap();
        assert!((logdet_gram(&j).unwrap() - 36f64.ln()).abs() < 1e-12);
        let dup = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [0.5, 0.5]]).unwrap();
        assert!(matches!(logdet_gram(&dup), Err(Error::SingularJacobian)));
        let wide = Matrix::<f64>::zeros(1, 2);
        assert!(matches!(logdet_gram(&wide), Err(Error::InvalidDims(_))));
    }

    #[test]
    fn inverse_and_solve_agree() {
        let a = Matrix::<f64>::from_rows(&[[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        let inv = cholesky_inverse(&l);
        let prod = a.matmul(&inv).unwrap();
        assert!(prod.sub(&Matrix::identity(3)).max_abs() < 1e-12);
        let x = cholesky_solve(&l, &[1.0, 2.0, 3.0]);
        let ax = a.mat_vec(&x);
        for (u, v) in ax.iter().zip([1.0, 2.0, 3.0]) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn blocked_cholesky_matches_unblocked() {
        let n = 150;
        let g = Matrix::from_fn(n, n, |i, j| ((i * 7 + j * 13) % 17) as f64 / 17.0 - 0.5);
        let mut a = g.matmul(&g.transpose()).unwrap();
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        let l = cholesky(&a).unwrap();
        let mut buf = a.as_slice().to_vec();
        cholesky_blocked_in_place(&mut buf, n).unwrap();
        for i in 0..n {
            for j in 0..=i {
                assert!((buf[i * n + j] - l[(i, j)]).abs() < 1e-10);
            }
        }
        let b: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut x = b.clone();
        cholesky_solve_in_place(&buf, n, &mut x);
        let ax = a.mat_vec(&x);
        assert!(ax.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-8));
    }

    #[test]
    fn determinant_and_rank() {
        let a = Matrix::<f64>::from_rows(&[[0.0, 2.0], [3.0, 1.0]]).unwrap();
        assert!((determinant(&a).unwrap() + 6.0).abs() < 1e-12);
        let r = Matrix::from_rows(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 1.0, 1.0]]).unwrap();
        assert_eq!(rank(&r, 1e-12), 2);
    }
}
