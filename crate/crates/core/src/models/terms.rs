//! Jacobian-level loss terms and their derivatives with respect to the
//! Jacobian entries. Shared by the per-sample and batched gradient paths.
//!
//! Every function reads a row-major m×d Jacobian `j` and, when `acc` is
//! given as `(coef, gamma)`, adds `coef · ∂value/∂J` into `gamma`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::linalg::{cholesky_into, cholesky_inverse_into};
use crate::scalar::Scalar;

/// Which volume term the trainer maximizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VolSurrogate {
    /// `log det(JᵀJ)`.
    #[default]
    Logdet,
    /// `tr((d·I − 𝟙𝟙ᵀ) JᵀJ)`, the sum of squared pairwise column distances.
    Trace,
}

/// How the Jacobian norm constraint is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormVariant {
    /// Entrywise L1 norm of the whole Jacobian, capped as one number.
    #[default]
    MatrixL1,
    /// Each row's L1 norm capped separately.
    Rowwise,
}

/// Norm-penalty regime: raw norm during warm-up, softplus hinge afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    Constrained,
}

/// Stable `log(1 + e^z)`.
#[inline]
pub fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Scratch space for the d×d Gram computations.
#[derive(Clone, Debug, Default)]
pub(crate) struct TermScratch<T> {
    gram: Vec<T>,
    chol: Vec<T>,
    inv: Vec<T>,
    cols: Vec<T>,
}

impl<T: Scalar> TermScratch<T> {
    pub(crate) fn new(d: usize) -> Self {
        Self {
            gram: vec![T::zero(); d * d],
            chol: vec![T::zero(); d * d],
            inv: vec![T::zero(); d * d],
            cols: vec![T::zero(); d],
        }
    }

    fn gram(&mut self, j: &[T], m: usize, d: usize) {
        for a in 0..d {
            for b in 0..=a {
                let mut s = T::zero();
                for i in 0..m {
                    s += j[i * d + a] * j[i * d + b];
                }
                self.gram[a * d + b] = s;
                self.gram[b * d + a] = s;
            }
        }
    }
}

/// `log det(JᵀJ + ridge·I)`, with `ridge` treated as a constant.
pub(crate) fn logdet_term<T: Scalar>(
    j: &[T],
    m: usize,
    d: usize,
    ridge: T,
    scratch: &mut TermScratch<T>,
    acc: Option<(T, &mut [T])>,
) -> Result<T> {
    scratch.gram(j, m, d);
    for a in 0..d {
        scratch.gram[a * d + a] += ridge;
    }
    cholesky_into(&scratch.gram, d, &mut scratch.chol).map_err(|_| Error::SingularJacobian)?;
    let value = T::lit(2.0) * (0..d).map(|a| scratch.chol[a * d + a].ln()).sum::<T>();
    if let Some((coef, gamma)) = acc {
        cholesky_inverse_into(&scratch.chol, d, &mut scratch.inv);
        let two = coef + coef;
        for i in 0..m {
            let row = &j[i * d..(i + 1) * d];
            for b in 0..d {
                let mut s = T::zero();
                for a in 0..d {
                    s += row[a] * scratch.inv[a * d + b];
                }
                gamma[i * d + b] += two * s;
            }
        }
    }
    Ok(value)
}

/// `tr((d·I − 𝟙𝟙ᵀ) JᵀJ) = d·‖J‖²_F − ‖J𝟙‖²`.
pub(crate) fn trace_term<T: Scalar>(j: &[T], m: usize, d: usize, acc: Option<(T, &mut [T])>) -> T {
    let dd = T::lit(d as f64);
    let mut fro = T::zero();
    let mut rows = T::zero();
    let mut gamma = acc;
    for i in 0..m {
        let row = &j[i * d..(i + 1) * d];
        let r: T = row.iter().copied().sum();
        fro += row.iter().map(|&v| v * v).sum::<T>();
        rows += r * r;
        if let Some((coef, ref mut g)) = gamma {
            let two = coef + coef;
            for b in 0..d {
                g[i * d + b] += two * (dd * row[b] - r);
            }
        }
    }
    dd * fro - rows
}

/// Entrywise L1 norm (subgradient sign(0) = 0).
pub(crate) fn l1_term<T: Scalar>(j: &[T], acc: Option<(T, &mut [T])>) -> T {
    if let Some((coef, g)) = acc {
        for (gv, &v) in g.iter_mut().zip(j) {
            *gv += coef * sign(v);
        }
    }
    j.iter().map(|v| v.abs()).sum()
}

/// Largest row L1 norm.
pub(crate) fn row_l1_max<T: Scalar>(j: &[T], m: usize, d: usize) -> T {
    (0..m)
        .map(|i| j[i * d..(i + 1) * d].iter().map(|v| v.abs()).sum::<T>())
        .fold(T::zero(), T::max)
}

/// Statistic the norm cap `C` is estimated from.
pub(crate) fn norm_metric<T: Scalar>(j: &[T], m: usize, d: usize, variant: NormVariant) -> T {
    match variant {
        NormVariant::MatrixL1 => j.iter().map(|v| v.abs()).sum(),
        NormVariant::Rowwise => row_l1_max(j, m, d),
    }
}

/// Norm penalty `c_norm(t)`: the raw entrywise L1 norm during warm-up,
/// `softplus(norm − C)` once the cap is frozen.
pub(crate) fn norm_term<T: Scalar>(
    j: &[T],
    m: usize,
    d: usize,
    variant: NormVariant,
    phase: Phase,
    c_cap: T,
    acc: Option<(T, &mut [T])>,
) -> T {
    match (phase, variant) {
        (Phase::Warmup, _) => l1_term(j, acc),
        (Phase::Constrained, NormVariant::MatrixL1) => {
            let raw: T = j.iter().map(|v| v.abs()).sum();
            let u = raw - c_cap;
            if let Some((coef, g)) = acc {
                let w = coef * sigmoid(u);
                for (gv, &v) in g.iter_mut().zip(j) {
                    *gv += w * sign(v);
                }
            }
            softplus(u)
        }
        (Phase::Constrained, NormVariant::Rowwise) => {
            let mut total = T::zero();
            let mut gamma = acc;
            for i in 0..m {
                let row = &j[i * d..(i + 1) * d];
                let u = row.iter().map(|v| v.abs()).sum::<T>() - c_cap;
                total += softplus(u);
                if let Some((coef, ref mut g)) = gamma {
                    let w = coef * sigmoid(u);
                    for b in 0..d {
                        g[i * d + b] += w * sign(row[b]);
                    }
                }
            }
            total
        }
    }
}

/// IMA contrast `Σ_j log‖J_{:,j}‖ − ½ log det(JᵀJ)`; zero iff the columns
/// are mutually orthogonal.
pub(crate) fn ima_term<T: Scalar>(
    j: &[T],
    m: usize,
    d: usize,
    scratch: &mut TermScratch<T>,
    acc: Option<(T, &mut [T])>,
) -> Result<T> {
    scratch.gram(j, m, d);
    for a in 0..d {
        scratch.cols[a] = scratch.gram[a * d + a];
    }
    cholesky_into(&scratch.gram, d, &mut scratch.chol).map_err(|_| Error::SingularJacobian)?;
    // ½ Σ log‖c_a‖² − Σ log L_aa
    let value = (0..d)
        .map(|a| T::lit(0.5) * scratch.cols[a].ln() - scratch.chol[a * d + a].ln())
        .sum::<T>();
    if let Some((coef, gamma)) = acc {
        cholesky_inverse_into(&scratch.chol, d, &mut scratch.inv);
        for i in 0..m {
            let row = &j[i * d..(i + 1) * d];
            for b in 0..d {
                let mut s = T::zero();
                for a in 0..d {
                    s += row[a] * scratch.inv[a * d + b];
                }
                gamma[i * d + b] += coef * (row[b] / scratch.cols[b] - s);
            }
        }
    }
    Ok(value)
}
