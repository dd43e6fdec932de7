//! Dense linear algebra, random sampling and differentiation oracles.

pub mod diff;
pub mod linalg;
pub mod matrix;
pub mod rng;

pub use diff::finite_diff_grad;
pub use linalg::{cholesky, cholesky_inverse, cholesky_solve, determinant, logdet_gram, rank};
pub use matrix::{axpy, dot, gemm, norm2, MatMut, MatRef, Matrix};
pub use rng::{sample_gaussian_vec, sample_wishart, Rng};
