//! Diverse influence component analysis.
//!
//! An autoencoder is trained so that the decoder Jacobian `J = ∂x̂/∂ŝ` spans
//! as much volume as possible (`log det JᵀJ`, or a cheaper trace surrogate)
//! while its L1 norm stays under a cap estimated at the end of a warm-up
//! phase. When the true mixing gradients are sufficiently diverse, the
//! learned latents match the true ones up to permutation and elementwise
//! invertible maps.
//!
//! * [`mixtures`] generates the synthetic benchmarks with known latents.
//! * [`models`] holds the MLPs, Jacobians and every loss gradient.
//! * [`trainer`] runs the warm-up/constrained training loop.
//! * [`eval`] scores estimates (Hungarian matching, MCC, kernel R²).
//! * [`geometry`] certifies the diversity condition for a gradient set.
//! * [`cli`] wires these into the `dica` binary.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod mixtures;
pub mod models;
pub mod numerics;
pub mod scalar;
pub mod trainer;
