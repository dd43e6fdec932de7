//! Synthetic benchmark mixtures with ground-truth latents.

mod generate;
pub(crate) mod io;
mod sdi;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::MlpParams;
use crate::numerics::{dot, Matrix};

pub use generate::{gen_mixture, gen_mixture_a, gen_mixture_b, gen_mixture_c, GeneratorHooks};
pub use sdi::{gen_sdi_matrix, gen_sdi_matrix_with, project_weighted_l1, weighted_l1_norm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MixtureKind {
    /// Linear mixture of Wishart-correlated Gaussian latents.
    A,
    /// Mixture A followed by the elementwise distortion `a·cos(z) + z`.
    B,
    /// Random tanh MLP per output, half of them dominated by one latent.
    C,
}

/// Kind-specific generator settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureKnobs {
    /// Weights of the target L1 ball; all ones when absent.
    pub w: Option<Vec<f64>>,
    /// Inject the 2d axis points `±w_k·e_k` as the first rows of `A`.
    pub inject_axis_points: bool,
    /// Range of the distortion amplitude `a` (Mixture B).
    pub amplitude_range: (f64, f64),
    /// Draw one amplitude per coordinate instead of one per dataset.
    pub per_coordinate_amplitude: bool,
    /// Range of the down-scale magnitudes `α` (Mixture C).
    pub downscale_range: (f64, f64),
    /// Probability that a down-scale sign `β` is −1 (Mixture C).
    pub flip_prob: f64,
    /// Hidden width of each generator network (Mixture C).
    pub hidden: usize,
}

impl Default for MixtureKnobs {
    fn default() -> Self {
        Self {
            w: None,
            inject_axis_points: true,
            amplitude_range: (0.5, 1.0),
            per_coordinate_amplitude: false,
            downscale_range: (0.001, 0.002),
            flip_prob: 0.5,
            hidden: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub kind: MixtureKind,
    pub d: usize,
    pub m: usize,
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub knobs: MixtureKnobs,
}

impl MixtureSpec {
    pub fn new(kind: MixtureKind, d: usize, m: usize, n_samples: usize, seed: u64) -> Self {
        Self { kind, d, m, n_samples, seed, knobs: MixtureKnobs::default() }
    }

    /// Ball weights, defaulting to all ones.
    pub fn weights(&self) -> Vec<f64> {
        self.knobs.w.clone().unwrap_or_else(|| vec![1.0; self.d])
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.knobs;
        if self.d == 0 || self.m < self.d || self.n_samples == 0 {
            return Err(Error::InvalidDims(format!(
                "need m >= d >= 1 and n_samples >= 1, got d={}, m={}, n_samples={}",
                self.d, self.m, self.n_samples
            )));
        }
        if matches!(self.kind, MixtureKind::A | MixtureKind::B) && self.m < 2 * self.d {
            return Err(Error::InvalidDims(format!(
                "mixtures A and B need m >= 2d, got d={}, m={}",
                self.d, self.m
            )));
        }
        if let Some(w) = &k.w {
            if w.len() != self.d || w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::Config(format!("knobs.w must hold {} positive finite weights", self.d)));
            }
        }
        let (lo, hi) = k.amplitude_range;
        if !(0.0 <= lo && lo <= hi && hi < 1.0 + f64::EPSILON) {
            return Err(Error::Config(format!("amplitude_range ({lo}, {hi}) must lie in [0, 1]")));
        }
        let (lo, hi) = k.downscale_range;
        if !(0.0 < lo && lo <= hi) {
            return Err(Error::Config(format!("downscale_range ({lo}, {hi}) must be positive and ordered")));
        }
        if !(0.0..=1.0).contains(&k.flip_prob) {
            return Err(Error::Config(format!("flip_prob {} outside [0, 1]", k.flip_prob)));
        }
        if k.hidden == 0 {
            return Err(Error::Config("knobs.hidden must be positive".into()));
        }
        Ok(())
    }
}

/// One scalar generator network of Mixture C: `x_k = net(scale ⊙ s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpUnit {
    /// Input layer scales; 1 for untouched latents.
    pub input_scale: Vec<f64>,
    /// Network d → hidden → 1.
    pub net: MlpParams<f64>,
}

/// Everything needed to recompute observations from latents.
#[derive(Clone, Debug, PartialEq)]
pub enum MixingArtifacts {
    Linear { a: Matrix<f64>, sigma: Matrix<f64> },
    Distorted { a: Matrix<f64>, sigma: Matrix<f64>, amplitudes: Vec<f64> },
    Mlp { units: Vec<MlpUnit> },
}

impl MixingArtifacts {
    /// The generator `f` at one latent point.
    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        match self {
            MixingArtifacts::Linear { a, .. } => a.row_iter().map(|r| dot(r, s)).collect(),
            MixingArtifacts::Distorted { a, amplitudes, .. } => a
                .row_iter()
                .enumerate()
                .map(|(i, r)| {
                    let z = dot(r, s);
                    let amp = if amplitudes.len() == 1 { amplitudes[0] } else { amplitudes[i] };
                    amp * z.cos() + z
                })
                .collect(),
            MixingArtifacts::Mlp { units } => units
                .iter()
                .map(|u| {
                    let scaled: Vec<f64> = s.iter().zip(&u.input_scale).map(|(&v, &c)| v * c).collect();
                    u.net.forward(&scaled)[0]
                })
                .collect(),
        }
    }

    /// Recomputes all observations row by row.
    pub fn apply_rows(&self, latents: &Matrix<f64>) -> Matrix<f64> {
        let rows: Vec<Vec<f64>> = latents.row_iter().map(|s| self.apply(s)).collect();
        let cols = rows.first().map_or(0, Vec::len);
        Matrix::new(latents.rows(), cols, rows.concat()).expect("generator output is finite")
    }

    /// The mixing matrix of linear-type mixtures.
    pub fn mixing_matrix(&self) -> Option<&Matrix<f64>> {
        match self {
            MixingArtifacts::Linear { a, .. } | MixingArtifacts::Distorted { a, .. } => Some(a),
            MixingArtifacts::Mlp { .. } => None,
        }
    }
}

/// Paired latents and observations. Training code only sees
/// [`Dataset::observations`]; the latents are exposed through
/// [`crate::eval::ground_truth`].
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub(crate) latents: Matrix<f64>,
    observations: Matrix<f64>,
    spec: MixtureSpec,
    artifacts: Option<MixingArtifacts>,
}

impl Dataset {
    pub(crate) fn from_parts(
        latents: Matrix<f64>,
        observations: Matrix<f64>,
        spec: MixtureSpec,
        artifacts: Option<MixingArtifacts>,
    ) -> Result<Self> {
        if latents.rows() != observations.rows()
            || latents.cols() != spec.d
            || observations.cols() != spec.m
            || latents.rows() != spec.n_samples
        {
            return Err(Error::InvalidDims(format!(
                "dataset shapes latents {:?}, observations {:?} disagree with spec (n={}, d={}, m={})",
                latents.shape(),
                observations.shape(),
                spec.n_samples,
                spec.d,
                spec.m
            )));
        }
        Ok(Self { latents, observations, spec, artifacts })
    }

    pub fn observations(&self) -> &Matrix<f64> {
        &self.observations
    }

    pub fn spec(&self) -> &MixtureSpec {
        &self.spec
    }

    pub fn artifacts(&self) -> Option<&MixingArtifacts> {
        self.artifacts.as_ref()
    }

    pub fn n_samples(&self) -> usize {
        self.observations.rows()
    }
}
