use crate::error::{Error, Result};
use crate::mixtures::sdi::gen_sdi_matrix_with;
use crate::mixtures::{Dataset, MixingArtifacts, MixtureKind, MixtureSpec, MlpUnit};
use crate::models::{Activation, MlpParams};
use crate::numerics::{cholesky, sample_gaussian_vec, sample_wishart, Matrix, Rng};

/// Overrides used by tests to pin parts of the generative process.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GeneratorHooks {
    /// Latent covariance forced to zero (Mixtures A and B).
    pub zero_covariance: bool,
    /// Distortion amplitude forced to this value (Mixture B). The random
    /// draw still happens so the rest of the stream is unchanged.
    pub fixed_amplitude: Option<f64>,
}

/// Generates the mixture named by `spec.kind` from `Rng::new(spec.seed)`.
pub fn gen_mixture(spec: &MixtureSpec) -> Result<Dataset> {
    let mut rng = Rng::new(spec.seed);
    let hooks = GeneratorHooks::default();
    match spec.kind {
        MixtureKind::A => gen_mixture_a(spec, &mut rng, hooks),
        MixtureKind::B => gen_mixture_b(spec, &mut rng, hooks),
        MixtureKind::C => gen_mixture_c(spec, &mut rng),
    }
}

fn expect_kind(spec: &MixtureSpec, kind: MixtureKind) -> Result<()> {
    spec.validate()?;
    if spec.kind != kind {
        return Err(Error::Config(format!("spec kind {:?} passed to the {kind:?} generator", spec.kind)));
    }
    Ok(())
}

/// Mixing matrix, covariance and latents shared by Mixtures A and B.
fn linear_part(spec: &MixtureSpec, rng: &mut Rng, hooks: GeneratorHooks) -> Result<(Matrix<f64>, Matrix<f64>, Matrix<f64>)> {
    let (d, n) = (spec.d, spec.n_samples);
    let a = gen_sdi_matrix_with(rng, d, spec.m, &spec.weights(), spec.knobs.inject_axis_points)?;
    let (sigma, chol) = if hooks.zero_covariance {
        (Matrix::zeros(d, d), Matrix::zeros(d, d))
    } else {
        // A Wishart draw with d degrees of freedom is singular with
        // probability zero; redraw in that event.
        loop {
            let sigma: Matrix<f64> = sample_wishart(rng, d);
            if let Ok(l) = cholesky(&sigma) {
                break (sigma, l);
            }
        }
    };
    let zero = vec![0.0; d];
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        data.extend(sample_gaussian_vec(rng, &zero, &chol));
    }
    Ok((a, sigma, Matrix::new(n, d, data)?))
}

/// Mixture A: `s ~ N(0, Σ)`, `Σ ~ W(I, d)`, `x = A s`.
pub fn gen_mixture_a(spec: &MixtureSpec, rng: &mut Rng, hooks: GeneratorHooks) -> Result<Dataset> {
    expect_kind(spec, MixtureKind::A)?;
    let (a, sigma, latents) = linear_part(spec, rng, hooks)?;
    let art = MixingArtifacts::Linear { a, sigma };
    let obs = art.apply_rows(&latents);
    Dataset::from_parts(latents, obs, spec.clone(), Some(art))
}

/// Mixture B: Mixture A followed by `x_i = a·cos(z_i) + z_i`.
pub fn gen_mixture_b(spec: &MixtureSpec, rng: &mut Rng, hooks: GeneratorHooks) -> Result<Dataset> {
    expect_kind(spec, MixtureKind::B)?;
    let (a, sigma, latents) = linear_part(spec, rng, hooks)?;
    let (lo, hi) = spec.knobs.amplitude_range;
    let count = if spec.knobs.per_coordinate_amplitude { spec.m } else { 1 };
    let mut amplitudes: Vec<f64> = (0..count).map(|_| rng.uniform_range(lo, hi)).collect();
    if let Some(fixed) = hooks.fixed_amplitude {
        amplitudes.fill(fixed);
    }
    let art = MixingArtifacts::Distorted { a, sigma, amplitudes };
    let obs = art.apply_rows(&latents);
    Dataset::from_parts(latents, obs, spec.clone(), Some(art))
}

/// Mixture C: `s ~ U(−1, 1)^d`; output `k` is its own tanh network with
/// N(0, 1/fan_in) weights and N(0, 1) hidden biases. The first ⌊m/2⌋
/// networks see d − 1 randomly chosen latents scaled by `α·β`.
pub fn gen_mixture_c(spec: &MixtureSpec, rng: &mut Rng) -> Result<Dataset> {
    expect_kind(spec, MixtureKind::C)?;
    let (d, m, n, h) = (spec.d, spec.m, spec.n_samples, spec.knobs.hidden);
    let (lo, hi) = spec.knobs.downscale_range;
    let mut units = Vec::with_capacity(m);
    for k in 0..m {
        let mut input_scale = vec![1.0; d];
        if k < m / 2 {
            for j in rng.distinct_indices(d, d - 1) {
                let alpha = rng.uniform_range(lo, hi);
                let beta = if rng.bernoulli(spec.knobs.flip_prob) { -1.0 } else { 1.0 };
                input_scale[j] = alpha * beta;
            }
        }
        let sd1 = (1.0 / d as f64).sqrt();
        let sd2 = (1.0 / h as f64).sqrt();
        let w1 = Matrix::from_fn(h, d, |_, _| sd1 * rng.normal());
        let b1 = (0..h).map(|_| rng.normal()).collect();
        let w2 = Matrix::from_fn(1, h, |_, _| sd2 * rng.normal());
        let net = MlpParams::new(w1, b1, w2, vec![0.0], Activation::Tanh)?;
        units.push(MlpUnit { input_scale, net });
    }
    let latents = Matrix::from_fn(n, d, |_, _| rng.uniform_range(-1.0, 1.0));
    let art = MixingArtifacts::Mlp { units };
    let obs = art.apply_rows(&latents);
    Dataset::from_parts(latents, obs, spec.clone(), Some(art))
}
