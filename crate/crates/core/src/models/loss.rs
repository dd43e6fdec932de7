//! Per-sample training losses and their exact parameter gradients.
//!
//! The parameter vector is the encoder's flat layout followed by the
//! decoder's (see [`MlpParams::flatten_into`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::mlp::MlpParams;
use crate::models::terms::{
    ima_term, l1_term, logdet_term, norm_term, trace_term, NormVariant, Phase, TermScratch,
    VolSurrogate,
};
use crate::scalar::Scalar;

/// Values of every loss term at one sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossTerms<T> {
    /// `‖x − dec(enc(x))‖²`.
    pub recon: T,
    /// `log det(JᵀJ)`.
    pub vol: T,
    /// Trace surrogate `tr((d·I − 𝟙𝟙ᵀ) JᵀJ)`.
    pub trace_vol: T,
    /// Entrywise L1 norm of `J`.
    pub norm_raw: T,
    /// Same as `norm_raw`; the sparsity baseline penalty.
    pub sparse: T,
    /// IMA contrast `Σ_j log‖J_{:,j}‖ − ½·vol`.
    pub ima: T,
}

/// Loss weights. Terms with weight zero do not contribute to `total`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights<T> {
    pub lambda_vol: T,
    pub lambda_norm: T,
    pub lambda_sp: T,
    pub lambda_ima: T,
}

impl<T: Scalar> LossWeights<T> {
    pub fn zero() -> Self {
        Self {
            lambda_vol: T::zero(),
            lambda_norm: T::zero(),
            lambda_sp: T::zero(),
            lambda_ima: T::zero(),
        }
    }
}

/// Options that change the shape of the composed loss.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct LossOptions {
    pub surrogate: VolSurrogate,
    pub norm_variant: NormVariant,
}

/// Per-term parameter gradients over the (encoder, decoder) flat layout.
#[derive(Clone, Debug, PartialEq)]
pub struct LossTermGrads<T> {
    pub recon: Vec<T>,
    /// Gradient of the volume surrogate in use (logdet or trace).
    pub vol: Vec<T>,
    /// Gradient of the phase-dependent norm penalty.
    pub norm: Vec<T>,
    pub sparse: Vec<T>,
    pub ima: Vec<T>,
    /// `recon − λ_vol·vol + λ_norm·norm + λ_sp·sparse + λ_ima·ima`.
    pub total: Vec<T>,
}

fn check_dims<T: Scalar>(enc: &MlpParams<T>, dec: &MlpParams<T>, x: &[T]) -> Result<()> {
    let (m, d) = (x.len(), enc.output_dim());
    if enc.input_dim() != m || dec.input_dim() != d || dec.output_dim() != m {
        return Err(Error::InvalidDims(format!(
            "encoder {}→{}, decoder {}→{}, sample length {m}",
            enc.input_dim(),
            enc.output_dim(),
            dec.input_dim(),
            dec.output_dim()
        )));
    }
    if m < d {
        return Err(Error::InvalidDims(format!("need m >= d, got m={m}, d={d}")));
    }
    Ok(())
}

/// Evaluates all loss terms at sample `x`.
pub fn loss_terms<T: Scalar>(enc: &MlpParams<T>, dec: &MlpParams<T>, x: &[T]) -> Result<LossTerms<T>> {
    check_dims(enc, dec, x)?;
    let shat = enc.forward(x);
    let xhat = dec.forward(&shat);
    let recon = x.iter().zip(&xhat).map(|(&a, &b)| (a - b) * (a - b)).sum();
    let j = dec.jacobian(&shat).into_matrix();
    let (m, d) = j.shape();
    let js = j.as_slice();
    let mut scratch = TermScratch::new(d);
    let vol = logdet_term(js, m, d, T::zero(), &mut scratch, None)?;
    let ima = ima_term(js, m, d, &mut scratch, None)?;
    let norm_raw = l1_term(js, None);
    Ok(LossTerms { recon, vol, trace_vol: trace_term(js, m, d, None), norm_raw, sparse: norm_raw, ima })
}

/// Gradients of every loss term at sample `x`.
///
/// The Jacobian terms are differentiated through the decoder parameters
/// and, via `ŝ = enc(x)`, through the encoder parameters as well.
pub fn loss_gradients<T: Scalar>(
    enc: &MlpParams<T>,
    dec: &MlpParams<T>,
    x: &[T],
    weights: &LossWeights<T>,
    options: LossOptions,
    c_cap: T,
    phase: Phase,
) -> Result<LossTermGrads<T>> {
    check_dims(enc, dec, x)?;
    if phase == Phase::Constrained && !(c_cap > T::zero()) {
        return Err(Error::PreconditionViolated(format!(
            "norm cap must be positive in the constrained phase, got {c_cap}"
        )));
    }
    let shat = enc.forward(x);
    let j = dec.jacobian(&shat).into_matrix();
    let (m, d) = j.shape();
    let js = j.as_slice();
    let mut scratch = TermScratch::new(d);

    let mut g_vol = vec![T::zero(); m * d];
    match options.surrogate {
        VolSurrogate::Logdet => {
            logdet_term(js, m, d, T::zero(), &mut scratch, Some((T::one(), &mut g_vol)))?;
        }
        VolSurrogate::Trace => {
            trace_term(js, m, d, Some((T::one(), &mut g_vol)));
        }
    }
    let mut g_norm = vec![T::zero(); m * d];
    norm_term(js, m, d, options.norm_variant, phase, c_cap, Some((T::one(), &mut g_norm)));
    let mut g_sp = vec![T::zero(); m * d];
    l1_term(js, Some((T::one(), &mut g_sp)));
    let mut g_ima = vec![T::zero(); m * d];
    ima_term(js, m, d, &mut scratch, Some((T::one(), &mut g_ima)))?;

    let recon = sample_backprop(enc, dec, x, T::one(), None);
    let vol = sample_backprop(enc, dec, x, T::zero(), Some(&g_vol));
    let norm = sample_backprop(enc, dec, x, T::zero(), Some(&g_norm));
    let sparse = sample_backprop(enc, dec, x, T::zero(), Some(&g_sp));
    let ima = sample_backprop(enc, dec, x, T::zero(), Some(&g_ima));

    let total = (0..recon.len())
        .map(|k| {
            let mut t = recon[k];
            if weights.lambda_vol != T::zero() {
                t -= weights.lambda_vol * vol[k];
            }
            if weights.lambda_norm != T::zero() {
                t += weights.lambda_norm * norm[k];
            }
            if weights.lambda_sp != T::zero() {
                t += weights.lambda_sp * sparse[k];
            }
            if weights.lambda_ima != T::zero() {
                t += weights.lambda_ima * ima[k];
            }
            t
        })
        .collect();
    Ok(LossTermGrads { recon, vol, norm, sparse, ima, total })
}

/// Reverse pass for one sample of
/// `recon_weight·‖x − dec(enc(x))‖² + Σ_{ij} Γ_ij · J_ij(ŝ)`,
/// where `gamma` (row-major m×d) is the loss derivative w.r.t. the decoder
/// Jacobian. Returns the flat (encoder, decoder) gradient.
pub(crate) fn sample_backprop<T: Scalar>(
    enc: &MlpParams<T>,
    dec: &MlpParams<T>,
    x: &[T],
    recon_weight: T,
    gamma: Option<&[T]>,
) -> Vec<T> {
    let (m, he, d, hd) = (x.len(), enc.hidden_dim(), enc.output_dim(), dec.hidden_dim());
    let (ea, da) = (enc.activation, dec.activation);

    let h1 = enc.preactivations(x);
    let a1: Vec<T> = h1.iter().map(|&z| ea.apply(z)).collect();
    let shat: Vec<T> =
        (0..d).map(|r| crate::numerics::dot(enc.w2.row(r), &a1) + enc.b2[r]).collect();
    let z = dec.preactivations(&shat);
    let a2: Vec<T> = z.iter().map(|&v| da.apply(v)).collect();
    let dz1: Vec<T> = z.iter().map(|&v| da.derivative(v)).collect();
    let xhat: Vec<T> =
        (0..m).map(|r| crate::numerics::dot(dec.w2.row(r), &a2) + dec.b2[r]).collect();

    let n_enc = enc.param_count();
    let mut grad = vec![T::zero(); n_enc + dec.param_count()];
    let (ge, gd) = grad.split_at_mut(n_enc);
    let (g_w1, rest) = ge.split_at_mut(he * m);
    let (g_b1, rest) = rest.split_at_mut(he);
    let (g_w2, g_b2) = rest.split_at_mut(d * he);
    let (g_v1, rest) = gd.split_at_mut(hd * d);
    let (g_c1, rest) = rest.split_at_mut(hd);
    let (g_v2, g_c2) = rest.split_at_mut(m * hd);

    // reconstruction
    let two_w = recon_weight + recon_weight;
    let dxh: Vec<T> = xhat.iter().zip(x).map(|(&a, &b)| two_w * (a - b)).collect();
    let mut dzv = vec![T::zero(); hd];
    for i in 0..m {
        g_c2[i] = dxh[i];
        if dxh[i] != T::zero() {
            for k in 0..hd {
                g_v2[i * hd + k] += dxh[i] * a2[k];
                dzv[k] += dec.w2[(i, k)] * dxh[i];
            }
        }
    }
    for k in 0..hd {
        dzv[k] *= dz1[k];
    }

    // Jacobian term: J = V2 · diag(σ'(z)) · V1
    if let Some(g) = gamma {
        let v1 = &dec.w1;
        let v2 = &dec.w2;
        // Q = V2ᵀ Γ (hd×d)
        let mut q = vec![T::zero(); hd * d];
        for i in 0..m {
            for k in 0..hd {
                let v = v2[(i, k)];
                for j in 0..d {
                    q[k * d + j] += v * g[i * d + j];
                }
            }
        }
        for k in 0..hd {
            // ∂/∂V2[i][k] = Σ_j Γ[i][j] σ'_k V1[k][j]
            let mut r = T::zero();
            for j in 0..d {
                g_v1[k * d + j] += dz1[k] * q[k * d + j];
                r += q[k * d + j] * v1[(k, j)];
            }
            for i in 0..m {
                let mut s = T::zero();
                for j in 0..d {
                    s += g[i * d + j] * v1[(k, j)];
                }
                g_v2[i * hd + k] += s * dz1[k];
            }
            dzv[k] += r * da.second_derivative(z[k]);
        }
    }

    // decoder first layer and back into ŝ
    let mut ds = vec![T::zero(); d];
    for k in 0..hd {
        g_c1[k] = dzv[k];
        for j in 0..d {
            g_v1[k * d + j] += dzv[k] * shat[j];
            ds[j] += dec.w1[(k, j)] * dzv[k];
        }
    }

    // encoder
    let mut dh = vec![T::zero(); he];
    for r in 0..d {
        g_b2[r] = ds[r];
        for k in 0..he {
            g_w2[r * he + k] = ds[r] * a1[k];
            dh[k] += enc.w2[(r, k)] * ds[r];
        }
    }
    for k in 0..he {
        let v = dh[k] * ea.derivative(h1[k]);
        g_b1[k] = v;
        for i in 0..m {
            g_w1[k * m + i] = v * x[i];
        }
    }
    grad
}
