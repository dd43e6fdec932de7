//! Mini-batch gradient of the composed training loss.
//!
//! The per-sample reverse pass of [`crate::models::loss`] is rewritten as a
//! handful of GEMMs over the batch. With `P_j = σ'(Z) ⊙ V1[:, j]ᵀ` (one B×h
//! block per latent) the Jacobian columns of all samples are `P_j V2ᵀ`, so
//! the blocks `[σ(Z); P_1; …; P_d]` share a single product with `V2ᵀ`, and
//! the decoder output weights receive `[∂X̂; Γ_1; …; Γ_d]ᵀ [σ(Z); P_1; …]`.

use crate::error::Result;
use crate::models::loss::{LossOptions, LossWeights};
use crate::models::mlp::{Activation, MlpParams};
use crate::models::terms::{
    ima_term, l1_term, logdet_term, norm_metric, norm_term, trace_term, Phase, TermScratch,
    VolSurrogate,
};
use crate::numerics::{gemm, MatMut, MatRef};
use crate::scalar::Scalar;

/// Stabilizer added to `JᵀJ` before the log-determinant.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum LogdetRidge<T> {
    #[default]
    None,
    /// `eps · tr(JᵀJ)/d` added to the diagonal.
    RelativeTrace(T),
    /// Fixed `τ` added to the diagonal.
    Absolute(T),
}

/// Everything the batched loss needs besides parameters and data.
#[derive(Clone, Copy, Debug)]
pub struct BatchObjective<T> {
    /// Loss weights; `lambda_vol` is the scheduled value for the epoch.
    pub weights: LossWeights<T>,
    pub options: LossOptions,
    pub phase: Phase,
    pub c_cap: T,
    pub ridge: LogdetRidge<T>,
    /// Multiplier on `‖x − x̂‖²`.
    pub recon_weight: T,
}

impl<T: Scalar> BatchObjective<T> {
    pub fn needs_jacobian(&self) -> bool {
        let w = &self.weights;
        [w.lambda_vol, w.lambda_norm, w.lambda_sp, w.lambda_ima].iter().any(|&l| l != T::zero())
    }
}

/// Sums over a batch. Jacobian statistics only cover samples for which the
/// Jacobian was formed (`jac_count`); `vol_count` counts volume values.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BatchStats {
    pub count: usize,
    pub skipped: usize,
    pub recon_sum: f64,
    pub jac_count: usize,
    pub norm_raw_sum: f64,
    pub norm_metric_sum: f64,
    pub vol_count: usize,
    pub vol_sum: f64,
}

impl BatchStats {
    pub fn merge(&mut self, o: &BatchStats) {
        self.count += o.count;
        self.skipped += o.skipped;
        self.recon_sum += o.recon_sum;
        self.jac_count += o.jac_count;
        self.norm_raw_sum += o.norm_raw_sum;
        self.norm_metric_sum += o.norm_metric_sum;
        self.vol_count += o.vol_count;
        self.vol_sum += o.vol_sum;
    }
}

/// Reusable buffers for batched forward/backward passes.
#[derive(Debug, Default)]
pub struct BatchWorkspace<T> {
    h1: Vec<T>,
    a1: Vec<T>,
    s: Vec<T>,
    z: Vec<T>,
    dz1: Vec<T>,
    p: Vec<T>,
    y: Vec<T>,
    e: Vec<T>,
    q: Vec<T>,
    dzb: Vec<T>,
    ds: Vec<T>,
    da1: Vec<T>,
    jn: Vec<T>,
    gn: Vec<T>,
    scratch: TermScratch<T>,
    scratch_d: usize,
}

fn ensure<T: Scalar>(v: &mut Vec<T>, n: usize) {
    if v.len() < n {
        v.resize(n, T::zero());
    }
}

fn add_bias<T: Scalar>(buf: &mut [T], rows: usize, bias: &[T]) {
    let c = bias.len();
    for r in 0..rows {
        for (v, &b) in buf[r * c..(r + 1) * c].iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn col_sums<T: Scalar>(buf: &[T], rows: usize, out: &mut [T]) {
    let c = out.len();
    for v in out.iter_mut() {
        *v = T::zero();
    }
    for r in 0..rows {
        for (o, &v) in out.iter_mut().zip(&buf[r * c..(r + 1) * c]) {
            *o += v;
        }
    }
}

impl<T: Scalar> BatchWorkspace<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Forward pass through both networks; with `jac`, also the Jacobian
    /// blocks. Fills `y` with `[X̂; J_1; …; J_d]` (each block b×m).
    fn forward(&mut self, enc: &MlpParams<T>, dec: &MlpParams<T>, x: &[T], b: usize, jac: bool) {
        let (m, he, d, hd) = (enc.input_dim(), enc.hidden_dim(), enc.output_dim(), dec.hidden_dim());
        let nb = if jac { 1 + d } else { 1 };
        ensure(&mut self.h1, b * he);
        ensure(&mut self.a1, b * he);
        ensure(&mut self.s, b * d);
        ensure(&mut self.z, b * hd);
        ensure(&mut self.dz1, b * hd);
        ensure(&mut self.p, nb * b * hd);
        ensure(&mut self.y, nb * b * m);
        if self.scratch_d != d {
            self.scratch = TermScratch::new(d);
            self.scratch_d = d;
        }

        let xv = MatRef::new(x, b, m);
        gemm(T::one(), xv, enc.w1.view().t(), T::zero(), MatMut::new(&mut self.h1, b, he));
        add_bias(&mut self.h1, b, &enc.b1);
        let ea = enc.activation;
        for (a, &h) in self.a1[..b * he].iter_mut().zip(&self.h1[..b * he]) {
            *a = ea.apply(h);
        }
        gemm(
            T::one(),
            MatRef::new(&self.a1, b, he),
            enc.w2.view().t(),
            T::zero(),
            MatMut::new(&mut self.s, b, d),
        );
        add_bias(&mut self.s, b, &enc.b2);
        gemm(
            T::one(),
            MatRef::new(&self.s, b, d),
            dec.w1.view().t(),
            T::zero(),
            MatMut::new(&mut self.z, b, hd),
        );
        add_bias(&mut self.z, b, &dec.b1);
        let da = dec.activation;
        for i in 0..b * hd {
            let zv = self.z[i];
            self.p[i] = da.apply(zv);
            self.dz1[i] = da.derivative(zv);
        }
        if jac {
            let v1 = dec.w1.as_slice();
            for j in 0..d {
                let blk = &mut self.p[(1 + j) * b * hd..(2 + j) * b * hd];
                for n in 0..b {
                    for k in 0..hd {
                        blk[n * hd + k] = self.dz1[n * hd + k] * v1[k * d + j];
                    }
                }
            }
        }
        gemm(
            T::one(),
            MatRef::new(&self.p, nb * b, hd),
            dec.w2.view().t(),
            T::zero(),
            MatMut::new(&mut self.y, nb * b, m),
        );
        add_bias(&mut self.y, b, &dec.b2);
    }

    /// Copies sample `n`'s Jacobian (row-major m×d) out of the `y` blocks.
    fn gather_jacobian(&mut self, n: usize, b: usize, m: usize, d: usize) {
        ensure(&mut self.jn, m * d);
        self.jn.truncate(m * d);
        for j in 0..d {
            let row = &self.y[((1 + j) * b + n) * m..((1 + j) * b + n + 1) * m];
            for i in 0..m {
                self.jn[i * d + j] = row[i];
            }
        }
    }

    /// Mean gradient of the composed loss over the `b` rows of `x`
    /// (row-major b×m), written into `grad` (flat encoder then decoder
    /// layout). Samples with a singular Jacobian are dropped from the mean
    /// and counted in `skipped`.
    pub fn gradient(
        &mut self,
        enc: &MlpParams<T>,
        dec: &MlpParams<T>,
        x: &[T],
        b: usize,
        obj: &BatchObjective<T>,
        grad: &mut [T],
    ) -> BatchStats {
        let (m, he, d, hd) = (enc.input_dim(), enc.hidden_dim(), enc.output_dim(), dec.hidden_dim());
        let jac = obj.needs_jacobian();
        let nb = if jac { 1 + d } else { 1 };
        self.forward(enc, dec, x, b, jac);
        ensure(&mut self.e, nb * b * m);
        ensure(&mut self.q, nb * b * hd);
        ensure(&mut self.dzb, b * hd);
        ensure(&mut self.ds, b * d);
        ensure(&mut self.da1, b * he);
        ensure(&mut self.gn, m * d);

        let mut stats = BatchStats { count: b, ..Default::default() };
        let rw = obj.recon_weight;
        for n in 0..b {
            let mut r = 0.0;
            for i in 0..m {
                let diff = self.y[n * m + i] - x[n * m + i];
                self.e[n * m + i] = rw * (diff + diff);
                r += (diff * diff).as_f64();
            }
            stats.recon_sum += r;
        }

        if jac {
            let w = obj.weights;
            for n in 0..b {
                self.gather_jacobian(n, b, m, d);
                let gn = &mut self.gn[..m * d];
                for v in gn.iter_mut() {
                    *v = T::zero();
                }
                let js = &self.jn[..m * d];
                let mut ok = true;
                if w.lambda_vol != T::zero() {
                    let coef = -w.lambda_vol;
                    match obj.options.surrogate {
                        VolSurrogate::Logdet => {
                            let ridge = match obj.ridge {
                                LogdetRidge::None => T::zero(),
                                LogdetRidge::Absolute(t) => t,
                                LogdetRidge::RelativeTrace(eps) => {
                                    eps * js.iter().map(|&v| v * v).sum::<T>() / T::lit(d as f64)
                                }
                            };
                            match logdet_term(js, m, d, ridge, &mut self.scratch, Some((coef, gn))) {
                                Ok(v) => {
                                    stats.vol_sum += v.as_f64();
                                    stats.vol_count += 1;
                                }
                                Err(_) => ok = false,
                            }
                        }
                        VolSurrogate::Trace => {
                            stats.vol_sum += trace_term(js, m, d, Some((coef, gn))).as_f64();
                            stats.vol_count += 1;
                        }
                    }
                }
                if ok && w.lambda_ima != T::zero()
                    && ima_term(js, m, d, &mut self.scratch, Some((w.lambda_ima, gn))).is_err()
                {
                    ok = false;
                }
                if !ok {
                    stats.skipped += 1;
                    for i in 0..m {
                        self.e[n * m + i] = T::zero();
                    }
                    for j in 0..d {
                        for i in 0..m {
                            self.e[((1 + j) * b + n) * m + i] = T::zero();
                        }
                    }
                    continue;
                }
                if w.lambda_norm != T::zero() {
                    norm_term(js, m, d, obj.options.norm_variant, obj.phase, obj.c_cap, Some((w.lambda_norm, gn)));
                }
                if w.lambda_sp != T::zero() {
                    l1_term(js, Some((w.lambda_sp, gn)));
                }
                stats.jac_count += 1;
                stats.norm_raw_sum += l1_term(js, None).as_f64();
                stats.norm_metric_sum += norm_metric(js, m, d, obj.options.norm_variant).as_f64();
                for j in 0..d {
                    let row = &mut self.e[((1 + j) * b + n) * m..((1 + j) * b + n + 1) * m];
                    for i in 0..m {
                        row[i] = gn[i * d + j];
                    }
                }
            }
        }

        let n_enc = enc.param_count();
        let (ge, gd) = grad.split_at_mut(n_enc);
        let (g_w1, rest) = ge.split_at_mut(he * m);
        let (g_b1, rest) = rest.split_at_mut(he);
        let (g_w2, g_b2) = rest.split_at_mut(d * he);
        let (g_v1, rest) = gd.split_at_mut(hd * d);
        let (g_c1, rest) = rest.split_at_mut(hd);
        let (g_v2, g_c2) = rest.split_at_mut(m * hd);

        // decoder output layer
        gemm(
            T::one(),
            MatRef::new(&self.e, nb * b, m).t(),
            MatRef::new(&self.p, nb * b, hd),
            T::zero(),
            MatMut::new(g_v2, m, hd),
        );
        col_sums(&self.e, b, g_c2);
        gemm(
            T::one(),
            MatRef::new(&self.e, nb * b, m),
            dec.w2.view(),
            T::zero(),
            MatMut::new(&mut self.q, nb * b, hd),
        );
        for i in 0..b * hd {
            self.dzb[i] = self.q[i] * self.dz1[i];
        }
        for v in g_v1.iter_mut() {
            *v = T::zero();
        }
        if jac {
            let v1 = dec.w1.as_slice();
            let curved = dec.activation != Activation::Relu;
            for j in 0..d {
                let qj = &self.q[(1 + j) * b * hd..(2 + j) * b * hd];
                for n in 0..b {
                    for k in 0..hd {
                        let qv = qj[n * hd + k];
                        g_v1[k * d + j] += self.dz1[n * hd + k] * qv;
                        if curved {
                            let zz = self.z[n * hd + k];
                            self.dzb[n * hd + k] += qv * v1[k * d + j] * dec.activation.second_derivative(zz);
                        }
                    }
                }
            }
        }
        col_sums(&self.dzb, b, g_c1);
        gemm(
            T::one(),
            MatRef::new(&self.dzb, b, hd).t(),
            MatRef::new(&self.s, b, d),
            T::one(),
            MatMut::new(g_v1, hd, d),
        );
        gemm(
            T::one(),
            MatRef::new(&self.dzb, b, hd),
            dec.w1.view(),
            T::zero(),
            MatMut::new(&mut self.ds, b, d),
        );

        // encoder
        gemm(
            T::one(),
            MatRef::new(&self.ds, b, d).t(),
            MatRef::new(&self.a1, b, he),
            T::zero(),
            MatMut::new(g_w2, d, he),
        );
        col_sums(&self.ds, b, g_b2);
        gemm(
            T::one(),
            MatRef::new(&self.ds, b, d),
            enc.w2.view(),
            T::zero(),
            MatMut::new(&mut self.da1, b, he),
        );
        let ea = enc.activation;
        for i in 0..b * he {
            self.da1[i] *= ea.derivative(self.h1[i]);
        }
        col_sums(&self.da1, b, g_b1);
        gemm(
            T::one(),
            MatRef::new(&self.da1, b, he).t(),
            MatRef::new(x, b, m),
            T::zero(),
            MatMut::new(g_w1, he, m),
        );

        let used = b - stats.skipped;
        if used > 0 {
            let inv = T::one() / T::lit(used as f64);
            for g in grad.iter_mut() {
                *g *= inv;
            }
        }
        stats
    }

    /// Loss statistics without gradients: reconstruction, the volume
    /// surrogate value and the Jacobian norms at every sample.
    pub fn stats(
        &mut self,
        enc: &MlpParams<T>,
        dec: &MlpParams<T>,
        x: &[T],
        b: usize,
        options: LossOptions,
    ) -> BatchStats {
        let (m, d) = (enc.input_dim(), enc.output_dim());
        self.forward(enc, dec, x, b, true);
        let mut stats = BatchStats { count: b, ..Default::default() };
        for n in 0..b {
            stats.recon_sum += (0..m)
                .map(|i| {
                    let diff = self.y[n * m + i] - x[n * m + i];
                    (diff * diff).as_f64()
                })
                .sum::<f64>();
            self.gather_jacobian(n, b, m, d);
            let js = &self.jn[..m * d];
            stats.jac_count += 1;
            stats.norm_raw_sum += l1_term(js, None).as_f64();
            stats.norm_metric_sum += norm_metric(js, m, d, options.norm_variant).as_f64();
            let vol: Result<T> = match options.surrogate {
                VolSurrogate::Logdet => logdet_term(js, m, d, T::zero(), &mut self.scratch, None),
                VolSurrogate::Trace => Ok(trace_term(js, m, d, None)),
            };
            match vol {
                Ok(v) => {
                    stats.vol_sum += v.as_f64();
                    stats.vol_count += 1;
                }
                Err(_) => stats.skipped += 1,
            }
        }
        stats
    }
}
