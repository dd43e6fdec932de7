//! J-VolMax training loop: warm-up schedule, norm-cap estimation, Adam.

mod adam;
mod checkpoint;
mod init;

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use init::{he_init, InitScheme};

use crate::error::{Error, Result};
use crate::models::{
    Activation, BatchObjective, BatchStats, BatchWorkspace, LogdetRidge, LossOptions, LossWeights,
    MlpParams, NormVariant, Phase, VolSurrogate,
};
use crate::numerics::{Matrix, Rng};
use crate::scalar::Scalar;

/// Training objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Reconstruction − scheduled volume + norm penalty.
    #[default]
    Dica,
    /// Reconstruction only.
    Base,
    /// Reconstruction + `λ_sp·‖J‖₁`.
    Sparse,
    /// Reconstruction + `λ_ima·c_IMA`.
    Ima,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Dica => "dica",
            Criterion::Base => "base",
            Criterion::Sparse => "sparse",
            Criterion::Ima => "ima",
        }
    }
}

/// How the squared reconstruction error enters the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReconReduction {
    /// `‖x − x̂‖² / m`, the per-coordinate mean.
    #[default]
    Mean,
    /// `‖x − x̂‖²`.
    Sum,
}

/// Floating-point type used for the parameters during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup: usize,
    /// Mini-batch size; 0 means one full batch per epoch.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda_vol: f64,
    pub lambda_norm: f64,
    pub lambda_sp: f64,
    pub lambda_ima: f64,
    pub criterion: Criterion,
    pub recon_reduction: ReconReduction,
    pub vol_surrogate: VolSurrogate,
    pub norm_variant: NormVariant,
    pub hidden: usize,
    pub activation: Activation,
    pub seed: u64,
    pub init: InitScheme,
    pub precision: Precision,
    /// Adds `1e-12·tr(JᵀJ)/d` to the Gram diagonal before the log-determinant.
    pub logdet_trace_ridge: bool,
    /// Adds a fixed `τ` to the Gram diagonal instead.
    pub logdet_tau: Option<f64>,
    /// Abort when more than this fraction of samples skip in one epoch.
    pub max_skip_fraction: f64,
    /// Rows used to log Jacobian statistics the gradient pass did not form.
    pub monitor_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            warmup: 20,
            batch_size: 64,
            learning_rate: 1e-4,
            // relative to the per-coordinate mean reconstruction error
            lambda_vol: 1e-3,
            lambda_norm: 1e-3,
            lambda_sp: 1e-4,
            lambda_ima: 1e-4,
            criterion: Criterion::Dica,
            recon_reduction: ReconReduction::Mean,
            vol_surrogate: VolSurrogate::Logdet,
            norm_variant: NormVariant::MatrixL1,
            hidden: 64,
            activation: Activation::Relu,
            seed: 0,
            init: InitScheme::HeUniform,
            precision: Precision::F64,
            logdet_trace_ridge: false,
            logdet_tau: None,
            max_skip_fraction: 0.01,
            monitor_samples: 1024,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.warmup >= self.epochs {
            return bad(format!("need 0 <= warmup < epochs, got warmup={} epochs={}", self.warmup, self.epochs));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, v) in [
            ("lambda_vol", self.lambda_vol),
            ("lambda_norm", self.lambda_norm),
            ("lambda_sp", self.lambda_sp),
            ("lambda_ima", self.lambda_ima),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.hidden == 0 {
            return bad("hidden must be positive".into());
        }
        if let Some(t) = self.logdet_tau {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("logdet_tau must be positive, got {t}"));
            }
        }
        if !(0.0..=1.0).contains(&self.max_skip_fraction) {
            return bad(format!("max_skip_fraction {} outside [0, 1]", self.max_skip_fraction));
        }
        Ok(())
    }

    /// Loss weights of the configured criterion at epoch `t`.
    pub fn weights_at(&self, t: usize) -> LossWeights<f64> {
        let mut w = LossWeights::zero();
        match self.criterion {
            Criterion::Dica => {
                w.lambda_vol = lambda_vol_schedule(t, self.warmup, self.lambda_vol);
                w.lambda_norm = self.lambda_norm;
            }
            Criterion::Base => {}
            Criterion::Sparse => w.lambda_sp = self.lambda_sp,
            Criterion::Ima => w.lambda_ima = self.lambda_ima,
        }
        w
    }

    fn ridge<T: Scalar>(&self) -> LogdetRidge<T> {
        match (self.logdet_tau, self.logdet_trace_ridge) {
            (Some(t), _) => LogdetRidge::Absolute(T::lit(t)),
            (None, true) => LogdetRidge::RelativeTrace(T::lit(1e-12)),
            (None, false) => LogdetRidge::None,
        }
    }

    fn loss_options(&self) -> LossOptions {
        LossOptions { surrogate: self.vol_surrogate, norm_variant: self.norm_variant }
    }
}

/// Volume weight at epoch `t`: linear ramp from 0 to `λ_vol` over the
/// warm-up, constant afterwards.
pub fn lambda_vol_schedule(t: usize, warmup: usize, lambda_vol: f64) -> f64 {
    if t >= warmup {
        lambda_vol
    } else {
        lambda_vol * t as f64 / warmup as f64
    }
}

const NORM_WINDOW: usize = 10;
/// Keeps the minibatch order independent of the initialization stream.
const SHUFFLE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<T> {
    pub encoder: MlpParams<T>,
    pub decoder: MlpParams<T>,
    /// Moments over the flat encoder-then-decoder layout.
    pub adam: AdamState<T>,
    /// Completed epochs.
    pub epoch: usize,
    /// Norm cap, fixed at the end of the warm-up.
    pub c_cap: Option<f64>,
    /// Per-epoch mean Jacobian norms of the most recent epochs.
    pub norm_window: VecDeque<f64>,
}

impl<T: Scalar> TrainState<T> {
    pub fn cast<U: Scalar>(&self) -> TrainState<U> {
        let c = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect();
        TrainState {
            encoder: self.encoder.cast(),
            decoder: self.decoder.cast(),
            adam: AdamState {
                m: c(&self.adam.m),
                v: c(&self.adam.v),
                t: self.adam.t,
                beta1: U::lit(self.adam.beta1.as_f64()),
                beta2: U::lit(self.adam.beta2.as_f64()),
                eps: U::lit(self.adam.eps.as_f64()),
            },
            epoch: self.epoch,
            c_cap: self.c_cap,
            norm_window: self.norm_window.clone(),
        }
    }

    /// Encoder outputs for every row of `x`.
    pub fn encode(&self, x: &Matrix<f64>) -> Matrix<f64> {
        encode(&self.encoder, x)
    }
}

/// Applies `enc` to every row of `x`.
pub fn encode<T: Scalar>(enc: &MlpParams<T>, x: &Matrix<f64>) -> Matrix<f64> {
    let d = enc.output_dim();
    let mut out = Vec::with_capacity(x.rows() * d);
    let mut buf = Vec::with_capacity(x.cols());
    for row in x.row_iter() {
        buf.clear();
        buf.extend(row.iter().map(|&v| T::lit(v)));
        out.extend(enc.forward(&buf).into_iter().map(|v| v.as_f64()));
    }
    Matrix::new(x.rows(), d, out).expect("encoder output is finite")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean reconstruction error over the epoch's samples.
    pub recon: f64,
    /// Mean value of the volume surrogate in use.
    pub vol: f64,
    /// Mean entrywise Jacobian L1 norm.
    pub norm_raw: f64,
    pub lambda_vol_eff: f64,
    /// Whole epoch, including monitoring.
    pub wall_ms: f64,
    /// Gradient passes only.
    pub grad_ms: f64,
    pub skipped: usize,
    pub c_cap: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,recon,vol,norm_raw,lambda_vol_eff,wall_ms,skipped\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{:?},{:?},{:?},{:?},{:.3},{}\n",
                r.epoch, r.recon, r.vol, r.norm_raw, r.lambda_vol_eff, r.wall_ms, r.skipped
            ));
        }
        s
    }

    /// Mean gradient time per epoch in milliseconds.
    pub fn mean_grad_ms(&self) -> f64 {
        self.records.iter().map(|r| r.grad_ms).sum::<f64>() / self.records.len().max(1) as f64
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

fn check_data(x: &Matrix<f64>) -> Result<()> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::InvalidDims(format!("empty observation matrix {:?}", x.shape())));
    }
    if let Some(i) = x.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("observation row {}", i / x.cols())));
    }
    Ok(())
}

/// Initial state for `m`-dimensional observations and `d` latents.
pub fn init_state<T: Scalar>(cfg: &TrainConfig, m: usize, d: usize) -> TrainState<T> {
    let mut rng = Rng::new(cfg.seed);
    let encoder = he_init(&mut rng, m, cfg.hidden, d, cfg.activation, cfg.init);
    let decoder = he_init(&mut rng, d, cfg.hidden, m, cfg.activation, cfg.init);
    let n = encoder.param_count() + decoder.param_count();
    TrainState { encoder, decoder, adam: AdamState::new(n), epoch: 0, c_cap: None, norm_window: VecDeque::new() }
}

/// Trains in the configured precision and returns an `f64` state.
pub fn train_auto(cfg: &TrainConfig, x: &Matrix<f64>, d: usize) -> Result<(TrainState<f64>, TrainTrace)> {
    match cfg.precision {
        Precision::F64 => train::<f64>(cfg, x, d),
        Precision::F32 => train::<f32>(cfg, x, d).map(|(s, t)| (s.cast(), t)),
    }
}

/// Trains an autoencoder with `d` latents on the rows of `x`.
pub fn train<T: Scalar>(cfg: &TrainConfig, x: &Matrix<f64>, d: usize) -> Result<(TrainState<T>, TrainTrace)> {
    cfg.validate()?;
    check_data(x)?;
    if d == 0 {
        return Err(Error::InvalidDims("latent dimension must be positive".into()));
    }
    let state = init_state(cfg, x.cols(), d);
    let mut trainer = Trainer::new(cfg, x, state);
    let mut trace = TrainTrace::default();
    for _ in 0..cfg.epochs {
        trace.records.push(trainer.epoch()?);
    }
    Ok((trainer.state, trace))
}

/// Epoch-level driver; owns the mutable state.
struct Trainer<'a, T> {
    cfg: &'a TrainConfig,
    x: Vec<T>,
    n: usize,
    m: usize,
    state: TrainState<T>,
    order: Vec<usize>,
    shuffle: Rng,
    ws: BatchWorkspace<T>,
    batch: Vec<T>,
    flat: Vec<T>,
    grad: Vec<T>,
    monitor: Vec<T>,
    monitor_rows: usize,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    fn new(cfg: &'a TrainConfig, x: &Matrix<f64>, state: TrainState<T>) -> Self {
        let (n, m) = x.shape();
        let xs: Vec<T> = x.as_slice().iter().map(|&v| T::lit(v)).collect();
        // Evenly spaced rows, so monitoring never touches the RNG.
        let k = cfg.monitor_samples.clamp(1, n);
        let mut monitor = Vec::with_capacity(k * m);
        for i in 0..k {
            let r = i * n / k;
            monitor.extend_from_slice(&xs[r * m..(r + 1) * m]);
        }
        let np = state.adam.m.len();
        Self {
            cfg,
            x: xs,
            n,
            m,
            state,
            order: (0..n).collect(),
            shuffle: Rng::new(cfg.seed ^ SHUFFLE_STREAM),
            ws: BatchWorkspace::new(),
            batch: Vec::new(),
            flat: Vec::with_capacity(np),
            grad: vec![T::zero(); np],
            monitor,
            monitor_rows: k,
        }
    }

    fn monitor_stats(&mut self) -> BatchStats {
        let s = &self.state;
        self.ws.stats(&s.encoder, &s.decoder, &self.monitor, self.monitor_rows, self.cfg.loss_options())
    }

    fn epoch(&mut self) -> Result<EpochRecord> {
        let cfg = self.cfg;
        let t = self.state.epoch + 1;
        let start = Instant::now();
        let phase = if t <= cfg.warmup { Phase::Warmup } else { Phase::Constrained };
        if phase == Phase::Constrained && self.state.c_cap.is_none() {
            // No warm-up: the cap comes from the initial network.
            let st = self.monitor_stats();
            self.state.c_cap = Some(st.norm_metric_sum / st.jac_count.max(1) as f64);
        }
        let c_cap = self.state.c_cap.unwrap_or(0.0);
        if phase == Phase::Constrained && !(c_cap > 0.0) {
            return Err(Error::PreconditionViolated(format!("norm cap {c_cap} is not positive")));
        }
        let w = cfg.weights_at(t);
        let obj = BatchObjective {
            weights: LossWeights {
                lambda_vol: T::lit(w.lambda_vol),
                lambda_norm: T::lit(w.lambda_norm),
                lambda_sp: T::lit(w.lambda_sp),
                lambda_ima: T::lit(w.lambda_ima),
            },
            options: cfg.loss_options(),
            phase,
            c_cap: T::lit(c_cap),
            ridge: cfg.ridge(),
            recon_weight: match cfg.recon_reduction {
                ReconReduction::Mean => T::one() / T::lit(self.m as f64),
                ReconReduction::Sum => T::one(),
            },
        };
        let lr = T::lit(cfg.learning_rate);
        let bs = if cfg.batch_size == 0 { self.n } else { cfg.batch_size.min(self.n) };
        self.shuffle.shuffle(&mut self.order);
        let mut stats = BatchStats::default();
        let mut grad_time = 0.0;
        for chunk in self.order.chunks(bs) {
            self.batch.clear();
            for &r in chunk {
                self.batch.extend_from_slice(&self.x[r * self.m..(r + 1) * self.m]);
            }
            let g0 = Instant::now();
            let s = &mut self.state;
            let st = self.ws.gradient(&s.encoder, &s.decoder, &self.batch, chunk.len(), &obj, &mut self.grad);
            grad_time += g0.elapsed().as_secs_f64();
            stats.merge(&st);
            if st.skipped < st.count {
                self.flat.clear();
                s.encoder.flatten_into(&mut self.flat);
                s.decoder.flatten_into(&mut self.flat);
                adam_step(&mut s.adam, &mut self.flat, &self.grad, lr);
                let ne = s.encoder.param_count();
                s.encoder.assign_flat(&self.flat[..ne]);
                s.decoder.assign_flat(&self.flat[ne..]);
            }
        }
        if stats.skipped as f64 > cfg.max_skip_fraction * self.n as f64 {
            return Err(Error::TrainingAborted { epoch: t, skipped: stats.skipped, total: self.n });
        }
        let recon = stats.recon_sum / stats.count as f64;
        let (mut vol, mut norm_raw, mut metric) = (f64::NAN, f64::NAN, f64::NAN);
        if stats.jac_count > 0 {
            norm_raw = stats.norm_raw_sum / stats.jac_count as f64;
            metric = stats.norm_metric_sum / stats.jac_count as f64;
        }
        if stats.vol_count > 0 {
            vol = stats.vol_sum / stats.vol_count as f64;
        }
        if stats.jac_count == 0 || stats.vol_count == 0 {
            let st = self.monitor_stats();
            if stats.jac_count == 0 {
                norm_raw = st.norm_raw_sum / st.jac_count as f64;
                metric = st.norm_metric_sum / st.jac_count as f64;
            }
            if stats.vol_count == 0 {
                vol = if st.vol_count > 0 { st.vol_sum / st.vol_count as f64 } else { f64::NEG_INFINITY };
            }
        }
        let s = &mut self.state;
        if s.norm_window.len() == NORM_WINDOW {
            s.norm_window.pop_front();
        }
        s.norm_window.push_back(metric);
        if t == cfg.warmup {
            s.c_cap = Some(s.norm_window.iter().sum::<f64>() / s.norm_window.len() as f64);
        }
        s.epoch = t;
        Ok(EpochRecord {
            epoch: t,
            recon,
            vol,
            norm_raw,
            lambda_vol_eff: w.lambda_vol,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            grad_ms: grad_time * 1e3,
            skipped: stats.skipped,
            c_cap: s.c_cap,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixtures::{gen_mixture, MixtureKind, MixtureSpec};

    fn small_cfg() -> TrainConfig {
        TrainConfig { epochs: 6, warmup: 3, batch_size: 32, hidden: 8, seed: 11, ..Default::default() }
    }

    fn data(n: usize) -> Matrix<f64> {
        gen_mixture(&MixtureSpec::new(MixtureKind::A, 2, 6, n, 3)).unwrap().observations().clone()
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(lambda_vol_schedule(0, 20, 1e-4), 0.0);
        assert_eq!(lambda_vol_schedule(20, 20, 1e-4), 1e-4);
        assert_eq!(lambda_vol_schedule(10, 20, 1e-4), 0.5e-4);
        assert_eq!(lambda_vol_schedule(500, 20, 1e-4), 1e-4);
        assert_eq!(lambda_vol_schedule(0, 0, 3.0), 3.0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for cfg in [
            TrainConfig { warmup: 200, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { lambda_norm: -1.0, ..Default::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        }
        let parsed: TrainConfig = serde_json::from_str(r#"{"criterion": "sparse", "vol_surrogate": "trace"}"#).unwrap();
        assert_eq!(parsed.criterion, Criterion::Sparse);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
    }

    #[test]
    fn trace_bookkeeping_and_cap_freeze() {
        let cfg = small_cfg();
        let (state, trace) = train::<f64>(&cfg, &data(100), 2).unwrap();
        assert_eq!(trace.records.len(), cfg.epochs);
        assert_eq!(state.epoch, cfg.epochs);
        for r in &trace.records {
            assert_eq!(r.lambda_vol_eff, lambda_vol_schedule(r.epoch, cfg.warmup, cfg.lambda_vol));
            assert_eq!(r.c_cap.is_some(), r.epoch >= cfg.warmup);
        }
        let caps: Vec<f64> = trace.records.iter().filter_map(|r| r.c_cap).collect();
        assert!(caps[0] > 0.0 && caps.iter().all(|&c| c == caps[0]));
        assert_eq!(state.c_cap, Some(caps[0]));
        let csv = trace.to_csv();
        assert_eq!(csv.lines().count(), cfg.epochs + 1);
        assert!(csv.starts_with("epoch,recon,vol,norm_raw,lambda_vol_eff,wall_ms,skipped\n"));
    }

    #[test]
    fn deterministic() {
        let cfg = small_cfg();
        let x = data(80);
        let (a, _) = train::<f64>(&cfg, &x, 2).unwrap();
        let (b, _) = train::<f64>(&cfg, &x, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_weights_match_base() {
        let x = data(64);
        let zero = TrainConfig { lambda_vol: 0.0, lambda_norm: 0.0, lambda_sp: 0.0, lambda_ima: 0.0, ..small_cfg() };
        let base = TrainConfig { criterion: Criterion::Base, ..small_cfg() };
        let (b, _) = train::<f64>(&base, &x, 2).unwrap();
        for c in [Criterion::Dica, Criterion::Sparse, Criterion::Ima] {
            let (s, _) = train::<f64>(&TrainConfig { criterion: c, ..zero.clone() }, &x, 2).unwrap();
            assert_eq!(s.encoder, b.encoder, "{c:?}");
            assert_eq!(s.decoder, b.decoder, "{c:?}");
        }
    }

    #[test]
    fn no_warmup_takes_initial_cap() {
        let cfg = TrainConfig { warmup: 0, ..small_cfg() };
        let (_, trace) = train::<f64>(&cfg, &data(50), 2).unwrap();
        assert!(trace.records.iter().all(|r| r.c_cap == trace.records[0].c_cap && r.c_cap.is_some()));
    }

    #[test]
    fn rejects_bad_input() {
        let mut x = data(10);
        x.as_mut_slice()[3] = f64::NAN;
        assert!(matches!(train::<f64>(&small_cfg(), &x, 2), Err(Error::NonFinite(_))));
    }

    #[test]
    fn f32_path_runs() {
        let cfg = TrainConfig { precision: Precision::F32, ..small_cfg() };
        let (s, t) = train_auto(&cfg, &data(64), 2).unwrap();
        assert!(t.last().unwrap().recon.is_finite());
        assert_eq!(s.encoder.output_dim(), 2);
    }
}
