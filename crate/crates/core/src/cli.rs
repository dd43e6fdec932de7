//! Experiment commands behind the `dica` binary.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{ground_truth, score, EvalReport};
use crate::geometry::{certify_sdi, SdiCertificate, WeightedL1Ball};
use crate::mixtures::{gen_mixture, Dataset, MixtureSpec};
use crate::mixtures::io::read_matrix_csv;
use crate::trainer::{encode, read_checkpoint, train_auto, write_checkpoint, Checkpoint, Criterion, TrainConfig, TrainTrace};

/// Environment variable that overrides every seed in a config.
pub const SEED_ENV: &str = "DICA_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Required by `generate` and `benchmark`.
    pub mixture: Option<MixtureSpec>,
    pub train: TrainConfig,
    pub n_trials: usize,
    /// Benchmark trial `t` uses seed `seed ^ t`; also the evaluation seed.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub criteria: Vec<Criterion>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mixture: None,
            train: TrainConfig::default(),
            n_trials: 1,
            seed: 0,
            output_dir: PathBuf::from("out"),
            criteria: vec![Criterion::Dica],
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::parse(origin, format!("line {} column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if self.criteria.is_empty() {
            return Err(Error::Config("criteria must not be empty".into()));
        }
        if let Some(m) = &self.mixture {
            m.validate()?;
        }
        self.train.validate()
    }

    /// Replaces the mixture, training and base seeds.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        if let Some(m) = &mut self.mixture {
            m.seed = seed;
        }
    }

    fn mixture(&self) -> Result<&MixtureSpec> {
        self.mixture.as_ref().ok_or_else(|| Error::Config("config has no `mixture` section".into()))
    }
}

/// Parses `DICA_SEED` when set.
pub fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Generates the configured mixture into `out`.
pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<Dataset> {
    let ds = gen_mixture(cfg.mixture()?)?;
    ds.save(out)?;
    Ok(ds)
}

/// Trains on the dataset in `dataset_dir`, writing `checkpoint.txt` and
/// `trace.csv` into `out`.
pub fn cmd_train(cfg: &ExperimentConfig, dataset_dir: &Path, out: &Path) -> Result<(Checkpoint, TrainTrace)> {
    let ds = Dataset::load(dataset_dir)?;
    let (state, trace) = train_auto(&cfg.train, ds.observations(), ds.spec().d)?;
    let ck = Checkpoint { epoch: state.epoch, c_cap: state.c_cap, encoder: state.encoder, decoder: state.decoder };
    create_dir(out)?;
    write_file(&out.join("checkpoint.txt"), &write_checkpoint(&ck))?;
    write_file(&out.join("trace.csv"), &trace.to_csv())?;
    Ok((ck, trace))
}

/// Scores a checkpoint's encoder against the dataset's latents; with
/// `out`, writes `report.json` and `heatmap.csv` there.
pub fn cmd_eval(checkpoint: &Path, dataset_dir: &Path, seed: u64, out: Option<&Path>) -> Result<EvalReport> {
    let text = fs::read_to_string(checkpoint).map_err(|e| Error::io(checkpoint, e))?;
    let ck = read_checkpoint(&text, checkpoint)?;
    let ds = Dataset::load(dataset_dir)?;
    if ck.encoder.input_dim() != ds.spec().m || ck.encoder.output_dim() != ds.spec().d {
        return Err(Error::InvalidDims(format!(
            "checkpoint maps {} → {}, dataset has m={}, d={}",
            ck.encoder.input_dim(),
            ck.encoder.output_dim(),
            ds.spec().m,
            ds.spec().d
        )));
    }
    let est = encode(&ck.encoder, ds.observations());
    let report = score(ground_truth(&ds), &est, seed)?;
    if let Some(dir) = out {
        create_dir(dir)?;
        report.write(&dir.join("report.json"), &dir.join("heatmap.csv"))?;
    }
    Ok(report)
}

/// Certifies the gradient rows of a CSV file against a weighted L1 ball.
/// The weights file holds one row (or one column) of `d` values; all
/// ones when absent.
pub fn cmd_sdi_check(gradients: &Path, weights: Option<&Path>, tol: f64) -> Result<SdiCertificate> {
    let g = read_matrix_csv(gradients, None)?;
    let w = match weights {
        None => vec![1.0; g.cols()],
        Some(p) => {
            let m = read_matrix_csv(p, None)?;
            if m.rows() != 1 && m.cols() != 1 {
                return Err(Error::parse(p, format!("expected one row or one column, got {:?}", m.shape())));
            }
            m.into_vec()
        }
    };
    certify_sdi(&g, &WeightedL1Ball::new(w)?, tol)
}

/// Outcome of one (criterion, trial) job.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub criterion: Criterion,
    pub trial: usize,
    /// `ok`, or the error kind that stopped the trial.
    pub status: String,
    pub r2: Option<f64>,
    pub mcc: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub criterion: Criterion,
    pub ok_trials: usize,
    pub r2_mean: f64,
    pub r2_std: f64,
    pub mcc_mean: f64,
    pub mcc_std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkSummary {
    pub rows: Vec<TrialResult>,
    pub aggregates: Vec<Aggregate>,
    pub csv_path: PathBuf,
}

const BENCH_HEADER: &str = "criterion,d,m,trial,status,r2,mcc,r2_std,mcc_std,wall_ms";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:?}"))
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::TrainingAborted { .. } => "training_aborted",
        Error::SingularJacobian => "singular_jacobian",
        Error::ZeroVariance(_) => "zero_variance",
        Error::NotPositiveDefinite { .. } => "not_positive_definite",
        Error::NonFinite(_) | Error::NonFiniteEvaluation(_) => "non_finite",
        _ => "error",
    }
}

fn run_trial(cfg: &ExperimentConfig, criterion: Criterion, trial: usize) -> TrialResult {
    let start = Instant::now();
    let seed = cfg.seed ^ trial as u64;
    let outcome = (|| -> Result<EvalReport> {
        let mut spec = cfg.mixture()?.clone();
        spec.seed = seed;
        let ds = gen_mixture(&spec)?;
        let tc = TrainConfig { criterion, seed, ..cfg.train.clone() };
        let (state, _) = train_auto(&tc, ds.observations(), spec.d)?;
        score(ground_truth(&ds), &state.encode(ds.observations()), seed)
    })();
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok(r) => TrialResult {
            criterion,
            trial,
            status: "ok".into(),
            r2: Some(r.mean_r2),
            mcc: Some(r.mean_mcc),
            wall_ms,
        },
        Err(e) => TrialResult { criterion, trial, status: error_kind(&e).into(), r2: None, mcc: None, wall_ms },
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Mean and sample standard deviation over the successful trials of each
/// criterion, in `criteria` order.
pub fn aggregate(rows: &[TrialResult], criteria: &[Criterion]) -> Vec<Aggregate> {
    criteria
        .iter()
        .map(|&c| {
            let ok: Vec<&TrialResult> = rows.iter().filter(|r| r.criterion == c && r.status == "ok").collect();
            let r2: Vec<f64> = ok.iter().filter_map(|r| r.r2).collect();
            let mcc: Vec<f64> = ok.iter().filter_map(|r| r.mcc).collect();
            let (r2_mean, r2_std) = mean_std(&r2);
            let (mcc_mean, mcc_std) = mean_std(&mcc);
            Aggregate { criterion: c, ok_trials: ok.len(), r2_mean, r2_std, mcc_mean, mcc_std }
        })
        .collect()
}

/// Runs every (criterion, trial) pair on `threads` workers and writes
/// `benchmark.csv` into `out`. Detail rows are flushed in (criterion,
/// trial) order as soon as all earlier rows are done; aggregate rows
/// (`trial` = `mean`) follow.
pub fn cmd_benchmark(cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<BenchmarkSummary> {
    cfg.validate()?;
    let spec = cfg.mixture()?.clone();
    create_dir(out)?;
    let csv_path = out.join("benchmark.csv");
    let mut file = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let io = |e| Error::io(&csv_path, e);
    writeln!(file, "{BENCH_HEADER}").map_err(io)?;

    let jobs: Vec<(Criterion, usize)> =
        cfg.criteria.iter().flat_map(|&c| (0..cfg.n_trials).map(move |t| (c, t))).collect();
    let next = AtomicUsize::new(0);
    let workers = threads.clamp(1, jobs.len());
    let (tx, rx) = mpsc::channel::<(usize, TrialResult)>();
    let mut rows: Vec<TrialResult> = Vec::with_capacity(jobs.len());
    std::thread::scope(|s| -> Result<()> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (jobs, next) = (&jobs, &next);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(c, t)) = jobs.get(i) else { break };
                if tx.send((i, run_trial(cfg, c, t))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending: BTreeMap<usize, TrialResult> = BTreeMap::new();
        for (i, r) in rx {
            pending.insert(i, r);
            while let Some(r) = pending.remove(&rows.len()) {
                writeln!(
                    file,
                    "{},{},{},{},{},{},{},,,{:.3}",
                    r.criterion.name(),
                    spec.d,
                    spec.m,
                    r.trial,
                    r.status,
                    fmt_opt(r.r2),
                    fmt_opt(r.mcc),
                    r.wall_ms
                )
                .and_then(|_| file.flush())
                .map_err(io)?;
                rows.push(r);
            }
        }
        Ok(())
    })?;

    let aggregates = aggregate(&rows, &cfg.criteria);
    for a in &aggregates {
        writeln!(
            file,
            "{},{},{},mean,n_ok={},{:?},{:?},{:?},{:?},",
            a.criterion.name(),
            spec.d,
            spec.m,
            a.ok_trials,
            a.r2_mean,
            a.mcc_mean,
            a.r2_std,
            a.mcc_std
        )
        .map_err(io)?;
    }
    file.flush().map_err(io)?;
    Ok(BenchmarkSummary { rows, aggregates, csv_path })
}

/// Process exit code for an error: 3 for failures during a run, 2 for bad
/// input or configuration.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::TrainingAborted { .. }
        | Error::SingularJacobian
        | Error::NotPositiveDefinite { .. }
        | Error::NonFiniteEvaluation(_)
        | Error::ZeroVariance(_) => 3,
        _ => 2,
    }
}
