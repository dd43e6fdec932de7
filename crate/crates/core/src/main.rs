use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dica::cli::{self, ExperimentConfig};
use dica::error::{Error, Result};
use dica::geometry::DEFAULT_EXACT_TOL;

#[derive(Parser)]
#[command(name = "dica", version, about = "Jacobian-volume autoencoders for nonlinear mixture identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic mixture dataset.
    Generate(Common),
    /// Train an autoencoder on a dataset.
    Train(Common),
    /// Score a checkpoint against a dataset's latents.
    Eval(Common),
    /// Run generate → train → eval for every criterion and trial.
    Benchmark(Common),
    /// Certify the SDI condition for a gradient set.
    SdiCheck(SdiArgs),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Checkpoint file.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory (defaults to the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for benchmark.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct SdiArgs {
    /// CSV of gradient rows, with a header line.
    #[arg(long)]
    gradients: PathBuf,
    /// CSV holding the ball weights (one row or one column); all ones if absent.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_EXACT_TOL)]
    tol: f64,
    /// Also write the certificate to DIR/sdi.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli::seed_from_env()? {
        cfg.override_seed(seed);
    }
    Ok(cfg)
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

fn out_dir(c: &Common, cfg: &ExperimentConfig) -> PathBuf {
    c.out.clone().unwrap_or_else(|| cfg.output_dir.clone())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate(c) => {
            let cfg = config(&c)?;
            let out = out_dir(&c, &cfg);
            let ds = cli::cmd_generate(&cfg, &out)?;
            println!("wrote {} samples (d={}, m={}) to {}", ds.n_samples(), ds.spec().d, ds.spec().m, out.display());
        }
        Command::Train(c) => {
            let cfg = config(&c)?;
            let out = out_dir(&c, &cfg);
            let (_, trace) = cli::cmd_train(&cfg, need(&c.dataset, "dataset")?, &out)?;
            if let Some(r) = trace.last() {
                println!("epoch {}: recon {:.6e}, vol {:.4}, norm {:.4}", r.epoch, r.recon, r.vol, r.norm_raw);
            }
            println!("wrote {} and {}", out.join("checkpoint.txt").display(), out.join("trace.csv").display());
        }
        Command::Eval(c) => {
            let cfg = config(&c)?;
            let report =
                cli::cmd_eval(need(&c.checkpoint, "checkpoint")?, need(&c.dataset, "dataset")?, cfg.seed, c.out.as_deref())?;
            println!("{}", report.to_json());
        }
        Command::Benchmark(c) => {
            let cfg = config(&c)?;
            let summary = cli::cmd_benchmark(&cfg, &out_dir(&c, &cfg), c.threads)?;
            for a in &summary.aggregates {
                println!(
                    "{:<7} r2 {:.3} ± {:.3}  mcc {:.3} ± {:.3}  ({} ok)",
                    a.criterion.name(),
                    a.r2_mean,
                    a.r2_std,
                    a.mcc_mean,
                    a.mcc_std,
                    a.ok_trials
                );
            }
            println!("wrote {}", summary.csv_path.display());
        }
        Command::SdiCheck(a) => {
            let cert = cli::cmd_sdi_check(&a.gradients, a.weights.as_deref(), a.tol)?;
            let json = serde_json::to_string_pretty(&cert).expect("certificate serializes");
            if let Some(dir) = &a.out {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
                let p = dir.join("sdi.json");
                std::fs::write(&p, format!("{json}\n")).map_err(|e| Error::Io { path: p, source: e })?;
            }
            println!("{json}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Cli::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
