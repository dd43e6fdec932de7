//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! The training criteria run full-size experiments (several minutes on one
//! core). Set `DICA_ACCEPT_ONLY` to a comma-separated list of criterion
//! keys (`benchmark,ablation,trace,gradient,geometry,eval,determinism`) to
//! run a subset.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use dica::cli::{cmd_benchmark, Aggregate, ExperimentConfig};
use dica::eval::{hungarian, score};
use dica::geometry::{
    certify_sdi, check_det_bound, ellipsoid_in_polytope, hull_facets, mvie_weighted_l1, polar_weighted_l1,
    sign_vectors, vertex_enumerate, WeightedL1Ball, DEFAULT_EXACT_TOL,
};
use dica::mixtures::{gen_mixture, MixtureKind, MixtureSpec};
use dica::models::{
    loss_gradients, Activation, BatchObjective, BatchWorkspace, LogdetRidge, LossOptions, LossWeights, MlpParams,
    NormVariant, Phase, VolSurrogate,
};
use dica::numerics::{Matrix, Rng};
use dica::trainer::{train, Criterion, TrainConfig};
use nalgebra::DMatrix;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- training

const N_SEEDS: usize = 5;
/// Trials use seeds `BASE_SEED ^ trial`, disjoint from the seeds the
/// default hyperparameters were picked on (1 to 5).
const BASE_SEED: u64 = 100;

fn bench_config(kind: MixtureKind, d: usize, m: usize, criteria: Vec<Criterion>) -> ExperimentConfig {
    ExperimentConfig {
        mixture: Some(MixtureSpec::new(kind, d, m, 30_000, BASE_SEED)),
        train: TrainConfig::default(),
        n_trials: N_SEEDS,
        seed: BASE_SEED,
        output_dir: "out".into(),
        criteria,
    }
}

fn run_bench(cfg: &ExperimentConfig) -> Result<Vec<Aggregate>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s = cmd_benchmark(cfg, dir.path(), 1).map_err(|e| e.to_string())?;
    for a in &s.aggregates {
        ensure(a.ok_trials == cfg.n_trials, || format!("{}: only {} trials succeeded", a.criterion.name(), a.ok_trials))?;
    }
    Ok(s.aggregates)
}

fn r2_of(aggs: &[Aggregate], c: Criterion) -> f64 {
    aggs.iter().find(|a| a.criterion == c).map_or(f64::NAN, |a| a.r2_mean)
}

/// Mean R² of dica per mixture at (3, 40); shared with the ablation.
struct BenchResults {
    dica_c: f64,
}

fn benchmark_ordering(shared: &mut Option<BenchResults>) -> Outcome {
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for kind in [MixtureKind::A, MixtureKind::B, MixtureKind::C] {
        let aggs = run_bench(&bench_config(kind, 3, 40, vec![Criterion::Dica, Criterion::Base]))?;
        let (dica, base) = (r2_of(&aggs, Criterion::Dica), r2_of(&aggs, Criterion::Base));
        lines.push(format!("{kind:?} dica {dica:.3} base {base:.3}"));
        if kind != MixtureKind::C && !(dica >= 0.80) {
            failures.push(format!("{kind:?} dica R² {dica:.3} < 0.80"));
        }
        if !(dica - base >= 0.10) {
            failures.push(format!("{kind:?} gap {:.3} < 0.10", dica - base));
        }
        if kind == MixtureKind::C {
            *shared = Some(BenchResults { dica_c: dica });
        }
    }
    let summary = lines.join("; ");
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", failures.join("; ")))
    }
}

fn ablation(shared: &Option<BenchResults>) -> Outcome {
    let wide = match shared {
        Some(b) => b.dica_c,
        None => r2_of(&run_bench(&bench_config(MixtureKind::C, 3, 40, vec![Criterion::Dica]))?, Criterion::Dica),
    };
    let narrow = r2_of(&run_bench(&bench_config(MixtureKind::C, 3, 3, vec![Criterion::Dica]))?, Criterion::Dica);
    let msg = format!("Mixture C dica (3,40) {wide:.3} vs (3,3) {narrow:.3}");
    ensure(wide - narrow >= 0.15, || format!("{msg}: gap {:.3} < 0.15", wide - narrow))?;
    Ok(msg)
}

fn trace_speed() -> Outcome {
    let mut lines = Vec::new();
    for run in 0..3u64 {
        let ds = gen_mixture(&MixtureSpec::new(MixtureKind::C, 3, 40, 30_000, run)).map_err(|e| e.to_string())?;
        let mut ms = [0.0; 2];
        for (k, surrogate) in [VolSurrogate::Trace, VolSurrogate::Logdet].into_iter().enumerate() {
            let cfg = TrainConfig { epochs: 12, warmup: 2, seed: run, vol_surrogate: surrogate, ..TrainConfig::default() };
            let (_, trace) = train::<f64>(&cfg, ds.observations(), 3).map_err(|e| e.to_string())?;
            ms[k] = trace.mean_grad_ms();
        }
        lines.push(format!("trace {:.1} ms vs logdet {:.1} ms", ms[0], ms[1]));
        ensure(ms[0] < ms[1], || format!("run {run}: {}", lines.join("; ")))?;
    }
    Ok(lines.join("; "))
}

// ---------------------------------------------------------------- gradients

fn below(rng: &mut Rng, n: usize) -> usize {
    ((rng.uniform() * n as f64) as usize).min(n - 1)
}

fn tanh_mlp(rng: &mut Rng, i: usize, h: usize, o: usize) -> MlpParams<f64> {
    let w1 = Matrix::from_fn(h, i, |_, _| rng.normal() / (i as f64).sqrt());
    let b1 = (0..h).map(|_| 0.3 * rng.normal()).collect();
    let w2 = Matrix::from_fn(o, h, |_, _| rng.normal() / (h as f64).sqrt());
    let b2 = (0..o).map(|_| 0.3 * rng.normal()).collect();
    MlpParams::new(w1, b1, w2, b2, Activation::Tanh).unwrap()
}

/// Independent forward pass: returns `(x̂, J)` with `J = W₂ diag(1 − tanh²) W₁`
/// of the decoder at `ŝ = enc(x)`.
fn oracle_forward(enc: &MlpParams<f64>, dec: &MlpParams<f64>, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let mat = |m: &Matrix<f64>| DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
    let vec = |v: &[f64]| DMatrix::from_column_slice(v.len(), 1, v);
    let hidden = |p: &MlpParams<f64>, z: &DMatrix<f64>| (mat(p.w1()) * z + vec(p.b1())).map(f64::tanh);
    let xv = vec(x);
    let s = mat(enc.w2()) * hidden(enc, &xv) + vec(enc.b2());
    let a = hidden(dec, &s);
    let xhat = mat(dec.w2()) * &a + vec(dec.b2());
    let dz = DMatrix::from_diagonal(&a.column(0).map(|t| 1.0 - t * t));
    let j = mat(dec.w2()) * dz * mat(dec.w1());
    (xhat.as_slice().to_vec(), j)
}

fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

struct Setting {
    phase: Phase,
    variant: NormVariant,
    surrogate: VolSurrogate,
    cap: f64,
}

/// `[recon, vol, norm, sparse, ima]` at one sample.
fn oracle_terms(enc: &MlpParams<f64>, dec: &MlpParams<f64>, x: &[f64], s: &Setting) -> [f64; 5] {
    let (xhat, j) = oracle_forward(enc, dec, x);
    let recon: f64 = x.iter().zip(&xhat).map(|(a, b)| (a - b).powi(2)).sum();
    let d = j.ncols();
    let gram = j.transpose() * &j;
    let logdet = gram.determinant().ln();
    let vol = match s.surrogate {
        VolSurrogate::Logdet => logdet,
        VolSurrogate::Trace => d as f64 * j.norm_squared() - j.column_sum().norm_squared(),
    };
    let l1: f64 = j.iter().map(|v| v.abs()).sum();
    let norm = match (s.phase, s.variant) {
        (Phase::Warmup, _) => l1,
        (Phase::Constrained, NormVariant::MatrixL1) => softplus(l1 - s.cap),
        (Phase::Constrained, NormVariant::Rowwise) => {
            j.row_iter().map(|r| softplus(r.iter().map(|v| v.abs()).sum::<f64>() - s.cap)).sum()
        }
    };
    let ima = j.column_iter().map(|c| c.norm().ln()).sum::<f64>() - 0.5 * logdet;
    [recon, vol, norm, l1, ima]
}

fn central_diff(f: impl Fn(&[f64]) -> f64, at: &[f64]) -> Vec<f64> {
    let h = 1e-5;
    let mut p = at.to_vec();
    (0..at.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    diff / b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-8)
}

fn gradient_oracle() -> Outcome {
    let mut rng = Rng::new(2024);
    let mut worst = 0.0f64;
    for cfg_i in 0..100 {
        let d = 1 + below(&mut rng, 3);
        let m = d + below(&mut rng, 4);
        // a decoder narrower than d has a rank-deficient Jacobian
        let (he, hd) = (2 + below(&mut rng, 5), d + below(&mut rng, 4));
        let enc = tanh_mlp(&mut rng, m, he, d);
        let dec = tanh_mlp(&mut rng, d, hd, m);
        let ne = enc.param_count();
        let mut flat = enc.to_flat();
        dec.flatten_into(&mut flat);
        let split = |p: &[f64]| (enc.with_flat(&p[..ne]), dec.with_flat(&p[ne..]));

        let phase = if below(&mut rng, 2) == 0 { Phase::Warmup } else { Phase::Constrained };
        let variant = if below(&mut rng, 2) == 0 { NormVariant::MatrixL1 } else { NormVariant::Rowwise };
        let surrogate = if below(&mut rng, 2) == 0 { VolSurrogate::Logdet } else { VolSurrogate::Trace };
        let b = 1 + below(&mut rng, 3);
        let xs: Vec<f64> = (0..b * m).map(|_| rng.normal()).collect();
        let (_, j0) = oracle_forward(&enc, &dec, &xs[..m]);
        let cap = match variant {
            NormVariant::MatrixL1 => 0.9 * j0.iter().map(|v| v.abs()).sum::<f64>(),
            NormVariant::Rowwise => 0.9 * j0.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max),
        };
        let s = Setting { phase, variant, surrogate, cap };
        let w = [rng.uniform_range(0.1, 1.0), rng.uniform_range(0.1, 1.0), rng.uniform_range(0.1, 1.0), rng.uniform_range(0.1, 1.0)];
        let weights = LossWeights { lambda_vol: w[0], lambda_norm: w[1], lambda_sp: w[2], lambda_ima: w[3] };
        let opts = LossOptions { surrogate, norm_variant: variant };
        let total = |t: [f64; 5], rw: f64| rw * t[0] - w[0] * t[1] + w[1] * t[2] + w[2] * t[3] + w[3] * t[4];

        // every term at a single sample
        let x = &xs[..m];
        let g = loss_gradients(&enc, &dec, x, &weights, opts, cap, phase).map_err(|e| format!("config {cfg_i}: {e}"))?;
        for (which, analytic) in [&g.recon, &g.vol, &g.norm, &g.sparse, &g.ima, &g.total].into_iter().enumerate() {
            if which == 4 && d == 1 {
                // one column: the contrast is identically zero
                let n = analytic.iter().map(|v| v.abs()).fold(0.0, f64::max);
                ensure(n <= 1e-12, || format!("config {cfg_i}: constant term has gradient {n:.2e}"))?;
                continue;
            }
            let fd = central_diff(
                |p| {
                    let (e, dd) = split(p);
                    let t = oracle_terms(&e, &dd, x, &s);
                    if which < 5 {
                        t[which]
                    } else {
                        total(t, 1.0)
                    }
                },
                &flat,
            );
            let err = rel_err(analytic, &fd);
            worst = worst.max(err);
            ensure(err <= 1e-4, || {
                format!("config {cfg_i} term {which} (d={d}, m={m}, {phase:?}, {variant:?}, {surrogate:?}): rel err {err:.2e}")
            })?;
        }

        // the batched training objective
        let rw = rng.uniform_range(0.05, 1.0);
        let obj = BatchObjective { weights, options: opts, phase, c_cap: cap, ridge: LogdetRidge::None, recon_weight: rw };
        let mut grad = vec![0.0; flat.len()];
        let stats = BatchWorkspace::new().gradient(&enc, &dec, &xs, b, &obj, &mut grad);
        ensure(stats.skipped == 0, || format!("config {cfg_i}: batch skipped samples"))?;
        let fd = central_diff(
            |p| {
                let (e, dd) = split(p);
                xs.chunks(m).map(|x| total(oracle_terms(&e, &dd, x, &s), rw)).sum::<f64>() / b as f64
            },
            &flat,
        );
        let err = rel_err(&grad, &fd);
        worst = worst.max(err);
        ensure(err <= 1e-4, || format!("config {cfg_i} batch: rel err {err:.2e}"))?;
    }
    Ok(format!("100 tanh configurations, worst relative error {worst:.2e}"))
}

// ---------------------------------------------------------------- geometry

fn same_sets(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) -> bool {
    a.len() == b.len() && a.iter().all(|x| b.iter().any(|y| x.iter().zip(y).all(|(p, q)| (p - q).abs() <= tol)))
}

fn rows(m: &Matrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(<[f64]>::to_vec).collect()
}

fn geometry_oracle() -> Outcome {
    let mut rng = Rng::new(77);
    // MVIE touches every facet of the weighted L1 ball
    for d in 1..=5 {
        let w: Vec<f64> = (0..d).map(|_| rng.uniform_range(0.1, 5.0)).collect();
        let ball = WeightedL1Ball::new(w).map_err(|e| e.to_string())?;
        let e = mvie_weighted_l1(&ball);
        let p = ball.to_hpolytope();
        for a in p.normals().row_iter() {
            let s = e.support(a);
            ensure((s - 1.0).abs() <= 1e-10, || format!("MVIE support {s} on a facet, d={d}"))?;
        }
        ensure(ellipsoid_in_polytope(&e, &p).abs() <= 1e-10, || format!("MVIE margin nonzero, d={d}"))?;

        // polar round trip; the polar's vertices are the ball's facet normals
        let polar = polar_weighted_l1(&ball);
        ensure(polar.polar() == ball, || format!("polar round trip failed, d={d}"))?;
        ensure(same_sets(&polar.vertices(), &rows(p.normals()), 1e-12), || format!("polar vertices, d={d}"))?;
    }

    // hull → vertices → hull
    let mut hulls = 0;
    for d in 2..=4 {
        for _ in 0..5 {
            let pts = Matrix::from_fn(30, d, |_, _| rng.uniform_range(-1.0, 1.0));
            let Ok(p) = hull_facets(&pts) else { continue };
            let v = vertex_enumerate(&p).map_err(|e| e.to_string())?;
            let gap = |x: &Vec<f64>| {
                rows(&pts)
                    .iter()
                    .map(|r| r.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                    .fold(f64::INFINITY, f64::min)
            };
            let dist = v.iter().map(gap).fold(0.0, f64::max);
            ensure(dist <= 1e-9, || {
                format!("vertex {dist:.2e} away from every input point, d={d}")
            })?;
            let back = hull_facets(&Matrix::from_rows(&v).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            ensure(same_sets(&rows(p.normals()), &rows(back.normals()), 1e-8), || format!("hull round trip, d={d}"))?;
            hulls += 1;
        }
    }
    ensure(hulls >= 10, || format!("only {hulls} random hulls had the origin inside"))?;

    // certificates
    let diamond = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap();
    let c = certify_sdi(&diamond, &WeightedL1Ball::unit(2), DEFAULT_EXACT_TOL).map_err(|e| e.to_string())?;
    ensure(c.satisfied, || "diamond not certified".into())?;
    let orthant = Matrix::from_rows(&[[0.5, 0.1], [0.1, 0.5], [0.3, 0.3], [0.2, 0.6], [0.6, 0.2]]).unwrap();
    let c = certify_sdi(&orthant, &WeightedL1Ball::unit(2), DEFAULT_EXACT_TOL).map_err(|e| e.to_string())?;
    ensure(!c.satisfied, || "positive orthant certified".into())?;

    // determinant bound: scale h until max_u ‖hᵀu‖ = √d, then |det h| < 1
    let mut violations = 0;
    for i in 0..10_000 {
        let d = 1 + i % 5;
        let h = Matrix::from_fn(d, d, |_, _| rng.normal());
        let peak = sign_vectors(d)
            .iter()
            .map(|u| h.tr_mat_vec(u).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let h = h.scale((d as f64).sqrt() / peak);
        let r = check_det_bound(&h).map_err(|e| e.to_string())?;
        if d > 1 && !(r.bound_holds && r.det.abs() < 1.0) || d == 1 && (r.det.abs() - 1.0).abs() > 1e-12 {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} determinant-bound violations"))?;
    Ok("MVIE, polar, hull/vertex, certificates, 10⁴ determinant-bound draws".into())
}

// ---------------------------------------------------------------- evaluation

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn eval_oracle() -> Outcome {
    let mut rng = Rng::new(99);
    let (n, d) = (2000, 4);
    let truth = Matrix::from_fn(n, d, |_, _| rng.uniform_range(-1.0, 1.0));
    let perm = [2usize, 0, 3, 1];
    let sign = [1.0, -1.0, -1.0, 1.0];
    // estimate column perm[i] holds sign·(truth_i)³
    let mut est = Matrix::zeros(n, d);
    for r in 0..n {
        for i in 0..d {
            est[(r, perm[i])] = sign[i] * truth[(r, i)].powi(3);
        }
    }
    let rep = score(&truth, &est, 5).map_err(|e| e.to_string())?;
    ensure(rep.permutation == perm, || format!("permutation {:?} != {perm:?}", rep.permutation))?;
    ensure(rep.mean_r2 >= 0.99, || format!("mean R² {}", rep.mean_r2))?;

    let perms: Vec<Vec<Vec<usize>>> = (0..=6).map(permutations).collect();
    for t in 0..1000 {
        let k = 1 + t % 6;
        let cost = Matrix::from_fn(k, k, |_, _| rng.uniform());
        let total = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum::<f64>();
        let best = perms[k].iter().map(|p| total(p)).fold(f64::INFINITY, f64::min);
        let got = hungarian(&cost);
        let mut seen = got.clone();
        seen.sort_unstable();
        ensure(seen == (0..k).collect::<Vec<_>>(), || format!("trial {t}: not a permutation {got:?}"))?;
        ensure((total(&got) - best).abs() <= 1e-12, || format!("trial {t}: cost {} vs optimum {best}", total(&got)))?;
    }
    Ok(format!("ambiguity class mean R² {:.4}, 1000 Hungarian trials optimal", rep.mean_r2))
}

// ---------------------------------------------------------------- determinism

fn detail_rows(text: &str) -> Vec<String> {
    text.lines()
        .skip(1)
        .filter(|l| l.split(',').nth(3) != Some("mean"))
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect()
}

fn determinism() -> Outcome {
    let cfg = ExperimentConfig {
        mixture: Some(MixtureSpec::new(MixtureKind::B, 2, 8, 400, 11)),
        train: TrainConfig { epochs: 6, warmup: 2, batch_size: 64, hidden: 16, ..TrainConfig::default() },
        n_trials: 3,
        seed: 11,
        output_dir: "out".into(),
        criteria: vec![Criterion::Dica, Criterion::Base, Criterion::Ima],
    };
    let mut outputs = Vec::new();
    for threads in [1, 3] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let s = cmd_benchmark(&cfg, dir.path(), threads).map_err(|e| e.to_string())?;
        outputs.push(detail_rows(&std::fs::read_to_string(&s.csv_path).map_err(|e| e.to_string())?));
    }
    ensure(outputs[0].len() == 9, || format!("{} detail rows", outputs[0].len()))?;
    ensure(outputs[0] == outputs[1], || "detail rows differ between runs".into())?;
    Ok("9 detail rows identical across two runs (1 and 3 threads)".into())
}

// ---------------------------------------------------------------- driver

fn main() {
    let only: Option<Vec<String>> =
        std::env::var("DICA_ACCEPT_ONLY").ok().map(|s| s.split(',').map(|k| k.trim().to_string()).collect());
    let wanted = |key: &str| only.as_ref().is_none_or(|o| o.iter().any(|k| k == key));
    let mut shared = None;
    let mut failed = 0;
    let mut run = |key: &str, name: &str, f: &mut dyn FnMut() -> Outcome| {
        if !wanted(key) {
            println!("SKIP {name}");
            return;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {name}: {msg} ({secs:.1}s)"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg} ({secs:.1}s)");
            }
        }
    };
    run("gradient", "gradient oracle", &mut gradient_oracle);
    run("geometry", "geometry oracle", &mut geometry_oracle);
    run("eval", "evaluation oracle", &mut eval_oracle);
    run("determinism", "benchmark determinism", &mut determinism);
    run("trace", "trace surrogate speed", &mut trace_speed);
    run("benchmark", "benchmark ordering", &mut || benchmark_ordering(&mut shared));
    run("ablation", "ablation over m/d", &mut || ablation(&shared));
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
