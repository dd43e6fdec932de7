//! End-to-end training behavior on small synthetic mixtures.

use dica::mixtures::{gen_mixture, MixtureKind, MixtureSpec};
use dica::trainer::{train_auto, Criterion, TrainConfig};

/// After warm-up the volume term keeps pushing: the mean volume at the last
/// epoch is at least its value at the end of warm-up in most runs.
#[test]
fn volume_grows_after_warmup() {
    let mut grew = 0;
    let mut seen = Vec::new();
    for seed in 0..10 {
        let ds = gen_mixture(&MixtureSpec::new(MixtureKind::A, 2, 30, 30_000, seed)).unwrap();
        let cfg = TrainConfig { criterion: Criterion::Dica, seed, ..TrainConfig::default() };
        let (_, trace) = train_auto(&cfg, ds.observations(), 2).unwrap();
        let at_warmup = trace.records.iter().find(|r| r.epoch == cfg.warmup).unwrap().vol;
        let last = trace.last().unwrap().vol;
        seen.push((at_warmup, last));
        if last >= at_warmup {
            grew += 1;
        }
    }
    assert!(grew >= 8, "volume grew in {grew}/10 runs: {seen:?}");
}

#[test]
fn base_fits_linear_mixture() {
    let ds = gen_mixture(&MixtureSpec::new(MixtureKind::A, 2, 30, 5000, 3)).unwrap();
    let cfg = TrainConfig { criterion: Criterion::Base, seed: 3, ..TrainConfig::default() };
    let (_, trace) = train_auto(&cfg, ds.observations(), 2).unwrap();
    let recon = trace.last().unwrap().recon;
    assert!(recon <= 1e-3, "final recon {recon}");
}
