use std::hint::black_box;

use aci_core::channel::{combine, sample_hop1, sample_hop2};
use aci_core::config::ExperimentConfig;
use aci_core::engine;
use aci_core::policy::{decide, PolicyKind, Snapshot};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn channel_draw(c: &mut Criterion) {
    let cfg = ExperimentConfig::default();
    let (h1, h2, radio) = (cfg.hop1(), cfg.hop2(), cfg.radio());
    let (o1, o2) = (h1.optics(), h2.optics());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.bench_function("channel_draw", |b| {
        b.iter(|| {
            let d1 = sample_hop1(&h1, &o1, &mut rng);
            let d2 = sample_hop2(&h2, &o2, &mut rng);
            black_box(combine(d1, d2, cfg.channel.rho, &radio))
        })
    });
}

fn policy_decide(c: &mut Criterion) {
    let cfg = ExperimentConfig::default().policy_config();
    let backlog = [4_000_000u64, 12_000_000, 0, 9_000_000, 700_000, 30_000_000];
    let hol_age = [40u64, 900, 0, 300, 12, 2000];
    let rate = [2.4e9, 2.3e9, 0.0, 2.5e9, 1.9e9, 2.4e9];
    let tau = [Some(0.0), Some(120.0), None, Some(180.0), Some(125.0), Some(60.0)];
    let affinity = [1.0, 0.66, 0.33, 0.0, 0.33, 0.66];
    let snap = Snapshot {
        current: 0,
        locked: true,
        backlog: &backlog,
        hol_age: &hol_age,
        rate: &rate,
        tau: &tau,
        affinity: &affinity,
        slot_len: 10.41e-3,
    };
    for kind in [PolicyKind::MaxWeight, PolicyKind::Aci, PolicyKind::AciAge] {
        c.bench_function(&format!("decide_{kind}"), |b| b.iter(|| black_box(decide(kind, black_box(&snap), &cfg))));
    }
}

fn short_sim(c: &mut Criterion) {
    let cfg = ExperimentConfig::default().with_overrides(&["horizon=5000"]).unwrap();
    let mut g = c.benchmark_group("sim");
    g.sample_size(10);
    g.bench_function("aci_fso_5000_slots", |b| b.iter(|| black_box(engine::run(&cfg, 1).unwrap().summary())));
    g.finish();
}

criterion_group!(benches, channel_draw, policy_decide, short_sim);
criterion_main!(benches);
