use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use relaysel_core::e2e::{generate_network, run_transfer_with, E2EPolicy, ProgressModels, ProtocolTiming};
use relaysel_core::model::BeliefKind;
use relaysel_core::onehop::{build_policy, evaluate, generate_episodes, OneHopConfig};
use relaysel_core::threshold::solve_phi;
use relaysel_core::{CeilingRule, InitialBelief, PolicyKind, RewardDistribution, SolverGrid, WakeModel};

fn onehop(c: &mut Criterion) {
    let cfg = OneHopConfig {
        model: WakeModel::new(1.0).unwrap(),
        dist: RewardDistribution::preset("progress10").unwrap(),
        belief: InitialBelief::new(BeliefKind::TruncatedPoisson { lambda: 10.0 }, 50).unwrap(),
        policies: PolicyKind::ONE_HOP.to_vec(),
        etas: vec![5.0],
        replications: 10_000,
        master_seed: 1,
        grid: SolverGrid::default(),
        ceiling: CeilingRule::default(),
    };
    let episodes = generate_episodes(&cfg);
    let tables = Arc::new(solve_phi(cfg.grid, &cfg.dist, &cfg.model, 5.0, 50).unwrap());
    let mut g = c.benchmark_group("onehop_10k_episodes");
    g.sample_size(10);
    g.bench_function("generate", |b| b.iter(|| generate_episodes(black_box(&cfg))));
    for &kind in &cfg.policies {
        let policy = build_policy(&cfg, kind, 5.0, Some(tables.clone())).unwrap();
        g.bench_function(kind.name(), |b| {
            b.iter(|| evaluate(&policy, black_box(&episodes), &cfg.model, &cfg.belief).unwrap())
        });
    }
    g.finish();
}

fn e2e(c: &mut Criterion) {
    let net = generate_network(10.0, 5.0, 1.0, 1.0, 7).unwrap();
    let timing = ProtocolTiming::new(0.005, 0.03, 1.0).unwrap();
    let mut g = c.benchmark_group("e2e");
    g.sample_size(10);
    g.bench_function("generate_network", |b| b.iter(|| generate_network(10.0, 5.0, 1.0, 1.0, black_box(7)).unwrap()));
    let models = ProgressModels::new(&net).unwrap();
    g.bench_function("progress_models", |b| b.iter(|| ProgressModels::new(black_box(&net)).unwrap()));
    for policy in E2EPolicy::ALL {
        let alphas = if policy.uses_threshold() {
            models.thresholds(&net, policy, 0.5, CeilingRule::default()).unwrap()
        } else {
            Vec::new()
        };
        g.bench_function(format!("transfer_{}", policy.name()), |b| {
            let mut transfer = 0u64;
            b.iter(|| {
                transfer += 1;
                let phases = net.resample_phases(3, transfer);
                run_transfer_with(&net, &timing, policy, &alphas, &phases).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, onehop, e2e);
criterion_main!(benches);
