use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use provenance_core::eval::{auprc_scores, score_prefixes};
use provenance_core::event::Vocabulary;
use provenance_core::monitors::{encode_labeled, extract_dfa, train, DfaParams, MonitorKind, TrainConfig};
use provenance_core::responsibility::{estimate_kappa, KappaMode};
use provenance_core::sim::{generate, reference_scenario};

const HORIZON: usize = 3;

fn auprc(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let scores: Vec<f64> = (0..100_000).map(|_| rng.random()).collect();
    let labels: Vec<bool> = (0..100_000).map(|_| rng.random_bool(0.07)).collect();
    c.bench_function("auprc 100k prefixes", |b| b.iter(|| auprc_scores(black_box(&scores), black_box(&labels))));
}

fn kappa(c: &mut Criterion) {
    let scenario = reference_scenario();
    let harm = scenario.harms[0].id.clone();
    c.bench_function("exact kappa, reference scenario", |b| {
        b.iter(|| estimate_kappa(black_box(&scenario), "skill-developer", &harm, KappaMode::Exact))
    });
}

fn monitors(c: &mut Criterion) {
    let data = generate(&reference_scenario(), 400).expect("reference scenario generates");
    let (train_set, test) = data.split();
    let config = TrainConfig {
        horizon: HORIZON,
        epochs: 2,
        ..TrainConfig::default()
    };
    let vocab = Vocabulary::build(train_set.iter().flat_map(|t| &t.steps), config.max_terms).unwrap();
    let encoded = encode_labeled(&vocab, &train_set, HORIZON).unwrap();
    let (fsm, _) = train(MonitorKind::SoftFsm, &encoded, &vocab, &config).unwrap();
    let params = DfaParams {
        horizon: HORIZON,
        ..DfaParams::default()
    };
    let dfa = extract_dfa(&fsm.projection, &vocab, &train_set, &params).unwrap();

    let mut group = c.benchmark_group("monitors");
    group.sample_size(10);
    group.bench_function("score prefixes, soft-fsm", |b| {
        b.iter(|| score_prefixes(&fsm, &vocab, black_box(&test), HORIZON))
    });
    group.bench_function("score prefixes, dfa", |b| {
        b.iter(|| score_prefixes(&dfa, &vocab, black_box(&test), HORIZON))
    });
    group.bench_function("extract dfa", |b| {
        b.iter(|| extract_dfa(&fsm.projection, &vocab, black_box(&train_set), &params))
    });
    group.finish();
}

criterion_group!(benches, auprc, kappa, monitors);
criterion_main!(benches);
