use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spikte_core::kg::KnowledgeGraph;
use spikte_core::train::{self, sample_negatives, TrainConfig};
use spikte_core::{evaluate, Exec, ModelKind};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn umls() -> KnowledgeGraph {
    KnowledgeGraph::open("umls").expect("bundled UMLS")
}

fn batch_gradient(c: &mut Criterion) {
    let kg = umls();
    let mut group = c.benchmark_group("batch_gradient");
    for kind in [ModelKind::Spikte, ModelKind::Rescal, ModelKind::Neuron] {
        let cfg = TrainConfig {
            dim: 32,
            ..TrainConfig::default()
        };
        let model = train::init_model(&kg, kind, &cfg).unwrap();
        let batch = &kg.train[..cfg.batch_size];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut negatives = Vec::new();
        for &t in batch {
            sample_negatives(t, cfg.num_negatives, kg.num_entities(), &mut rng, &mut negatives);
        }
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(format!("{kind:?}"), name), &exec, |b, &exec| {
                b.iter(|| train::batch_gradient(&model, &cfg, batch, &negatives, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let kg = umls();
    let cfg = TrainConfig::default();
    let model = train::init_model(&kg, ModelKind::Spikte, &cfg).unwrap();
    let snap = model.snapshot(Exec::Parallel).unwrap();
    let mut group = c.benchmark_group("evaluate_test");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| evaluate(&snap, &kg.test, &kg.filter, exec).unwrap()));
    }
    group.finish();
}

fn epoch(c: &mut Criterion) {
    let kg = umls();
    let cfg = TrainConfig {
        max_epochs: 1,
        ..TrainConfig::default()
    };
    let kg_no_valid = KnowledgeGraph::from_splits(kg.vocab.clone(), kg.train.clone(), vec![], vec![]);
    let mut group = c.benchmark_group("train_epoch");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| train::fit(&kg_no_valid, ModelKind::Spikte, &cfg, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, batch_gradient, evaluation, epoch);
criterion_main!(benches);
