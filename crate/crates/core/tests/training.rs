//! End-to-end training behaviour on small graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spikte_core::kg::{KnowledgeGraph, Triple, Vocabularies};
use spikte_core::model::ModelKind;
use spikte_core::spiketrain::{NormMode, SpikeTrain};
use spikte_core::train::{fit, AdamState, LossKind, TrainConfig};
use spikte_core::{Exec, ExperimentConfig};

fn ten_triples() -> KnowledgeGraph {
    let mut v = Vocabularies::default();
    for e in 0..8 {
        v.entities.intern(&format!("n{e}"));
    }
    v.relations.intern("next");
    v.relations.intern("skip");
    let mut train: Vec<Triple> = (0..7).map(|i| Triple::new(i, 0, i + 1)).collect();
    train.extend([Triple::new(0, 1, 2), Triple::new(2, 1, 4), Triple::new(4, 1, 6)]);
    KnowledgeGraph::from_splits(v, train, vec![], vec![])
}

fn small(loss: LossKind, seed: u64) -> TrainConfig {
    TrainConfig {
        dim: 8,
        batch_size: 5,
        num_negatives: 4,
        margin: 1.0,
        tau_ref: 0.03,
        max_epochs: 200,
        loss,
        seed,
        ..TrainConfig::default()
    }
}

fn reduction(kind: ModelKind, cfg: &TrainConfig) -> f64 {
    let out = fit(&ten_triples(), kind, cfg, Exec::Sequential).unwrap();
    assert_eq!(out.log.len(), 200);
    let first = out.log[0].train_loss;
    let last = out.log.last().unwrap().train_loss;
    1.0 - last / first
}

#[test]
fn loss_drops_by_ninety_percent_in_200_epochs() {
    for (kind, loss) in [
        (ModelKind::Spikte, LossKind::Margin),
        (ModelKind::Spikte, LossKind::SoftMargin),
        (ModelKind::Transe, LossKind::Margin),
        (ModelKind::Rescal, LossKind::Mse),
    ] {
        let r = reduction(kind, &small(loss, 1));
        assert!(r >= 0.9, "{kind:?}/{loss:?}: loss fell by only {:.1}%", 100.0 * r);
    }
}

#[test]
fn neuron_loss_drops_by_ninety_percent_in_200_epochs() {
    let mut cfg = small(LossKind::Margin, 1);
    cfg.learning_rate = 0.05;
    cfg.tau_ref = 0.1;
    cfg.neuron.input_size = 20;
    let r = reduction(ModelKind::Neuron, &cfg);
    assert!(r >= 0.9, "loss fell by only {:.1}%", 100.0 * r);
}

#[test]
fn same_seed_reproduces_the_run() {
    let kg = ten_triples();
    for kind in [ModelKind::Spikte, ModelKind::Rescal, ModelKind::Neuron] {
        let mut cfg = small(LossKind::Margin, 9);
        cfg.max_epochs = 20;
        cfg.neuron.input_size = 10;
        let a = fit(&kg, kind, &cfg, Exec::Parallel).unwrap();
        let b = fit(&kg, kind, &cfg, Exec::Sequential).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(
            serde_json::to_string(&a.model).unwrap(),
            serde_json::to_string(&b.model).unwrap()
        );
        cfg.seed = 10;
        let c = fit(&kg, kind, &cfg, Exec::Sequential).unwrap();
        assert_ne!(a.model.entities, c.model.entities);
    }
}

#[test]
fn random_optimizer_steps_keep_trains_ordered() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut params: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut adam = AdamState::new(params.len());
    for _ in 0..1000 {
        let grads: Vec<f64> = (0..params.len()).map(|_| rng.random_range(-10.0..10.0)).collect();
        adam.step("entities", &mut params, &grads, 0.1).unwrap();
        for mode in [NormMode::Normalized, NormMode::Unit] {
            let train = SpikeTrain::from_params(&params, mode, 0.03).unwrap();
            assert!(train.is_ordered());
        }
    }
}

#[test]
fn shipped_presets_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(!cfg.dataset.is_empty());
            n += 1;
        }
    }
    assert!(n >= 17);
}

#[test]
fn untrained_umls_models_rank_near_random() {
    let kg = KnowledgeGraph::open("umls").unwrap();
    for kind in [ModelKind::Spikte, ModelKind::Transe, ModelKind::Rescal] {
        let cfg = TrainConfig { tau_ref: 0.03, ..TrainConfig::default() };
        let model = spikte_core::train::init_model(&kg, kind, &cfg).unwrap();
        let snap = model.snapshot(Exec::Parallel).unwrap();
        let r = spikte_core::evaluate(&snap, &kg.test, &kg.filter, Exec::Parallel).unwrap();
        assert!(r.mrr < 0.1, "{kind:?}: fresh MRR {}", r.mrr);
    }
}
