//! Assembled batch gradients against central finite differences.

use spikte_core::kg::{KnowledgeGraph, Triple, Vocabularies};
use spikte_core::model::ModelKind;
use spikte_core::scoring::ScoreKind;
use spikte_core::spiketrain::NormMode;
use spikte_core::train::{self, batch_gradient, LossKind, TrainConfig};
use spikte_core::{Exec, Model};

fn toy_kg() -> KnowledgeGraph {
    let mut v = Vocabularies::default();
    for e in ["a", "b", "c", "d", "e"] {
        v.entities.intern(e);
    }
    v.relations.intern("r");
    v.relations.intern("q");
    let train = vec![
        Triple::new(0, 0, 1),
        Triple::new(1, 0, 2),
        Triple::new(2, 1, 3),
        Triple::new(3, 1, 4),
        Triple::new(4, 0, 0),
    ];
    KnowledgeGraph::from_splits(v, train, vec![], vec![])
}

fn negatives(kg: &KnowledgeGraph) -> Vec<Triple> {
    kg.train
        .iter()
        .flat_map(|t| {
            [
                Triple::new((t.subject + 1) % 5, t.predicate, t.object),
                Triple::new(t.subject, t.predicate, (t.object + 2) % 5),
            ]
        })
        .collect()
}

fn objective(model: &Model, cfg: &TrainConfig, kg: &KnowledgeGraph, negs: &[Triple]) -> f64 {
    let g = batch_gradient(model, cfg, &kg.train, negs, Exec::Sequential).unwrap();
    g.loss + g.penalty
}

/// Compare every analytic partial with a central difference, skipping
/// entries where one-sided differences disagree (kinks of |.| or max).
fn check(kind: ModelKind, cfg: &TrainConfig) {
    let kg = toy_kg();
    let negs = negatives(&kg);
    let model = train::init_model(&kg, kind, cfg).unwrap();
    let grad = batch_gradient(&model, cfg, &kg.train, &negs, Exec::Sequential).unwrap();
    let h = 1e-6;
    let f0 = objective(&model, cfg, &kg, &negs);
    let mut checked = 0;
    for table in 0..2 {
        let len = if table == 0 {
            model.entities.as_slice().len()
        } else {
            model.relations.as_slice().len()
        };
        for i in 0..len {
            if table == 1 && model.frozen_relations.contains(&(i / model.relations.cols())) {
                continue;
            }
            let eval = |delta: f64| {
                let mut m = model.clone();
                let slot = if table == 0 {
                    &mut m.entities.as_mut_slice()[i]
                } else {
                    &mut m.relations.as_mut_slice()[i]
                };
                *slot += delta;
                objective(&m, cfg, &kg, &negs)
            };
            let (fp, fm) = (eval(h), eval(-h));
            let (right, left) = ((fp - f0) / h, (f0 - fm) / h);
            if (right - left).abs() > 1e-3 * right.abs().max(left.abs()).max(1e-6) {
                continue;
            }
            let numeric = (fp - fm) / (2.0 * h);
            let analytic = if table == 0 {
                grad.entities.as_slice()[i]
            } else {
                grad.relations.as_slice()[i]
            };
            let scale = numeric.abs().max(analytic.abs());
            assert!(
                scale < 1e-9 || (numeric - analytic).abs() / scale < 1e-3,
                "{kind:?} table {table} index {i}: analytic {analytic} numeric {numeric}"
            );
            checked += 1;
        }
    }
    assert!(checked > 0);
}

fn base(dim: usize) -> TrainConfig {
    TrainConfig {
        dim,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn spikte_margin_loss() {
    for score in [ScoreKind::Asym, ScoreKind::Sym] {
        for norm_mode in [NormMode::Normalized, NormMode::Unit] {
            let cfg = TrainConfig {
                margin: 1.0,
                tau_ref: 0.03,
                score,
                norm_mode,
                ..base(4)
            };
            check(ModelKind::Spikte, &cfg);
        }
    }
}

#[test]
fn spikte_soft_margin_with_l2_and_frozen_relation() {
    let cfg = TrainConfig {
        loss: LossKind::SoftMargin,
        l2: 0.01,
        freeze_relations: vec!["q".into()],
        ..base(4)
    };
    check(ModelKind::Spikte, &cfg);
}

#[test]
fn transe_margin_loss() {
    let cfg = TrainConfig {
        margin: 1.0,
        ..base(4)
    };
    check(ModelKind::Transe, &cfg);
}

#[test]
fn rescal_pointwise_losses() {
    for loss in [LossKind::Mse, LossKind::Bce] {
        let cfg = TrainConfig {
            loss,
            l2: 1e-3,
            ..base(3)
        };
        check(ModelKind::Rescal, &cfg);
    }
}

#[test]
fn neuron_margin_loss_with_spike_penalty() {
    let mut cfg = TrainConfig {
        margin: 1.0,
        tau_ref: 0.1,
        weight_mean: 0.6,
        weight_std: 0.3,
        ..base(3)
    };
    cfg.neuron.input_size = 6;
    check(ModelKind::Neuron, &cfg);
}
