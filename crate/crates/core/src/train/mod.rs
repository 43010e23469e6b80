//! Training loop: negative sampling, loss, analytic gradients, Adam, early stopping.
//!
//! Batches are processed sequentially. Inside a batch, the per-positive
//! gradient contributions are computed in parallel and reduced in batch
//! order, so a run is bit-for-bit reproducible from its seed regardless
//! of the thread count.

pub mod adam;
pub mod loss;
pub mod sampler;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::AdamState;
pub use loss::{bce_logit_loss, margin_ranking_loss, mse_loss, soft_margin_loss, LossKind};
pub use sampler::{corrupt, sample_negatives};

use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::kg::{KnowledgeGraph, Triple};
use crate::matrix::Matrix;
use crate::model::{normalize_rows, Model, ModelKind, Snapshot};
use crate::neuron::{spike_regularizer, NeuronConfig};
use crate::parallel::Exec;
use crate::scoring::ScoreKind;
use crate::spiketrain::NormMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub num_negatives: usize,
    pub margin: f64,
    pub l2: f64,
    pub tau_ref: f64,
    pub loss: LossKind,
    pub norm_mode: NormMode,
    pub score: ScoreKind,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Relation labels pinned at zero.
    pub freeze_relations: Vec<String>,
    pub neuron: NeuronConfig,
    /// Mean and standard deviation of the initial synaptic weights.
    pub weight_mean: f64,
    pub weight_std: f64,
    /// Strength of the spike-guarantee penalty for neuron models.
    pub spike_reg: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            learning_rate: 0.01,
            batch_size: 100,
            num_negatives: 10,
            margin: 0.0,
            l2: 0.0,
            tau_ref: 0.0,
            loss: LossKind::Margin,
            norm_mode: NormMode::Normalized,
            score: ScoreKind::Asym,
            max_epochs: 1000,
            patience: 20,
            seed: 0,
            freeze_relations: Vec::new(),
            // the refractory period is shared with the top-level key
            neuron: NeuronConfig {
                tau_ref: 0.0,
                ..NeuronConfig::default()
            },
            weight_mean: 0.2,
            weight_std: 1.0,
            spike_reg: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(key, "must be positive"))
            }
        };
        positive("dim", self.dim > 0)?;
        positive("learning_rate", self.learning_rate > 0.0)?;
        positive("batch_size", self.batch_size > 0)?;
        positive("num_negatives", self.num_negatives > 0)?;
        positive("max_epochs", self.max_epochs > 0)?;
        if self.patience < 1 {
            return Err(Error::config("patience", "must be >= 1"));
        }
        if !(self.margin >= 0.0) {
            return Err(Error::config("margin", "must be >= 0"));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::config("l2", "must be >= 0"));
        }
        if !(self.tau_ref >= 0.0) {
            return Err(Error::config("tau_ref", "must be >= 0"));
        }
        if !(self.spike_reg >= 0.0) {
            return Err(Error::config("spike_reg", "must be >= 0"));
        }
        if !(self.weight_std > 0.0) {
            return Err(Error::config("weight_std", "must be > 0"));
        }
        self.neuron.validate()
    }
}

/// One line of the per-epoch metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean data loss over the epoch's batches (regularizers excluded).
    pub train_loss: f64,
    pub valid_mrr: Option<f64>,
    pub valid_hits1: Option<f64>,
    pub valid_hits3: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation epoch (last epoch without a validation split).
    pub model: Model,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Initialize a model of `kind` from `cfg.seed` and train it.
pub fn fit(kg: &KnowledgeGraph, kind: ModelKind, cfg: &TrainConfig, exec: Exec) -> Result<TrainOutcome> {
    let model = init_model(kg, kind, cfg)?;
    train(kg, model, cfg, exec)
}

pub fn init_model(kg: &KnowledgeGraph, kind: ModelKind, cfg: &TrainConfig) -> Result<Model> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Model::init(kind, cfg, &kg.vocab, &mut rng)
}

pub fn train(kg: &KnowledgeGraph, model: Model, cfg: &TrainConfig, exec: Exec) -> Result<TrainOutcome> {
    train_with(kg, model, cfg, exec, |_| {})
}

/// As [`train`], calling `on_epoch` after each epoch.
pub fn train_with(
    kg: &KnowledgeGraph,
    model: Model,
    cfg: &TrainConfig,
    exec: Exec,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if kg.num_entities() < 2 {
        return Err(Error::config("dataset", "need at least two entities"));
    }
    let mut trainer = Trainer::new(kg, model, cfg, exec);
    let mut log = Vec::new();
    let mut best: Option<(f64, Model, usize)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        let train_loss = trainer.epoch(epoch)?;
        let mut record = EpochRecord {
            epoch,
            train_loss,
            valid_mrr: None,
            valid_hits1: None,
            valid_hits3: None,
        };
        if !kg.valid.is_empty() {
            let snap = trainer.model.training_snapshot(exec)?;
            let report = evaluate(&snap, &kg.valid, &kg.filter, exec)?;
            record.valid_mrr = Some(report.mrr);
            record.valid_hits1 = Some(report.hits_at_1);
            record.valid_hits3 = Some(report.hits_at_3);
            if best.as_ref().is_none_or(|(m, _, _)| report.mrr > *m) {
                best = Some((report.mrr, trainer.model.clone(), epoch));
                since_best = 0;
            } else {
                since_best += 1;
            }
        }
        on_epoch(&record);
        log.push(record);
        if since_best >= cfg.patience {
            break;
        }
    }

    let (model, best_epoch) = match best {
        Some((_, m, e)) => (m, e),
        None => (trainer.model, log.len()),
    };
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
    })
}

/// Gradient of one positive triple and its corruptions, keyed by entity/relation.
#[derive(Debug, Default)]
struct Contribution {
    loss: f64,
    entities: Vec<(usize, Vec<f64>)>,
    relation: Vec<f64>,
}

impl Contribution {
    fn entity_slot(&mut self, e: usize, n: usize) -> usize {
        if let Some(i) = self.entities.iter().position(|(id, _)| *id == e) {
            i
        } else {
            self.entities.push((e, vec![0.0; n]));
            self.entities.len() - 1
        }
    }

    fn add_score_grad(&mut self, snap: &Snapshot<'_>, t: Triple, scale: f64, gs: &mut Vec<f64>, go: &mut Vec<f64>) {
        if scale == 0.0 {
            return;
        }
        let n = snap.model().dim;
        gs.clear();
        gs.resize(n, 0.0);
        go.clear();
        go.resize(n, 0.0);
        snap.score_grad(t, scale, gs, go, &mut self.relation);
        let i = self.entity_slot(t.subject, n);
        self.entities[i].1.iter_mut().zip(gs.iter()).for_each(|(a, b)| *a += b);
        let i = self.entity_slot(t.object, n);
        self.entities[i].1.iter_mut().zip(go.iter()).for_each(|(a, b)| *a += b);
    }
}

/// Batch loss of positives `batch` against `negatives` (`k` per positive, in
/// order) and its gradient w.r.t. the entity representations and relations.
fn contribution(
    snap: &Snapshot<'_>,
    loss: LossKind,
    margin: f64,
    pos: Triple,
    negs: &[Triple],
    batch_len: usize,
) -> Contribution {
    let k = negs.len();
    let mut c = Contribution {
        relation: vec![0.0; snap.model().relations.cols()],
        ..Contribution::default()
    };
    let (mut gs, mut go) = (Vec::new(), Vec::new());
    let pos_score = snap.score(pos);
    if loss.is_pairwise() {
        let norm = 1.0 / (batch_len * k) as f64;
        let mut d_pos = 0.0;
        for &neg in negs {
            let (l, dp, dn) = loss.pair(pos_score, snap.score(neg), margin);
            c.loss += l * norm;
            d_pos += dp * norm;
            c.add_score_grad(snap, neg, dn * norm, &mut gs, &mut go);
        }
        c.add_score_grad(snap, pos, d_pos, &mut gs, &mut go);
    } else {
        let norm = 1.0 / (batch_len * (k + 1)) as f64;
        let (l, d) = loss.point(pos_score, 1.0);
        c.loss += l * norm;
        c.add_score_grad(snap, pos, d * norm, &mut gs, &mut go);
        for &neg in negs {
            let (l, d) = loss.point(snap.score(neg), 0.0);
            c.loss += l * norm;
            c.add_score_grad(snap, neg, d * norm, &mut gs, &mut go);
        }
    }
    c
}

/// Loss and full parameter gradients for one batch.
pub struct BatchGradient {
    pub loss: f64,
    pub penalty: f64,
    pub entities: Matrix,
    pub relations: Matrix,
}

pub fn batch_gradient(
    model: &Model,
    cfg: &TrainConfig,
    batch: &[Triple],
    negatives: &[Triple],
    exec: Exec,
) -> Result<BatchGradient> {
    let k = negatives.len() / batch.len().max(1);
    let snap = model.training_snapshot(exec)?;
    let parts = exec.map_range(batch.len(), |b| {
        contribution(&snap, cfg.loss, cfg.margin, batch[b], &negatives[b * k..(b + 1) * k], batch.len())
    });

    let (ne, nr) = (model.num_entities(), model.num_relations());
    let mut rep_grad = Matrix::zeros(ne, model.dim);
    let mut relations = Matrix::zeros(nr, model.relations.cols());
    let mut touched_e = vec![false; ne];
    let mut touched_r = vec![false; nr];
    let mut loss = 0.0;
    for (b, part) in parts.into_iter().enumerate() {
        loss += part.loss;
        for (e, g) in part.entities {
            touched_e[e] = true;
            rep_grad.row_mut(e).iter_mut().zip(&g).for_each(|(a, x)| *a += x);
        }
        let p = batch[b].predicate;
        touched_r[p] = true;
        relations.row_mut(p).iter_mut().zip(&part.relation).for_each(|(a, x)| *a += x);
    }

    let mut entities = Matrix::zeros(ne, model.entities.cols());
    model.backprop(&snap, &rep_grad, &touched_e, &mut entities, exec)?;

    let mut penalty = 0.0;
    if cfg.l2 > 0.0 {
        for e in (0..ne).filter(|&e| touched_e[e]) {
            for (g, w) in entities.row_mut(e).iter_mut().zip(model.entities.row(e)) {
                penalty += cfg.l2 * w * w;
                *g += 2.0 * cfg.l2 * w;
            }
        }
        for p in (0..nr).filter(|&p| touched_r[p]) {
            for (g, w) in relations.row_mut(p).iter_mut().zip(model.relations.row(p)) {
                penalty += cfg.l2 * w * w;
                *g += 2.0 * cfg.l2 * w;
            }
        }
    }
    if let (ModelKind::Neuron, Some(setup)) = (model.kind, &model.neuron) {
        penalty += spike_regularizer(&model.entities, &setup.config, cfg.spike_reg, Some(&mut entities));
    }
    for &r in &model.frozen_relations {
        relations.row_mut(r).fill(0.0);
    }
    Ok(BatchGradient {
        loss,
        penalty,
        entities,
        relations,
    })
}

struct Trainer<'a> {
    kg: &'a KnowledgeGraph,
    model: Model,
    cfg: &'a TrainConfig,
    exec: Exec,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    adam_entities: AdamState,
    adam_relations: AdamState,
}

impl<'a> Trainer<'a> {
    fn new(kg: &'a KnowledgeGraph, model: Model, cfg: &'a TrainConfig, exec: Exec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Self {
            kg,
            adam_entities: AdamState::new(model.entities.as_slice().len()),
            adam_relations: AdamState::new(model.relations.as_slice().len()),
            model,
            cfg,
            exec,
            rng,
            order: (0..kg.train.len()).collect(),
        }
    }

    fn epoch(&mut self, epoch: usize) -> Result<f64> {
        self.order.shuffle(&mut self.rng);
        let ne = self.kg.num_entities();
        let k = self.cfg.num_negatives;
        let mut total = 0.0;
        let mut batch = Vec::with_capacity(self.cfg.batch_size);
        let mut negatives = Vec::with_capacity(self.cfg.batch_size * k);
        let order = std::mem::take(&mut self.order);
        for chunk in order.chunks(self.cfg.batch_size) {
            batch.clear();
            negatives.clear();
            for &i in chunk {
                let t = self.kg.train[i];
                batch.push(t);
                sample_negatives(t, k, ne, &mut self.rng, &mut negatives);
            }
            let grad = batch_gradient(&self.model, self.cfg, &batch, &negatives, self.exec)?;
            if !(grad.loss.is_finite() && grad.penalty.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            total += grad.loss * batch.len() as f64;
            self.apply(&grad)?;
        }
        self.order = order;
        Ok(total / self.kg.train.len().max(1) as f64)
    }

    fn apply(&mut self, grad: &BatchGradient) -> Result<()> {
        let lr = self.cfg.learning_rate;
        self.adam_entities
            .step("entities", self.model.entities.as_mut_slice(), grad.entities.as_slice(), lr)?;
        self.adam_relations
            .step("relations", self.model.relations.as_mut_slice(), grad.relations.as_slice(), lr)?;
        self.model.zero_frozen();
        if self.model.kind == ModelKind::Transe {
            normalize_rows(&mut self.model.entities);
        }
        Ok(())
    }
}
