//! Embedding models, their forward passes and checkpoints.
//!
//! Every model maps per-entity parameters to a representation vector
//! (spike times for the spiking models, the raw vector for TransE and
//! RESCAL) and scores triples on those representations. A [`Snapshot`]
//! holds the representations of all entities for one parameter state.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{Triple, Vocabularies};
use crate::matrix::{dot, Matrix};
use crate::neuron::{self, Crossing, InputPopulation, NeuronConfig};
use crate::parallel::Exec;
use crate::scoring::{bilinear, bilinear_grad, translational, translational_grad, ScoreKind};
use crate::spiketrain::{self, NormMode};
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Abstract spike-train model on interspike-interval parameters.
    Spikte,
    Transe,
    Rescal,
    /// Spike trains produced by integrate-and-fire neurons.
    Neuron,
}

impl ModelKind {
    pub fn is_spiking(self) -> bool {
        matches!(self, ModelKind::Spikte | ModelKind::Neuron)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spikte" => Ok(ModelKind::Spikte),
            "transe" => Ok(ModelKind::Transe),
            "rescal" => Ok(ModelKind::Rescal),
            "neuron" => Ok(ModelKind::Neuron),
            other => Err(Error::config(
                "model",
                format!("unknown model `{other}` (spikte, transe, rescal, neuron)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronSetup {
    pub config: NeuronConfig,
    pub inputs: InputPopulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: ModelKind,
    pub dim: usize,
    pub score: ScoreKind,
    pub norm_mode: NormMode,
    pub tau_ref: f64,
    pub vocab: Vocabularies,
    /// Spikte: `E x N` interval parameters. Neuron: `E x (N * IS)` weights.
    /// TransE/RESCAL: `E x N` vectors.
    pub entities: Matrix,
    /// `R x N` relation vectors, or `R x N^2` row-major matrices for RESCAL.
    pub relations: Matrix,
    /// Per-entity spike count (`1..=N`) when trains have unequal lengths.
    #[serde(default)]
    pub spike_counts: Option<Vec<usize>>,
    /// Relations pinned at zero and never updated.
    #[serde(default)]
    pub frozen_relations: Vec<usize>,
    #[serde(default)]
    pub neuron: Option<NeuronSetup>,
}

impl Model {
    /// Fresh parameters for `kind` drawn from `rng`.
    pub fn init(kind: ModelKind, cfg: &TrainConfig, vocab: &Vocabularies, rng: &mut impl Rng) -> Result<Self> {
        let (ne, nr, n) = (vocab.entities.len(), vocab.relations.len(), cfg.dim);
        let mut uniform = |rows: usize, cols: usize, bound: f64| {
            Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
        };
        let mut neuron_setup = None;
        let (entities, relations) = match kind {
            ModelKind::Spikte => (uniform(ne, n, 1.0), uniform(nr, n, 1.0)),
            ModelKind::Transe => {
                let bound = 6.0 / (n as f64).sqrt();
                let mut e = uniform(ne, n, bound);
                let mut r = uniform(nr, n, bound);
                normalize_rows(&mut e);
                normalize_rows(&mut r);
                (e, r)
            }
            ModelKind::Rescal => {
                let bound = (6.0 / (2 * n) as f64).sqrt();
                (uniform(ne, n, bound), uniform(nr, n * n, bound))
            }
            ModelKind::Neuron => {
                let mut ncfg = cfg.neuron;
                ncfg.tau_ref = cfg.tau_ref;
                let relations = uniform(nr, n, 1.0);
                let inputs = InputPopulation::sample(ncfg.input_size, ncfg.window, rng);
                let normal = Normal::new(cfg.weight_mean, cfg.weight_std)
                    .map_err(|e| Error::config("weight_std", e.to_string()))?;
                let weights = Matrix::from_fn(ne, n * ncfg.input_size, |_, _| normal.sample(rng));
                neuron_setup = Some(NeuronSetup { config: ncfg, inputs });
                (weights, relations)
            }
        };
        let mut frozen = Vec::new();
        for label in &cfg.freeze_relations {
            let id = vocab.relations.id(label).ok_or_else(|| Error::UnknownLabel {
                kind: "relation",
                label: label.clone(),
            })?;
            frozen.push(id);
        }
        let mut model = Self {
            kind,
            dim: n,
            score: cfg.score,
            norm_mode: if kind == ModelKind::Neuron {
                NormMode::Unit
            } else {
                cfg.norm_mode
            },
            tau_ref: if kind.is_spiking() { cfg.tau_ref } else { 0.0 },
            vocab: vocab.clone(),
            entities,
            relations,
            spike_counts: None,
            frozen_relations: frozen,
            neuron: neuron_setup,
        };
        model.zero_frozen();
        Ok(model)
    }

    pub fn num_entities(&self) -> usize {
        self.entities.rows()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.rows()
    }

    /// Number of spikes (or vector entries) entity `e` is scored with.
    #[inline]
    pub fn length(&self, e: usize) -> usize {
        self.spike_counts.as_ref().map_or(self.dim, |c| c[e])
    }

    pub(crate) fn zero_frozen(&mut self) {
        for &r in &self.frozen_relations {
            self.relations.row_mut(r).fill(0.0);
        }
    }

    /// Representations for evaluation. Silent neurons are an error.
    pub fn snapshot(&self, exec: Exec) -> Result<Snapshot<'_>> {
        self.encode(exec, None)
    }

    /// Representations for training: silent neuron slots are imputed with
    /// an interval of one input window and carry no gradient.
    pub fn training_snapshot(&self, exec: Exec) -> Result<Snapshot<'_>> {
        let fill = self.neuron.as_ref().map(|n| n.config.window);
        self.encode(exec, fill)
    }

    fn encode(&self, exec: Exec, silent_fill: Option<f64>) -> Result<Snapshot<'_>> {
        let n = self.dim;
        let ne = self.num_entities();
        let per_entity = exec.map_range(ne, |e| -> Result<(Vec<f64>, Vec<Option<Crossing>>)> {
            let len = self.length(e);
            let params = self.entities.row(e);
            let mut rep = vec![0.0; n];
            let mut crossings = Vec::new();
            match self.kind {
                ModelKind::Spikte => {
                    spiketrain::encode_into(&params[..len], self.norm_mode, self.tau_ref, &mut rep[..len])
                        .map_err(|_| Error::DegenerateEmbedding { entity: Some(e) })?;
                }
                ModelKind::Transe | ModelKind::Rescal => rep.copy_from_slice(params),
                ModelKind::Neuron => {
                    let setup = self.neuron.as_ref().expect("neuron model without neuron setup");
                    let is = setup.inputs.len();
                    crossings = vec![None; len];
                    neuron::encode_into(
                        &params[..len * is],
                        &setup.inputs,
                        &setup.config,
                        silent_fill,
                        e,
                        &mut rep[..len],
                        &mut crossings,
                    )?;
                }
            }
            if self.kind.is_spiking() && !is_ordered(&rep[..len], self.tau_ref) {
                return Err(Error::Eval(format!("spike train of entity {e} is not ordered")));
            }
            Ok((rep, crossings))
        });
        let mut reps = Matrix::zeros(ne, n);
        let mut crossings = Vec::new();
        for (e, r) in per_entity.into_iter().enumerate() {
            let (rep, c) = r?;
            reps.row_mut(e).copy_from_slice(&rep);
            crossings.push(c);
        }
        Ok(Snapshot {
            model: self,
            reps,
            crossings,
        })
    }

    /// Add the parameter gradients of `touched` entities, given the
    /// gradients of their representations, to `out`.
    pub(crate) fn backprop(
        &self,
        snap: &Snapshot<'_>,
        rep_grad: &Matrix,
        touched: &[bool],
        out: &mut Matrix,
        exec: Exec,
    ) -> Result<()> {
        let cols = self.entities.cols();
        exec.try_for_each_chunk(out.as_mut_slice(), cols, |e, out| -> Result<()> {
            if !touched[e] {
                return Ok(());
            }
            let len = self.length(e);
            let params = self.entities.row(e);
            let g = &rep_grad.row(e)[..len];
            match self.kind {
                ModelKind::Spikte => {
                    spiketrain::backprop_into(&params[..len], self.norm_mode, g, &mut out[..len])
                        .map_err(|_| Error::DegenerateEmbedding { entity: Some(e) })?;
                }
                ModelKind::Transe | ModelKind::Rescal => {
                    out[..len].iter_mut().zip(g).for_each(|(o, x)| *o += x);
                }
                ModelKind::Neuron => {
                    let setup = self.neuron.as_ref().expect("neuron setup");
                    let is = setup.inputs.len();
                    let mut scratch = Vec::with_capacity(is);
                    neuron::backprop_into(
                        &params[..len * is],
                        &setup.inputs,
                        &setup.config,
                        &snap.crossings[e],
                        g,
                        &mut out[..len * is],
                        &mut scratch,
                    )?;
                }
            }
            Ok(())
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = CheckpointRef {
            format: CHECKPOINT_FORMAT,
            version: CHECKPOINT_VERSION,
            model: self,
        };
        let json = serde_json::to_string(&file).map_err(|e| Error::Checkpoint(e.to_string()))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CheckpointFile = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("{}: not a checkpoint", path.display())));
        }
        if file.version > CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: version {} is newer than supported {CHECKPOINT_VERSION}",
                path.display(),
                file.version
            )));
        }
        file.model.validate()?;
        Ok(file.model)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Checkpoint(m));
        let (ne, nr) = (self.vocab.entities.len(), self.vocab.relations.len());
        if self.entities.rows() != ne || self.relations.rows() != nr {
            return bad("parameter tables do not match vocabularies".into());
        }
        let ent_cols = match (self.kind, &self.neuron) {
            (ModelKind::Neuron, Some(s)) => self.dim * s.inputs.len(),
            (ModelKind::Neuron, None) => return bad("neuron model without input population".into()),
            _ => self.dim,
        };
        let rel_cols = if self.kind == ModelKind::Rescal {
            self.dim * self.dim
        } else {
            self.dim
        };
        if self.entities.cols() != ent_cols || self.relations.cols() != rel_cols {
            return bad(format!("parameter shapes do not match {:?} with dim {}", self.kind, self.dim));
        }
        if let Some(c) = &self.spike_counts {
            if c.len() != ne || c.iter().any(|&n| n == 0 || n > self.dim) {
                return bad("spike counts out of range".into());
            }
        }
        Ok(())
    }
}

const CHECKPOINT_FORMAT: &str = "spikte-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize)]
struct CheckpointRef<'a> {
    format: &'a str,
    version: u32,
    model: &'a Model,
}

#[derive(Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    model: Model,
}

fn is_ordered(times: &[f64], tau_ref: f64) -> bool {
    times.windows(2).all(|w| {
        let d = w[1] - w[0];
        if tau_ref > 0.0 {
            d > 0.0
        } else {
            d >= 0.0
        }
    })
}

pub(crate) fn normalize_rows(m: &mut Matrix) {
    for row in m.rows_iter_mut() {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
}

/// Entity representations for one parameter state.
#[derive(Debug, Clone)]
pub struct Snapshot<'m> {
    model: &'m Model,
    reps: Matrix,
    crossings: Vec<Vec<Option<Crossing>>>,
}

impl<'m> Snapshot<'m> {
    pub fn model(&self) -> &'m Model {
        self.model
    }

    pub fn num_entities(&self) -> usize {
        self.reps.rows()
    }

    /// Representation actually used for scoring (spike times for spiking models).
    #[inline]
    pub fn rep(&self, e: usize) -> &[f64] {
        &self.reps.row(e)[..self.model.length(e)]
    }

    #[inline]
    pub fn relation(&self, p: usize) -> &[f64] {
        self.model.relations.row(p)
    }

    #[inline]
    pub fn score(&self, t: Triple) -> f64 {
        let (s, r, o) = (self.rep(t.subject), self.relation(t.predicate), self.rep(t.object));
        match self.model.kind {
            ModelKind::Rescal => bilinear(s, r, o),
            _ => translational(self.model.score, s, o, r),
        }
    }

    /// Scores of `(s, p, o')` for every entity `o'`.
    pub fn score_objects(&self, s: usize, p: usize, out: &mut [f64]) {
        if self.model.kind == ModelKind::Rescal {
            let n = self.model.dim;
            let es = self.rep(s);
            let r = self.relation(p);
            let mut v = vec![0.0; n];
            for (i, a) in es.iter().enumerate() {
                for (vj, rij) in v.iter_mut().zip(&r[i * n..(i + 1) * n]) {
                    *vj += a * rij;
                }
            }
            for (o, slot) in out.iter_mut().enumerate() {
                *slot = dot(&v, self.rep(o));
            }
        } else {
            for (o, slot) in out.iter_mut().enumerate() {
                *slot = self.score(Triple::new(s, p, o));
            }
        }
    }

    /// Scores of `(s', p, o)` for every entity `s'`.
    pub fn score_subjects(&self, p: usize, o: usize, out: &mut [f64]) {
        if self.model.kind == ModelKind::Rescal {
            let n = self.model.dim;
            let eo = self.rep(o);
            let r = self.relation(p);
            let v: Vec<f64> = r.chunks_exact(n).map(|row| dot(row, eo)).collect();
            for (s, slot) in out.iter_mut().enumerate() {
                *slot = dot(self.rep(s), &v);
            }
        } else {
            for (s, slot) in out.iter_mut().enumerate() {
                *slot = self.score(Triple::new(s, p, o));
            }
        }
    }

    /// Accumulate `scale * d score(t)` w.r.t. the subject/object representations and the relation.
    #[inline]
    pub fn score_grad(&self, t: Triple, scale: f64, gs: &mut [f64], go: &mut [f64], gr: &mut [f64]) {
        let (s, r, o) = (self.rep(t.subject), self.relation(t.predicate), self.rep(t.object));
        match self.model.kind {
            ModelKind::Rescal => bilinear_grad(s, r, o, scale, gs, gr, go),
            _ => translational_grad(self.model.score, s, o, r, scale, gs, go, gr),
        }
    }
}
