//! Link-prediction metrics, community prediction, ISI statistics and the
//! variable-length sweep.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{Communities, FilterIndex, KnowledgeGraph, Side, Triple};
use crate::model::{ModelKind, Snapshot};
use crate::parallel::Exec;
use crate::train::{self, TrainConfig};

/// Filtered realistic rank of `t` against every replacement on `side`.
///
/// Candidates forming other known-true triples are dropped. Ties with the
/// test triple count half, so the rank is the mean of the optimistic and
/// pessimistic positions.
pub fn rank_triple(snap: &Snapshot<'_>, t: Triple, side: Side, filter: &FilterIndex) -> f64 {
    let mut scores = vec![0.0; snap.num_entities()];
    rank_with(snap, t, side, filter, &mut scores)
}

fn rank_with(snap: &Snapshot<'_>, t: Triple, side: Side, filter: &FilterIndex, scores: &mut [f64]) -> f64 {
    let (truth, known) = match side {
        Side::Object => {
            snap.score_objects(t.subject, t.predicate, scores);
            (t.object, filter.known_objects(t.subject, t.predicate))
        }
        Side::Subject => {
            snap.score_subjects(t.predicate, t.object, scores);
            (t.subject, filter.known_subjects(t.predicate, t.object))
        }
    };
    let target = scores[truth];
    let (mut greater, mut ties) = (0usize, 0usize);
    for (e, &s) in scores.iter().enumerate() {
        if e == truth {
            continue;
        }
        if s > target {
            greater += 1;
        } else if s == target {
            ties += 1;
        }
    }
    // drop known-true competitors (each listed once)
    for &e in known {
        if e == truth {
            continue;
        }
        let s = scores[e];
        if s > target {
            greater -= 1;
        } else if s == target {
            ties -= 1;
        }
    }
    1.0 + greater as f64 + ties as f64 / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub subject_ranks: Vec<f64>,
    pub object_ranks: Vec<f64>,
    pub mrr: f64,
    pub hits_at_1: f64,
    pub hits_at_3: f64,
    pub hits_at_10: f64,
}

impl RankReport {
    pub fn from_ranks(subject_ranks: Vec<f64>, object_ranks: Vec<f64>) -> Self {
        let n = (subject_ranks.len() + object_ranks.len()) as f64;
        let all = || subject_ranks.iter().chain(&object_ranks);
        let hits = |k: f64| all().filter(|&&r| r <= k).count() as f64 / n;
        Self {
            mrr: all().map(|r| 1.0 / r).sum::<f64>() / n,
            hits_at_1: hits(1.0),
            hits_at_3: hits(3.0),
            hits_at_10: hits(10.0),
            subject_ranks,
            object_ranks,
        }
    }
}

/// Rank every test triple on both sides.
pub fn evaluate(snap: &Snapshot<'_>, test: &[Triple], filter: &FilterIndex, exec: Exec) -> Result<RankReport> {
    if test.is_empty() {
        return Err(Error::Eval("empty test set".into()));
    }
    let ne = snap.num_entities();
    if let Some(t) = test
        .iter()
        .find(|t| t.subject >= ne || t.object >= ne || t.predicate >= snap.model().num_relations())
    {
        return Err(Error::Eval(format!("triple {t:?} is outside the vocabulary")));
    }
    let pairs = exec.map(test, |&t| {
        let mut scores = vec![0.0; ne];
        (
            rank_with(snap, t, Side::Subject, filter, &mut scores),
            rank_with(snap, t, Side::Object, filter, &mut scores),
        )
    });
    let (subject_ranks, object_ranks) = pairs.into_iter().unzip();
    Ok(RankReport::from_ranks(subject_ranks, object_ranks))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityPrediction {
    /// Predicted head per member, `None` on an exact score tie.
    pub assignments: Vec<Option<usize>>,
    /// Members assigned to the wrong head.
    pub mismatches: Vec<usize>,
    pub unresolved: Vec<usize>,
    /// Fraction of members assigned to their true head.
    pub accuracy: f64,
}

/// Assign each member to the head it is more plausibly linked to by `relation`.
pub fn predict_communities(snap: &Snapshot<'_>, communities: &Communities, relation: usize) -> CommunityPrediction {
    let [a, b] = communities.heads;
    let mut assignments = Vec::with_capacity(communities.membership.len());
    let (mut mismatches, mut unresolved) = (Vec::new(), Vec::new());
    for (m, &truth) in communities.membership.iter().enumerate() {
        let pick = if m == a || m == b {
            Some(m)
        } else {
            let sa = snap.score(Triple::new(m, relation, a));
            let sb = snap.score(Triple::new(m, relation, b));
            if sa > sb {
                Some(a)
            } else if sb > sa {
                Some(b)
            } else {
                None
            }
        };
        match pick {
            None => unresolved.push(m),
            Some(h) if h != truth => mismatches.push(m),
            _ => {}
        }
        assignments.push(pick);
    }
    let n = communities.membership.len();
    let correct = n - mismatches.len() - unresolved.len();
    CommunityPrediction {
        assignments,
        mismatches,
        unresolved,
        accuracy: correct as f64 / n.max(1) as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsiStatistics {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// `std / (mean - tau_ref)`.
    pub cv: f64,
    /// `std / mean`.
    pub cv_uncorrected: f64,
    pub tau_ref: f64,
    pub histogram: Vec<HistogramBin>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

pub const HISTOGRAM_BINS: usize = 50;

/// Statistics of a pooled set of interspike intervals.
pub fn isi_statistics_from(intervals: &[f64], tau_ref: f64) -> Result<IsiStatistics> {
    if intervals.is_empty() {
        return Err(Error::Eval("no interspike intervals".into()));
    }
    let n = intervals.len() as f64;
    let mean = intervals.iter().sum::<f64>() / n;
    let var = intervals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if mean <= tau_ref {
        return Err(Error::UndefinedCv { mean, tau_ref });
    }
    let hi = intervals.iter().cloned().fold(f64::MIN, f64::max);
    let lo = intervals.iter().cloned().fold(f64::MAX, f64::min).min(0.0);
    let width = if hi > lo { (hi - lo) / HISTOGRAM_BINS as f64 } else { 1.0 };
    let mut histogram: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|i| HistogramBin {
            lo: lo + i as f64 * width,
            hi: lo + (i + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &x in intervals {
        let i = (((x - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        histogram[i].count += 1;
    }
    Ok(IsiStatistics {
        count: intervals.len(),
        mean,
        std,
        cv: std / (mean - tau_ref),
        cv_uncorrected: std / mean,
        tau_ref,
        histogram,
    })
}

/// Intervals between consecutive spikes of every entity's train.
pub fn pooled_isis(snap: &Snapshot<'_>) -> Vec<f64> {
    (0..snap.num_entities())
        .flat_map(|e| snap.rep(e).windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>())
        .collect()
}

pub fn isi_statistics(snap: &Snapshot<'_>) -> Result<IsiStatistics> {
    let model = snap.model();
    if !model.kind.is_spiking() {
        return Err(Error::Eval(format!("{:?} models have no spike trains", model.kind)));
    }
    if model.dim < 2 {
        return Err(Error::Eval("need at least two spikes per train".into()));
    }
    isi_statistics_from(&pooled_isis(snap), model.tau_ref)
}

pub fn histogram_csv(stats: &IsiStatistics) -> String {
    let mut out = String::from("lo,hi,count\n");
    for b in &stats.histogram {
        let _ = writeln!(out, "{},{},{}", b.lo, b.hi, b.count);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub std: f64,
    pub mean_length: f64,
    pub mrr: f64,
    pub hits_at_1: f64,
    pub hits_at_3: f64,
    pub hits_at_10: f64,
}

/// Per-entity spike counts `clamp(round(n + std * z), 1, n)`.
pub fn draw_spike_counts(num_entities: usize, n: usize, std: f64, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    (0..num_entities)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (n as f64 + std * z).round().clamp(1.0, n as f64) as usize
        })
        .collect()
}

/// Train and test a SpikTE model once per standard deviation of the spike-count distribution.
pub fn length_sweep(
    kg: &KnowledgeGraph,
    cfg: &TrainConfig,
    stds: &[f64],
    exec: Exec,
    mut on_row: impl FnMut(&SweepRow),
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(stds.len());
    for &std in stds {
        if !(std >= 0.0) {
            return Err(Error::config("stds", "standard deviations must be >= 0"));
        }
        let mut model = train::init_model(kg, ModelKind::Spikte, cfg)?;
        if std > 0.0 {
            model.spike_counts = Some(draw_spike_counts(kg.num_entities(), cfg.dim, std, cfg.seed));
        }
        let mean_length = (0..kg.num_entities()).map(|e| model.length(e)).sum::<usize>() as f64
            / kg.num_entities() as f64;
        let outcome = train::train(kg, model, cfg, exec)?;
        let snap = outcome.model.snapshot(exec)?;
        let report = evaluate(&snap, &kg.test, &kg.filter, exec)?;
        let row = SweepRow {
            std,
            mean_length,
            mrr: report.mrr,
            hits_at_1: report.hits_at_1,
            hits_at_3: report.hits_at_3,
            hits_at_10: report.hits_at_10,
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("std,mean_length,mrr,hits_at_1,hits_at_3,hits_at_10\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.std, r.mean_length, r.mrr, r.hits_at_1, r.hits_at_3, r.hits_at_10
        );
    }
    out
}
