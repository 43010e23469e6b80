//! Triple plausibility scores and their gradients.
//!
//! Translational scores compare `t_s - t_o` against a relation vector with
//! an L1 penalty; they are used for both spike trains and TransE vectors.
//! RESCAL uses the bilinear form `e_s^T R_p e_o`. All subgradients of `|x|`
//! at `x = 0` are taken as 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::sign;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// `-sum_j |t_s,j - t_o,j - delta_j|`
    #[default]
    Asym,
    /// `-sum_j ||t_s,j - t_o,j| - |delta_j||`
    Sym,
}

fn check_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{what}: {a} vs {b}")))
    }
}

/// Score over the first `min(len_s, len_o)` positions. Callers guarantee `delta` is long enough.
#[inline]
pub fn translational(kind: ScoreKind, ts: &[f64], to: &[f64], delta: &[f64]) -> f64 {
    let n = ts.len().min(to.len());
    let (ts, to, delta) = (&ts[..n], &to[..n], &delta[..n]);
    match kind {
        ScoreKind::Asym => -ts
            .iter()
            .zip(to)
            .zip(delta)
            .map(|((s, o), d)| (s - o - d).abs())
            .sum::<f64>(),
        ScoreKind::Sym => -ts
            .iter()
            .zip(to)
            .zip(delta)
            .map(|((s, o), d)| ((s - o).abs() - d.abs()).abs())
            .sum::<f64>(),
    }
}

/// Accumulate `scale * d(score)/d(input)` into the three gradient buffers.
#[inline]
pub fn translational_grad(
    kind: ScoreKind,
    ts: &[f64],
    to: &[f64],
    delta: &[f64],
    scale: f64,
    grad_s: &mut [f64],
    grad_o: &mut [f64],
    grad_delta: &mut [f64],
) {
    let n = ts.len().min(to.len());
    for j in 0..n {
        let diff = ts[j] - to[j];
        match kind {
            ScoreKind::Asym => {
                let g = sign(diff - delta[j]) * scale;
                grad_s[j] -= g;
                grad_o[j] += g;
                grad_delta[j] += g;
            }
            ScoreKind::Sym => {
                let outer = sign(diff.abs() - delta[j].abs()) * scale;
                let g = outer * sign(diff);
                grad_s[j] -= g;
                grad_o[j] += g;
                grad_delta[j] += outer * sign(delta[j]);
            }
        }
    }
}

pub fn score_asym(ts: &[f64], to: &[f64], delta: &[f64]) -> Result<f64> {
    check_len("subject/object spike trains", ts.len(), to.len())?;
    check_len("spike train/relation", ts.len(), delta.len())?;
    Ok(translational(ScoreKind::Asym, ts, to, delta))
}

pub fn score_sym(ts: &[f64], to: &[f64], delta: &[f64]) -> Result<f64> {
    check_len("subject/object spike trains", ts.len(), to.len())?;
    check_len("spike train/relation", ts.len(), delta.len())?;
    Ok(translational(ScoreKind::Sym, ts, to, delta))
}

/// Asymmetric score summed over the matching spikes of trains of unequal length.
pub fn score_truncated(ts: &[f64], to: &[f64], delta: &[f64]) -> Result<f64> {
    let n = ts.len().min(to.len());
    if delta.len() < n {
        return Err(Error::Dimension(format!(
            "relation of length {} shorter than overlap {n}",
            delta.len()
        )));
    }
    Ok(translational(ScoreKind::Asym, ts, to, delta))
}

pub fn score_transe(es: &[f64], eo: &[f64], r: &[f64]) -> Result<f64> {
    check_len("entity vectors", es.len(), eo.len())?;
    check_len("entity/relation vectors", es.len(), r.len())?;
    Ok(translational(ScoreKind::Asym, es, eo, r))
}

/// `e_s^T R e_o` with `R` row-major `N x N`.
#[inline]
pub fn bilinear(es: &[f64], r: &[f64], eo: &[f64]) -> f64 {
    let n = es.len();
    es.iter()
        .zip(r.chunks_exact(n))
        .map(|(a, row)| a * row.iter().zip(eo).map(|(x, y)| x * y).sum::<f64>())
        .sum()
}

pub fn score_rescal(es: &[f64], r: &[f64], eo: &[f64]) -> Result<f64> {
    check_len("entity vectors", es.len(), eo.len())?;
    check_len("relation matrix", r.len(), es.len() * es.len())?;
    Ok(bilinear(es, r, eo))
}

/// Accumulate `scale * d(e_s^T R e_o)` w.r.t. `e_s`, `R`, `e_o`.
#[inline]
pub fn bilinear_grad(
    es: &[f64],
    r: &[f64],
    eo: &[f64],
    scale: f64,
    grad_s: &mut [f64],
    grad_r: &mut [f64],
    grad_o: &mut [f64],
) {
    let n = es.len();
    for i in 0..n {
        let row = &r[i * n..(i + 1) * n];
        let grow = &mut grad_r[i * n..(i + 1) * n];
        let mut acc = 0.0;
        for j in 0..n {
            acc += row[j] * eo[j];
            grow[j] += scale * es[i] * eo[j];
            grad_o[j] += scale * es[i] * row[j];
        }
        grad_s[i] += scale * acc;
    }
}
