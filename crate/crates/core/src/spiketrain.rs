//! Spike trains built from unconstrained interspike-interval parameters.
//!
//! An entity owns a real vector `p`. Intervals are `I_i = |p_i|`, spike
//! times are the running sum of intervals divided by `Z = ||I||_2`
//! (normalized mode) or by 1 (unit mode), and an optional refractory
//! period adds `i * tau_ref` to the `i`-th spike (zero-based). Ordering of
//! the resulting train holds for every parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::sign;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    #[default]
    Normalized,
    /// `Z = 1`.
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeTrain {
    pub times: Vec<f64>,
    /// Refractory period already folded into `times`.
    pub refractory: f64,
}

impl SpikeTrain {
    /// Full forward pass: rectify, accumulate, normalize, add refractory offsets.
    pub fn from_params(params: &[f64], mode: NormMode, tau_ref: f64) -> Result<Self> {
        let times = spike_times(&rectify(params), mode)?;
        Ok(apply_refractory(
            &SpikeTrain {
                times,
                refractory: 0.0,
            },
            tau_ref,
        ))
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Gaps between consecutive spikes (refractory periods included).
    pub fn isis(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.windows(2).map(|w| w[1] - w[0])
    }

    pub fn is_ordered(&self) -> bool {
        if self.refractory > 0.0 {
            self.isis().all(|d| d >= self.refractory * (1.0 - 1e-12) && d > 0.0)
        } else {
            self.isis().all(|d| d >= 0.0)
        }
    }
}

pub fn rectify(params: &[f64]) -> Vec<f64> {
    params.iter().map(|p| p.abs()).collect()
}

fn normalizer(isis: &[f64], mode: NormMode) -> Result<f64> {
    match mode {
        NormMode::Unit => Ok(1.0),
        NormMode::Normalized => {
            let z = isis.iter().map(|i| i * i).sum::<f64>().sqrt();
            if z > 0.0 && z.is_finite() {
                Ok(z)
            } else {
                Err(Error::DegenerateEmbedding { entity: None })
            }
        }
    }
}

/// Cumulative interval sums scaled by `1/Z`. No refractory offsets.
pub fn spike_times(isis: &[f64], mode: NormMode) -> Result<Vec<f64>> {
    let z = normalizer(isis, mode)?;
    let mut acc = 0.0;
    Ok(isis
        .iter()
        .map(|i| {
            acc += i;
            acc / z
        })
        .collect())
}

pub fn apply_refractory(train: &SpikeTrain, tau_ref: f64) -> SpikeTrain {
    SpikeTrain {
        times: train
            .times
            .iter()
            .enumerate()
            .map(|(i, t)| t + i as f64 * tau_ref)
            .collect(),
        refractory: train.refractory + tau_ref,
    }
}

/// Allocation-free forward pass into `out` (same length as `params`).
pub fn encode_into(params: &[f64], mode: NormMode, tau_ref: f64, out: &mut [f64]) -> Result<()> {
    debug_assert_eq!(params.len(), out.len());
    let z = match mode {
        NormMode::Unit => 1.0,
        NormMode::Normalized => {
            let z = params.iter().map(|p| p * p).sum::<f64>().sqrt();
            if !(z > 0.0 && z.is_finite()) {
                return Err(Error::DegenerateEmbedding { entity: None });
            }
            z
        }
    };
    let mut acc = 0.0;
    for (i, (p, o)) in params.iter().zip(out.iter_mut()).enumerate() {
        acc += p.abs();
        *o = acc / z + i as f64 * tau_ref;
    }
    Ok(())
}

/// Vector-Jacobian product: accumulates `grad_times^T * dt/dparams` into `grad_params`.
///
/// With `C_i = sum_{j<=i} I_j` the normalized times are `t_i = C_i / Z`, so
/// `dt_i/dI_j = [j<=i]/Z - C_i I_j / Z^3`; rectification contributes `sign(p_j)`.
pub fn backprop_into(
    params: &[f64],
    mode: NormMode,
    grad_times: &[f64],
    grad_params: &mut [f64],
) -> Result<()> {
    let n = params.len();
    debug_assert_eq!(grad_times.len(), n);
    debug_assert_eq!(grad_params.len(), n);
    match mode {
        NormMode::Unit => {
            let mut suffix = 0.0;
            for j in (0..n).rev() {
                suffix += grad_times[j];
                grad_params[j] += sign(params[j]) * suffix;
            }
        }
        NormMode::Normalized => {
            let z2: f64 = params.iter().map(|p| p * p).sum();
            let z = z2.sqrt();
            if !(z > 0.0 && z.is_finite()) {
                return Err(Error::DegenerateEmbedding { entity: None });
            }
            // sum_i g_i C_i
            let mut acc = 0.0;
            let mut gc = 0.0;
            for (p, g) in params.iter().zip(grad_times) {
                acc += p.abs();
                gc += g * acc;
            }
            let z3 = z2 * z;
            let mut suffix = 0.0;
            for j in (0..n).rev() {
                suffix += grad_times[j];
                let d_isi = suffix / z - params[j].abs() * gc / z3;
                grad_params[j] += sign(params[j]) * d_isi;
            }
        }
    }
    Ok(())
}

/// Full Jacobian `J[i][j] = dt_i / dp_j` (row-major, `N x N`).
pub fn d_spike_times_d_params(params: &[f64], mode: NormMode) -> Result<Vec<Vec<f64>>> {
    let n = params.len();
    let isis = rectify(params);
    let z = normalizer(&isis, mode)?;
    let mut jac = vec![vec![0.0; n]; n];
    match mode {
        NormMode::Unit => {
            for (i, row) in jac.iter_mut().enumerate() {
                for (j, cell) in row.iter_mut().enumerate().take(i + 1) {
                    *cell = sign(params[j]);
                }
            }
        }
        NormMode::Normalized => {
            let z3 = z * z * z;
            let mut cum = 0.0;
            for (i, row) in jac.iter_mut().enumerate() {
                cum += isis[i];
                for (j, cell) in row.iter_mut().enumerate() {
                    let direct = if j <= i { 1.0 / z } else { 0.0 };
                    *cell = sign(params[j]) * (direct - cum * isis[j] / z3);
                }
            }
        }
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{score_asym, score_sym};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rectify_examples() {
        assert_eq!(rectify(&[3.0, -4.0]), vec![3.0, 4.0]);
        assert_eq!(rectify(&[0.0, 0.0]), vec![0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..50).map(|_| rng.random_range(-5.0..5.0)).collect();
        let r = rectify(&v);
        for i in 0..v.len() {
            let expected = if v[i] < 0.0 { -v[i] } else { v[i] };
            assert_eq!(r[i], expected);
        }
    }

    #[test]
    fn spike_time_examples() {
        let t = spike_times(&[3.0, 4.0], NormMode::Normalized).unwrap();
        assert!(close(t[0], 0.6, 1e-15) && close(t[1], 1.4, 1e-15));
        assert_eq!(spike_times(&[3.0, 4.0], NormMode::Unit).unwrap(), vec![3.0, 7.0]);
        for a in [1e-3, 0.7, 42.0] {
            assert!(close(spike_times(&[a], NormMode::Normalized).unwrap()[0], 1.0, 1e-15));
        }
    }

    #[test]
    fn zero_isis_are_degenerate_when_normalized() {
        assert!(matches!(
            spike_times(&[0.0, 0.0], NormMode::Normalized),
            Err(Error::DegenerateEmbedding { .. })
        ));
        assert_eq!(spike_times(&[0.0, 0.0], NormMode::Unit).unwrap(), vec![0.0, 0.0]);
        let mut out = [0.0; 2];
        assert!(encode_into(&[0.0, -0.0], NormMode::Normalized, 0.0, &mut out).is_err());
    }

    #[test]
    fn refractory_offsets_are_zero_based() {
        let train = SpikeTrain {
            times: vec![0.6, 1.4],
            refractory: 0.0,
        };
        let r = apply_refractory(&train, 0.1);
        assert!(close(r.times[0], 0.6, 1e-15) && close(r.times[1], 1.5, 1e-15));
        assert_eq!(apply_refractory(&train, 0.0).times, train.times);
    }

    #[test]
    fn refractory_leaves_scores_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.random_range(1..20);
            let ps: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let po: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let raw_s = SpikeTrain::from_params(&ps, NormMode::Normalized, 0.0).unwrap();
            let raw_o = SpikeTrain::from_params(&po, NormMode::Normalized, 0.0).unwrap();
            let ref_s = SpikeTrain::from_params(&ps, NormMode::Normalized, 0.03).unwrap();
            let ref_o = SpikeTrain::from_params(&po, NormMode::Normalized, 0.03).unwrap();
            let a0 = score_asym(&raw_s.times, &raw_o.times, &d).unwrap();
            let a1 = score_asym(&ref_s.times, &ref_o.times, &d).unwrap();
            let s0 = score_sym(&raw_s.times, &raw_o.times, &d).unwrap();
            let s1 = score_sym(&ref_s.times, &ref_o.times, &d).unwrap();
            assert!(close(a0, a1, 1e-10), "{a0} vs {a1}");
            assert!(close(s0, s1, 1e-10), "{s0} vs {s1}");
        }
    }

    #[test]
    fn normalized_intervals_have_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t = spike_times(&rectify(&p), NormMode::Normalized).unwrap();
            let mut prev = 0.0;
            let norm: f64 = t
                .iter()
                .map(|&ti| {
                    let d = ti - prev;
                    prev = ti;
                    d * d
                })
                .sum::<f64>()
                .sqrt();
            assert!(close(norm, 1.0, 1e-10));
        }
    }

    #[test]
    fn unit_mode_jacobian_by_hand() {
        let j = d_spike_times_d_params(&[3.0, -4.0], NormMode::Unit).unwrap();
        assert_eq!(j, vec![vec![1.0, 0.0], vec![1.0, -1.0]]);
    }

    #[test]
    fn zero_parameter_gives_zero_column() {
        for mode in [NormMode::Unit, NormMode::Normalized] {
            let j = d_spike_times_d_params(&[0.5, 0.0, -0.3], mode).unwrap();
            for row in &j {
                assert_eq!(row[1], 0.0);
            }
        }
    }

    fn fd_jacobian(p: &[f64], mode: NormMode, h: f64) -> Vec<Vec<f64>> {
        let n = p.len();
        let mut jac = vec![vec![0.0; n]; n];
        for j in 0..n {
            let mut plus = p.to_vec();
            let mut minus = p.to_vec();
            plus[j] += h;
            minus[j] -= h;
            let tp = spike_times(&rectify(&plus), mode).unwrap();
            let tm = spike_times(&rectify(&minus), mode).unwrap();
            for i in 0..n {
                jac[i][j] = (tp[i] - tm[i]) / (2.0 * h);
            }
        }
        jac
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 100 {
            let n = rng.random_range(1..12);
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            if p.iter().any(|x| x.abs() < 1e-6) {
                continue;
            }
            for mode in [NormMode::Unit, NormMode::Normalized] {
                let a = d_spike_times_d_params(&p, mode).unwrap();
                let f = fd_jacobian(&p, mode, 1e-5);
                for i in 0..n {
                    for j in 0..n {
                        let scale = a[i][j].abs().max(f[i][j].abs()).max(1e-3);
                        assert!(
                            (a[i][j] - f[i][j]).abs() / scale < 1e-4,
                            "J[{i}][{j}] analytic {} fd {}",
                            a[i][j],
                            f[i][j]
                        );
                    }
                }
            }
            checked += 1;
        }
    }

    #[test]
    fn backprop_equals_jacobian_transpose_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(1..10);
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            for mode in [NormMode::Unit, NormMode::Normalized] {
                let jac = d_spike_times_d_params(&p, mode).unwrap();
                let mut out = vec![0.0; n];
                backprop_into(&p, mode, &g, &mut out).unwrap();
                for j in 0..n {
                    let expected: f64 = (0..n).map(|i| g[i] * jac[i][j]).sum();
                    assert!(close(out[j], expected, 1e-12));
                }
            }
        }
    }

    #[test]
    fn encode_into_matches_composed_ops() {
        let p = [0.3, -0.2, 0.9, -0.05];
        let mut out = [0.0; 4];
        encode_into(&p, NormMode::Normalized, 0.03, &mut out).unwrap();
        let t = SpikeTrain::from_params(&p, NormMode::Normalized, 0.03).unwrap();
        for i in 0..4 {
            assert!(close(out[i], t.times[i], 1e-15));
        }
        assert!(t.is_ordered());
    }
}
