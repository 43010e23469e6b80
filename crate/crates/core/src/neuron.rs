//! Integrate-and-fire neurons with an exponential synaptic kernel.
//!
//! Every embedding neuron is driven by a shared population of input
//! neurons, each firing once at a fixed time in `[0, T]`. Interval `i` of
//! a spike train is the first threshold crossing of
//!
//! ```text
//! u(t) = sum_{j : t_j <= t} w_ij (1 - exp(-(t - t_j) / tau_s))
//! ```
//!
//! measured in a local frame that restarts at 0 after each spike (the
//! membrane is reset and the inputs are re-presented). Slot `i` has its own
//! weight vector, so intervals are independent given the weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::spiketrain::SpikeTrain;

/// Smallest membrane slope at a crossing for which the interval gradient is trusted.
pub const MIN_CROSSING_SLOPE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronConfig {
    pub u_th: f64,
    pub tau_s: f64,
    pub tau_ref: f64,
    /// Length `T` of the window holding the input spikes.
    pub window: f64,
    /// Number of input neurons per spike slot.
    pub input_size: usize,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        Self {
            u_th: 1.0,
            tau_s: 0.5,
            tau_ref: 0.1,
            window: 1.0,
            input_size: 50,
        }
    }
}

impl NeuronConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.u_th > 0.0) {
            return Err(Error::config("u_th", "must be > 0"));
        }
        if !(self.tau_s > 0.0) {
            return Err(Error::config("tau_s", "must be > 0"));
        }
        if !(self.tau_ref >= 0.0) {
            return Err(Error::config("tau_ref", "must be >= 0"));
        }
        if !(self.window > 0.0) {
            return Err(Error::config("window", "must be > 0"));
        }
        if self.input_size == 0 {
            return Err(Error::config("input_size", "must be >= 1"));
        }
        Ok(())
    }
}

/// Fixed input spike times, sorted ascending. Weight `j` of every slot
/// belongs to `times[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPopulation {
    times: Vec<f64>,
}

impl InputPopulation {
    pub fn new(mut times: Vec<f64>) -> Self {
        times.sort_by(f64::total_cmp);
        Self { times }
    }

    /// Uniform draws on `[0, window]`.
    pub fn sample(size: usize, window: f64, rng: &mut impl Rng) -> Self {
        Self::new((0..size).map(|_| rng.random_range(0.0..=window)).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Membrane potential at local time `t` from a reset at 0.
pub fn membrane_potential(t: f64, weights: &[f64], inputs: &InputPopulation, cfg: &NeuronConfig) -> f64 {
    inputs
        .times
        .iter()
        .zip(weights)
        .take_while(|(&tj, _)| tj <= t)
        .map(|(&tj, &w)| w * (1.0 - (-(t - tj) / cfg.tau_s).exp()))
        .sum()
}

/// A threshold crossing: the interval and how many (sorted) inputs had arrived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub interval: f64,
    pub causal: usize,
}

/// First time `u(t) = u_th`, or `None` if the neuron stays silent.
///
/// Between consecutive input times the potential is
/// `A_k - exp(-(t - t_k)/tau) B_k` with `A_k = sum_{j<=k} w_j` and
/// `B_k = sum_{j<=k} w_j exp(-(t_k - t_j)/tau)`, which is monotone and
/// has the closed-form root `t = t_k + tau ln(B_k / (A_k - u_th))`.
pub fn solve_crossing(weights: &[f64], inputs: &InputPopulation, cfg: &NeuronConfig) -> Option<Crossing> {
    solve_with(weights, &inputs.times, &decays(&inputs.times, cfg.tau_s), cfg)
}

/// `decay[k] = exp(-(t_k - t_{k-1}) / tau)`, with `decay[0] = 1`.
fn decays(times: &[f64], tau: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    out.push(1.0);
    out.extend(times.windows(2).map(|w| (-(w[1] - w[0]) / tau).exp()));
    out.truncate(times.len());
    out
}

fn solve_with(weights: &[f64], times: &[f64], decay: &[f64], cfg: &NeuronConfig) -> Option<Crossing> {
    debug_assert_eq!(weights.len(), times.len());
    let tau = cfg.tau_s;
    let mut a = 0.0;
    let mut b = 0.0;
    for k in 0..times.len() {
        b = b * decay[k] + weights[k];
        a += weights[k];
        if a > cfg.u_th && b > 0.0 {
            let x = (a - cfg.u_th) / b;
            if x <= 1.0 {
                let t = times[k] - tau * x.ln();
                let end = times.get(k + 1).copied().unwrap_or(f64::INFINITY);
                if t < end {
                    return Some(Crossing {
                        interval: t,
                        causal: k + 1,
                    });
                }
            }
        }
    }
    None
}

pub fn solve_interval(weights: &[f64], inputs: &InputPopulation, cfg: &NeuronConfig) -> Option<f64> {
    solve_crossing(weights, inputs, cfg).map(|c| c.interval)
}

/// `dI/dw_j` at a crossing, by implicit differentiation of `u(I; w) = u_th`:
/// `dI/dw_j = -(1 - exp(-(I - t_j)/tau)) / u'(I)` for causal inputs, 0 otherwise.
pub fn crossing_gradient(
    crossing: Crossing,
    weights: &[f64],
    inputs: &InputPopulation,
    cfg: &NeuronConfig,
    out: &mut [f64],
) -> Result<()> {
    gradient_with(crossing, weights, &inputs.times, &decays(&inputs.times, cfg.tau_s), cfg, out)
}

fn gradient_with(
    crossing: Crossing,
    weights: &[f64],
    times: &[f64],
    decay: &[f64],
    cfg: &NeuronConfig,
    out: &mut [f64],
) -> Result<()> {
    let tau = cfg.tau_s;
    let c = crossing.causal;
    // kernel[j] = exp(-(I - t_j)/tau), walked backwards from the last causal input
    let mut kernel = (-(crossing.interval - times[c - 1]) / tau).exp();
    let mut slope = 0.0;
    for j in (0..c).rev() {
        slope += weights[j] * kernel;
        out[j] = 1.0 - kernel;
        kernel *= decay[j];
    }
    slope /= tau;
    if !(slope >= MIN_CROSSING_SLOPE) {
        return Err(Error::IllConditioned { slope });
    }
    for o in &mut out[..c] {
        *o = -*o / slope;
    }
    for o in &mut out[c..] {
        *o = 0.0;
    }
    Ok(())
}

pub fn d_interval_d_weights(weights: &[f64], inputs: &InputPopulation, cfg: &NeuronConfig) -> Result<Vec<f64>> {
    let crossing = solve_crossing(weights, inputs, cfg)
        .ok_or(Error::SilentNeuron { entity: 0, slot: 0 })?;
    let mut out = vec![0.0; weights.len()];
    crossing_gradient(crossing, weights, inputs, cfg, &mut out)?;
    Ok(out)
}

/// Spike train of one entity: `t_i = sum_{j<=i} I_j + i * tau_ref`.
/// `weights` holds `N` consecutive slots of `input_size` weights.
pub fn neuron_spike_train(
    entity: usize,
    weights: &[f64],
    inputs: &InputPopulation,
    cfg: &NeuronConfig,
) -> Result<SpikeTrain> {
    let is = inputs.len();
    let mut times = Vec::with_capacity(weights.len() / is);
    let mut acc = 0.0;
    for (slot, w) in weights.chunks_exact(is).enumerate() {
        let interval = solve_interval(w, inputs, cfg).ok_or(Error::SilentNeuron { entity, slot })?;
        acc += interval;
        times.push(acc + slot as f64 * cfg.tau_ref);
    }
    Ok(SpikeTrain {
        times,
        refractory: cfg.tau_ref,
    })
}

/// Forward pass used by training. Silent slots get `silent_interval` and a
/// `None` crossing (no gradient flows through them).
pub(crate) fn encode_into(
    weights: &[f64],
    inputs: &InputPopulation,
    cfg: &NeuronConfig,
    silent_interval: Option<f64>,
    entity: usize,
    out: &mut [f64],
    crossings: &mut [Option<Crossing>],
) -> Result<()> {
    let is = inputs.len();
    let decay = decays(&inputs.times, cfg.tau_s);
    let mut acc = 0.0;
    for (slot, w) in weights.chunks_exact(is).enumerate() {
        let c = solve_with(w, &inputs.times, &decay, cfg);
        let interval = match (c, silent_interval) {
            (Some(c), _) => c.interval,
            (None, Some(fill)) => fill,
            (None, None) => return Err(Error::SilentNeuron { entity, slot }),
        };
        crossings[slot] = c;
        acc += interval;
        out[slot] = acc + slot as f64 * cfg.tau_ref;
    }
    Ok(())
}

/// Accumulates `grad_times^T * dt/dw` into `grad_weights` for one entity.
pub(crate) fn backprop_into(
    weights: &[f64],
    inputs: &InputPopulation,
    cfg: &NeuronConfig,
    crossings: &[Option<Crossing>],
    grad_times: &[f64],
    grad_weights: &mut [f64],
    scratch: &mut Vec<f64>,
) -> Result<()> {
    let is = inputs.len();
    let decay = decays(&inputs.times, cfg.tau_s);
    scratch.resize(is, 0.0);
    let mut suffix: f64 = grad_times.iter().sum();
    for (slot, c) in crossings.iter().enumerate() {
        let g = suffix;
        suffix -= grad_times[slot];
        let Some(c) = c else { continue };
        if g == 0.0 {
            continue;
        }
        let w = &weights[slot * is..(slot + 1) * is];
        gradient_with(*c, w, &inputs.times, &decay, cfg, scratch)?;
        for (gw, d) in grad_weights[slot * is..(slot + 1) * is].iter_mut().zip(scratch.iter()) {
            *gw += g * d;
        }
    }
    Ok(())
}

/// Spike-guarantee penalty `sum_{s,i} delta (u_th - W_si)` over slots whose
/// total weight `W_si` is at most `u_th`. Returns the penalty and adds its
/// gradient (`-delta` per weight of an offending slot) to `grad`.
pub fn spike_regularizer(weights: &Matrix, cfg: &NeuronConfig, delta: f64, grad: Option<&mut Matrix>) -> f64 {
    let is = cfg.input_size;
    let mut penalty = 0.0;
    let mut offending = Vec::new();
    for (s, row) in weights.rows_iter().enumerate() {
        for (slot, w) in row.chunks_exact(is).enumerate() {
            let total: f64 = w.iter().sum();
            if total <= cfg.u_th {
                penalty += delta * (cfg.u_th - total);
                offending.push((s, slot));
            }
        }
    }
    if let Some(grad) = grad {
        for (s, slot) in offending {
            for g in &mut grad.row_mut(s)[slot * is..(slot + 1) * is] {
                *g -= delta;
            }
        }
    }
    penalty
}

/// Membrane trace of one entity in global time: samples every `resolution`
/// plus one sample at each spike time. Refractory windows read 0.
pub fn membrane_trace(
    weights: &[f64],
    inputs: &InputPopulation,
    cfg: &NeuronConfig,
    resolution: f64,
) -> Option<Vec<(f64, f64)>> {
    let is = inputs.len();
    let mut trace = Vec::new();
    let mut start = 0.0;
    for w in weights.chunks_exact(is) {
        let interval = solve_interval(w, inputs, cfg)?;
        let steps = (interval / resolution).floor() as usize;
        for k in 0..=steps {
            let local = k as f64 * resolution;
            if local < interval {
                trace.push((start + local, membrane_potential(local, w, inputs, cfg)));
            }
        }
        trace.push((start + interval, membrane_potential(interval, w, inputs, cfg)));
        start += interval;
        let ref_steps = (cfg.tau_ref / resolution).floor() as usize;
        for k in 1..=ref_steps {
            trace.push((start + k as f64 * resolution, 0.0));
        }
        start += cfg.tau_ref;
    }
    Some(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn cfg(is: usize) -> NeuronConfig {
        NeuronConfig {
            input_size: is,
            ..NeuronConfig::default()
        }
    }

    fn single() -> (InputPopulation, NeuronConfig) {
        (InputPopulation::new(vec![0.0]), cfg(1))
    }

    #[test]
    fn potential_examples() {
        let inputs = InputPopulation::new(vec![0.3, 0.5]);
        assert_eq!(membrane_potential(0.2, &[1.0, 1.0], &inputs, &cfg(2)), 0.0);
        let (inp, c) = single();
        assert!((membrane_potential(1e3, &[2.0], &inp, &c) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_input_interval_by_hand() {
        let (inp, c) = single();
        // 2 (1 - exp(-t/0.5)) = 1  =>  t = 0.5 ln 2
        let i = solve_interval(&[2.0], &inp, &c).unwrap();
        assert!((i - 0.346_573_590_279_972_6).abs() < 1e-12, "{i}");
    }

    #[test]
    fn saturating_below_threshold_is_silent() {
        let inputs = InputPopulation::new(vec![0.1, 0.4, 0.9]);
        assert_eq!(solve_interval(&[0.3, 0.3, 0.39], &inputs, &cfg(3)), None);
    }

    #[test]
    fn transient_crossing_before_inhibition_is_found() {
        // large early excitation then strong inhibition: crossing happens before the 2nd input
        let inputs = InputPopulation::new(vec![0.0, 0.8]);
        let c = cfg(2);
        let i = solve_interval(&[3.0, -10.0], &inputs, &c).unwrap();
        assert!(i < 0.8);
        assert!((membrane_potential(i, &[3.0, -10.0], &inputs, &c) - 1.0).abs() < 1e-12);
    }

    fn bisect(w: &[f64], inputs: &InputPopulation, c: &NeuronConfig, hi_guess: f64) -> Option<f64> {
        // scan for the first sign change on a fine grid, then bisect
        let step = 1e-4;
        let mut lo = 0.0;
        let mut t = step;
        while t <= hi_guess {
            if membrane_potential(t, w, inputs, c) >= c.u_th {
                let mut hi = t;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if membrane_potential(mid, w, inputs, c) >= c.u_th {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(0.5 * (lo + hi));
            }
            lo = t;
            t += step;
        }
        None
    }

    #[test]
    fn closed_form_matches_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let normal = Normal::new(0.2, 1.0).unwrap();
        let mut checked = 0;
        while checked < 20 {
            let inputs = InputPopulation::sample(20, 1.0, &mut rng);
            let w: Vec<f64> = (0..20).map(|_| normal.sample(&mut rng)).collect();
            let c = cfg(20);
            let Some(i) = solve_interval(&w, &inputs, &c) else { continue };
            let b = bisect(&w, &inputs, &c, 20.0).unwrap();
            assert!((i - b).abs() < 1e-10, "closed {i} bisect {b}");
            checked += 1;
        }
    }

    #[test]
    fn spike_train_examples() {
        let (inp, mut c) = single();
        let t = neuron_spike_train(0, &[2.0], &inp, &c).unwrap();
        assert!((t.times[0] - 0.346_573_590_279_972_6).abs() < 1e-12);
        c.tau_ref = 0.1;
        let t = neuron_spike_train(0, &[2.0, 2.0], &inp, &c).unwrap();
        assert!((t.times[1] - (2.0 * 0.346_573_590_279_972_6 + 0.1)).abs() < 1e-12);
        assert!((t.times[1] - 0.79314).abs() < 1e-5);
        // reset per slot: identical slots, identical intervals
        let isis: Vec<f64> = t.isis().collect();
        assert!((isis[0] - (t.times[0] + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn silent_slot_is_named() {
        let (inp, c) = single();
        let err = neuron_spike_train(7, &[2.0, 0.5], &inp, &c).unwrap_err();
        assert!(matches!(err, Error::SilentNeuron { entity: 7, slot: 1 }));
    }

    #[test]
    fn regularizer_examples() {
        let c = cfg(2);
        let w = Matrix::from_vec(1, 4, vec![1.0, 1.0, 0.25, 0.25]);
        let mut g = Matrix::zeros(1, 4);
        let p = spike_regularizer(&w, &c, 0.01, Some(&mut g));
        assert!((p - 0.005).abs() < 1e-15);
        assert_eq!(g.as_slice(), &[0.0, 0.0, -0.01, -0.01]);
        let w = Matrix::from_vec(1, 4, vec![1.0, 1.0, 0.7, 0.7]);
        assert_eq!(spike_regularizer(&w, &c, 0.01, None), 0.0);
    }

    #[test]
    fn single_input_gradient_matches_hand_formula() {
        let (inp, c) = single();
        let w = 2.0;
        let g = d_interval_d_weights(&[w], &inp, &c).unwrap()[0];
        // I = tau ln(w/(w - u_th))  =>  dI/dw = -tau u_th / (w (w - u_th))
        let expected = -c.tau_s * c.u_th / (w * (w - c.u_th));
        assert!((g - expected).abs() / expected.abs() < 1e-12);
        let h = 1e-6;
        let fd = (solve_interval(&[w + h], &inp, &c).unwrap() - solve_interval(&[w - h], &inp, &c).unwrap())
            / (2.0 * h);
        assert!((g - fd).abs() / fd.abs() < 1e-5);
    }

    #[test]
    fn non_causal_input_has_zero_gradient() {
        let inputs = InputPopulation::new(vec![0.0, 0.9]);
        let c = cfg(2);
        let w = [4.0, 1.0];
        let i = solve_interval(&w, &inputs, &c).unwrap();
        assert!(i < 0.9);
        let g = d_interval_d_weights(&w, &inputs, &c).unwrap();
        assert_eq!(g[1], 0.0);
    }
}
