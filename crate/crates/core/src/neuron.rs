//! Clock-driven leaky integrate-and-fire neuron.
//!
//! The membrane is integrated with the recursion
//!
//! ```text
//! V[n] - E_L = exp(-dt/tau_L) (V[n-1] - E_L) + (dt/C_m) I[n]
//! ```
//!
//! which is exactly `E_L + dt * sum_k I[k] h[n-k]`, the grid form of
//! `V = E_L + (I u(t - t_l)) * h`. Between resets the trace therefore agrees
//! with the affine model `E_L + w . d_hat` to round-off when `tau_L' = tau_L`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{add_shifted, causal_convolve, KernelBank, TimeSeries};

/// Membrane constants: pF, nS, mV, mV, ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    pub cm: f64,
    pub gl: f64,
    pub el: f64,
    pub vt: f64,
    pub delta_abs: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            cm: 300.0,
            gl: 30.0,
            el: -70.0,
            vt: -55.0,
            delta_abs: 3.0,
        }
    }
}

impl LifParams {
    pub fn tau_l(&self) -> f64 {
        self.cm / self.gl
    }

    /// Smallest constant current that eventually reaches threshold.
    pub fn rheobase(&self) -> f64 {
        self.gl * (self.vt - self.el)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.cm, self.gl, self.el, self.vt, self.delta_abs]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::invalid("lif", "all constants must be finite"));
        }
        if !(self.cm > 0.0) {
            return Err(Error::invalid("lif.cm", "must be positive"));
        }
        if !(self.gl > 0.0) {
            return Err(Error::invalid("lif.gl", "must be positive"));
        }
        if !(self.vt > self.el) {
            return Err(Error::invalid("lif.vt", "threshold must exceed E_L"));
        }
        if !(self.delta_abs >= 0.0) {
            return Err(Error::invalid("lif.delta_abs", "must be non-negative"));
        }
        Ok(())
    }
}

/// Spike instants in ms, strictly increasing and non-negative.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpikeTrain {
    times: Vec<f64>,
}

impl SpikeTrain {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if let Some(t) = times.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(Error::invalid("spike time", format!("{t} is not a valid instant")));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("spike train", "times must be strictly increasing"));
        }
        Ok(Self { times })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Spikes at the given grid bins (sorted, duplicates removed).
    pub fn from_bins(bins: impl IntoIterator<Item = usize>, dt: f64) -> Self {
        let mut b: Vec<usize> = bins.into_iter().collect();
        b.sort_unstable();
        b.dedup();
        Self {
            times: b.into_iter().map(|n| n as f64 * dt).collect(),
        }
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

    /// Grid bins of the spikes; times are rounded to the nearest bin.
    pub fn bins(&self, dt: f64) -> Vec<usize> {
        self.times.iter().map(|t| (t / dt).round() as usize).collect()
    }

    pub fn all_before(&self, t_end: f64) -> bool {
        self.times.last().is_none_or(|&t| t < t_end)
    }

    pub fn into_times(self) -> Vec<f64> {
        self.times
    }
}

/// Everything the learning rule reads back from one simulated neuron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronTrace {
    /// Membrane potential in mV; the spike bin keeps the supra-threshold value.
    pub v: TimeSeries,
    pub spikes: SpikeTrain,
    pub spike_bins: Vec<usize>,
    /// `dV/dt` (mV/ms) at each spike bin, evaluated before the reset.
    pub slope_at_spikes: Vec<f64>,
}

/// `I(t) = w . c(t)`, pointwise.
pub fn aggregate_current(c: &[TimeSeries], w: &[f64]) -> Result<TimeSeries> {
    if c.len() != w.len() {
        return Err(Error::Dimension {
            context: "aggregate_current channels",
            expected: w.len(),
            actual: c.len(),
        });
    }
    let Some(first) = c.first() else {
        return Err(Error::invalid("c", "at least one synapse is required"));
    };
    let len = first.len();
    let mut out = vec![0.0; len];
    for (ci, &wi) in c.iter().zip(w) {
        if ci.len() != len {
            return Err(Error::Dimension {
                context: "aggregate_current length",
                expected: len,
                actual: ci.len(),
            });
        }
        if (ci.dt - first.dt).abs() > 0.0 {
            return Err(Error::DtMismatch {
                left: first.dt,
                right: ci.dt,
            });
        }
        if wi == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(&ci.values) {
            *o += wi * v;
        }
    }
    Ok(TimeSeries {
        dt: first.dt,
        values: out,
    })
}

/// Integrates the membrane for the current `i`, starting from rest.
///
/// A spike is emitted at the first bin with `V >= V_T`; the neuron is then
/// held at `E_L` and ignores its input for `delta_abs`.
pub fn simulate_lif(i: &TimeSeries, p: &LifParams) -> NeuronTrace {
    let dt = i.dt;
    let decay = (-dt / p.tau_l()).exp();
    // zero-order hold on the input over each bin
    let gain = (1.0 - decay) / p.gl;
    let hold = (p.delta_abs / dt).round() as usize;
    let mut v = Vec::with_capacity(i.len());
    let mut spike_bins = Vec::new();
    let mut slopes = Vec::new();
    // membrane potential relative to E_L
    let mut u = 0.0;
    let mut refractory = 0usize;
    for (n, &cur) in i.values.iter().enumerate() {
        if refractory > 0 {
            refractory -= 1;
            u = 0.0;
            v.push(p.el);
            continue;
        }
        u = decay * u + gain * cur;
        let vn = p.el + u;
        v.push(vn);
        if vn >= p.vt {
            spike_bins.push(n);
            slopes.push((-p.gl * u + cur) / p.cm);
            u = 0.0;
            refractory = hold;
        }
    }
    NeuronTrace {
        v: TimeSeries { dt, values: v },
        spikes: SpikeTrain::from_bins(spike_bins.iter().copied(), dt),
        spike_bins,
        slope_at_spikes: slopes,
    }
}

/// Synaptic input signals `c_i(t) = sum_f alpha(t - t_f)` on a grid of `len` bins.
pub fn compute_c(inputs: &[SpikeTrain], bank: &KernelBank, len: usize) -> Vec<TimeSeries> {
    inputs
        .iter()
        .map(|s| spikes_through(s, &bank.alpha, len))
        .collect()
}

/// `d_hat_i = c_i * h_hat`, one causal convolution per channel.
pub fn compute_d_hat(c: &[TimeSeries], bank: &KernelBank) -> Result<Vec<TimeSeries>> {
    c.iter().map(|ci| causal_convolve(ci, &bank.h_hat)).collect()
}

/// `d_hat` straight from spike trains through the precomputed `alpha * h_hat`
/// kernel; identical to `compute_d_hat(compute_c(..))` on the grid.
pub fn d_hat_from_spikes(inputs: &[SpikeTrain], bank: &KernelBank, len: usize) -> Vec<TimeSeries> {
    inputs
        .iter()
        .map(|s| spikes_through(s, &bank.alpha_h_hat, len))
        .collect()
}

fn spikes_through(s: &SpikeTrain, kernel: &TimeSeries, len: usize) -> TimeSeries {
    let mut out = TimeSeries::zeros(kernel.dt, len);
    for b in s.bins(kernel.dt) {
        add_shifted(&mut out.values, &kernel.values, b, 1.0);
    }
    out
}
