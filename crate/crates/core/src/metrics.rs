//! Spike-train correlation used as the training criterion.

use serde::{Deserialize, Serialize};

use crate::kernels::TimeSeries;
use crate::neuron::SpikeTrain;

/// Correlation values gathered at one training iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub iteration: usize,
    pub per_pattern: Vec<f64>,
}

impl CorrelationReport {
    /// The weakest pattern decides convergence.
    pub fn min(&self) -> f64 {
        self.per_pattern.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.per_pattern.iter().sum::<f64>() / self.per_pattern.len().max(1) as f64
    }
}

/// Spike train convolved with `exp(-t/tau_lp) u(t)` on a grid of `bins` samples.
pub fn lowpass(s: &SpikeTrain, tau_lp: f64, dt: f64, bins: usize) -> TimeSeries {
    let mut counts = vec![0.0; bins];
    for b in s.bins(dt) {
        if b < bins {
            counts[b] += 1.0;
        }
    }
    let decay = (-dt / tau_lp).exp();
    let mut acc = 0.0;
    for c in counts.iter_mut() {
        acc = acc * decay + *c;
        *c = acc;
    }
    TimeSeries { dt, values: counts }
}

/// Normalized inner product of the low-passed trains.
///
/// Returns 0 when either train is empty, so a silent output never counts as a match.
pub fn correlation(sd: &SpikeTrain, so: &SpikeTrain, tau_lp: f64, dt: f64, bins: usize) -> f64 {
    if sd.is_empty() || so.is_empty() {
        return 0.0;
    }
    let ld = lowpass(sd, tau_lp, dt, bins);
    let lo = lowpass(so, tau_lp, dt, bins);
    let (mut dd, mut oo, mut d_o) = (0.0, 0.0, 0.0);
    for (a, b) in ld.values.iter().zip(&lo.values) {
        dd += a * a;
        oo += b * b;
        d_o += a * b;
    }
    if dd == 0.0 || oo == 0.0 {
        return 0.0;
    }
    (d_o / (dd.sqrt() * oo.sqrt())).clamp(0.0, 1.0)
}
