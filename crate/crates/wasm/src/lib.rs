//! wasm-bindgen entry points for the static demo page in `www/`.
//!
//! Three operations: a LIF neuron driven by a constant current, the
//! correlation metric between two hand-edited spike trains, and a steppable
//! XOR trainer.

use normad_core::datagen::xor_dataset;
use normad_core::experiment::{initial_network, ExperimentConfig, ExperimentKind};
use normad_core::kernels::TimeSeries;
use normad_core::metrics::{correlation, lowpass};
use normad_core::network::{forward, Network};
use normad_core::neuron::{simulate_lif, LifParams, SpikeTrain};
use normad_core::normad::{train_iteration, LearnConfig, Pattern};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn js_err(e: normad_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Membrane trace of a default LIF neuron under a constant current `i0` (pA).
///
/// Returns JSON `{ "v": [...], "spikes": [...], "dt": .., "isi_closed_form": .. }`;
/// `isi_closed_form` is null below rheobase.
#[wasm_bindgen]
pub fn lif_trace(i0: f64, duration_ms: f64, dt: f64) -> Result<String, JsError> {
    let p = LifParams::default();
    if !(dt > 0.0 && duration_ms > 0.0) {
        return Err(JsError::new("dt and duration must be positive"));
    }
    let bins = (duration_ms / dt).round() as usize;
    let tr = simulate_lif(&TimeSeries::new(dt, vec![i0; bins]).map_err(js_err)?, &p);
    let isi = (i0 > p.rheobase())
        .then(|| p.tau_l() * (i0 / (i0 - p.gl * (p.vt - p.el))).ln() + p.delta_abs);
    Ok(json!({
        "dt": dt,
        "v": tr.v.values,
        "spikes": tr.spikes.times(),
        "isi_closed_form": isi,
    })
    .to_string())
}

/// Correlation metric between two spike trains given as times in ms.
///
/// Returns JSON with `c` and both low-passed traces for plotting.
#[wasm_bindgen]
pub fn correlate(a: &[f64], b: &[f64], tau_lp: f64, duration_ms: f64) -> Result<String, JsError> {
    let dt = 0.1;
    let bins = (duration_ms / dt).round() as usize;
    let snap = |t: &[f64]| {
        SpikeTrain::from_bins(
            t.iter().filter(|&&x| x >= 0.0 && x < duration_ms).map(|x| (x / dt).round() as usize),
            dt,
        )
    };
    let (sa, sb) = (snap(a), snap(b));
    Ok(json!({
        "c": correlation(&sa, &sb, tau_lp, dt, bins),
        "la": lowpass(&sa, tau_lp, dt, bins).values,
        "lb": lowpass(&sb, tau_lp, dt, bins).values,
        "dt": dt,
    })
    .to_string())
}

/// The 54-54-1 XOR network, trained one round-robin sweep at a time.
#[wasm_bindgen]
pub struct XorTrainer {
    net: Network,
    patterns: Vec<Pattern>,
    learn: LearnConfig,
    tau_lp: f64,
    iteration: usize,
}

#[wasm_bindgen]
impl XorTrainer {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, train_hidden: bool) -> Result<XorTrainer, JsError> {
        let cfg = ExperimentConfig::defaults(ExperimentKind::Xor, false);
        let net = initial_network(&cfg, seed).map_err(js_err)?;
        let mut learn = cfg.learn_config();
        learn.trainable = vec![train_hidden, true];
        Ok(XorTrainer {
            net,
            patterns: xor_dataset().iter().map(|p| p.pattern()).collect(),
            learn,
            tau_lp: cfg.kernel.tau_lp,
            iteration: 0,
        })
    }

    /// Runs `n` sweeps over the four patterns.
    pub fn step(&mut self, n: usize) -> Result<(), JsError> {
        for _ in 0..n {
            for p in &self.patterns {
                train_iteration(&mut self.net, p, &self.learn).map_err(js_err)?;
            }
            self.iteration += 1;
        }
        Ok(())
    }

    /// JSON `{ iteration, patterns: [{ desired, observed, c }] }` for the current weights.
    pub fn snapshot(&self) -> Result<String, JsError> {
        let mut rows = Vec::new();
        for p in &self.patterns {
            let rec = forward(&self.net, &p.inputs, p.t_epoch).map_err(js_err)?;
            rows.push(json!({
                "desired": p.desired.times(),
                "observed": rec.output_spikes().times(),
                "c": p.correlation_of(&rec, self.tau_lp),
            }));
        }
        Ok(json!({ "iteration": self.iteration, "patterns": rows }).to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xor_trainer_steps_and_reports() {
        let mut t = XorTrainer::new(0, true).ok().unwrap();
        t.step(2).ok().unwrap();
        let v: serde_json::Value = serde_json::from_str(&t.snapshot().ok().unwrap()).unwrap();
        assert_eq!(v["iteration"], 2);
        assert_eq!(v["patterns"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn lif_trace_reports_closed_form() {
        let v: serde_json::Value = serde_json::from_str(&lif_trace(800.0, 100.0, 0.1).ok().unwrap()).unwrap();
        assert!(v["isi_closed_form"].as_f64().unwrap() > 0.0);
        assert!(!v["spikes"].as_array().unwrap().is_empty());
        let quiet: serde_json::Value = serde_json::from_str(&lif_trace(100.0, 50.0, 0.1).ok().unwrap()).unwrap();
        assert!(quiet["isi_closed_form"].is_null());
    }

    #[test]
    fn correlate_identical_is_one() {
        let v: serde_json::Value = serde_json::from_str(&correlate(&[5.0, 20.0], &[5.0, 20.0], 5.0, 50.0).ok().unwrap()).unwrap();
        assert!((v["c"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
}
