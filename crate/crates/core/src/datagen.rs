//! Training problems: Poisson spike trains and the temporally coded XOR set.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`). A problem seed selects the
//! key and each spike train draws from its own stream of that key: stream 0
//! holds the desired output, stream `k + 1` holds input `k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normad::Pattern;
use crate::neuron::SpikeTrain;

/// Recorded in run metadata so reports name their generator.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9); seed_from_u64(seed), stream 0 = desired, stream k+1 = input k";

/// Neurons per XOR population (one per 1 ms delay step).
pub const XOR_POPULATION: usize = 18;
/// Spike time of the first neuron of an active input population.
pub const XOR_INPUT_ONSET: f64 = 6.0;
pub const XOR_EARLY: f64 = 10.0;
pub const XOR_LATE: f64 = 16.0;
pub const XOR_EPOCH: f64 = 30.0;

/// Builds a seeded stream for one spike train of a problem.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Homogeneous Poisson train of `rate` spikes/s over `[0, t_epoch)` ms,
/// snapped down to the `dt` grid; spikes landing in an occupied bin are dropped.
pub fn poisson_train(rate: f64, t_epoch: f64, dt: f64, rng: &mut impl Rng) -> SpikeTrain {
    if rate <= 0.0 {
        return SpikeTrain::empty();
    }
    let mean_isi = 1000.0 / rate;
    let mut t = 0.0;
    let mut bins = Vec::new();
    loop {
        // inverse-CDF exponential draw; 1 - u lies in (0, 1]
        let u: f64 = rng.random();
        t += -mean_isi * (1.0 - u).ln();
        if t >= t_epoch {
            break;
        }
        let b = (t / dt).floor() as usize;
        if bins.last() != Some(&b) && (b as f64) * dt < t_epoch {
            bins.push(b);
        }
    }
    SpikeTrain::from_bins(bins, dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XorPattern {
    pub label: (bool, bool),
    /// Bias population, then input 1, then input 2.
    pub inputs: Vec<SpikeTrain>,
    pub desired: SpikeTrain,
}

impl XorPattern {
    pub fn target(&self) -> bool {
        self.label.0 ^ self.label.1
    }

    pub fn pattern(&self) -> Pattern {
        Pattern {
            inputs: self.inputs.clone(),
            desired: self.desired.clone(),
            t_epoch: XOR_EPOCH,
        }
    }
}

fn population(onset: f64, active: bool) -> Vec<SpikeTrain> {
    (0..XOR_POPULATION)
        .map(|k| {
            if active {
                SpikeTrain::new(vec![onset + k as f64]).expect("single spike")
            } else {
                SpikeTrain::empty()
            }
        })
        .collect()
}

/// The four XOR patterns over 54 delay-ramp input neurons.
pub fn xor_dataset() -> Vec<XorPattern> {
    [(false, false), (false, true), (true, false), (true, true)]
        .into_iter()
        .map(|(a, b)| {
            let mut inputs = population(0.0, true);
            inputs.extend(population(XOR_INPUT_ONSET, a));
            inputs.extend(population(XOR_INPUT_ONSET, b));
            let t = if a ^ b { XOR_EARLY } else { XOR_LATE };
            XorPattern {
                label: (a, b),
                inputs,
                desired: SpikeTrain::new(vec![t]).expect("single spike"),
            }
        })
        .collect()
}

/// Reads the logical output back from a spike time.
pub fn decode_xor(desired: &SpikeTrain) -> Option<bool> {
    match desired.times() {
        [t] if (t - XOR_EARLY).abs() < 1e-9 => Some(true),
        [t] if (t - XOR_LATE).abs() < 1e-9 => Some(false),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub n_inputs: usize,
    /// spikes/s
    pub input_rate: f64,
    /// spikes/s
    pub output_rate: f64,
    /// ms
    pub t_epoch: f64,
    pub seed: u64,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self {
            n_inputs: 100,
            input_rate: 20.0,
            output_rate: 10.0,
            t_epoch: 500.0,
            seed: 0,
        }
    }
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.input_rate >= 0.0 && self.input_rate.is_finite()) {
            return Err(Error::invalid("problem.input_rate", "must be finite and >= 0"));
        }
        if !(self.output_rate >= 0.0 && self.output_rate.is_finite()) {
            return Err(Error::invalid("problem.output_rate", "must be finite and >= 0"));
        }
        if !(self.t_epoch > 0.0 && self.t_epoch.is_finite()) {
            return Err(Error::invalid("problem.t_epoch", "must be positive"));
        }
        Ok(())
    }
}

/// A generated input/target pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub inputs: Vec<SpikeTrain>,
    pub desired: SpikeTrain,
    pub t_epoch: f64,
}

impl Problem {
    pub fn pattern(&self) -> Pattern {
        Pattern {
            inputs: self.inputs.clone(),
            desired: self.desired.clone(),
            t_epoch: self.t_epoch,
        }
    }
}

/// Desired trains that come out empty are redrawn this many times at most.
const MAX_RESAMPLE: usize = 1000;

/// Poisson inputs and a Poisson desired train, each from its own stream.
pub fn random_problem(spec: &ProblemSpec, dt: f64) -> Result<Problem> {
    spec.validate()?;
    let mut rng = stream(spec.seed, 0);
    let mut desired = poisson_train(spec.output_rate, spec.t_epoch, dt, &mut rng);
    if spec.output_rate > 0.0 {
        for _ in 0..MAX_RESAMPLE {
            if !desired.is_empty() {
                break;
            }
            desired = poisson_train(spec.output_rate, spec.t_epoch, dt, &mut rng);
        }
    }
    let inputs = (0..spec.n_inputs)
        .map(|k| {
            let mut r = stream(spec.seed, k as u64 + 1);
            poisson_train(spec.input_rate, spec.t_epoch, dt, &mut r)
        })
        .collect();
    Ok(Problem {
        inputs,
        desired,
        t_epoch: spec.t_epoch,
    })
}
