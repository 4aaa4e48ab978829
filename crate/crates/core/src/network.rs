//! Fully connected feedforward network and its forward pass.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{add_shifted, KernelBank, KernelParams, TimeSeries};
use crate::neuron::{simulate_lif, LifParams, NeuronTrace, SpikeTrain};

/// `N_0 -> N_1 -> ... -> N_L` with a single output neuron.
#[derive(Debug, Clone)]
pub struct Network {
    layer_sizes: Vec<usize>,
    /// `weights[l - 1]` has shape `N_l x N_{l-1}`.
    pub weights: Vec<Array2<f64>>,
    lif: LifParams,
    bank: KernelBank,
}

impl Network {
    /// A zero-weight network.
    pub fn new(layer_sizes: &[usize], lif: LifParams, kernels: KernelParams, dt: f64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid("topology", "need an input layer and an output layer"));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::invalid("topology", "layer sizes must be positive"));
        }
        if *layer_sizes.last().unwrap() != 1 {
            return Err(Error::invalid("topology", "the output layer must hold exactly one neuron"));
        }
        lif.validate()?;
        kernels.validate()?;
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        if !rel(kernels.cm, lif.cm) {
            return Err(Error::invalid("kernel.cm", "must equal lif.cm"));
        }
        if !rel(kernels.tau_l, lif.tau_l()) {
            return Err(Error::invalid("kernel.tau_l", "must equal lif.cm / lif.gl"));
        }
        let bank = KernelBank::new(kernels, dt)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            lif,
            bank,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    /// Number of weight layers `L`.
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn lif(&self) -> &LifParams {
        &self.lif
    }

    pub fn kernels(&self) -> &KernelParams {
        &self.bank.params
    }

    pub fn bank(&self) -> &KernelBank {
        &self.bank
    }

    pub fn dt(&self) -> f64 {
        self.bank.dt
    }

    /// Replaces all weight matrices after checking shapes and finiteness.
    pub fn set_weights(&mut self, weights: Vec<Array2<f64>>) -> Result<()> {
        if weights.len() != self.weights.len() {
            return Err(Error::Dimension {
                context: "weight layers",
                expected: self.weights.len(),
                actual: weights.len(),
            });
        }
        for (l, (new, old)) in weights.iter().zip(&self.weights).enumerate() {
            if new.dim() != old.dim() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {}: expected {:?}, got {:?}",
                    l + 1,
                    old.dim(),
                    new.dim()
                )));
            }
            if new.iter().any(|w| !w.is_finite()) {
                return Err(Error::invalid(format!("weights[{}]", l + 1), "non-finite entry"));
            }
        }
        self.weights = weights;
        Ok(())
    }

    /// Number of grid bins in an epoch of `t_epoch` ms.
    pub fn bins_for(&self, t_epoch: f64) -> usize {
        (t_epoch / self.dt()).round() as usize
    }
}

/// Topology, constants and weights; the derived kernel bank is not compared.
impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layer_sizes == other.layer_sizes
            && self.lif == other.lif
            && self.bank.params == other.bank.params
            && self.dt().to_bits() == other.dt().to_bits()
            && self.weights == other.weights
    }
}

/// Signals captured for one weight layer during a forward pass.
#[derive(Debug, Clone)]
pub struct LayerRecord {
    /// Input spike trains of this layer (outputs of the layer below).
    pub inputs: Vec<SpikeTrain>,
    /// `c` per upstream channel, `N_{l-1} x bins`.
    pub c_in: Array2<f64>,
    /// `d_hat = c * h_hat` per upstream channel, `N_{l-1} x bins`.
    pub d_hat: Array2<f64>,
    pub traces: Vec<NeuronTrace>,
}

impl LayerRecord {
    pub fn c_channel(&self, j: usize, dt: f64) -> TimeSeries {
        TimeSeries {
            dt,
            values: self.c_in.row(j).to_vec(),
        }
    }

    pub fn d_hat_channel(&self, j: usize, dt: f64) -> TimeSeries {
        TimeSeries {
            dt,
            values: self.d_hat.row(j).to_vec(),
        }
    }

    /// `d_hat` across all channels at one bin.
    pub fn d_hat_at(&self, bin: usize) -> ArrayView1<'_, f64> {
        self.d_hat.column(bin)
    }

    pub fn output_trains(&self) -> Vec<SpikeTrain> {
        self.traces.iter().map(|t| t.spikes.clone()).collect()
    }
}

/// Per-layer record of a forward pass; `layers[l - 1]` belongs to weight layer `l`.
#[derive(Debug, Clone)]
pub struct ForwardRecord {
    pub dt: f64,
    pub bins: usize,
    pub layers: Vec<LayerRecord>,
}

impl ForwardRecord {
    pub fn output_spikes(&self) -> &SpikeTrain {
        &self.layers.last().expect("record has layers").traces[0].spikes
    }

    pub fn top(&self) -> &LayerRecord {
        self.layers.last().expect("record has layers")
    }

    pub fn epoch(&self) -> f64 {
        self.bins as f64 * self.dt
    }
}

fn spikes_to_rows(trains: &[SpikeTrain], kernel: &TimeSeries, bins: usize) -> Array2<f64> {
    let mut out = Array2::zeros((trains.len(), bins));
    for (mut row, s) in out.rows_mut().into_iter().zip(trains) {
        let row = row.as_slice_mut().expect("standard layout");
        for b in s.bins(kernel.dt) {
            add_shifted(row, &kernel.values, b, 1.0);
        }
    }
    out
}

/// Propagates `inputs` through every layer over an epoch of `t_epoch` ms.
pub fn forward(net: &Network, inputs: &[SpikeTrain], t_epoch: f64) -> Result<ForwardRecord> {
    if inputs.len() != net.layer_sizes[0] {
        return Err(Error::Dimension {
            context: "input spike trains",
            expected: net.layer_sizes[0],
            actual: inputs.len(),
        });
    }
    if !(t_epoch > 0.0 && t_epoch.is_finite()) {
        return Err(Error::invalid("T", "epoch must be positive"));
    }
    if let Some(k) = inputs.iter().position(|s| !s.all_before(t_epoch)) {
        return Err(Error::invalid(
            format!("inputs[{k}]"),
            format!("spike outside the epoch [0, {t_epoch})"),
        ));
    }
    let dt = net.dt();
    let bins = net.bins_for(t_epoch);
    let bank = net.bank();
    let mut layers = Vec::with_capacity(net.depth());
    let mut trains = inputs.to_vec();
    for w in &net.weights {
        let c_in = spikes_to_rows(&trains, &bank.alpha, bins);
        let d_hat = spikes_to_rows(&trains, &bank.alpha_h_hat, bins);
        let current = w.dot(&c_in);
        let traces: Vec<NeuronTrace> = current
            .rows()
            .into_iter()
            .map(|row| {
                let i = TimeSeries {
                    dt,
                    values: row.to_vec(),
                };
                simulate_lif(&i, &net.lif)
            })
            .collect();
        let next = traces.iter().map(|t| t.spikes.clone()).collect();
        layers.push(LayerRecord {
            inputs: std::mem::replace(&mut trains, next),
            c_in,
            d_hat,
            traces,
        });
    }
    Ok(ForwardRecord { dt, bins, layers })
}

/// Weight initialization for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum InitScheme {
    Zeros,
    /// `|N(mean, std)|` magnitudes with a per-presynaptic-neuron sign.
    GaussianExcinh {
        mean: f64,
        std: f64,
        exc_fraction: f64,
    },
    /// `U(0, max)` magnitudes with a per-presynaptic-neuron sign.
    UniformExcinh { max: f64, exc_fraction: f64 },
}

impl InitScheme {
    /// Looks a scheme up by name with its default parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "zeros" => Ok(Self::Zeros),
            "gaussian-excinh" => Ok(Self::GaussianExcinh {
                mean: 1.0,
                std: 0.25,
                exc_fraction: 0.8,
            }),
            "uniform-excinh" => Ok(Self::UniformExcinh {
                max: 1.0,
                exc_fraction: 0.8,
            }),
            other => Err(Error::UnknownScheme(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Zeros => "zeros",
            Self::GaussianExcinh { .. } => "gaussian-excinh",
            Self::UniformExcinh { .. } => "uniform-excinh",
        }
    }

    fn fill(&self, w: &mut Array2<f64>, rng: &mut ChaCha8Rng) -> Result<()> {
        let (rows, cols) = w.dim();
        match *self {
            Self::Zeros => w.fill(0.0),
            Self::GaussianExcinh {
                mean,
                std,
                exc_fraction,
            } => {
                let normal = Normal::new(mean, std)
                    .map_err(|e| Error::invalid("init.std", e.to_string()))?;
                let signs = draw_signs(cols, exc_fraction, rng);
                for i in 0..rows {
                    for j in 0..cols {
                        w[(i, j)] = signs[j] * normal.sample(rng).abs();
                    }
                }
            }
            Self::UniformExcinh { max, exc_fraction } => {
                if !(max > 0.0) {
                    return Err(Error::invalid("init.max", "must be positive"));
                }
                let signs = draw_signs(cols, exc_fraction, rng);
                for i in 0..rows {
                    for j in 0..cols {
                        w[(i, j)] = signs[j] * rng.random_range(0.0..max);
                    }
                }
            }
        }
        Ok(())
    }
}

fn draw_signs(cols: usize, exc_fraction: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..cols)
        .map(|_| if rng.random::<f64>() < exc_fraction { 1.0 } else { -1.0 })
        .collect()
}

/// Fills every layer from its scheme. Layer `l` draws from ChaCha8 stream `l + 1`
/// of `seed`, so one layer's scheme never shifts another layer's draws.
pub fn init_weights(net: &Network, schemes: &[InitScheme], seed: u64) -> Result<Network> {
    if schemes.len() != net.depth() {
        return Err(Error::Dimension {
            context: "initialization schemes",
            expected: net.depth(),
            actual: schemes.len(),
        });
    }
    let mut out = net.clone();
    for (l, (w, scheme)) in out.weights.iter_mut().zip(schemes).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(l as u64 + 1);
        scheme.fill(w, &mut rng)?;
    }
    Ok(out)
}
