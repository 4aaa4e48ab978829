//! Spike raster CSV files and weight checkpoints.
//!
//! Raster: `neuron_id,spike_time_ms` header, one row per spike, rows ordered
//! by neuron then time. Times are written in shortest round-trip form.
//!
//! Checkpoint: a UTF-8 header of `key = value` lines closed by `end_header`,
//! then every weight matrix row-major as little-endian `f64`, bottom layer first.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::kernels::KernelParams;
use crate::network::Network;
use crate::neuron::{LifParams, SpikeTrain};

pub const RASTER_HEADER: &str = "neuron_id,spike_time_ms";
const CHECKPOINT_MAGIC: &str = "normad-checkpoint 1";
const END_HEADER: &str = "end_header\n";

pub fn raster_to_string(trains: &[SpikeTrain]) -> String {
    let mut out = String::from(RASTER_HEADER);
    out.push('\n');
    for (id, s) in trains.iter().enumerate() {
        for t in s.times() {
            let _ = writeln!(out, "{id},{t}");
        }
    }
    out
}

/// Parses a raster back into `n_neurons` trains (or as many as the highest id needs).
pub fn parse_raster(text: &str, n_neurons: Option<usize>) -> Result<Vec<SpikeTrain>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RASTER_HEADER => {}
        _ => {
            return Err(Error::Raster {
                line: 1,
                reason: format!("expected header `{RASTER_HEADER}`"),
            })
        }
    }
    let mut times: Vec<Vec<f64>> = vec![Vec::new(); n_neurons.unwrap_or(0)];
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Raster {
            line: line_no,
            reason,
        };
        let (id, t) = line
            .split_once(',')
            .ok_or_else(|| bad("expected two comma-separated fields".into()))?;
        let id: usize = id.trim().parse().map_err(|e| bad(format!("neuron_id: {e}")))?;
        let t: f64 = t.trim().parse().map_err(|e| bad(format!("spike_time_ms: {e}")))?;
        if let Some(n) = n_neurons {
            if id >= n {
                return Err(bad(format!("neuron_id {id} out of range for {n} neurons")));
            }
        }
        if times.len() <= id {
            times.resize(id + 1, Vec::new());
        }
        times[id].push(t);
    }
    times
        .into_iter()
        .map(|mut v| {
            v.sort_by(f64::total_cmp);
            SpikeTrain::new(v)
        })
        .collect()
}

pub fn write_raster(path: &Path, trains: &[SpikeTrain]) -> Result<()> {
    fs::write(path, raster_to_string(trains)).map_err(|e| Error::io(path, e))
}

pub fn read_raster(path: &Path, n_neurons: Option<usize>) -> Result<Vec<SpikeTrain>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_raster(&text, n_neurons)
}

/// Sidecar path for the desired train: `raster_x.csv` -> `raster_x_desired.csv`.
pub fn desired_sidecar(path: &Path) -> std::path::PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("raster");
    path.with_file_name(format!("{stem}_desired.csv"))
}

/// Writes an observed raster and its desired-spike sidecar.
pub fn emit_raster(path: &Path, observed: &[SpikeTrain], desired: &SpikeTrain) -> Result<()> {
    write_raster(path, observed)?;
    write_raster(&desired_sidecar(path), std::slice::from_ref(desired))
}

/// Network plus the seed that initialized it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub seed: u64,
}

pub fn checkpoint_to_bytes(net: &Network, seed: u64) -> Vec<u8> {
    let l = net.lif();
    let k = net.kernels();
    let sizes: Vec<String> = net.layer_sizes().iter().map(|n| n.to_string()).collect();
    let mut head = String::new();
    let _ = writeln!(head, "{CHECKPOINT_MAGIC}");
    let _ = writeln!(head, "layer_sizes = {}", sizes.join(" "));
    let _ = writeln!(head, "dt = {}", net.dt());
    let _ = writeln!(head, "seed = {seed}");
    for (key, v) in [
        ("lif.cm", l.cm),
        ("lif.gl", l.gl),
        ("lif.el", l.el),
        ("lif.vt", l.vt),
        ("lif.delta_abs", l.delta_abs),
        ("kernel.tau1", k.tau1),
        ("kernel.tau2", k.tau2),
        ("kernel.tau_l", k.tau_l),
        ("kernel.tau_l_prime", k.tau_l_prime),
        ("kernel.tau_lp", k.tau_lp),
        ("kernel.cm", k.cm),
        ("kernel.psc_scale", k.psc_scale),
    ] {
        let _ = writeln!(head, "{key} = {v}");
    }
    head.push_str(END_HEADER);
    let mut out = head.into_bytes();
    for w in &net.weights {
        for v in w.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn header_map(text: &str) -> Result<std::collections::BTreeMap<&str, &str>> {
    let mut lines = text.lines();
    if lines.next() != Some(CHECKPOINT_MAGIC) {
        return Err(Error::CorruptHeader("missing magic line".into()));
    }
    let mut map = std::collections::BTreeMap::new();
    for line in lines {
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| Error::CorruptHeader(format!("bad line `{line}`")))?;
        map.insert(k, v);
    }
    Ok(map)
}

fn field<T: std::str::FromStr>(map: &std::collections::BTreeMap<&str, &str>, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    map.get(key)
        .ok_or_else(|| Error::CorruptHeader(format!("missing `{key}`")))?
        .parse()
        .map_err(|e| Error::CorruptHeader(format!("`{key}`: {e}")))
}

/// Decodes a checkpoint. With `expected_dt`, a differing stored step is an error.
pub fn checkpoint_from_bytes(bytes: &[u8], expected_dt: Option<f64>) -> Result<Checkpoint> {
    let marker = END_HEADER.as_bytes();
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::CorruptHeader("no end_header line".into()))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::CorruptHeader("header is not UTF-8".into()))?;
    let map = header_map(text)?;
    let sizes: Vec<usize> = map
        .get("layer_sizes")
        .ok_or_else(|| Error::CorruptHeader("missing `layer_sizes`".into()))?
        .split_whitespace()
        .map(|s| s.parse().map_err(|e| Error::CorruptHeader(format!("layer_sizes: {e}"))))
        .collect::<Result<_>>()?;
    let dt: f64 = field(&map, "dt")?;
    if let Some(want) = expected_dt {
        if dt.to_bits() != want.to_bits() {
            return Err(Error::DtMismatch { left: dt, right: want });
        }
    }
    let lif = LifParams {
        cm: field(&map, "lif.cm")?,
        gl: field(&map, "lif.gl")?,
        el: field(&map, "lif.el")?,
        vt: field(&map, "lif.vt")?,
        delta_abs: field(&map, "lif.delta_abs")?,
    };
    let kernels = KernelParams {
        tau1: field(&map, "kernel.tau1")?,
        tau2: field(&map, "kernel.tau2")?,
        tau_l: field(&map, "kernel.tau_l")?,
        tau_l_prime: field(&map, "kernel.tau_l_prime")?,
        tau_lp: field(&map, "kernel.tau_lp")?,
        cm: field(&map, "kernel.cm")?,
        psc_scale: field(&map, "kernel.psc_scale")?,
    };
    let seed: u64 = field(&map, "seed")?;
    let body = &bytes[end + marker.len()..];
    let expected: usize = sizes.windows(2).map(|p| p[0] * p[1]).sum();
    if body.len() != expected * 8 {
        return Err(Error::ShapeMismatch(format!(
            "layer sizes {sizes:?} need {expected} weights, file holds {} bytes",
            body.len()
        )));
    }
    let mut net = Network::new(&sizes, lif, kernels, dt)?;
    let mut values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let weights = sizes
        .windows(2)
        .map(|p| {
            let v: Vec<f64> = values.by_ref().take(p[0] * p[1]).collect();
            Array2::from_shape_vec((p[1], p[0]), v).expect("counted above")
        })
        .collect();
    net.set_weights(weights)?;
    Ok(Checkpoint { network: net, seed })
}

pub fn save_checkpoint(path: &Path, net: &Network, seed: u64) -> Result<()> {
    fs::write(path, checkpoint_to_bytes(net, seed)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, expected_dt: Option<f64>) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes, expected_dt)
}
