//! Experiment configuration, the XOR / deep / custom runners, and report output.
//!
//! Configuration is resolved in layers: built-in defaults for the experiment
//! kind, then the TOML file, then `NORMAD_*` environment variables, then
//! explicit overrides (command-line flags). Every layer is a TOML table merged
//! key by key, so unknown keys anywhere are rejected with their full path.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{random_problem, xor_dataset, ProblemSpec, RNG_ALGORITHM, XOR_EPOCH};
use crate::error::{Error, Result};
use crate::io::{emit_raster, read_raster, save_checkpoint};
use crate::kernels::KernelParams;
use crate::network::{forward, init_weights, InitScheme, Network};
use crate::neuron::LifParams;
use crate::normad::{train, LearnConfig, Pattern, TrainReport};

/// Environment variables with this prefix override config keys.
/// `NORMAD_LEARN__R_H=0.1` sets `learn.r_h`; `__` separates sections.
pub const ENV_PREFIX: &str = "NORMAD_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Xor,
    Deep,
    Custom,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Xor => "xor",
            Self::Deep => "deep",
            Self::Custom => "custom",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xor" => Ok(Self::Xor),
            "deep" => Ok(Self::Deep),
            "custom" => Ok(Self::Custom),
            _ => Err(Error::Config(format!("unknown experiment `{s}`"))),
        }
    }
}

/// Which weight layers learn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    AllLayers,
    TopTwo,
    OutputOnly,
    HiddenFrozen,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Self::AllLayers, Self::TopTwo, Self::OutputOnly, Self::HiddenFrozen];

    pub fn name(self) -> &'static str {
        match self {
            Self::AllLayers => "all-layers",
            Self::TopTwo => "top-two",
            Self::OutputOnly => "output-only",
            Self::HiddenFrozen => "hidden-frozen",
        }
    }

    /// Per-layer trainable flags for a network of `depth` weight layers.
    pub fn trainable(self, depth: usize) -> Vec<bool> {
        let plastic_from_top = match self {
            Self::AllLayers => depth,
            Self::TopTwo => 2,
            Self::OutputOnly | Self::HiddenFrozen => 1,
        };
        (0..depth).map(|l| l + plastic_from_top >= depth).collect()
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation `{s}`")))
    }
}

/// Kernel constants that are not derived from the membrane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub tau1: f64,
    pub tau2: f64,
    pub tau_l_prime: f64,
    pub tau_lp: f64,
    pub psc_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnSection {
    pub r_o: f64,
    pub r_h: f64,
    pub max_iterations: usize,
    pub convergence_c: f64,
    pub eps_slope: f64,
}

/// Hidden layers share one scheme; the output layer has its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub hidden: InitScheme,
    pub output: InitScheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub input_rate: f64,
    pub output_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomPattern {
    /// Raster CSV holding one train per input neuron.
    pub inputs: PathBuf,
    /// Raster CSV whose neuron 0 is the desired output.
    pub desired: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub topology: Vec<usize>,
    pub seeds: Vec<u64>,
    pub ablation: Ablation,
    pub out_dir: PathBuf,
    /// ms
    pub dt: f64,
    /// Epoch length in ms.
    pub t_epoch: f64,
    /// Output rasters are kept in the report every this many iterations (0 = none).
    pub trajectory_every: usize,
    pub lif: LifParams,
    pub kernel: KernelSection,
    pub learn: LearnSection,
    pub init: InitSection,
    pub problem: ProblemSection,
    #[serde(default)]
    pub patterns: Vec<CustomPattern>,
}

impl ExperimentConfig {
    /// Built-in defaults. `full` selects the 100-seed reproduction scale.
    pub fn defaults(kind: ExperimentKind, full: bool) -> Self {
        let kernel = KernelSection {
            tau1: 5.0,
            tau2: 1.25,
            tau_l_prime: 10.0,
            tau_lp: 5.0,
            psc_scale: 400.0,
        };
        let problem = ProblemSection {
            input_rate: 20.0,
            output_rate: 10.0,
        };
        match kind {
            ExperimentKind::Xor => Self {
                experiment: kind,
                topology: vec![54, 54, 1],
                seeds: (0..if full { 100 } else { 20 }).collect(),
                ablation: Ablation::AllLayers,
                out_dir: PathBuf::from("out/xor"),
                dt: 0.1,
                t_epoch: XOR_EPOCH,
                trajectory_every: 5,
                lif: LifParams {
                    delta_abs: 1.0,
                    ..LifParams::default()
                },
                kernel: KernelSection {
                    tau_l_prime: 1.5,
                    psc_scale: 600.0,
                    ..kernel
                },
                learn: LearnSection {
                    r_o: 1.0,
                    r_h: 0.03,
                    max_iterations: 800,
                    convergence_c: 1.0,
                    eps_slope: 0.1,
                },
                init: InitSection {
                    hidden: InitScheme::GaussianExcinh {
                        mean: 0.5,
                        std: 1.0,
                        exc_fraction: 0.8,
                    },
                    output: InitScheme::Zeros,
                },
                problem,
                patterns: Vec::new(),
            },
            ExperimentKind::Deep | ExperimentKind::Custom => Self {
                experiment: kind,
                topology: vec![100, 50, 25, 1],
                seeds: (0..if full { 100 } else { 10 }).collect(),
                ablation: Ablation::AllLayers,
                out_dir: PathBuf::from(format!("out/{}", kind.name())),
                dt: 0.1,
                t_epoch: 500.0,
                trajectory_every: 50,
                lif: LifParams::default(),
                kernel,
                learn: LearnSection {
                    r_o: 0.03,
                    r_h: 0.01,
                    max_iterations: 6000,
                    convergence_c: 0.98,
                    eps_slope: 0.1,
                },
                init: InitSection {
                    hidden: InitScheme::from_name("uniform-excinh").expect("known scheme"),
                    output: InitScheme::Zeros,
                },
                problem,
                patterns: Vec::new(),
            },
        }
    }

    pub fn kernel_params(&self) -> KernelParams {
        KernelParams {
            tau1: self.kernel.tau1,
            tau2: self.kernel.tau2,
            tau_l: self.lif.tau_l(),
            tau_l_prime: self.kernel.tau_l_prime,
            tau_lp: self.kernel.tau_lp,
            cm: self.lif.cm,
            psc_scale: self.kernel.psc_scale,
        }
    }

    pub fn learn_config(&self) -> LearnConfig {
        LearnConfig {
            r_o: self.learn.r_o,
            r_h: self.learn.r_h,
            max_iterations: self.learn.max_iterations,
            convergence_c: self.learn.convergence_c,
            eps_slope: self.learn.eps_slope,
            trainable: self.ablation.trainable(self.topology.len() - 1),
        }
    }

    pub fn init_schemes(&self) -> Vec<InitScheme> {
        let depth = self.topology.len().saturating_sub(1);
        (0..depth)
            .map(|l| if l + 1 == depth { self.init.output } else { self.init.hidden })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if !(self.t_epoch > 0.0 && self.t_epoch.is_finite()) {
            return Err(Error::invalid("t_epoch", "must be positive"));
        }
        if self.topology.len() < 2 || self.topology.last() != Some(&1) {
            return Err(Error::invalid("topology", "need at least two layers ending in one output neuron"));
        }
        if self.experiment == ExperimentKind::Xor && self.topology[0] != 54 {
            return Err(Error::invalid("topology", "xor needs 54 input neurons"));
        }
        if self.experiment == ExperimentKind::Xor && (self.t_epoch - XOR_EPOCH).abs() > 1e-12 && self.t_epoch < 17.0 {
            return Err(Error::invalid("t_epoch", "xor needs at least 17 ms"));
        }
        if self.experiment == ExperimentKind::Custom && self.patterns.is_empty() {
            return Err(Error::invalid("patterns", "custom runs need at least one pattern"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds", "need at least one seed"));
        }
        self.learn_config().validate()?;
        ProblemSpec {
            n_inputs: self.topology[0],
            input_rate: self.problem.input_rate,
            output_rate: self.problem.output_rate,
            t_epoch: self.t_epoch,
            seed: 0,
        }
        .validate()?;
        Network::new(&self.topology, self.lif, self.kernel_params(), self.dt)?;
        Ok(())
    }
}

/// Command-line level overrides, applied last.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub ablation: Option<Ablation>,
    pub out_dir: Option<PathBuf>,
    /// Further `section.key = value` pairs.
    pub set: Vec<(String, String)>,
}

fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// `["learn", "r_h"]`, `"0.1"` -> `{learn = {r_h = 0.1}}`.
fn nested(path: &[&str], value: toml::Value) -> toml::Table {
    let mut t = toml::Table::new();
    match path {
        [] => {}
        [last] => {
            t.insert(last.to_string(), value);
        }
        [head, rest @ ..] => {
            t.insert(head.to_string(), toml::Value::Table(nested(rest, value)));
        }
    }
    t
}

/// Reads `NORMAD_SECTION__KEY` style variables from `vars`.
pub fn env_overrides(vars: impl IntoIterator<Item = (String, String)>) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| {
            let rest = k.strip_prefix(ENV_PREFIX)?;
            let key = rest.to_lowercase().split("__").collect::<Vec<_>>().join(".");
            Some((key, v))
        })
        .collect();
    out.sort();
    out
}

/// Defaults, then `file_text`, then `env`, then `overrides`.
pub fn resolve_config(
    kind: ExperimentKind,
    full: bool,
    file_text: Option<&str>,
    env: &[(String, String)],
    overrides: &Overrides,
) -> Result<ExperimentConfig> {
    let defaults = ExperimentConfig::defaults(kind, full);
    let mut table = toml::Table::try_from(&defaults).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(text) = file_text {
        let mut file: toml::Table = text.parse().map_err(|e| Error::Config(format!("config file: {e}")))?;
        if let Some(toml::Value::String(k)) = file.remove("experiment") {
            if k != kind.name() {
                log::warn!("config file names experiment `{k}`; running `{}`", kind.name());
            }
        }
        if full {
            // the scale flag outranks a file seed list
            file.remove("seeds");
        }
        merge(&mut table, file);
    }
    let mut pairs: Vec<(String, String)> = env.to_vec();
    pairs.extend(overrides.set.iter().cloned());
    for (key, raw) in pairs {
        let path: Vec<&str> = key.split('.').collect();
        merge(&mut table, nested(&path, parse_scalar(&raw)));
    }
    if let Some(seeds) = &overrides.seeds {
        table.insert(
            "seeds".into(),
            toml::Value::Array(seeds.iter().map(|&s| toml::Value::Integer(s as i64)).collect()),
        );
    }
    if let Some(a) = overrides.ablation {
        table.insert("ablation".into(), toml::Value::String(a.name().into()));
    }
    if let Some(d) = &overrides.out_dir {
        table.insert("out_dir".into(), toml::Value::String(d.to_string_lossy().into_owned()));
    }
    table.insert("experiment".into(), toml::Value::String(kind.name().into()));
    let cfg: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub converged: bool,
    /// Update rounds before convergence, or `max_iterations + 1` if never.
    pub iterations_to_convergence: usize,
    /// `[iteration][pattern]`.
    pub correlations: Vec<Vec<f64>>,
    /// `(iteration, per-pattern output spike times)`, sampled.
    pub output_trajectory: Vec<(usize, Vec<Vec<f64>>)>,
    pub final_outputs: Vec<Vec<f64>>,
    pub checkpoint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub rng: String,
    pub schedule: String,
    pub version: String,
    /// Unix seconds when the report was written (0 for in-memory runs); the
    /// only field that differs between identical runs.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub runs: Vec<SeedRun>,
    pub converged_count: usize,
    /// Entry `i`: runs converged within `i` update rounds.
    pub cumulative_converged: Vec<usize>,
    pub metadata: Metadata,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Sentinel for a run that never converged.
pub fn non_convergence_sentinel(max_iterations: usize) -> usize {
    max_iterations + 1
}

pub fn cumulative_curve(iterations: &[usize], max_iterations: usize) -> Vec<usize> {
    (0..=max_iterations)
        .map(|i| iterations.iter().filter(|&&k| k <= i).count())
        .collect()
}

fn build_patterns(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Pattern>> {
    match cfg.experiment {
        ExperimentKind::Xor => Ok(xor_dataset()
            .iter()
            .map(|p| Pattern {
                t_epoch: cfg.t_epoch,
                ..p.pattern()
            })
            .collect()),
        ExperimentKind::Deep => {
            let spec = ProblemSpec {
                n_inputs: cfg.topology[0],
                input_rate: cfg.problem.input_rate,
                output_rate: cfg.problem.output_rate,
                t_epoch: cfg.t_epoch,
                seed,
            };
            Ok(vec![random_problem(&spec, cfg.dt)?.pattern()])
        }
        ExperimentKind::Custom => cfg
            .patterns
            .iter()
            .map(|p| {
                let inputs = read_raster(&p.inputs, Some(cfg.topology[0]))?;
                let desired = read_raster(&p.desired, Some(1))?.remove(0);
                Ok(Pattern {
                    inputs,
                    desired,
                    t_epoch: cfg.t_epoch,
                })
            })
            .collect(),
    }
}

/// Initial network for `seed` under `cfg`.
pub fn initial_network(cfg: &ExperimentConfig, seed: u64) -> Result<Network> {
    let net = Network::new(&cfg.topology, cfg.lif, cfg.kernel_params(), cfg.dt)?;
    init_weights(&net, &cfg.init_schemes(), seed)
}

struct Trained {
    seed: u64,
    net: Network,
    patterns: Vec<Pattern>,
    report: TrainReport,
}

fn train_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Trained> {
    let patterns = build_patterns(cfg, seed)?;
    let mut net = initial_network(cfg, seed)?;
    let report = train(&mut net, &patterns, &cfg.learn_config())?;
    Ok(Trained {
        seed,
        net,
        patterns,
        report,
    })
}

fn times(s: &crate::neuron::SpikeTrain) -> Vec<f64> {
    s.times().to_vec()
}

/// Trains every seed and returns the report without touching the filesystem.
pub fn run_in_memory(cfg: &ExperimentConfig) -> Result<(RunReport, Vec<(u64, Network, Vec<Pattern>)>)> {
    cfg.validate()?;
    #[cfg(feature = "parallel")]
    let seeds = cfg.seeds.par_iter();
    #[cfg(not(feature = "parallel"))]
    let seeds = cfg.seeds.iter();
    let trained: Vec<Trained> = seeds.map(|&s| train_seed(cfg, s)).collect::<Result<_>>()?;
    let max = cfg.learn.max_iterations;
    let mut runs = Vec::with_capacity(trained.len());
    let mut nets = Vec::with_capacity(trained.len());
    let mut schedule = String::new();
    for t in trained {
        let its = t.report.converged_at.unwrap_or(non_convergence_sentinel(max));
        let output_trajectory = t
            .report
            .outputs
            .iter()
            .enumerate()
            .filter(|(i, _)| cfg.trajectory_every > 0 && i % cfg.trajectory_every == 0)
            .map(|(i, o)| (i, o.iter().map(times).collect()))
            .collect();
        runs.push(SeedRun {
            seed: t.seed,
            converged: t.report.converged_at.is_some(),
            iterations_to_convergence: its,
            correlations: t.report.correlations.iter().map(|c| c.per_pattern.clone()).collect(),
            output_trajectory,
            final_outputs: t.report.outputs.last().map(|o| o.iter().map(times).collect()).unwrap_or_default(),
            checkpoint: format!("checkpoint_{}.bin", t.seed),
        });
        schedule = t.report.schedule.clone();
        nets.push((t.seed, t.net, t.patterns));
    }
    let its: Vec<usize> = runs.iter().map(|r| r.iterations_to_convergence).collect();
    let report = RunReport {
        config: cfg.clone(),
        converged_count: runs.iter().filter(|r| r.converged).count(),
        cumulative_converged: cumulative_curve(&its, max),
        runs,
        metadata: Metadata {
            rng: RNG_ALGORITHM.to_string(),
            schedule,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: 0,
        },
    };
    Ok((report, nets))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn correlation_csv(run: &SeedRun) -> String {
    let n = run.correlations.first().map_or(0, |c| c.len());
    let mut out = String::from("iteration");
    for p in 0..n {
        out.push_str(&format!(",c_p{p}"));
    }
    out.push('\n');
    for (i, cs) in run.correlations.iter().enumerate() {
        out.push_str(&i.to_string());
        for c in cs {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
    }
    out
}

/// Runs the configured experiment and writes every artifact into `out_dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let (mut report, nets) = run_in_memory(cfg)?;
    report.metadata.timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for ((seed, net, patterns), run) in nets.iter().zip(report.runs.iter_mut()) {
        let ck = dir.join(&run.checkpoint);
        save_checkpoint(&ck, net, *seed)?;
        run.checkpoint = ck.to_string_lossy().into_owned();
        write_text(&dir.join(format!("correlation_{seed}.csv")), &correlation_csv(run))?;
        for (k, p) in patterns.iter().enumerate() {
            let rec = forward(net, &p.inputs, p.t_epoch)?;
            emit_raster(&dir.join(format!("raster_{seed}_p{k}.csv")), &rec.top().output_trains(), &p.desired)?;
        }
    }
    write_text(&dir.join("report.json"), &report.to_json()?)?;
    Ok(report)
}

/// Correlation curves of several ablations keyed by name, for side-by-side summaries.
pub fn converged_by_ablation(reports: &[RunReport]) -> BTreeMap<String, usize> {
    reports
        .iter()
        .map(|r| (r.config.ablation.name().to_string(), r.converged_count))
        .collect()
}
