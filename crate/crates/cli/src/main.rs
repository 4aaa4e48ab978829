use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use normad_core::experiment::{self, Ablation, ExperimentKind, Overrides, ENV_PREFIX};
use normad_core::Error;

const ENV_HELP: &str = "\
Configuration precedence: command-line flag > NORMAD_* environment variable > config file > built-in default.

Environment overrides use the prefix NORMAD_ and a double underscore between
section and key, e.g.
  NORMAD_LEARN__R_H=0.1          sets learn.r_h
  NORMAD_KERNEL__PSC_SCALE=500   sets kernel.psc_scale
  NORMAD_SEEDS='[1, 2, 3]'       sets seeds
Values are parsed as TOML scalars or arrays.

Outputs in --out: report.json, correlation_<seed>.csv, raster_<seed>_p<k>.csv
(+ _desired.csv sidecar), checkpoint_<seed>.bin.

--full runs 100 seeds (xor) or 100 problems (deep). Expect minutes for xor and
several hours for deep on one core.";

#[derive(Parser)]
#[command(name = "normad", version, about = "Train multi-layer spiking networks with NormAD", after_long_help = ENV_HELP, after_help = ENV_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Xor,
    Deep,
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblationArg {
    AllLayers,
    TopTwo,
    OutputOnly,
    HiddenFrozen,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(value_enum)]
    experiment: Kind,
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds as a comma list and/or ranges, e.g. `0,3,10..20`.
    #[arg(long, value_name = "LIST")]
    seed_list: Option<String>,
    #[arg(long, value_enum)]
    ablation: Option<AblationArg>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Full-scale seed counts (100 seeds or problems).
    #[arg(long)]
    full: bool,
    /// Extra `section.key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn parse_seed_list(s: &str) -> Result<Vec<u64>, Error> {
    let bad = |p: &str| Error::Config(format!("--seed-list: cannot parse `{p}`"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.parse().map_err(|_| bad(part))?;
            let b: u64 = b.parse().map_err(|_| bad(part))?;
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| bad(part))?);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("--seed-list is empty".into()));
    }
    Ok(out)
}

fn run(args: RunArgs) -> Result<(), Error> {
    let kind = match args.experiment {
        Kind::Xor => ExperimentKind::Xor,
        Kind::Deep => ExperimentKind::Deep,
        Kind::Custom => ExperimentKind::Custom,
    };
    let file_text = match &args.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?),
        None => None,
    };
    let env = experiment::env_overrides(std::env::vars());
    let set = args
        .set
        .iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))
        })
        .collect::<Result<_, _>>()?;
    let overrides = Overrides {
        seeds: args.seed_list.as_deref().map(parse_seed_list).transpose()?,
        ablation: args.ablation.map(|a| match a {
            AblationArg::AllLayers => Ablation::AllLayers,
            AblationArg::TopTwo => Ablation::TopTwo,
            AblationArg::OutputOnly => Ablation::OutputOnly,
            AblationArg::HiddenFrozen => Ablation::HiddenFrozen,
        }),
        out_dir: args.out,
        set,
    };
    let cfg = experiment::resolve_config(kind, args.full, file_text.as_deref(), &env, &overrides)?;
    log::info!(
        "{} run: {} seeds, ablation {}, output {}",
        kind.name(),
        cfg.seeds.len(),
        cfg.ablation.name(),
        cfg.out_dir.display()
    );
    let report = experiment::run(&cfg)?;
    println!(
        "{}: {}/{} converged (criterion C >= {}, max {} iterations); report at {}",
        kind.name(),
        report.converged_count,
        report.runs.len(),
        cfg.learn.convergence_c,
        cfg.learn.max_iterations,
        cfg.out_dir.join("report.json").display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    debug_assert!(ENV_HELP.contains(ENV_PREFIX));
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
