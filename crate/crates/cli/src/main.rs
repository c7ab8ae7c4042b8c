//! `fbspde` command-line front end.
//!
//! Exit codes: 0 success, 1 a check failed or the run errored, 2 bad
//! arguments or config.

mod commands;
mod config;
mod expr;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use fbspde::{Error, Result};

use crate::commands::Context;
use crate::config::{Loaded, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "fbspde", version, about = "Fractional BSPDE and Zakai filtering numerics")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand, Debug)]
enum Command {
    /// Tabulate the fractional heat kernel and check its bounds.
    Kernel(KernelArgs),
    /// Apply the fractional Laplacian to a field.
    Fraclap(FraclapArgs),
    /// Simulate symmetric stable Lévy paths.
    Levy(LevyArgs),
    /// Solve a deterministic fractional PDE.
    SolvePde(PdeArgs),
    /// Solve a fractional BSPDE with random data.
    SolveBspde(BspdeArgs),
    /// Filter one observation path.
    Zakai(ZakaiArgs),
    /// Brute-force optimal control and the maximum-principle check.
    Control(ControlArgs),
    /// Run the acceptance suite.
    VerifyAll(VerifyArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Kernel(_) => "kernel",
            Command::Fraclap(_) => "fraclap",
            Command::Levy(_) => "levy",
            Command::SolvePde(_) => "solve-pde",
            Command::SolveBspde(_) => "solve-bspde",
            Command::Zakai(_) => "zakai",
            Command::Control(_) => "control",
            Command::VerifyAll(_) => "verify-all",
        }
    }
}

fn pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [a, b] => Ok([
            a.trim().parse().map_err(|e| format!("`{a}`: {e}"))?,
            b.trim().parse().map_err(|e| format!("`{b}`: {e}"))?,
        ]),
        _ => Err(format!("expected two comma-separated numbers, got `{s}`")),
    }
}

#[derive(Args, Debug)]
struct KernelArgs {
    #[arg(long)]
    alpha: Option<f64>,
    /// Accumulated diffusivity.
    #[arg(long = "A")]
    a: Option<f64>,
    /// `min,max` of the sampled interval.
    #[arg(long, value_parser = pair, allow_hyphen_values = true)]
    xrange: Option<[f64; 2]>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_parser = ["periodic", "line"])]
    mode: Option<String>,
}

#[derive(Args, Debug)]
struct FraclapArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_parser = ["spectral", "integral"])]
    method: Option<String>,
    /// `x,value` CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LevyArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long, value_parser = ["summary", "paths"])]
    emit: Option<String>,
}

#[derive(Args, Debug)]
struct PdeArgs {
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    /// `t,x`; repeatable.
    #[arg(long, value_parser = pair, allow_hyphen_values = true)]
    probe: Vec<[f64; 2]>,
    #[arg(long)]
    compare: Option<String>,
}

#[derive(Args, Debug)]
struct BspdeArgs {
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
    /// `t,x`; repeatable.
    #[arg(long, value_parser = pair, allow_hyphen_values = true)]
    probe: Vec<[f64; 2]>,
}

#[derive(Args, Debug)]
struct ZakaiArgs {
    /// Control values on equal intervals, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    policy: Vec<f64>,
    /// Observation path index.
    #[arg(long)]
    path: Option<u64>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args, Debug)]
struct ControlArgs {
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    intervals: Option<usize>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_parser = ["quick", "full"])]
    tier: Option<String>,
    /// Check ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
}

/// Parses a lowercase enum through its serde representation.
fn enum_value<T: serde::de::DeserializeOwned>(flag: &str, s: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| Error::config(flag, e.to_string()))
}

fn apply_flags(c: &mut RunConfig, cli: &Cli) -> Result<()> {
    if let Some(seed) = cli.seed {
        c.seed = seed;
    }
    if let Some(t) = cli.threads {
        c.threads = Some(t);
    }
    if let Some(d) = &cli.output_dir {
        c.output_dir = d.clone();
    }
    match &cli.command {
        Command::Kernel(a) => {
            let s = &mut c.kernel;
            s.alpha = a.alpha.unwrap_or(s.alpha);
            s.a_ts = a.a.unwrap_or(s.a_ts);
            if let Some([lo, hi]) = a.xrange {
                (s.x_min, s.x_max) = (lo, hi);
            }
            s.samples = a.samples.unwrap_or(s.samples);
            if let Some(m) = &a.mode {
                s.mode = enum_value("--mode", m)?;
            }
        }
        Command::Fraclap(a) => {
            let s = &mut c.fraclap;
            s.alpha = a.alpha.unwrap_or(s.alpha);
            if let Some(m) = &a.method {
                s.method = m.clone();
            }
            if a.input.is_some() {
                s.input = a.input.clone();
            }
            if let Some(o) = &a.output {
                s.output = o.clone();
            }
        }
        Command::Levy(a) => {
            let s = &mut c.levy;
            s.alpha = a.alpha.unwrap_or(s.alpha);
            s.paths = a.paths.unwrap_or(s.paths);
            s.steps = a.steps.unwrap_or(s.steps);
            s.horizon = a.horizon.unwrap_or(s.horizon);
            if let Some(x) = &a.sampler {
                s.sampler = x.clone();
            }
            if let Some(e) = &a.emit {
                s.emit = enum_value("--emit", e)?;
            }
        }
        Command::SolvePde(a) => {
            let s = &mut c.solve_pde;
            if let Some(x) = &a.solver {
                s.solver = x.clone();
            }
            s.steps = a.steps.unwrap_or(s.steps);
            if !a.probe.is_empty() {
                s.probes = a.probe.clone();
            }
            if a.compare.is_some() {
                s.compare = a.compare.clone();
            }
        }
        Command::SolveBspde(a) => {
            let s = &mut c.solve_bspde;
            if let Some(x) = &a.solver {
                s.solver = x.clone();
            }
            s.steps = a.steps.unwrap_or(s.steps);
            s.paths = a.paths.unwrap_or(s.paths);
            if !a.probe.is_empty() {
                s.probes = a.probe.clone();
            }
        }
        Command::Zakai(a) => {
            let s = &mut c.zakai;
            if !a.policy.is_empty() {
                s.policy = a.policy.clone();
            }
            s.path = a.path.unwrap_or(s.path);
            s.stride = a.stride.unwrap_or(s.stride);
            s.problem.steps = a.steps.unwrap_or(s.problem.steps);
        }
        Command::Control(a) => {
            let s = &mut c.control;
            s.paths = a.paths.unwrap_or(s.paths);
            s.intervals = a.intervals.unwrap_or(s.intervals);
            s.budget = a.budget.unwrap_or(s.budget);
            s.problem.steps = a.steps.unwrap_or(s.problem.steps);
        }
        Command::VerifyAll(a) => {
            let s = &mut c.verify_all;
            if let Some(t) = &a.tier {
                s.tier = enum_value("--tier", t)?;
            }
            if !a.only.is_empty() {
                s.only = Some(a.only.clone());
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    let mut loaded = match &cli.config {
        Some(path) => config::load(path)?,
        None => Loaded::default(),
    };
    let name = cli.command.name();
    loaded.config.check_command(name)?;
    apply_flags(&mut loaded.config, cli)?;
    if let Some(n) = loaded.config.threads {
        if n == 0 {
            return Err(Error::config("threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config("threads", e.to_string()))?;
    }
    let reg = commands::registry();
    let cmd = reg.get(name)?;
    cmd.run(&Context {
        config: &loaded.config,
        base: &loaded.base,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
