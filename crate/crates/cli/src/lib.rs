//! Command-line front end: configuration, orchestration and output.

pub mod config;
pub mod run;
pub mod validate;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use netform_core::galois::{self, Field};
use netform_core::mdp::Policy;
use thiserror::Error;

use config::ExperimentConfig;
use run::SweepParam;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Parser)]
#[command(name = "netform", version, about = "MDP topology formation for network-coded ad hoc networks")]
pub struct Cli {
    /// TOML config; keys it omits come from the preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// `numeric-study` or `wifi-direct-app`.
    #[arg(long, global = true, default_value = "wifi-direct-app")]
    pub preset: String,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed list such as `0,1,5` or `0..20`; overrides the config.
    #[arg(long, global = true)]
    pub seeds: Option<String>,
    /// Comma-separated strategies: proposed, myopic, fixed.
    #[arg(long, global = true)]
    pub strategies: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one policy per failure-rate band.
    Solve,
    /// Classify the chain a policy induces and report its limit.
    Stationary {
        #[arg(long)]
        policy: PathBuf,
        /// Failure rate of the model; defaults to the config's lower bound.
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Run the simulator and write per-step metrics.
    Simulate,
    /// Sweep one parameter over the config grid.
    Sweep {
        /// omega, beta, rho or area.
        param: String,
    },
    /// Run the self-check suites.
    Validate {
        #[arg(long, hide = true)]
        corrupt_gf: bool,
    },
}

pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Config(format!("bad seed list {text:?}"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

pub fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let base = ExperimentConfig::preset(&cli.preset)?;
            merge(&base, &text)?
        }
        None => ExperimentConfig::preset(&cli.preset)?,
    };
    if let Some(s) = &cli.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(s) = &cli.strategies {
        cfg.strategies = s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect();
    }
    Ok(cfg)
}

/// Overlays the keys present in `text` on `base`.
fn merge(base: &ExperimentConfig, text: &str) -> Result<ExperimentConfig, CliError> {
    let overlay: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    let mut table: toml::Table = toml::from_str(&base.to_toml()).expect("serialised config parses");
    for (k, v) in overlay {
        table.insert(k, v);
    }
    ExperimentConfig::parse(&toml::to_string(&table).expect("table serialises"))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::Validate { corrupt_gf } = cli.command {
        return cmd_validate(cli, corrupt_gf);
    }
    let cfg = load_config(cli)?;
    let sim = cfg.to_sim()?;
    fs::create_dir_all(&cli.out).map_err(io_err(&cli.out))?;
    match &cli.command {
        Command::Solve => {
            for band in run::solve_bands(&sim)? {
                let path = cli.out.join(run::policy_file_name(band.beta));
                write_file(&path, &band.policy.to_text())?;
                println!(
                    "beta {:.2}: {} iterations, epsilon {} (stop at sup change {:.3e}) -> {}",
                    band.beta,
                    band.policy.iterations,
                    band.policy.epsilon,
                    band.threshold,
                    path.display()
                );
            }
        }
        Command::Stationary { policy, beta } => {
            let text = fs::read_to_string(policy)
                .map_err(|e| CliError::Runtime(format!("cannot read policy {}: {e}", policy.display())))?;
            let policy = Policy::from_text(&text).map_err(|e| CliError::Runtime(format!("bad policy file: {e}")))?;
            let (_, _, report) = run::analyze(&sim, &policy, beta.unwrap_or(cfg.beta_lo))?;
            write_file(&cli.out.join("stationary.txt"), &report)?;
            print!("{report}");
        }
        Command::Simulate => {
            let strategies = cfg.strategies()?;
            let runs = run::simulate(&sim, &strategies, &cfg.seeds)?;
            let path = cli.out.join("metrics.csv");
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            let mut w = std::io::BufWriter::new(file);
            run::write_csv(&mut w, &runs).and_then(|_| w.flush()).map_err(io_err(&path))?;
            if cfg.event_log {
                for r in &runs {
                    let p = cli.out.join(format!("events_{}_{}.log", r.strategy.name(), r.seed));
                    let mut text = r.events.join("\n");
                    text.push('\n');
                    write_file(&p, &text)?;
                }
            }
            let table = run::summary_table(&runs, &strategies);
            write_file(&cli.out.join("summary.txt"), &table)?;
            print!("{table}");
        }
        Command::Sweep { param } => {
            let p = SweepParam::parse(param)
                .ok_or_else(|| CliError::Config(format!("unknown sweep parameter {param:?}")))?;
            let text = match p {
                SweepParam::Rho => run::iterations_table(&run::sweep_iterations(&cfg)?),
                _ => run::topology_table(p, &run::sweep_topology(&cfg, p)?),
            };
            write_file(&cli.out.join(format!("sweep_{}.dat", p.name())), &text)?;
            print!("{text}");
        }
        Command::Validate { .. } => unreachable!(),
    }
    Ok(())
}

fn cmd_validate(cli: &Cli, corrupt_gf: bool) -> Result<(), CliError> {
    if cli.config.is_some() || cli.seeds.is_some() || cli.strategies.is_some() {
        load_config(cli)?.to_sim()?;
    }
    let mut field: Field = galois::default_field().clone();
    if corrupt_gf {
        field.corrupt_exp_entry(5, field.mul_raw(2, 3) ^ 0x40);
    }
    let suites = validate::run_all(&field);
    let mut failed = Vec::new();
    for s in &suites {
        let status = if s.passed() { "PASS" } else { "FAIL" };
        println!("{status} {:<13} {} checks", s.name, s.checks);
        for f in &s.failures {
            println!("     {f}");
        }
        if !s.passed() {
            failed.push(s.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("suites failed: {}", failed.join(", "))))
    }
}
