//! Experiment orchestration shared by the subcommands.

use std::sync::Arc;

use netform_core::mdp::{self, Policy};
use netform_core::netsim::{self, MetricsRow, PolicyBook, SimConfig, Simulation, Strategy, Summary};
use netform_core::stationary::{self, Limit, PolicyChain};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::CliError;

pub const CSV_HEADER: &str = "time,goodput_mbps,scr,power,links,alg_conn,strategy,seed";

fn sim_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Policy solved for one failure-rate band.
#[derive(Debug, Clone)]
pub struct SolvedBand {
    pub beta: f64,
    pub policy: Policy,
    pub threshold: f64,
}

pub fn solve_bands(sim: &SimConfig) -> Result<Vec<SolvedBand>, CliError> {
    sim.band_betas()
        .into_iter()
        .map(|beta| {
            let model = sim.model_for(beta, sim.mdp.rho).map_err(sim_err)?;
            let policy = mdp::solve_policy(&model, sim.epsilon).map_err(sim_err)?;
            Ok(SolvedBand { beta, policy, threshold: mdp::stopping_threshold(sim.mdp.rho, sim.epsilon) })
        })
        .collect()
}

pub fn policy_file_name(beta: f64) -> String {
    format!("policy_beta{beta:.2}.txt")
}

/// Induced chain, limiting distribution and a printable report.
pub fn analyze(sim: &SimConfig, policy: &Policy, beta: f64) -> Result<(PolicyChain, Limit, String), CliError> {
    let model = sim.model_for(beta, sim.mdp.rho).map_err(sim_err)?;
    if policy.num_states() != model.num_states() {
        return Err(CliError::Config(format!(
            "policy has {} states, config has {}",
            policy.num_states(),
            model.num_states()
        )));
    }
    let chain = stationary::induce_chain(policy, &model).map_err(sim_err)?;
    let limit = stationary::limiting_distribution(&chain).map_err(sim_err)?;
    let text = stationary::report(&chain, &limit);
    Ok((chain, limit, text))
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub strategy: Strategy,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub events: Vec<String>,
}

/// Runs every (strategy, seed) pair; results come back in strategy-major,
/// seed-minor order whatever the scheduling.
pub fn simulate(sim: &SimConfig, strategies: &[Strategy], seeds: &[u64]) -> Result<Vec<RunResult>, CliError> {
    let mut out = Vec::with_capacity(strategies.len() * seeds.len());
    for &strategy in strategies {
        let book = Arc::new(PolicyBook::solve(sim, strategy == Strategy::Myopic).map_err(sim_err)?);
        let runs: Result<Vec<RunResult>, CliError> = seeds
            .par_iter()
            .map(|&seed| {
                let mut s = Simulation::new(sim, Arc::clone(&book), strategy, seed).map_err(sim_err)?;
                let rows = s.run();
                Ok(RunResult { strategy, seed, rows, events: s.take_events() })
            })
            .collect();
        out.extend(runs?);
    }
    Ok(out)
}

pub fn write_csv<W: std::io::Write>(w: &mut W, runs: &[RunResult]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for run in runs {
        for r in &run.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.time,
                r.goodput_mbps,
                r.scr,
                r.power,
                r.links,
                r.alg_conn,
                run.strategy.name(),
                run.seed
            )?;
        }
    }
    Ok(())
}

/// Mean over seeds of the per-run means, one line per strategy.
pub fn summary_table(runs: &[RunResult], strategies: &[Strategy]) -> String {
    let mut out = format!(
        "{:<10} {:>14} {:>8} {:>10} {:>9} {:>9} {:>6}\n",
        "strategy", "goodput_mbps", "scr", "power_db", "links", "alg_conn", "runs"
    );
    for &st in strategies {
        let s: Vec<Summary> =
            runs.iter().filter(|r| r.strategy == st).map(|r| netsim::summarize(&r.rows)).collect();
        let m = mean_summary(&s);
        out.push_str(&format!(
            "{:<10} {:>14.3} {:>8.4} {:>10.3} {:>9.2} {:>9.4} {:>6}\n",
            st.name(),
            m.goodput_mbps,
            m.scr,
            m.power,
            m.links,
            m.alg_conn,
            s.len()
        ));
    }
    out
}

pub fn mean_summary(s: &[Summary]) -> Summary {
    if s.is_empty() {
        return Summary::default();
    }
    let n = s.len() as f64;
    Summary {
        goodput_mbps: s.iter().map(|x| x.goodput_mbps).sum::<f64>() / n,
        scr: s.iter().map(|x| x.scr).sum::<f64>() / n,
        power: s.iter().map(|x| x.power).sum::<f64>() / n,
        links: s.iter().map(|x| x.links).sum::<f64>() / n,
        alg_conn: s.iter().map(|x| x.alg_conn).sum::<f64>() / n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Omega,
    Beta,
    Rho,
    Area,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Omega => "omega",
            SweepParam::Beta => "beta",
            SweepParam::Rho => "rho",
            SweepParam::Area => "area",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "omega" => Some(SweepParam::Omega),
            "beta" => Some(SweepParam::Beta),
            "rho" => Some(SweepParam::Rho),
            "area" => Some(SweepParam::Area),
            _ => None,
        }
    }

    pub fn grid(self, cfg: &ExperimentConfig) -> &[f64] {
        match self {
            SweepParam::Omega => &cfg.sweep_omega,
            SweepParam::Beta => &cfg.sweep_beta,
            SweepParam::Rho => &cfg.sweep_rho,
            SweepParam::Area => &cfg.sweep_area,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyPoint {
    pub value: f64,
    pub strategy: Strategy,
    pub links: f64,
    pub alg_conn: f64,
}

/// Config for one grid point. Omega and area points hold the failure rate
/// at `beta_lo`.
pub fn at_point(cfg: &ExperimentConfig, param: SweepParam, value: f64) -> ExperimentConfig {
    let mut c = cfg.clone();
    match param {
        SweepParam::Omega => {
            c.omega = value;
            c.beta_hi = c.beta_lo;
        }
        SweepParam::Beta => {
            c.beta_lo = value;
            c.beta_hi = value;
        }
        SweepParam::Rho => c.rho = value,
        SweepParam::Area => {
            let k = (value / (c.width * c.height)).sqrt();
            c.width *= k;
            c.height *= k;
            for p in c.sources.iter_mut().chain(c.terminals.iter_mut()) {
                p[0] *= k;
                p[1] *= k;
            }
            c.beta_hi = c.beta_lo;
        }
    }
    c
}

/// Mean link count and algebraic connectivity per grid point and strategy.
pub fn sweep_topology(cfg: &ExperimentConfig, param: SweepParam) -> Result<Vec<TopologyPoint>, CliError> {
    let grid = param.grid(cfg);
    if grid.is_empty() {
        return Err(CliError::Config(format!("sweep grid for {} is empty", param.name())));
    }
    let strategies = cfg.strategies()?;
    let mut out = Vec::new();
    for &value in grid {
        let sim = at_point(cfg, param, value).to_sim()?;
        let runs = simulate(&sim, &strategies, &cfg.seeds)?;
        for &st in &strategies {
            let s: Vec<Summary> =
                runs.iter().filter(|r| r.strategy == st).map(|r| netsim::summarize(&r.rows)).collect();
            let m = mean_summary(&s);
            out.push(TopologyPoint { value, strategy: st, links: m.links, alg_conn: m.alg_conn });
        }
    }
    Ok(out)
}

/// Value-iteration sweeps to the stopping rule per discount factor, at
/// `beta_lo`.
pub fn sweep_iterations(cfg: &ExperimentConfig) -> Result<Vec<(f64, usize)>, CliError> {
    if cfg.sweep_rho.is_empty() {
        return Err(CliError::Config("sweep grid for rho is empty".into()));
    }
    cfg.sweep_rho
        .iter()
        .map(|&rho| {
            let sim = at_point(cfg, SweepParam::Rho, rho).to_sim()?;
            let model = sim.model_for(cfg.beta_lo, rho).map_err(sim_err)?;
            let policy = mdp::solve_policy(&model, sim.epsilon).map_err(sim_err)?;
            Ok((rho, policy.iterations))
        })
        .collect()
}

pub fn topology_table(param: SweepParam, points: &[TopologyPoint]) -> String {
    let mut out = format!("# {} strategy links alg_conn\n", param.name());
    for p in points {
        out.push_str(&format!("{} {} {} {}\n", p.value, p.strategy.name(), p.links, p.alg_conn));
    }
    out
}

pub fn iterations_table(points: &[(f64, usize)]) -> String {
    let mut out = String::from("# rho iterations\n");
    for (rho, it) in points {
        out.push_str(&format!("{rho} {it}\n"));
    }
    out
}
