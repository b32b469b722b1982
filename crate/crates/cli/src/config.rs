//! Flat experiment configuration and the shipped presets.
//!
//! Every key sits at the top level of a TOML file. Absent keys take the
//! value of the `wifi-direct-app` preset, so a config file only needs to
//! list what it changes.

use netform_core::mdp::{self, Gamma, MdpParams, RangeRef};
use netform_core::netsim::{BetaSchedule, Point, RelayOrder, SimConfig, Strategy};
use netform_core::rlnc::CoefficientDraw;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const PRESETS: [&str; 2] = ["numeric-study", "wifi-direct-app"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Region size in metres.
    pub width: f64,
    pub height: f64,
    /// Relays per square metre.
    pub density: f64,
    /// Square metres per coverage unit; ranges and actions are in units.
    pub coverage_unit: f64,
    pub source_range: f64,
    /// Start range of relays; `"auto"` means the stationary start state.
    #[serde(with = "auto")]
    pub initial_range: Option<f64>,

    pub ttl: u64,
    pub payload_len: usize,
    pub field_order: u8,
    /// Bits per delivered payload for the goodput figure.
    pub data_bits: f64,
    /// Seconds per time step.
    pub unit_time: f64,
    pub eta: f64,
    pub alpha: f64,
    pub nonzero_coefficients: bool,
    /// `newest` or `oldest`.
    pub relay_order: String,
    pub single_generation: bool,

    pub mobility_sigma: f64,
    pub dynamics_period: u64,
    pub churn: bool,
    /// Link failure rate is redrawn from `[beta_lo, beta_hi]`; equal bounds
    /// fix it.
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub beta_band: f64,

    pub s_max: usize,
    pub actions: Vec<f64>,
    pub omega: f64,
    /// Utility offset; `"auto"` means the smallest offset keeping rewards
    /// nonnegative.
    #[serde(with = "auto")]
    pub u: Option<f64>,
    pub rho: f64,
    pub epsilon: f64,
    /// `log`, `sqrt` or `capped-linear:<knee>`.
    pub gamma: String,
    pub gamma_scale: f64,
    #[serde(with = "auto")]
    pub min_coverage: Option<f64>,
    /// Fixed reference coverage for shrink actions; `"auto"` means the
    /// coverage implied by the state.
    #[serde(with = "auto")]
    pub shrink_reference: Option<f64>,

    pub strategies: Vec<String>,
    pub seeds: Vec<u64>,
    pub horizon: u64,
    pub event_log: bool,

    pub sweep_omega: Vec<f64>,
    pub sweep_beta: Vec<f64>,
    pub sweep_rho: Vec<f64>,
    /// Region areas in square metres; the aspect ratio is kept.
    pub sweep_area: Vec<f64>,

    /// `[x, y]` per node.
    pub sources: Vec<[f64; 2]>,
    pub terminals: Vec<[f64; 2]>,
    /// Terminal indices per source; an empty list means every terminal.
    pub flows: Vec<Vec<usize>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::wifi_direct_app()
    }
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self, CliError> {
        match name {
            "numeric-study" => Ok(Self::numeric_study()),
            "wifi-direct-app" => Ok(Self::wifi_direct_app()),
            other => Err(CliError::Config(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESETS.join(", ")
            ))),
        }
    }

    /// Sixty-metre square with two flows across it, 802.11-like timing.
    pub fn wifi_direct_app() -> Self {
        Self::from_sim(&SimConfig::default(), 20)
    }

    /// Unit-scale study of the per-node MDP: lambda 0.8 per unit area.
    pub fn numeric_study() -> Self {
        let mut c = Self::wifi_direct_app();
        c.width = 6.0;
        c.height = 6.0;
        c.density = 0.8;
        c.coverage_unit = 1.0;
        c.source_range = 2.0;
        c.sources = vec![[0.5, 3.0]];
        c.terminals = vec![[5.5, 3.0]];
        c.flows = vec![vec![]];
        c.mobility_sigma = 0.1;
        c.beta_lo = 0.0;
        c.beta_hi = 0.0;
        c.s_max = 20;
        c.actions = mdp::symmetric_actions(5);
        c.omega = 0.5;
        c.u = None;
        c.rho = 0.5;
        c.epsilon = 0.01;
        c.gamma = Gamma::Log2.name();
        c.gamma_scale = 1.0;
        c.min_coverage = None;
        c.sweep_omega = vec![0.45, 0.5, 0.55, 0.6, 0.65];
        c.sweep_beta = vec![0.0, 0.1, 0.2, 0.3];
        c.sweep_rho = vec![0.3, 0.5, 0.7, 0.9];
        c.sweep_area = vec![36.0, 64.0, 100.0];
        c
    }

    fn from_sim(s: &SimConfig, seeds: u64) -> Self {
        let (beta_lo, beta_hi) = s.beta.bounds();
        Self {
            width: s.width,
            height: s.height,
            density: s.density,
            coverage_unit: s.coverage_unit,
            source_range: s.source_range,
            initial_range: s.initial_range,
            ttl: s.ttl,
            payload_len: s.payload_len,
            field_order: s.field_order,
            data_bits: s.data_bits,
            unit_time: s.unit_time,
            eta: s.eta,
            alpha: s.alpha,
            nonzero_coefficients: s.draw == CoefficientDraw::NonZero,
            relay_order: match s.relay_order {
                RelayOrder::Newest => "newest".into(),
                RelayOrder::Oldest => "oldest".into(),
            },
            single_generation: s.single_generation,
            mobility_sigma: s.mobility_sigma,
            dynamics_period: s.dynamics_period,
            churn: s.churn,
            beta_lo,
            beta_hi,
            beta_band: s.beta_band,
            s_max: s.mdp.s_max,
            actions: s.mdp.actions.clone(),
            omega: s.mdp.omega,
            u: s.mdp.u,
            rho: s.mdp.rho,
            epsilon: s.epsilon,
            gamma: s.mdp.gamma.name(),
            gamma_scale: s.mdp.gamma_scale,
            min_coverage: s.mdp.min_coverage,
            shrink_reference: match s.mdp.range_ref {
                RangeRef::StateImplied => None,
                RangeRef::Fixed(r) => Some(r),
            },
            strategies: Strategy::ALL.iter().map(|s| s.name().to_string()).collect(),
            seeds: (0..seeds).collect(),
            horizon: s.horizon,
            event_log: s.event_log,
            sweep_omega: vec![0.45, 0.5, 0.55, 0.6, 0.65],
            sweep_beta: vec![0.0, 0.1, 0.2, 0.3],
            sweep_rho: vec![0.3, 0.5, 0.7, 0.9],
            sweep_area: vec![2500.0, 3600.0, 4900.0],
            sources: s.sources.iter().map(|p| [p.x, p.y]).collect(),
            terminals: s.terminals.iter().map(|p| [p.x, p.y]).collect(),
            flows: s.flows.clone(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config fields are plain values")
    }

    pub fn strategies(&self) -> Result<Vec<Strategy>, CliError> {
        if self.strategies.is_empty() {
            return Err(CliError::Config("strategy list is empty".into()));
        }
        self.strategies
            .iter()
            .map(|s| Strategy::parse(s).ok_or_else(|| CliError::Config(format!("unknown strategy {s:?}"))))
            .collect()
    }

    /// Checked conversion into simulator and MDP parameters.
    pub fn to_sim(&self) -> Result<SimConfig, CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho = {} is outside [0, 1); the stopping rule needs rho < 1", self.rho));
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        let Some(gamma) = Gamma::parse(&self.gamma) else {
            return bad(format!("unknown gamma {:?}", self.gamma));
        };
        let relay_order = match self.relay_order.as_str() {
            "newest" => RelayOrder::Newest,
            "oldest" => RelayOrder::Oldest,
            other => return bad(format!("unknown relay order {other:?}")),
        };
        let beta = if self.beta_lo == self.beta_hi {
            BetaSchedule::Fixed(self.beta_lo)
        } else {
            BetaSchedule::Uniform { lo: self.beta_lo, hi: self.beta_hi }
        };
        self.strategies()?;
        let sim = SimConfig {
            width: self.width,
            height: self.height,
            density: self.density,
            coverage_unit: self.coverage_unit,
            sources: self.sources.iter().map(|&[x, y]| Point::new(x, y)).collect(),
            terminals: self.terminals.iter().map(|&[x, y]| Point::new(x, y)).collect(),
            flows: self.flows.clone(),
            source_range: self.source_range,
            initial_range: self.initial_range,
            ttl: self.ttl,
            payload_len: self.payload_len,
            field_order: self.field_order,
            data_bits: self.data_bits,
            unit_time: self.unit_time,
            eta: self.eta,
            alpha: self.alpha,
            mobility_sigma: self.mobility_sigma,
            dynamics_period: self.dynamics_period,
            churn: self.churn,
            beta,
            beta_band: self.beta_band,
            mdp: MdpParams {
                s_max: self.s_max,
                actions: self.actions.clone(),
                lambda: self.density * self.coverage_unit,
                beta: self.beta_lo,
                omega: self.omega,
                u: self.u,
                rho: self.rho,
                gamma,
                gamma_scale: self.gamma_scale,
                range_ref: self.shrink_reference.map_or(RangeRef::StateImplied, RangeRef::Fixed),
                min_coverage: self.min_coverage,
            },
            epsilon: self.epsilon,
            relay_order,
            draw: if self.nonzero_coefficients { CoefficientDraw::NonZero } else { CoefficientDraw::Uniform },
            horizon: self.horizon,
            single_generation: self.single_generation,
            event_log: self.event_log,
        };
        sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
        for beta in sim.band_betas() {
            sim.model_for(beta, sim.mdp.rho).map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(sim)
    }
}

/// Optional numbers written as a number or the string `"auto"`, so that
/// every key survives serialisation.
mod auto {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_f64(*x),
            None => s.serialize_str("auto"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Option<f64>;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a number or \"auto\"")
            }

            fn visit_f64<E: de::Error>(self, x: f64) -> Result<Self::Value, E> {
                Ok(Some(x))
            }

            fn visit_i64<E: de::Error>(self, x: i64) -> Result<Self::Value, E> {
                Ok(Some(x as f64))
            }

            fn visit_str<E: de::Error>(self, s: &str) -> Result<Self::Value, E> {
                if s == "auto" {
                    Ok(None)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(s), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_convert() {
        for name in PRESETS {
            let c = ExperimentConfig::preset(name).unwrap();
            c.to_sim().unwrap();
        }
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn wifi_preset_is_the_simulator_default() {
        let sim = ExperimentConfig::wifi_direct_app().to_sim().unwrap();
        let mut want = SimConfig::default();
        want.mdp.lambda = want.lambda_per_unit();
        assert_eq!(sim, want);
    }

    #[test]
    fn numeric_study_lambda() {
        let sim = ExperimentConfig::numeric_study().to_sim().unwrap();
        assert_eq!(sim.lambda_per_unit(), 0.8);
        assert_eq!(sim.area(), 36.0);
    }

    #[test]
    fn partial_file_fills_from_preset() {
        let c = ExperimentConfig::parse("rho = 0.3\nseeds = [7]\n").unwrap();
        assert_eq!(c.rho, 0.3);
        assert_eq!(c.seeds, vec![7]);
        assert_eq!(c.width, ExperimentConfig::default().width);
    }

    #[test]
    fn auto_keys() {
        let c = ExperimentConfig::parse("u = \"auto\"\nmin_coverage = 2").unwrap();
        assert_eq!(c.u, None);
        assert_eq!(c.min_coverage, Some(2.0));
        assert!(c.to_toml().contains("initial_range = \"auto\""));
        assert!(ExperimentConfig::parse("u = \"none\"").is_err());
    }

    #[test]
    fn rejects_unit_discount_and_unknown_keys() {
        let c = ExperimentConfig::parse("rho = 1.0").unwrap();
        assert!(matches!(c.to_sim(), Err(CliError::Config(_))));
        assert!(ExperimentConfig::parse("rhoo = 0.5").is_err());
    }
}
