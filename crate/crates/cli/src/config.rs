//! TOML configuration for every subcommand, with `path=value` overrides.

use std::path::{Path, PathBuf};

use aoisched_core::mdp::RviOptions;
use aoisched_core::policies::SchedulerSpec;
use aoisched_core::service::{IidService, MarkovService, ServiceModel};
use aoisched_core::{PenaltyFunction, TimeGrid, WaitingMenu};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Everything a run needs. Every field has a default, so an empty file is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Number of sources.
    pub m: usize,
    pub scheduler: SchedulerConfig,
    /// Duration of one tick; service values and waits are integer ticks.
    pub tick_length: f64,
    pub service: ServiceConfig,
    pub penalty: PenaltyFunction,
    pub sampler: SamplerConfig,
    pub simulation: SimulationConfig,
    pub solver: SolverConfig,
    pub tuning: TuningConfig,
    pub sweep: SweepConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            m: 3,
            scheduler: SchedulerConfig::Maf,
            tick_length: 1.0,
            service: ServiceConfig::TwoPoint { low: 0, high: 3, p: 0.5 },
            penalty: PenaltyFunction::Linear,
            sampler: SamplerConfig::ZeroWait,
            simulation: SimulationConfig::default(),
            solver: SolverConfig::default(),
            tuning: TuningConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerConfig {
    Maf,
    Rand,
}

impl From<SchedulerConfig> for SchedulerSpec {
    fn from(s: SchedulerConfig) -> Self {
        match s {
            SchedulerConfig::Maf => SchedulerSpec::Maf,
            SchedulerConfig::Rand => SchedulerSpec::Rand,
        }
    }
}

/// Service-time law; values are in ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServiceConfig {
    Iid { values: Vec<u64>, probs: Vec<f64> },
    Constant { value: u64 },
    /// `low` with probability `p`, otherwise `high`.
    TwoPoint { low: u64, high: u64, p: f64 },
    Markov { values: Vec<u64>, transition: Vec<Vec<f64>>, initial: Vec<f64> },
    /// Two-state chain with rows `(8+σ)/9, (1−σ)/9` and `1−σ, σ`, started from `(0.9, 0.1)`.
    Correlated { low: u64, high: u64, sigma: f64 },
}

impl ServiceConfig {
    pub fn build(&self) -> CliResult<ServiceModel> {
        let model = match self {
            Self::Iid { values, probs } => IidService::new(values.clone(), probs.clone())?.into(),
            Self::Constant { value } => IidService::constant(*value)?.into(),
            Self::TwoPoint { low, high, p } => IidService::two_point(*low, *high, *p)?.into(),
            Self::Markov { values, transition, initial } => {
                MarkovService::new(values.clone(), transition.clone(), initial.clone())?.into()
            }
            Self::Correlated { low, high, sigma } => MarkovService::correlated(*low, *high, *sigma)?.into(),
        };
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerConfig {
    ZeroWait,
    /// A fixed wait in time units, or `mean_fraction · E[Y]` (default 0.3).
    ConstantWait {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        wait: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_fraction: Option<f64>,
    },
    /// Threshold on the expected post-delivery penalty; tuned when omitted.
    Threshold {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
    },
    /// Water-filling level on the average age; tuned when omitted.
    WaterFilling {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
    },
    /// Table from the solver, or loaded from a solution file.
    RviRc {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        solution: Option<PathBuf>,
    },
}

impl SamplerConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ZeroWait => "zero_wait",
            Self::ConstantWait { .. } => "constant_wait",
            Self::Threshold { .. } => "threshold",
            Self::WaterFilling { .. } => "water_filling",
            Self::RviRc { .. } => "rvi_rc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Deliveries simulated, warm-up included.
    pub horizon: u64,
    pub seed: u64,
    /// Deliveries discarded before measuring; defaults to 10·m.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup: Option<u64>,
    pub batches: usize,
    /// Initial ages per source; defaults to the zero-wait image of the most likely service time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_ages: Option<Vec<f64>>,
    /// Let the table sampler handle states outside the solved space.
    pub table_fallback: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { horizon: 1_000_000, seed: 1, warmup: None, batches: 50, initial_ages: None, table_fallback: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Explicit waiting menu in ticks; must contain 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub menu: Option<Vec<u64>>,
    /// Largest wait when `menu` is absent; defaults to twice the largest service value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_wait: Option<u64>,
    pub step: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_init: Option<f64>,
    pub shortcut: bool,
    pub damping: f64,
    pub auto_damping: bool,
    pub max_iters: usize,
    /// Threads for each relative-value sweep; 0 uses all cores.
    pub workers: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = RviOptions::default();
        Self {
            menu: None,
            max_wait: None,
            step: 1,
            eps1: o.eps1,
            eps2: o.eps2,
            u_init: o.u_init,
            shortcut: o.shortcut,
            damping: o.damping,
            auto_damping: o.auto_damping,
            max_iters: o.max_iters,
            workers: o.workers,
        }
    }
}

impl SolverConfig {
    pub fn options(&self, seed: u64) -> RviOptions {
        RviOptions {
            eps1: self.eps1,
            eps2: self.eps2,
            u_init: self.u_init,
            shortcut: self.shortcut,
            max_iters: self.max_iters,
            damping: self.damping,
            auto_damping: self.auto_damping,
            workers: self.workers,
            seed,
        }
    }

    pub fn menu_for(&self, service: &IidService) -> CliResult<WaitingMenu> {
        if let Some(values) = &self.menu {
            return Ok(WaitingMenu::new(values.clone())?);
        }
        let top = service.values().last().copied().unwrap_or(0);
        let max = self.max_wait.unwrap_or(2 * top.max(1));
        Ok(WaitingMenu::range(max, self.step)?)
    }
}

/// Golden-section tuning of threshold and water-filling levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    /// Deliveries per objective evaluation.
    pub horizon: u64,
    /// Final bracket width as a fraction of the initial one.
    pub rel_tol: f64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self { horizon: 200_000, rel_tol: 0.01 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Cartesian product of these axes; the first axis varies slowest.
    pub axes: Vec<SweepAxis>,
    /// Policy pairs run at every point; the top-level pair when empty.
    pub pairs: Vec<PolicyPair>,
    /// Parallel sweep points; 0 uses all cores.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted path into this configuration, e.g. `service.p`.
    pub path: String,
    pub values: Vec<toml::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyPair {
    pub scheduler: SchedulerConfig,
    pub sampler: SamplerConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Usage(format!("cannot serialize configuration: {e}")))
    }

    /// Reads `path` (or starts from defaults) and applies `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
                Self::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override `{o}` is not of the form path=value")))?;
            cfg = cfg.with_value(key.trim(), parse_scalar(raw.trim()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// A copy with `path` set to `value`, re-validated.
    pub fn with_value(&self, path: &str, value: toml::Value) -> CliResult<Self> {
        let mut table = toml::Table::try_from(self).map_err(|e| CliError::Usage(e.to_string()))?;
        set_path(&mut table, path, value)?;
        let cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Usage(format!("`{path}`: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.m == 0 {
            return Err(CliError::Usage("m must be at least 1".into()));
        }
        self.grid()?;
        self.service.build()?;
        check_penalty(&self.penalty)?;
        for axis in &self.sweep.axes {
            if axis.values.is_empty() {
                return Err(CliError::Usage(format!("sweep axis `{}` has no values", axis.path)));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> CliResult<TimeGrid> {
        Ok(TimeGrid::new(self.tick_length)?)
    }
}

fn check_penalty(g: &PenaltyFunction) -> CliResult<()> {
    match g {
        PenaltyFunction::Exponential { a, b } => PenaltyFunction::exponential(*a, *b).map(|_| ())?,
        PenaltyFunction::Power { p } => PenaltyFunction::power(*p).map(|_| ())?,
        PenaltyFunction::Indicator { q } => PenaltyFunction::indicator(*q).map(|_| ())?,
        _ => {}
    }
    Ok(())
}

/// Integers, floats, booleans, arrays and inline tables parse as TOML; anything else is a string.
pub fn parse_scalar(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(root: &mut toml::Table, path: &str, value: toml::Value) -> CliResult<()> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| CliError::Usage(format!("empty key in `{path}`")))?;
    let mut table = root;
    for part in parts {
        let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("`{part}` in `{path}` is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
