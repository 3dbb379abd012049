//! Schedulers and samplers driven by the simulator.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;

use crate::approx::{threshold_wait, water_filling_wait, DEFAULT_TOL_TICKS};
use crate::error::{Error, Result};
use crate::mdp::{expected_penalty_after, RviSolution, StateSpace};
use crate::penalty::PenaltyFunction;
use crate::service::{IidService, ServiceModel};
use crate::state::TimeGrid;

/// Which source transmits after each delivery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerSpec {
    /// Maximum age first; ties go to the lowest source index.
    Maf,
    /// Uniformly random source.
    Rand,
}

impl SchedulerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Maf => "maf",
            Self::Rand => "rand",
        }
    }
}

/// Index of a maximum-age source, lowest index on ties.
pub fn maf_pick(ages: &[f64]) -> Result<usize> {
    if ages.is_empty() {
        return Err(Error::Domain("cannot schedule among zero sources".into()));
    }
    let mut best = 0;
    for (k, a) in ages.iter().enumerate().skip(1) {
        if *a > ages[best] {
            best = k;
        }
    }
    Ok(best)
}

/// Uniform source index in `0..m`.
pub fn rand_pick<R: Rng + ?Sized>(m: usize, rng: &mut R) -> usize {
    debug_assert!(m >= 1);
    if m == 1 {
        0
    } else {
        rng.random_range(0..m)
    }
}

/// A solved (or hand-built) per-state waiting table over a state space.
#[derive(Debug, Clone)]
pub struct PolicyTable {
    pub space: Arc<StateSpace>,
    /// Wait in ticks for each state of `space`.
    pub waits: Vec<u64>,
    pub penalty: PenaltyFunction,
    /// Ratio level used by the fallback rule for states outside `space`.
    pub beta: f64,
}

impl PolicyTable {
    pub fn new(space: Arc<StateSpace>, waits: Vec<u64>, penalty: PenaltyFunction, beta: f64) -> Result<Self> {
        if waits.len() != space.len() {
            return Err(Error::Config(format!("policy has {} entries for {} states", waits.len(), space.len())));
        }
        if let Some(w) = waits.iter().find(|w| !space.menu().values().contains(w)) {
            return Err(Error::Config(format!("wait {w} is not on the menu")));
        }
        Ok(Self { space, waits, penalty, beta })
    }

    pub fn from_solution(sol: &RviSolution) -> Self {
        Self {
            space: Arc::clone(&sol.space),
            waits: sol.policy.clone(),
            penalty: sol.penalty.clone(),
            beta: sol.beta_star,
        }
    }

    /// Wait for a state given in ticks, if it is in the table.
    pub fn lookup(&self, ticks: &[u64]) -> Option<u64> {
        self.space.index_of(ticks).map(|k| self.waits[k])
    }

    /// Smallest menu wait `t` with `E_Y[Σ g(a + t + Y)] >= β`, or the
    /// largest menu entry when none qualifies. Ages in time units.
    pub fn fallback_wait(&self, ages: &[f64]) -> u64 {
        let grid = self.space.grid();
        let svc = self.space.service();
        self.space
            .menu()
            .values()
            .iter()
            .copied()
            .find(|&t| expected_penalty_after(ages, grid.to_time(t), &self.penalty, svc, grid) >= self.beta)
            .unwrap_or_else(|| self.space.menu().max())
    }
}

/// How long to wait after each delivery before sampling.
#[derive(Debug, Clone)]
pub enum SamplerSpec {
    ZeroWait,
    /// Fixed wait, in time units.
    ConstantWait { wait: f64 },
    /// Smallest `t` with `E_Y[Σ g(a + t + Y)] >= threshold`.
    Threshold { threshold: f64 },
    /// `[threshold - A_s / m]^+`.
    WaterFilling { threshold: f64 },
    /// Lookup in a solved table.
    Table(Arc<PolicyTable>),
}

impl SamplerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ZeroWait => "zero_wait",
            Self::ConstantWait { .. } => "constant_wait",
            Self::Threshold { .. } => "threshold",
            Self::WaterFilling { .. } => "water_filling",
            Self::Table(_) => "rvi_rc",
        }
    }

    /// Parameter summary for CSV output.
    pub fn params(&self) -> String {
        match self {
            Self::ZeroWait => String::new(),
            Self::ConstantWait { wait } => format!("wait={wait}"),
            Self::Threshold { threshold } | Self::WaterFilling { threshold } => format!("T={threshold}"),
            Self::Table(t) => format!("beta={}", t.beta),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::ConstantWait { wait } if !(*wait >= 0.0 && wait.is_finite()) => {
                Err(Error::Config(format!("constant wait must be non-negative, got {wait}")))
            }
            Self::Threshold { threshold } | Self::WaterFilling { threshold }
                if !(*threshold >= 0.0 && threshold.is_finite()) =>
            {
                Err(Error::Config(format!("threshold must be non-negative, got {threshold}")))
            }
            _ => Ok(()),
        }
    }
}

/// Everything a sampler may consult besides the current state.
#[derive(Debug, Clone)]
pub struct SamplerContext {
    pub penalty: PenaltyFunction,
    /// Service law used for expectations over the next service time.
    pub expectation_law: Option<IidService>,
    pub m: usize,
    pub grid: TimeGrid,
    /// Root-finding tolerance of the threshold rule, in ticks.
    pub tol_ticks: f64,
    /// Use the fallback rule for states outside a solved table.
    pub table_fallback: bool,
}

impl SamplerContext {
    /// Builds a context; for Markov service, expectations use the
    /// stationary law when it exists.
    pub fn new(penalty: PenaltyFunction, service: &ServiceModel, m: usize, grid: TimeGrid) -> Self {
        let expectation_law = match service {
            ServiceModel::Iid(s) => Some(s.clone()),
            ServiceModel::Markov(chain) => chain
                .stationary()
                .ok()
                .and_then(|pi| IidService::new(chain.values().to_vec(), pi).ok()),
        };
        Self { penalty, expectation_law, m, grid, tol_ticks: DEFAULT_TOL_TICKS, table_fallback: true }
    }
}

/// Resolved sampler ready for repeated queries.
#[derive(Debug, Clone)]
pub struct Sampler {
    spec: SamplerSpec,
    ctx: SamplerContext,
    ticks_buf: Vec<u64>,
    pub fallback_hits: u64,
}

impl Sampler {
    pub fn new(spec: SamplerSpec, ctx: SamplerContext) -> Result<Self> {
        spec.validate()?;
        match &spec {
            SamplerSpec::Threshold { .. } if ctx.expectation_law.is_none() => {
                return Err(Error::Config(
                    "threshold sampler needs a service law with a unique stationary distribution".into(),
                ));
            }
            SamplerSpec::Table(t) => {
                if t.space.m() != ctx.m {
                    return Err(Error::Config(format!("table solved for m={} but m={}", t.space.m(), ctx.m)));
                }
                if t.space.grid() != ctx.grid {
                    return Err(Error::Config("table tick length differs from the simulation grid".into()));
                }
                if t.penalty != ctx.penalty {
                    return Err(Error::Config("table penalty differs from the simulation penalty".into()));
                }
                if ctx.expectation_law.as_ref() != Some(t.space.service()) {
                    return Err(Error::Config("table service model differs from the simulation service model".into()));
                }
            }
            _ => {}
        }
        Ok(Self { spec, ctx, ticks_buf: Vec::new(), fallback_hits: 0 })
    }

    pub fn spec(&self) -> &SamplerSpec {
        &self.spec
    }

    /// Wait in time units for `ages` sorted non-increasingly (time units).
    pub fn wait(&mut self, ages: &[f64]) -> Result<f64> {
        match &self.spec {
            SamplerSpec::ZeroWait => Ok(0.0),
            SamplerSpec::ConstantWait { wait } => Ok(*wait),
            SamplerSpec::WaterFilling { threshold } => Ok(water_filling_wait(ages.iter().sum(), *threshold, self.ctx.m)),
            SamplerSpec::Threshold { threshold } => {
                // validated in `new`
                let law = self.ctx.expectation_law.as_ref().expect("threshold sampler without service law");
                threshold_wait(ages, *threshold, &self.ctx.penalty, law, self.ctx.grid, self.ctx.tol_ticks)
            }
            SamplerSpec::Table(table) => {
                let tick = self.ctx.grid.tick_length();
                self.ticks_buf.clear();
                let mut on_grid = true;
                for &a in ages {
                    let t = a / tick;
                    let r = libm::round(t);
                    if libm::fabs(t - r) > 1e-6 || r < 0.0 {
                        on_grid = false;
                        break;
                    }
                    self.ticks_buf.push(r as u64);
                }
                if on_grid {
                    if let Some(w) = table.lookup(&self.ticks_buf) {
                        return Ok(self.ctx.grid.to_time(w));
                    }
                }
                if !self.ctx.table_fallback {
                    return Err(Error::UnresolvableState(format!("{ages:?}")));
                }
                self.fallback_hits += 1;
                Ok(self.ctx.grid.to_time(table.fallback_wait(ages)))
            }
        }
    }
}

/// One-shot sampler query.
pub fn sampler_wait(spec: &SamplerSpec, ages: &[f64], ctx: &SamplerContext) -> Result<f64> {
    Sampler::new(spec.clone(), ctx.clone())?.wait(ages)
}
