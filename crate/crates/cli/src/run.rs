//! The solve, simulate, sweep, oracle and check workflows.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use aoisched_core::approx::{tune_threshold, Tuning};
use aoisched_core::mdp::{
    zero_wait_condition, zero_wait_ta_ap_linear, RviSolution, RviSolver, SolutionRecord, StateSpace,
};
use aoisched_core::oracle::{brute_force_best, SearchResult};
use aoisched_core::policies::{PolicyTable, SamplerSpec};
use aoisched_core::service::{IidService, ServiceModel};
use aoisched_core::sim::{simulate, Metrics, SimConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Config, SamplerConfig};
use crate::error::{CliError, CliResult};

const DEFAULT_MEAN_FRACTION: f64 = 0.3;

/// The i.i.d. law the solver and oracle need.
pub fn iid_service(cfg: &Config) -> CliResult<IidService> {
    match cfg.service.build()? {
        ServiceModel::Iid(s) => Ok(s),
        ServiceModel::Markov(_) => Err(CliError::Usage("this command needs an i.i.d. service model".into())),
    }
}

pub fn state_space(cfg: &Config) -> CliResult<StateSpace> {
    let service = iid_service(cfg)?;
    let menu = cfg.solver.menu_for(&service)?;
    Ok(StateSpace::enumerate(&service, &menu, cfg.m, cfg.grid()?)?)
}

pub fn solve(cfg: &Config) -> CliResult<RviSolution> {
    let space = Arc::new(state_space(cfg)?);
    log::info!("solving over {} states, {} menu values", space.len(), space.menu().len());
    let solver = RviSolver::new(space, cfg.penalty.clone(), cfg.solver.options(cfg.simulation.seed))?;
    Ok(solver.solve()?)
}

pub fn write_solution(sol: &RviSolution, path: &Path) -> CliResult<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(file, &sol.to_record())?;
    Ok(())
}

pub fn read_solution(path: &Path) -> CliResult<RviSolution> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read solution {}: {e}", path.display())))?;
    let rec: SolutionRecord = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{} is not a solution file: {e}", path.display())))?;
    Ok(RviSolution::from_record(rec)?)
}

type SolveSlot = Arc<OnceLock<Result<Arc<RviSolution>, String>>>;

/// Solutions shared across sweep points with identical solver inputs.
#[derive(Default)]
pub struct SolverCache {
    entries: Mutex<HashMap<String, SolveSlot>>,
}

impl SolverCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, cfg: &Config) -> CliResult<Arc<RviSolution>> {
        let key = solver_key(cfg)?;
        let cell = {
            let mut map = self.entries.lock().expect("solver cache poisoned");
            Arc::clone(map.entry(key).or_default())
        };
        cell.get_or_init(|| solve(cfg).map(Arc::new).map_err(|e| e.to_string()))
            .clone()
            .map_err(CliError::Runtime)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("solver cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn solver_key(cfg: &Config) -> CliResult<String> {
    Ok(serde_json::to_string(&(
        &cfg.service,
        cfg.m,
        cfg.tick_length,
        &cfg.penalty,
        &cfg.solver,
        cfg.simulation.seed,
    ))?)
}

/// A sampler ready to simulate, with the level or optimum behind it.
#[derive(Debug, Clone)]
pub struct ResolvedSampler {
    pub spec: SamplerSpec,
    /// Threshold used by threshold or water-filling samplers.
    pub threshold: Option<f64>,
    pub beta_star: Option<f64>,
    pub tuning: Option<Tuning>,
}

impl ResolvedSampler {
    fn plain(spec: SamplerSpec) -> Self {
        Self { spec, threshold: None, beta_star: None, tuning: None }
    }
}

pub fn sim_config(cfg: &Config, sampler: SamplerSpec) -> CliResult<SimConfig> {
    let s = &cfg.simulation;
    let mut sim = SimConfig::new(cfg.m, cfg.service.build()?, cfg.penalty.clone())
        .with_scheduler(cfg.scheduler.into())
        .with_sampler(sampler)
        .with_grid(cfg.grid()?)
        .with_horizon(s.horizon)
        .with_seed(s.seed);
    sim.warmup = s.warmup;
    sim.batches = s.batches;
    sim.initial_ages = s.initial_ages.clone();
    sim.table_fallback = s.table_fallback;
    Ok(sim)
}

pub fn resolve_sampler(cfg: &Config, cache: &SolverCache) -> CliResult<ResolvedSampler> {
    match &cfg.sampler {
        SamplerConfig::ZeroWait => Ok(ResolvedSampler::plain(SamplerSpec::ZeroWait)),
        SamplerConfig::ConstantWait { wait, mean_fraction } => {
            let wait = match (wait, mean_fraction) {
                (Some(w), None) => *w,
                (None, f) => {
                    let mean = cfg.service.build()?.moments()?.mean * cfg.tick_length;
                    f.unwrap_or(DEFAULT_MEAN_FRACTION) * mean
                }
                (Some(_), Some(_)) => {
                    return Err(CliError::Usage("constant_wait takes either wait or mean_fraction, not both".into()))
                }
            };
            Ok(ResolvedSampler::plain(SamplerSpec::ConstantWait { wait }))
        }
        SamplerConfig::Threshold { threshold } | SamplerConfig::WaterFilling { threshold } => {
            let water = matches!(cfg.sampler, SamplerConfig::WaterFilling { .. });
            let make = move |t: f64| {
                if water {
                    SamplerSpec::WaterFilling { threshold: t }
                } else {
                    SamplerSpec::Threshold { threshold: t }
                }
            };
            match threshold {
                Some(t) => Ok(ResolvedSampler { threshold: Some(*t), ..ResolvedSampler::plain(make(*t)) }),
                None => {
                    let tuning = tune(cfg, &make, water)?;
                    let t = tuning.argmin;
                    Ok(ResolvedSampler { spec: make(t), threshold: Some(t), beta_star: None, tuning: Some(tuning) })
                }
            }
        }
        SamplerConfig::RviRc { solution } => {
            let sol = match solution {
                Some(path) => Arc::new(read_solution(path)?),
                None => cache.get(cfg)?,
            };
            let table = PolicyTable::from_solution(&sol);
            Ok(ResolvedSampler {
                spec: SamplerSpec::Table(Arc::new(table)),
                threshold: None,
                beta_star: Some(sol.beta_star),
                tuning: None,
            })
        }
    }
}

/// Golden-section search for the level minimizing simulated Ta-AP, over
/// `[0, zero-wait Ta-AP]` (divided by `m` for water-filling).
pub fn tune<F>(cfg: &Config, make: &F, water: bool) -> CliResult<Tuning>
where
    F: Fn(f64) -> SamplerSpec,
{
    let mut base = sim_config(cfg, SamplerSpec::ZeroWait)?;
    base.horizon = cfg.tuning.horizon;
    let zero = simulate(&base)?.ta_ap;
    let hi = if water { zero / cfg.m as f64 } else { zero };
    let tuning = tune_threshold(
        |t| {
            let mut c = base.clone();
            c.sampler = make(t);
            Ok(simulate(&c)?.ta_ap)
        },
        0.0,
        hi,
        cfg.tuning.rel_tol * hi,
    )?;
    log::info!("tuned threshold {} after {} evaluations", tuning.argmin, tuning.evaluations.len());
    Ok(tuning)
}

/// One `simulate` output row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRow {
    pub m: usize,
    pub scheduler: String,
    pub sampler: String,
    pub sampler_params: String,
    pub service: String,
    pub penalty: String,
    pub seed: u64,
    pub n: u64,
    pub ta_ap: f64,
    pub ta_apd: f64,
    pub ci_ta_ap: Option<f64>,
    pub elapsed: f64,
}

pub struct SimOutcome {
    pub row: SimRow,
    pub metrics: Metrics,
    pub sampler: ResolvedSampler,
}

pub fn run_simulation(cfg: &Config, cache: &SolverCache) -> CliResult<SimOutcome> {
    let sampler = resolve_sampler(cfg, cache)?;
    let sim = sim_config(cfg, sampler.spec.clone())?;
    let metrics = simulate(&sim)?;
    if metrics.fallback_hits > 0 {
        log::info!("{} deliveries used the off-table fallback", metrics.fallback_hits);
    }
    let row = SimRow {
        m: cfg.m,
        scheduler: sim.scheduler.name().to_string(),
        sampler: sampler.spec.name().to_string(),
        sampler_params: sampler.spec.params(),
        service: sim.service.label(),
        penalty: cfg.penalty.label(),
        seed: cfg.simulation.seed,
        n: cfg.simulation.horizon,
        ta_ap: metrics.ta_ap,
        ta_apd: metrics.ta_apd,
        ci_ta_ap: metrics.ci_ta_ap(),
        elapsed: metrics.elapsed,
    };
    Ok(SimOutcome { row, metrics, sampler })
}

/// One `sweep` output row; metrics are empty when `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// `path=value` pairs of this point, joined by `;`.
    pub sweep_point: String,
    pub m: usize,
    pub scheduler: String,
    pub sampler: String,
    pub sampler_params: String,
    pub service: String,
    pub penalty: String,
    pub seed: u64,
    pub n: u64,
    pub ta_ap: Option<f64>,
    pub ta_apd: Option<f64>,
    pub ci_ta_ap: Option<f64>,
    pub elapsed: Option<f64>,
    #[serde(rename = "threshold_T")]
    pub threshold_t: Option<f64>,
    pub beta_star: Option<f64>,
    pub error: String,
}

/// Concrete configurations of a sweep, in output order.
pub fn sweep_jobs(cfg: &Config) -> CliResult<Vec<(String, Config)>> {
    let mut points: Vec<(Vec<String>, Config)> = vec![(Vec::new(), cfg.clone())];
    for axis in &cfg.sweep.axes {
        let mut next = Vec::with_capacity(points.len() * axis.values.len());
        for (labels, base) in &points {
            for v in &axis.values {
                let mut l = labels.clone();
                l.push(format!("{}={}", axis.path, v));
                next.push((l, base.with_value(&axis.path, v.clone())?));
            }
        }
        points = next;
    }
    let mut jobs = Vec::new();
    for (labels, point) in points {
        let label = labels.join(";");
        if cfg.sweep.pairs.is_empty() {
            jobs.push((label, point));
        } else {
            for pair in &cfg.sweep.pairs {
                let mut c = point.clone();
                c.scheduler = pair.scheduler;
                c.sampler = pair.sampler.clone();
                jobs.push((label.clone(), c));
            }
        }
    }
    Ok(jobs)
}

/// Runs every job on a worker pool; rows come back in sweep order.
pub fn run_sweep(cfg: &Config) -> CliResult<Vec<SweepRow>> {
    let jobs = sweep_jobs(cfg)?;
    let cache = SolverCache::new();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sweep.workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    let rows = pool.install(|| {
        jobs.par_iter()
            .map(|(label, job)| sweep_row(label, job, &cache))
            .collect::<Vec<_>>()
    });
    log::info!("sweep finished: {} rows, {} distinct solves", rows.len(), cache.len());
    Ok(rows)
}

fn sweep_row(label: &str, cfg: &Config, cache: &SolverCache) -> SweepRow {
    let service = cfg.service.build().map(|s| s.label()).unwrap_or_default();
    let mut row = SweepRow {
        sweep_point: label.to_string(),
        m: cfg.m,
        scheduler: aoisched_core::policies::SchedulerSpec::from(cfg.scheduler).name().to_string(),
        sampler: cfg.sampler.name().to_string(),
        sampler_params: String::new(),
        service,
        penalty: cfg.penalty.label(),
        seed: cfg.simulation.seed,
        n: cfg.simulation.horizon,
        ta_ap: None,
        ta_apd: None,
        ci_ta_ap: None,
        elapsed: None,
        threshold_t: None,
        beta_star: None,
        error: String::new(),
    };
    match run_simulation(cfg, cache) {
        Ok(out) => {
            row.sampler_params = out.row.sampler_params;
            row.ta_ap = Some(out.row.ta_ap);
            row.ta_apd = Some(out.row.ta_apd);
            row.ci_ta_ap = out.row.ci_ta_ap;
            row.elapsed = Some(out.row.elapsed);
            row.threshold_t = out.sampler.threshold;
            row.beta_star = out.sampler.beta_star;
        }
        Err(e) => {
            log::warn!("sweep point {label} ({}): {e}", row.sampler);
            row.error = e.to_string();
        }
    }
    row
}

pub fn write_csv<T: Serialize, W: std::io::Write>(rows: &[T], out: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn oracle(cfg: &Config) -> CliResult<(StateSpace, SearchResult)> {
    let space = state_space(cfg)?;
    let best = brute_force_best(&space, &cfg.penalty)?;
    Ok((space, best))
}

/// Zero-wait optimality check and closed-form zero-wait Ta-AP, in time units.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub m: usize,
    pub mean: f64,
    pub second_moment: f64,
    pub y_inf: f64,
    pub bound: f64,
    pub zero_wait_optimal: bool,
    /// Zero-wait Ta-AP under a linear penalty.
    pub zero_wait_ta_ap: f64,
}

pub fn check(cfg: &Config) -> CliResult<CheckReport> {
    let service = iid_service(cfg)?;
    let cond = zero_wait_condition(&service, cfg.m)?;
    let mo = service.moments();
    let tick = cfg.tick_length;
    Ok(CheckReport {
        m: cfg.m,
        mean: mo.mean * tick,
        second_moment: mo.second_moment * tick * tick,
        y_inf: cond.y_inf * tick,
        bound: cond.bound * tick,
        zero_wait_optimal: cond.holds(),
        zero_wait_ta_ap: zero_wait_ta_ap_linear(&service, cfg.m, cfg.grid()?)?,
    })
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "m            {}", self.m)?;
        writeln!(f, "E[Y]         {}", self.mean)?;
        writeln!(f, "E[Y^2]       {}", self.second_moment)?;
        writeln!(f, "y_inf        {}", self.y_inf)?;
        writeln!(f, "bound        {}", self.bound)?;
        let verdict = if self.zero_wait_optimal { "optimal" } else { "not guaranteed" };
        writeln!(f, "zero-wait    {verdict}")?;
        writeln!(f, "zero-wait Ta-AP (linear g)  {}", self.zero_wait_ta_ap)
    }
}
