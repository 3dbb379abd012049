//! Delivery-epoch simulation of the multi-source update system.
//!
//! Each iteration covers one stage `[D_i, D_{i+1})`: the sampler picks a
//! wait `Z_i`, the scheduler picks a source, the packet takes `Y_{i+1}` to
//! deliver, every age grows by `Z_i + Y_{i+1}`, and the served source
//! restarts at `Y_{i+1}`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::penalty::PenaltyFunction;
use crate::policies::{maf_pick, rand_pick, Sampler, SamplerContext, SamplerSpec, SchedulerSpec};
use crate::service::{MarkovService, ServiceModel};
use crate::state::TimeGrid;

/// Number of batches used for batch-means standard errors.
pub const DEFAULT_BATCHES: usize = 50;

const SERVICE_STREAM: u64 = 1;
const SCHEDULER_STREAM: u64 = 2;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub m: usize,
    pub scheduler: SchedulerSpec,
    pub sampler: SamplerSpec,
    pub service: ServiceModel,
    pub penalty: PenaltyFunction,
    pub grid: TimeGrid,
    /// Total deliveries simulated, warm-up included.
    pub horizon: u64,
    pub seed: u64,
    /// Per-source initial ages in time units; defaults to the zero-wait
    /// image `(m·y, …, 2y, y)` of the modal service value.
    pub initial_ages: Option<Vec<f64>>,
    /// Deliveries excluded from the metrics; defaults to `10·m`.
    pub warmup: Option<u64>,
    pub table_fallback: bool,
    pub batches: usize,
    /// Root-finding tolerance of the threshold sampler, in ticks.
    pub threshold_tol_ticks: f64,
}

impl SimConfig {
    pub fn new(m: usize, service: ServiceModel, penalty: PenaltyFunction) -> Self {
        Self {
            m,
            scheduler: SchedulerSpec::Maf,
            sampler: SamplerSpec::ZeroWait,
            service,
            penalty,
            grid: TimeGrid::default(),
            horizon: 100_000,
            seed: 0,
            initial_ages: None,
            warmup: None,
            table_fallback: true,
            batches: DEFAULT_BATCHES,
            threshold_tol_ticks: crate::approx::DEFAULT_TOL_TICKS,
        }
    }

    pub fn with_scheduler(mut self, s: SchedulerSpec) -> Self {
        self.scheduler = s;
        self
    }

    pub fn with_sampler(mut self, s: SamplerSpec) -> Self {
        self.sampler = s;
        self
    }

    pub fn with_horizon(mut self, n: u64) -> Self {
        self.horizon = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_initial_ages(mut self, ages: Vec<f64>) -> Self {
        self.initial_ages = Some(ages);
        self
    }

    pub fn with_warmup(mut self, w: u64) -> Self {
        self.warmup = Some(w);
        self
    }

    pub fn with_grid(mut self, grid: TimeGrid) -> Self {
        self.grid = grid;
        self
    }

    pub fn warmup_deliveries(&self) -> u64 {
        self.warmup.unwrap_or(10 * self.m as u64)
    }

    /// Initial ages actually used, source 0 first.
    pub fn resolved_initial_ages(&self) -> Vec<f64> {
        match &self.initial_ages {
            Some(a) => a.clone(),
            None => {
                let y = self.service.mode();
                (0..self.m).map(|k| self.grid.to_time((self.m - k) as u64 * y)).collect()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("need at least one source".into()));
        }
        if self.horizon <= self.warmup_deliveries() {
            return Err(Error::Config(format!(
                "horizon {} must exceed the warm-up of {} deliveries",
                self.horizon,
                self.warmup_deliveries()
            )));
        }
        if let Some(a) = &self.initial_ages {
            if a.len() != self.m || a.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::Config(format!("need {} non-negative initial ages, got {a:?}", self.m)));
            }
        }
        Ok(())
    }
}

/// Estimates of both age metrics over the counted deliveries.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Penalty area per unit time.
    pub ta_ap: f64,
    /// Sum of pre-delivery penalties over sources, per delivery.
    pub ta_apd: f64,
    pub deliveries: u64,
    pub elapsed: f64,
    /// Time-average age of each source.
    pub per_source_mean_age: Vec<f64>,
    /// Batch-means standard errors, when enough deliveries were counted.
    pub se_ta_ap: Option<f64>,
    pub se_ta_apd: Option<f64>,
    /// Table lookups that missed and used the fallback rule.
    pub fallback_hits: u64,
}

impl Metrics {
    /// 95% half-width for the Ta-AP estimate.
    pub fn ci_ta_ap(&self) -> Option<f64> {
        self.se_ta_ap.map(|s| 1.96 * s)
    }

    pub fn ci_ta_apd(&self) -> Option<f64> {
        self.se_ta_apd.map(|s| 1.96 * s)
    }
}

/// What happened during one stage; handed to observers.
#[derive(Debug)]
pub struct Delivery<'a> {
    pub index: u64,
    pub wait: f64,
    /// Service time of the delivered packet, in time units.
    pub service: f64,
    pub source: usize,
    /// Ages just before the delivery, source order.
    pub ages_before: &'a [f64],
    /// Ages right after the delivery, source order.
    pub ages_after: &'a [f64],
    pub counted: bool,
}

enum ServiceProcess<'a> {
    Iid(&'a crate::service::IidService),
    Markov { chain: &'a MarkovService, state: usize },
}

impl ServiceProcess<'_> {
    fn draw(&mut self, rng: &mut ChaCha8Rng) -> u64 {
        match self {
            Self::Iid(s) => s.sample(rng),
            Self::Markov { chain, state } => {
                let (y, next) = chain.next(*state, rng);
                *state = next;
                y
            }
        }
    }
}

/// Runs the simulation and returns its metrics. Deterministic given the seed.
pub fn simulate(cfg: &SimConfig) -> Result<Metrics> {
    simulate_observed(cfg, |_| {})
}

/// Like [`simulate`], calling `observe` after every delivery.
pub fn simulate_observed<F>(cfg: &SimConfig, mut observe: F) -> Result<Metrics>
where
    F: FnMut(&Delivery<'_>),
{
    cfg.validate()?;
    let m = cfg.m;
    let mut ctx = SamplerContext::new(cfg.penalty.clone(), &cfg.service, m, cfg.grid);
    ctx.table_fallback = cfg.table_fallback;
    ctx.tol_ticks = cfg.threshold_tol_ticks;
    let mut sampler = Sampler::new(cfg.sampler.clone(), ctx)?;

    let root = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut service_rng = root.clone();
    service_rng.set_stream(SERVICE_STREAM);
    let mut sched_rng = root;
    sched_rng.set_stream(SCHEDULER_STREAM);

    let mut process = match &cfg.service {
        ServiceModel::Iid(s) => ServiceProcess::Iid(s),
        ServiceModel::Markov(chain) => {
            let state = chain.initial_state(&mut service_rng);
            ServiceProcess::Markov { chain, state }
        }
    };

    let g = &cfg.penalty;
    let warmup = cfg.warmup_deliveries();
    let counted_total = cfg.horizon - warmup;
    let batches = cfg.batches.max(1);
    let batch_len = (counted_total / batches as u64).max(1);

    let mut ages = cfg.resolved_initial_ages();
    let mut before = vec![0.0; m];
    let mut sorted = vec![0.0; m];
    let mut area_total = 0.0;
    let mut penalty_total = 0.0;
    let mut elapsed = 0.0;
    let mut age_area = vec![0.0; m];
    let mut batch_area = vec![0.0; batches];
    let mut batch_time = vec![0.0; batches];
    let mut batch_pen = vec![0.0; batches];
    let mut batch_count = vec![0u64; batches];

    for i in 0..cfg.horizon {
        sorted.copy_from_slice(&ages);
        sorted.sort_unstable_by(|a, b| b.total_cmp(a));
        let z = sampler.wait(&sorted)?;
        let y = cfg.grid.to_time(process.draw(&mut service_rng));
        let src = match cfg.scheduler {
            SchedulerSpec::Maf => maf_pick(&ages)?,
            SchedulerSpec::Rand => rand_pick(m, &mut sched_rng),
        };
        let stage = z + y;
        let counted = i >= warmup;
        if counted {
            let mut area = 0.0;
            let mut pen = 0.0;
            for (l, &a) in ages.iter().enumerate() {
                area += g.area(a, a + stage);
                pen += g.at(a + stage);
                age_area[l] += stage * (a + 0.5 * stage);
            }
            area_total += area;
            penalty_total += pen;
            elapsed += stage;
            let b = (((i - warmup) / batch_len) as usize).min(batches - 1);
            batch_area[b] += area;
            batch_time[b] += stage;
            batch_pen[b] += pen;
            batch_count[b] += 1;
        }
        for (l, a) in ages.iter_mut().enumerate() {
            before[l] = *a + stage;
            *a = before[l];
        }
        ages[src] = y;
        observe(&Delivery { index: i, wait: z, service: y, source: src, ages_before: &before, ages_after: &ages, counted });
    }

    if !(elapsed > 0.0) {
        return Err(Error::Domain("no time elapsed over the counted deliveries".into()));
    }
    let (se_ta_ap, se_ta_apd) = if counted_total >= 2 * batches as u64 && batches >= 2 {
        let ratio: Option<Vec<f64>> =
            (0..batches).map(|b| (batch_time[b] > 0.0).then(|| batch_area[b] / batch_time[b])).collect();
        let per_delivery: Vec<f64> = (0..batches).map(|b| batch_pen[b] / batch_count[b] as f64).collect();
        (ratio.map(|r| standard_error(&r)), Some(standard_error(&per_delivery)))
    } else {
        (None, None)
    };
    Ok(Metrics {
        ta_ap: area_total / elapsed,
        ta_apd: penalty_total / counted_total as f64,
        deliveries: counted_total,
        elapsed,
        per_source_mean_age: age_area.iter().map(|a| a / elapsed).collect(),
        se_ta_ap,
        se_ta_apd,
        fallback_hits: sampler.fallback_hits,
    })
}

fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    libm::sqrt(var / n)
}

/// Simulated Ta-AP of MAF with zero waits.
pub fn zero_wait_estimate(
    service: &ServiceModel,
    m: usize,
    penalty: &PenaltyFunction,
    grid: TimeGrid,
    deliveries: u64,
    seed: u64,
) -> Result<f64> {
    let cfg = SimConfig::new(m, service.clone(), penalty.clone())
        .with_grid(grid)
        .with_horizon(deliveries + 10 * m as u64)
        .with_seed(seed);
    Ok(simulate(&cfg)?.ta_ap)
}

/// One step of a Markov service chain: the emitted value and the next state.
pub fn markov_service_next(state: usize, model: &MarkovService, rng: &mut ChaCha8Rng) -> (u64, usize) {
    model.next(state, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::service::IidService;

    #[test]
    fn deterministic_two_source_trace() {
        let svc: ServiceModel = IidService::constant(1).unwrap().into();
        for n in [25u64, 100, 1000] {
            let cfg = SimConfig::new(2, svc.clone(), PenaltyFunction::Linear)
                .with_initial_ages(vec![2.0, 1.0])
                .with_horizon(n);
            let met = simulate(&cfg).unwrap();
            assert_eq!(met.ta_ap, 4.0);
            assert_eq!(met.ta_apd, 5.0);
            assert_eq!(met.deliveries, n - 20);
            assert_eq!(met.elapsed, (n - 20) as f64);
        }
    }

    #[test]
    fn default_initial_ages_are_the_zero_wait_image() {
        let svc: ServiceModel = IidService::new(vec![1, 2], vec![0.6, 0.4]).unwrap().into();
        let cfg = SimConfig::new(3, svc, PenaltyFunction::Linear);
        assert_eq!(cfg.resolved_initial_ages(), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn config_validation() {
        let svc: ServiceModel = IidService::constant(1).unwrap().into();
        let cfg = SimConfig::new(2, svc.clone(), PenaltyFunction::Linear).with_horizon(20);
        assert!(matches!(simulate(&cfg), Err(Error::Config(_))));
        let cfg = SimConfig::new(2, svc.clone(), PenaltyFunction::Linear).with_initial_ages(vec![1.0]);
        assert!(simulate(&cfg).is_err());
        let cfg = SimConfig::new(0, svc, PenaltyFunction::Linear);
        assert!(simulate(&cfg).is_err());
    }

    #[test]
    fn same_seed_same_metrics() {
        let svc: ServiceModel = IidService::two_point(0, 3, 0.6).unwrap().into();
        let cfg = SimConfig::new(3, svc, PenaltyFunction::Linear)
            .with_scheduler(SchedulerSpec::Rand)
            .with_sampler(SamplerSpec::ConstantWait { wait: 0.36 })
            .with_horizon(20_000)
            .with_seed(77);
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
        let other = simulate(&cfg.clone().with_seed(78)).unwrap();
        assert_ne!(simulate(&cfg).unwrap().ta_ap, other.ta_ap);
    }
}
