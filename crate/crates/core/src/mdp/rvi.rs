use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::cost::{expected_area, threshold_statistic, zero_wait_ta_ap_linear};
use super::space::StateSpace;
use crate::error::{Error, Result};
use crate::penalty::PenaltyFunction;
use crate::service::{IidService, ServiceModel};
use crate::state::{SystemState, TimeGrid, WaitingMenu};

/// Version tag written into serialized solutions.
pub const SOLUTION_FORMAT_VERSION: u32 = 1;

/// Sweeps without a new smallest residual before damping switches on.
const STALL_LIMIT: usize = 50;
const AUTO_DAMPING: f64 = 0.2;
/// Deliveries used to estimate the zero-wait Ta-AP for non-linear penalties.
const ZERO_WAIT_ESTIMATE_DELIVERIES: u64 = 100_000;

/// Tuning knobs for [`RviSolver`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RviOptions {
    /// Bisection tolerance on β; defaults to `1e-3 · u`.
    pub eps1: Option<f64>,
    /// Relative-value tolerance; defaults to `1e-6 ·` span of the zero-wait stage cost.
    pub eps2: Option<f64>,
    /// Upper end of the initial bisection bracket.
    pub u_init: Option<f64>,
    /// Skip the minimization at states passing the threshold test.
    pub shortcut: bool,
    pub max_iters: usize,
    /// Initial damping weight κ on the previous relative values.
    pub damping: f64,
    /// Switch damping on when the residual stalls.
    pub auto_damping: bool,
    /// Worker threads for the sweep; 1 is sequential, 0 uses all cores.
    pub workers: usize,
    /// Seed for the zero-wait estimate used to initialise `u` when `g` is not linear.
    pub seed: u64,
}

impl Default for RviOptions {
    fn default() -> Self {
        Self {
            eps1: None,
            eps2: None,
            u_init: None,
            shortcut: true,
            max_iters: 100_000,
            damping: 0.0,
            auto_damping: true,
            workers: 1,
            seed: 0x5eed,
        }
    }
}

/// Converged relative value iteration at a fixed β.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    /// `J(o)`: the average cost per stage at this β.
    pub j_ref: f64,
    pub h: Vec<f64>,
    /// Greedy waiting time per state, in ticks.
    pub policy: Vec<u64>,
    pub iterations: usize,
    pub residual: f64,
    /// Damping weight in effect at termination.
    pub damping: f64,
    /// States whose minimization the threshold test skipped in the last sweep.
    pub skipped: usize,
}

/// Output of the bisection on the ratio objective.
#[derive(Debug, Clone)]
pub struct RviSolution {
    /// Optimal total-average age penalty per unit time.
    pub beta_star: f64,
    pub h: Vec<f64>,
    /// Optimal waiting time per state, in ticks.
    pub policy: Vec<u64>,
    pub space: Arc<StateSpace>,
    pub penalty: PenaltyFunction,
    pub bisection_steps: usize,
    pub inner_iterations: Vec<usize>,
    pub residuals: Vec<f64>,
    /// `(β, J(o))` for every bisection step, in order.
    pub trace: Vec<(f64, f64)>,
    pub eps1: f64,
    pub eps2: f64,
    pub u_init: f64,
}

impl RviSolution {
    pub fn wait_for(&self, ages: &[u64]) -> Option<u64> {
        self.space.index_of(ages).map(|k| self.policy[k])
    }

    pub fn relative_value(&self, ages: &[u64]) -> Option<f64> {
        self.space.index_of(ages).map(|k| self.h[k])
    }

    pub fn to_record(&self) -> SolutionRecord {
        let space = &self.space;
        SolutionRecord {
            format_version: SOLUTION_FORMAT_VERSION,
            tick_length: space.grid().tick_length(),
            m: space.m(),
            menu: space.menu().clone(),
            service: ServiceModel::Iid(space.service().clone()),
            penalty: self.penalty.clone(),
            beta_star: self.beta_star,
            eps1: self.eps1,
            eps2: self.eps2,
            u_init: self.u_init,
            states: space
                .states()
                .iter()
                .enumerate()
                .map(|(k, s)| StateRecord { ages: s.clone(), wait: self.policy[k], h: self.h[k] })
                .collect(),
        }
    }

    pub fn from_record(rec: SolutionRecord) -> Result<Self> {
        if rec.format_version != SOLUTION_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported solution format version {} (expected {SOLUTION_FORMAT_VERSION})",
                rec.format_version
            )));
        }
        let service = rec
            .service
            .as_iid()
            .cloned()
            .ok_or_else(|| Error::Config("solution files must carry an i.i.d. service model".into()))?;
        let grid = TimeGrid::new(rec.tick_length)?;
        let lookup: alloc::collections::BTreeMap<SystemState, (u64, f64)> =
            rec.states.iter().map(|r| (r.ages.clone(), (r.wait, r.h))).collect();
        let space = StateSpace::from_states(lookup.keys().cloned().collect(), service, rec.menu, rec.m, grid)?;
        let mut policy = Vec::with_capacity(space.len());
        let mut h = Vec::with_capacity(space.len());
        for s in space.states() {
            let (w, v) = lookup[s];
            if !space.menu().values().contains(&w) {
                return Err(Error::Config(format!("wait {w} for state {s} is not on the menu")));
            }
            policy.push(w);
            h.push(v);
        }
        Ok(Self {
            beta_star: rec.beta_star,
            h,
            policy,
            space: Arc::new(space),
            penalty: rec.penalty,
            bisection_steps: 0,
            inner_iterations: Vec::new(),
            residuals: Vec::new(),
            trace: Vec::new(),
            eps1: rec.eps1,
            eps2: rec.eps2,
            u_init: rec.u_init,
        })
    }
}

/// Serializable form of an [`RviSolution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub format_version: u32,
    pub tick_length: f64,
    pub m: usize,
    pub menu: WaitingMenu,
    pub service: ServiceModel,
    pub penalty: PenaltyFunction,
    pub beta_star: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub u_init: f64,
    pub states: Vec<StateRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub ages: SystemState,
    pub wait: u64,
    pub h: f64,
}

/// Relative value iteration over a fixed state space, with the outer
/// bisection on β.
pub struct RviSolver {
    space: Arc<StateSpace>,
    penalty: PenaltyFunction,
    opts: RviOptions,
    // area[s * nz + z]
    area: Vec<f64>,
    duration: Vec<f64>,
    statistic: Vec<f64>,
    probs: Vec<f64>,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl RviSolver {
    pub fn new(space: Arc<StateSpace>, penalty: PenaltyFunction, opts: RviOptions) -> Result<Self> {
        let grid = space.grid();
        let service = space.service();
        let menu = space.menu();
        let mean = service.moments().mean * grid.tick_length();
        let mut area = Vec::with_capacity(space.len() * menu.len());
        let mut statistic = Vec::with_capacity(space.len());
        for s in space.states() {
            for &z in menu.values() {
                area.push(expected_area(s, z, &penalty, service, grid));
            }
            statistic.push(threshold_statistic(s, &penalty, service, grid));
        }
        if area.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("stage cost is not finite on this state space".into()));
        }
        let duration = menu.values().iter().map(|&z| grid.to_time(z) + mean).collect();
        let probs = service.probs().to_vec();
        #[cfg(feature = "parallel")]
        let pool = if opts.workers == 1 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(opts.workers)
                    .build()
                    .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?,
            )
        };
        Ok(Self {
            space,
            penalty,
            opts,
            area,
            duration,
            statistic,
            probs,
            #[cfg(feature = "parallel")]
            pool,
        })
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn options(&self) -> &RviOptions {
        &self.opts
    }

    /// Default `ε₂`: `1e-6` times the spread of the zero-wait stage cost.
    pub fn default_eps2(&self) -> f64 {
        let nz = self.space.menu().len();
        let (lo, hi) = (0..self.space.len())
            .map(|s| self.area[s * nz])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        if span > 0.0 {
            1e-6 * span
        } else {
            1e-6
        }
    }

    /// Default upper bound for the bisection: the zero-wait Ta-AP, exact for
    /// a linear penalty and estimated by simulation (times 1.1) otherwise.
    pub fn default_u_init(&self) -> Result<f64> {
        let space = &self.space;
        if self.penalty.is_linear() {
            return zero_wait_ta_ap_linear(space.service(), space.m(), space.grid());
        }
        let estimate = crate::sim::zero_wait_estimate(
            &ServiceModel::Iid(space.service().clone()),
            space.m(),
            &self.penalty,
            space.grid(),
            ZERO_WAIT_ESTIMATE_DELIVERIES,
            self.opts.seed,
        )?;
        Ok(1.1 * estimate)
    }

    #[inline]
    fn q_value(&self, s: usize, z_idx: usize, beta: f64, h: &[f64]) -> f64 {
        let nz = self.space.menu().len();
        let future: f64 = self
            .space
            .successors(s, z_idx)
            .iter()
            .zip(&self.probs)
            .map(|(&t, p)| p * h[t as usize])
            .sum();
        self.area[s * nz + z_idx] - beta * self.duration[z_idx] + future
    }

    /// Best `(Q, menu index, skipped)` for one state.
    #[inline]
    fn best_action(&self, s: usize, beta: f64, h: &[f64], shortcut: bool) -> (f64, u32, bool) {
        if shortcut && self.statistic[s] >= beta {
            return (self.q_value(s, 0, beta, h), 0, true);
        }
        let mut best = (self.q_value(s, 0, beta, h), 0u32);
        for zi in 1..self.space.menu().len() {
            let v = self.q_value(s, zi, beta, h);
            if v < best.0 {
                best = (v, zi as u32);
            }
        }
        (best.0, best.1, false)
    }

    // One synchronous (Jacobi) sweep; every state reads only `h`.
    fn sweep(&self, beta: f64, h: &[f64], j: &mut [f64], pol: &mut [u32], skip: &mut [bool], shortcut: bool) {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            pool.install(|| {
                j.par_iter_mut()
                    .zip(pol.par_iter_mut())
                    .zip(skip.par_iter_mut())
                    .enumerate()
                    .for_each(|(s, ((jv, pv), sk))| {
                        let (v, z, k) = self.best_action(s, beta, h, shortcut);
                        *jv = v;
                        *pv = z;
                        *sk = k;
                    });
            });
            return;
        }
        for s in 0..j.len() {
            let (v, z, k) = self.best_action(s, beta, h, shortcut);
            j[s] = v;
            pol[s] = z;
            skip[s] = k;
        }
    }

    /// Relative value iteration at a fixed β using the configured shortcut setting.
    pub fn inner(&self, beta: f64) -> Result<InnerResult> {
        self.inner_with(beta, self.opts.shortcut)
    }

    pub fn inner_with(&self, beta: f64, shortcut: bool) -> Result<InnerResult> {
        let eps2 = self.opts.eps2.unwrap_or_else(|| self.default_eps2());
        if !(eps2 > 0.0) || !(beta >= 0.0) {
            return Err(Error::Domain(format!("need eps2 > 0 and beta >= 0, got eps2={eps2} beta={beta}")));
        }
        let n = self.space.len();
        let o = self.space.reference();
        let mut h = vec![0.0; n];
        let mut j = vec![0.0; n];
        let mut pol = vec![0u32; n];
        let mut skip = vec![false; n];
        let mut kappa = self.opts.damping;
        let mut best_residual = f64::INFINITY;
        let mut stall = 0usize;
        let mut residual = f64::INFINITY;
        for iteration in 1..=self.opts.max_iters {
            self.sweep(beta, &h, &mut j, &mut pol, &mut skip, shortcut);
            let j_ref = j[o];
            residual = 0.0;
            for s in 0..n {
                let update = j[s] - j_ref;
                let next = (1.0 - kappa) * update + kappa * h[s];
                residual = residual.max(libm::fabs(next - h[s]));
                h[s] = next;
            }
            if !residual.is_finite() {
                break;
            }
            if residual <= eps2 {
                let menu = self.space.menu().values();
                return Ok(InnerResult {
                    j_ref,
                    h,
                    policy: pol.iter().map(|&k| menu[k as usize]).collect(),
                    iterations: iteration,
                    residual,
                    damping: kappa,
                    skipped: skip.iter().filter(|k| **k).count(),
                });
            }
            if residual < best_residual {
                best_residual = residual;
                stall = 0;
            } else {
                stall += 1;
            }
            if self.opts.auto_damping && kappa == 0.0 && stall >= STALL_LIMIT {
                log::info!("residual stalled at {residual:e} for {STALL_LIMIT} sweeps; damping with kappa={AUTO_DAMPING}");
                kappa = AUTO_DAMPING;
                stall = 0;
                best_residual = f64::INFINITY;
            }
        }
        Err(Error::NotConverged { iterations: self.opts.max_iters, residual })
    }

    /// Bisection on β around the inner iteration until the bracket is
    /// narrower than `ε₁`, then a final inner solve at the midpoint.
    pub fn solve(&self) -> Result<RviSolution> {
        let estimated = self.opts.u_init.is_none() && !self.penalty.is_linear();
        let mut upper = match self.opts.u_init {
            Some(u) => u,
            None => self.default_u_init()?,
        };
        if !(upper.is_finite() && upper > 0.0) {
            return Err(Error::Domain(format!("bisection upper bound must be positive, got {upper}")));
        }
        let mut inner_iterations = Vec::new();
        let mut residuals = Vec::new();
        let mut trace = Vec::new();
        if estimated {
            // A simulated bound can undershoot; widen it until J(o) < 0 there.
            for _ in 0..20 {
                let r = self.inner(upper)?;
                inner_iterations.push(r.iterations);
                residuals.push(r.residual);
                trace.push((upper, r.j_ref));
                if r.j_ref < 0.0 {
                    break;
                }
                upper *= 2.0;
            }
        }
        let u_init = upper;
        let eps1 = self.opts.eps1.unwrap_or(1e-3 * upper);
        if !(eps1 > 0.0) {
            return Err(Error::Domain(format!("eps1 must be positive, got {eps1}")));
        }
        let mut lower = 0.0;
        let mut steps = 0;
        while upper - lower > eps1 {
            let beta = 0.5 * (lower + upper);
            let r = self.inner(beta)?;
            inner_iterations.push(r.iterations);
            residuals.push(r.residual);
            trace.push((beta, r.j_ref));
            // J(o) >= 0 means the optimum is at least β.
            if r.j_ref >= 0.0 {
                lower = beta;
            } else {
                upper = beta;
            }
            steps += 1;
        }
        let beta_star = 0.5 * (lower + upper);
        let last = self.inner(beta_star)?;
        inner_iterations.push(last.iterations);
        residuals.push(last.residual);
        trace.push((beta_star, last.j_ref));
        Ok(RviSolution {
            beta_star,
            h: last.h,
            policy: last.policy,
            space: Arc::clone(&self.space),
            penalty: self.penalty.clone(),
            bisection_steps: steps,
            inner_iterations,
            residuals,
            trace,
            eps1,
            eps2: self.opts.eps2.unwrap_or_else(|| self.default_eps2()),
            u_init,
        })
    }
}

/// Enumerates the state space for `service` and solves it.
pub fn solve(
    service: &IidService,
    menu: &WaitingMenu,
    m: usize,
    grid: TimeGrid,
    penalty: &PenaltyFunction,
    opts: RviOptions,
) -> Result<RviSolution> {
    let space = StateSpace::enumerate(service, menu, m, grid)?;
    RviSolver::new(Arc::new(space), penalty.clone(), opts)?.solve()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solver(svc: &IidService, menu: &WaitingMenu, m: usize, opts: RviOptions) -> RviSolver {
        let space = StateSpace::enumerate(svc, menu, m, TimeGrid::default()).unwrap();
        RviSolver::new(Arc::new(space), PenaltyFunction::Linear, opts).unwrap()
    }

    #[test]
    fn single_state_inner() {
        let svc = IidService::constant(2).unwrap();
        let s = solver(&svc, &WaitingMenu::zero_only(), 1, RviOptions::default());
        assert_eq!(s.space().len(), 1);
        // C((2), 0) = ∫_2^4 τ dτ − 2β
        let r = s.inner(3.0).unwrap();
        assert!(r.j_ref.abs() < 1e-12);
        let r = s.inner(1.5).unwrap();
        assert!((r.j_ref - 3.0).abs() < 1e-12);
        assert_eq!(r.policy, vec![0]);
    }

    #[test]
    fn constant_service_two_sources() {
        let svc = IidService::constant(2).unwrap();
        let s = solver(&svc, &WaitingMenu::range(1, 1).unwrap(), 2, RviOptions::default());
        let sol = s.solve().unwrap();
        assert!((sol.beta_star - 8.0).abs() <= sol.eps1);
        assert!(sol.policy.iter().all(|w| *w == 0));
    }

    #[test]
    fn constant_service_one_source() {
        for c in [1u64, 2, 5] {
            let svc = IidService::constant(c).unwrap();
            let s = solver(&svc, &WaitingMenu::range(3, 1).unwrap(), 1, RviOptions::default());
            let sol = s.solve().unwrap();
            assert!((sol.beta_star - 1.5 * c as f64).abs() <= sol.eps1, "c={c}: {}", sol.beta_star);
            assert!(sol.policy.iter().all(|w| *w == 0));
        }
    }

    #[test]
    fn shortcut_does_not_change_inner() {
        let svc = IidService::new(vec![0, 3], vec![0.9, 0.1]).unwrap();
        let s = solver(&svc, &WaitingMenu::range(3, 1).unwrap(), 2, RviOptions::default());
        for beta in [1.0, 3.0, 6.0] {
            let a = s.inner_with(beta, true).unwrap();
            let b = s.inner_with(beta, false).unwrap();
            assert_eq!(a.policy, b.policy);
            assert!((a.j_ref - b.j_ref).abs() < 1e-9);
        }
    }

    #[test]
    fn oscillating_residual_switches_damping_on() {
        let svc = IidService::two_point(0, 3, 0.7).unwrap();
        let space = StateSpace::enumerate(&svc, &WaitingMenu::range(6, 1).unwrap(), 3, TimeGrid::default()).unwrap();
        let g = PenaltyFunction::exponential(0.1, 1.0).unwrap();
        let s = RviSolver::new(Arc::new(space.clone()), g.clone(), RviOptions::default()).unwrap();
        let r = s.inner(15.0).unwrap();
        assert_eq!(r.damping, AUTO_DAMPING);
        let plain = RviOptions { auto_damping: false, max_iters: 5_000, ..Default::default() };
        let s = RviSolver::new(Arc::new(space), g, plain).unwrap();
        assert!(matches!(s.inner(15.0), Err(Error::NotConverged { .. })));
    }

    #[test]
    fn record_round_trip() {
        let svc = IidService::new(vec![1, 2], vec![0.5, 0.5]).unwrap();
        let s = solver(&svc, &WaitingMenu::range(2, 1).unwrap(), 2, RviOptions::default());
        let sol = s.solve().unwrap();
        let rec = sol.to_record();
        let json = serde_json::to_string(&rec).unwrap();
        let back: SolutionRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rec);
        let again = RviSolution::from_record(back).unwrap();
        assert_eq!(again.policy, sol.policy);
        assert_eq!(again.h, sol.h);
        assert_eq!(again.space.states(), sol.space.states());
    }

    #[test]
    fn bad_tolerances() {
        let svc = IidService::constant(1).unwrap();
        let s = solver(&svc, &WaitingMenu::zero_only(), 1, RviOptions { eps2: Some(0.0), ..Default::default() });
        assert!(s.inner(1.0).is_err());
        let s = solver(&svc, &WaitingMenu::zero_only(), 1, RviOptions::default());
        assert!(s.inner(-1.0).is_err());
    }
}
