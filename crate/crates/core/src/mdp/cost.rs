use crate::error::{Error, Result};
use crate::penalty::PenaltyFunction;
use crate::service::IidService;
use crate::state::{SystemState, TimeGrid};

/// Expected penalty area accumulated by all sources over one stage:
/// `E_Y[Σ_l ∫_{a_l}^{a_l+z+Y} g]`, in time units.
pub fn expected_area(s: &SystemState, z: u64, g: &PenaltyFunction, service: &IidService, grid: TimeGrid) -> f64 {
    let mut total = 0.0;
    for (y, p) in service.atoms() {
        let span = grid.to_time(z + y);
        let area: f64 = s
            .ages()
            .iter()
            .map(|&a| {
                let lo = grid.to_time(a);
                g.area(lo, lo + span)
            })
            .sum();
        total += p * area;
    }
    total
}

/// Expected stage cost `E_Y[Σ_l ∫_{a_l}^{a_l+z+Y} g − β (z + Y)]`.
pub fn stage_cost(
    s: &SystemState,
    z: u64,
    beta: f64,
    g: &PenaltyFunction,
    service: &IidService,
    grid: TimeGrid,
) -> f64 {
    let mean_duration = grid.to_time(z) + service.moments().mean * grid.tick_length();
    expected_area(s, z, g, service, grid) - beta * mean_duration
}

/// `E_Y[Σ_l g(a_l + t + Y)]` with ages and `t` in time units.
pub fn expected_penalty_after(ages: &[f64], t: f64, g: &PenaltyFunction, service: &IidService, grid: TimeGrid) -> f64 {
    let mut total = 0.0;
    for (y, p) in service.atoms() {
        let shift = t + grid.to_time(y);
        total += p * ages.iter().map(|&a| g.at(a + shift)).sum::<f64>();
    }
    total
}

/// Left side of the zero-wait test, `E_Y[Σ_l g(a_l + Y)]`, for a grid state.
/// For linear `g` this is `(A_s + m E[Y])` scaled to time units.
pub fn threshold_statistic(s: &SystemState, g: &PenaltyFunction, service: &IidService, grid: TimeGrid) -> f64 {
    if g.is_linear() {
        let m = s.m() as f64;
        return (s.age_sum() as f64 + m * service.moments().mean) * grid.tick_length();
    }
    let mut total = 0.0;
    for (y, p) in service.atoms() {
        total += p * s.ages().iter().map(|&a| g.at(grid.to_time(a + y))).sum::<f64>();
    }
    total
}

/// True when waiting is provably useless in `s` at ratio level `beta`.
pub fn threshold_test(s: &SystemState, beta: f64, g: &PenaltyFunction, service: &IidService, grid: TimeGrid) -> bool {
    threshold_statistic(s, g, service, grid) >= beta
}

/// Sufficient condition for zero-wait optimality under a linear penalty:
/// `y_inf >= ((m-1) E[Y]^2 + E[Y^2]) / ((m+1) E[Y])`.
pub fn zero_wait_sufficient(service: &IidService, m: usize) -> Result<bool> {
    Ok(zero_wait_condition(service, m)?.holds())
}

/// Both sides of the zero-wait condition, in ticks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroWaitCondition {
    pub y_inf: f64,
    pub bound: f64,
}

impl ZeroWaitCondition {
    pub fn holds(&self) -> bool {
        self.y_inf >= self.bound
    }
}

pub fn zero_wait_condition(service: &IidService, m: usize) -> Result<ZeroWaitCondition> {
    let mo = service.moments();
    if !(mo.mean > 0.0) {
        return Err(Error::Domain("mean service time must be positive".into()));
    }
    if m == 0 {
        return Err(Error::Domain("need at least one source".into()));
    }
    let mf = m as f64;
    let bound = ((mf - 1.0) * mo.mean * mo.mean + mo.second_moment) / ((mf + 1.0) * mo.mean);
    Ok(ZeroWaitCondition { y_inf: mo.y_inf as f64, bound })
}

/// Ta-AP of MAF with zero waits for `g(x) = x`, in time units:
/// `(m(m+1)/2 E[Y]^2 + m/2 E[Y^2]) / E[Y]`.
pub fn zero_wait_ta_ap_linear(service: &IidService, m: usize, grid: TimeGrid) -> Result<f64> {
    let mo = service.moments();
    if !(mo.mean > 0.0) {
        return Err(Error::Domain("mean service time must be positive".into()));
    }
    let mf = m as f64;
    let ticks = (0.5 * mf * (mf + 1.0) * mo.mean * mo.mean + 0.5 * mf * mo.second_moment) / mo.mean;
    Ok(ticks * grid.tick_length())
}
