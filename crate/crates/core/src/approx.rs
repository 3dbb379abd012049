//! Low-complexity samplers and golden-section tuning of their threshold.
//!
//! The threshold rule waits until the expected penalty sum at the next
//! delivery reaches a fixed level `T`. For `g(x) = x` it reduces to the
//! water-filling rule, which compares `T` with the mean age of the state.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mdp::expected_penalty_after;
use crate::penalty::PenaltyFunction;
use crate::service::IidService;
use crate::state::TimeGrid;

/// Default root-finding tolerance of [`threshold_wait`], in ticks.
pub const DEFAULT_TOL_TICKS: f64 = 1e-6;
/// Bracketing gives up beyond this many ticks of waiting.
pub const MAX_BRACKET_TICKS: f64 = 1e6;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Smallest `t >= 0` with `E_Y[Σ_l g(a_l + t + Y)] >= threshold`, to within
/// `tol_ticks`. Ages and the returned wait are in time units.
pub fn threshold_wait(
    ages: &[f64],
    threshold: f64,
    g: &PenaltyFunction,
    service: &IidService,
    grid: TimeGrid,
    tol_ticks: f64,
) -> Result<f64> {
    let m = ages.len() as f64;
    if g.is_linear() {
        let mean = service.moments().mean * grid.tick_length();
        let sum: f64 = ages.iter().sum();
        return Ok(((threshold - sum - m * mean) / m).max(0.0));
    }
    let level = |t: f64| expected_penalty_after(ages, t, g, service, grid);
    if level(0.0) >= threshold {
        return Ok(0.0);
    }
    let tick = grid.tick_length();
    let limit = MAX_BRACKET_TICKS * tick;
    let mut lo = 0.0;
    let mut hi = tick;
    while level(hi) < threshold {
        if hi >= limit {
            return Err(Error::ThresholdUnreachable { threshold, limit: MAX_BRACKET_TICKS });
        }
        lo = hi;
        hi = (2.0 * hi).min(limit);
    }
    let tol = tol_ticks * tick;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if level(mid) >= threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `[threshold - age_sum / m]^+`.
pub fn water_filling_wait(age_sum: f64, threshold: f64, m: usize) -> f64 {
    (threshold - age_sum / m as f64).max(0.0)
}

/// Result of a golden-section search.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuning {
    pub argmin: f64,
    pub value: f64,
    /// Every `(T, objective)` pair evaluated, in order.
    pub evaluations: Vec<(f64, f64)>,
    /// Bracket `[a, b]` after each iteration, starting with the initial one.
    pub brackets: Vec<(f64, f64)>,
}

/// Golden-section minimization of `objective` over `[lo, hi]` until the
/// bracket is at most `tol` wide.
///
/// On equal objective values the left part of the bracket is kept, so flat
/// stretches resolve toward smaller thresholds.
pub fn tune_threshold<F>(mut objective: F, lo: f64, hi: f64, tol: f64) -> Result<Tuning>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::Domain(alloc::format!("need lo < hi and tol > 0, got [{lo}, {hi}] tol={tol}")));
    }
    let mut evaluations = Vec::new();
    let mut eval = |t: f64, evaluations: &mut Vec<(f64, f64)>| -> Result<f64> {
        let v = objective(t)?;
        if !v.is_finite() {
            return Err(Error::NonFiniteObjective { at: t, value: v });
        }
        evaluations.push((t, v));
        Ok(v)
    };
    let (mut a, mut b) = (lo, hi);
    let mut brackets = alloc::vec![(a, b)];
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = eval(x1, &mut evaluations)?;
    let mut f2 = eval(x2, &mut evaluations)?;
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = eval(x1, &mut evaluations)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = eval(x2, &mut evaluations)?;
        }
        brackets.push((a, b));
    }
    let mid = 0.5 * (a + b);
    eval(mid, &mut evaluations)?;
    let (argmin, value) = evaluations
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    Ok(Tuning { argmin, value, evaluations, brackets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn svc() -> IidService {
        IidService::two_point(0, 3, 0.5).unwrap()
    }

    #[test]
    fn linear_threshold_closed_form() {
        let grid = TimeGrid::default();
        let w = threshold_wait(&[5.0, 3.0, 1.0], 20.0, &PenaltyFunction::Linear, &svc(), grid, 1e-6).unwrap();
        assert!((w - 13.0 / 6.0).abs() < 1e-12);
        let w = threshold_wait(&[5.0, 3.0, 1.0], 13.5, &PenaltyFunction::Linear, &svc(), grid, 1e-6).unwrap();
        assert_eq!(w, 0.0);
    }

    #[test]
    fn zero_threshold_never_waits() {
        let grid = TimeGrid::default();
        for g in [PenaltyFunction::Linear, PenaltyFunction::Stair, PenaltyFunction::power(0.1).unwrap()] {
            assert_eq!(threshold_wait(&[0.0, 0.0, 0.0], 0.0, &g, &svc(), grid, 1e-6).unwrap(), 0.0);
        }
    }

    #[test]
    fn nonlinear_threshold_hits_the_level() {
        let grid = TimeGrid::default();
        let g = PenaltyFunction::exponential(0.1, 1.0).unwrap();
        let ages = [4.0, 2.0, 0.0];
        let w = threshold_wait(&ages, 6.0, &g, &svc(), grid, 1e-9).unwrap();
        assert!(w > 0.0);
        let at = expected_penalty_after(&ages, w, &g, &svc(), grid);
        let before = expected_penalty_after(&ages, w - 1e-8, &g, &svc(), grid);
        assert!(at >= 6.0 && before < 6.0, "{before} {at}");
    }

    #[test]
    fn unreachable_threshold() {
        let grid = TimeGrid::default();
        let g = PenaltyFunction::indicator(2.0).unwrap();
        let err = threshold_wait(&[0.0, 0.0], 5.0, &g, &svc(), grid, 1e-6).unwrap_err();
        assert!(matches!(err, Error::ThresholdUnreachable { .. }));
    }

    #[test]
    fn water_filling_examples() {
        assert_eq!(water_filling_wait(9.0, 4.0, 3), 1.0);
        assert_eq!(water_filling_wait(15.0, 4.0, 3), 0.0);
        assert_eq!(water_filling_wait(7.0, 0.0, 3), 0.0);
    }

    #[test]
    fn golden_section_quadratic() {
        let t = tune_threshold(|x| Ok((x - 5.0) * (x - 5.0)), 0.0, 10.0, 1e-4).unwrap();
        assert!((t.argmin - 5.0).abs() <= 1e-4);
        let t = tune_threshold(|x| Ok((x - 5.0) * (x - 5.0)), 6.0, 10.0, 1e-4).unwrap();
        assert!((t.argmin - 6.0).abs() <= 1e-4);
    }

    #[test]
    fn golden_section_bracket_shrinks_by_the_golden_ratio() {
        let t = tune_threshold(|x| Ok(libm::fabs(x - 2.3)), 0.0, 10.0, 1e-6).unwrap();
        for w in t.brackets.windows(2) {
            let ratio = (w[1].1 - w[1].0) / (w[0].1 - w[0].0);
            assert!((ratio - INV_PHI).abs() < 1e-6, "{ratio}");
        }
    }

    #[test]
    fn golden_section_rejects_bad_input() {
        assert!(tune_threshold(Ok, 1.0, 1.0, 1e-3).is_err());
        let err = tune_threshold(|_| Ok(f64::NAN), 0.0, 1.0, 1e-3).unwrap_err();
        assert!(matches!(err, Error::NonFiniteObjective { .. }));
    }

    proptest! {
        #[test]
        fn threshold_wait_decreases_with_age(
            base in proptest::collection::vec(0.0f64..20.0, 3),
            bump in proptest::collection::vec(0.0f64..5.0, 3),
            t in 0.0f64..30.0,
        ) {
            let grid = TimeGrid::default();
            let g = PenaltyFunction::exponential(0.1, 1.0).unwrap();
            let older: vec::Vec<f64> = base.iter().zip(&bump).map(|(a, d)| a + d).collect();
            let w_young = threshold_wait(&base, t, &g, &svc(), grid, 1e-9).unwrap();
            let w_old = threshold_wait(&older, t, &g, &svc(), grid, 1e-9).unwrap();
            prop_assert!(w_old <= w_young + 1e-8);
        }

        #[test]
        fn linear_threshold_is_water_filling(
            ages in proptest::collection::vec(0.0f64..20.0, 1..5),
            t in 0.0f64..60.0,
        ) {
            let grid = TimeGrid::default();
            let s = svc();
            let m = ages.len();
            let mean = s.moments().mean;
            let th = threshold_wait(&ages, t, &PenaltyFunction::Linear, &s, grid, 1e-9).unwrap();
            let t_wf = (t - m as f64 * mean) / m as f64;
            let wf = water_filling_wait(ages.iter().sum(), t_wf, m);
            prop_assert!((th - wf).abs() <= 1e-9);
            // the general root finder agrees with the closed form
            let general = PenaltyFunction::custom("identity", |x| x);
            let th2 = threshold_wait(&ages, t, &general, &s, grid, 1e-9).unwrap();
            prop_assert!((th2 - th).abs() <= 1e-8);
        }
    }
}
