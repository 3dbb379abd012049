use std::sync::Arc;

use aoisched_core::mdp::{zero_wait_ta_ap_linear, RviOptions, RviSolver, StateSpace};
use aoisched_core::oracle::{brute_force_best, evaluate_policy, recurrent_states, StationaryPolicy};
use aoisched_core::policies::{PolicyTable, SamplerSpec};
use aoisched_core::service::IidService;
use aoisched_core::sim::{simulate, SimConfig};
use aoisched_core::{PenaltyFunction, TimeGrid, WaitingMenu};

fn space(values: &[u64], probs: &[f64], menu_max: u64, m: usize) -> Arc<StateSpace> {
    let svc = IidService::new(values.to_vec(), probs.to_vec()).unwrap();
    Arc::new(StateSpace::enumerate(&svc, &WaitingMenu::range(menu_max, 1).unwrap(), m, TimeGrid::default()).unwrap())
}

#[test]
fn solver_matches_exhaustive_search() {
    let cases = [
        (space(&[1, 2], &[0.5, 0.5], 2, 2), PenaltyFunction::Linear),
        (space(&[0, 3], &[0.9, 0.1], 2, 2), PenaltyFunction::Linear),
        (space(&[0, 2], &[0.8, 0.2], 2, 2), PenaltyFunction::exponential(0.1, 1.0).unwrap()),
        (space(&[1, 3], &[0.7, 0.3], 1, 2), PenaltyFunction::Stair),
        (space(&[2, 4], &[0.5, 0.5], 3, 1), PenaltyFunction::Linear),
    ];
    for (sp, g) in cases {
        let best = brute_force_best(&sp, &g).unwrap();
        let sol = RviSolver::new(sp.clone(), g.clone(), RviOptions { eps1: Some(1e-6), ..Default::default() })
            .unwrap()
            .solve()
            .unwrap();
        assert!((sol.beta_star - best.value).abs() <= 1e-3, "{}: rvi {} vs oracle {}", g.label(), sol.beta_star, best.value);
        let induced = evaluate_policy(&sp, &StationaryPolicy::new(&sp, sol.policy.clone()).unwrap(), &g).unwrap();
        assert!((induced - best.value).abs() <= 1e-3, "{}: induced {induced} vs {}", g.label(), best.value);
    }
}

#[test]
fn every_policy_is_bounded_below_by_the_optimum() {
    let sp = space(&[1, 2], &[0.5, 0.5], 2, 2);
    let g = PenaltyFunction::Linear;
    let sol = RviSolver::new(sp.clone(), g.clone(), RviOptions::default()).unwrap().solve().unwrap();
    let n = sp.len();
    for k in 0..200u64 {
        let waits: Vec<u64> = (0..n).map(|s| (k.wrapping_mul(2654435761) >> (s % 16)) % 3).collect();
        let policy = StationaryPolicy::new(&sp, waits).unwrap();
        if let Ok(v) = evaluate_policy(&sp, &policy, &g) {
            assert!(v >= sol.beta_star - 1e-3);
        }
    }
}

#[test]
fn zero_policy_equals_closed_form() {
    for (values, probs, m) in [
        (vec![0u64, 3], vec![0.4, 0.6], 3usize),
        (vec![0, 3], vec![0.5, 0.5], 3),
        (vec![1], vec![1.0], 2),
        (vec![2, 5, 7], vec![0.3, 0.3, 0.4], 2),
    ] {
        let sp = space(&values, &probs, 0, m);
        let exact = evaluate_policy(&sp, &StationaryPolicy::zero(&sp), &PenaltyFunction::Linear).unwrap();
        let closed = zero_wait_ta_ap_linear(sp.service(), m, TimeGrid::default()).unwrap();
        assert!((exact - closed).abs() <= 1e-9, "{exact} vs {closed}");
    }
}

#[test]
fn exact_value_matches_simulation() {
    let sp = space(&[0, 3], &[0.8, 0.2], 3, 3);
    let g = PenaltyFunction::Linear;
    let sol = RviSolver::new(sp.clone(), g.clone(), RviOptions::default()).unwrap().solve().unwrap();
    let policy = StationaryPolicy::new(&sp, sol.policy.clone()).unwrap();
    let exact = evaluate_policy(&sp, &policy, &g).unwrap();
    assert!(!recurrent_states(&sp, &policy).unwrap().is_empty());
    let table = PolicyTable::from_solution(&sol);
    let cfg = SimConfig::new(3, sp.service().clone().into(), g)
        .with_sampler(SamplerSpec::Table(Arc::new(table)))
        .with_horizon(1_000_000)
        .with_seed(5);
    let met = simulate(&cfg).unwrap();
    let se = met.se_ta_ap.unwrap();
    assert!((met.ta_ap - exact).abs() <= 3.0 * se, "sim {} ± {se} vs exact {exact}", met.ta_ap);
    assert_eq!(met.fallback_hits, 0);
}
