use aoisched_core::mdp::zero_wait_ta_ap_linear;
use aoisched_core::policies::{SamplerSpec, SchedulerSpec};
use aoisched_core::service::{IidService, MarkovService, ServiceModel};
use aoisched_core::sim::{simulate, simulate_observed, SimConfig};
use aoisched_core::{PenaltyFunction, TimeGrid};

fn two_point(p: f64) -> IidService {
    IidService::two_point(0, 3, p).unwrap()
}

#[test]
fn ages_restart_at_the_service_time() {
    let cfg = SimConfig::new(3, two_point(0.6).into(), PenaltyFunction::Linear)
        .with_sampler(SamplerSpec::WaterFilling { threshold: 1.0 })
        .with_horizon(5_000)
        .with_seed(3);
    let mut prev: Option<Vec<f64>> = None;
    simulate_observed(&cfg, |d| {
        let stage = d.wait + d.service;
        if let Some(p) = &prev {
            for (l, prev_age) in p.iter().enumerate() {
                assert!((d.ages_before[l] - (prev_age + stage)).abs() < 1e-9);
                let expect = if l == d.source { d.service } else { d.ages_before[l] };
                assert_eq!(d.ages_after[l], expect);
            }
            // MAF serves an oldest source
            let oldest = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(p[d.source], oldest);
        }
        prev = Some(d.ages_after.to_vec());
    })
    .unwrap();
}

#[test]
fn elapsed_time_is_waits_plus_services() {
    let cfg = SimConfig::new(2, two_point(0.5).into(), PenaltyFunction::Linear)
        .with_sampler(SamplerSpec::ConstantWait { wait: 0.7 })
        .with_horizon(10_000)
        .with_seed(9);
    let mut total = 0.0;
    let met = simulate_observed(&cfg, |d| {
        if d.counted {
            total += d.wait + d.service;
        }
    })
    .unwrap();
    assert!((met.elapsed - total).abs() < 1e-6 * total);
    assert_eq!(met.deliveries, 10_000 - 20);
}

#[test]
fn reproducible_for_a_seed() {
    let cfg = SimConfig::new(3, two_point(0.7).into(), PenaltyFunction::exponential(0.1, 1.0).unwrap())
        .with_scheduler(SchedulerSpec::Rand)
        .with_sampler(SamplerSpec::Threshold { threshold: 1.0 })
        .with_horizon(20_000)
        .with_seed(1234);
    assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
}

#[test]
fn zero_wait_matches_closed_form() {
    let svc = two_point(0.5);
    let exact = zero_wait_ta_ap_linear(&svc, 3, TimeGrid::default()).unwrap();
    assert_eq!(exact, 13.5);
    let met = simulate(&SimConfig::new(3, svc.into(), PenaltyFunction::Linear).with_horizon(1_000_000).with_seed(21)).unwrap();
    assert!((met.ta_ap / exact - 1.0).abs() <= 0.005, "{}", met.ta_ap);
}

#[test]
fn tick_length_scales_time() {
    let svc = two_point(0.5);
    let base = SimConfig::new(3, svc.into(), PenaltyFunction::Linear).with_horizon(50_000).with_seed(2);
    let a = simulate(&base).unwrap();
    let b = simulate(&base.clone().with_grid(TimeGrid::new(0.5).unwrap())).unwrap();
    assert!((b.ta_ap - 0.5 * a.ta_ap).abs() < 1e-9 * a.ta_ap);
}

#[test]
fn markov_service_visits_states_at_the_stationary_rate() {
    let chain = MarkovService::correlated(1, 30, 0.5).unwrap();
    let lambda2 = chain.transition()[0][0] + chain.transition()[1][1] - 1.0;
    let n = 1_000_000u64;
    let cfg = SimConfig::new(2, ServiceModel::Markov(chain), PenaltyFunction::Linear).with_horizon(n).with_seed(8);
    let mut ones = 0u64;
    let mut total = 0u64;
    simulate_observed(&cfg, |d| {
        total += 1;
        if d.service == 1.0 {
            ones += 1;
        }
    })
    .unwrap();
    let freq = ones as f64 / total as f64;
    let var = 0.9 * 0.1 * (1.0 + lambda2) / (1.0 - lambda2) / total as f64;
    assert!((freq - 0.9).abs() <= 3.0 * var.sqrt(), "freq {freq}");
}

#[test]
fn scheduler_choice_does_not_change_service_draws() {
    let svc: ServiceModel = two_point(0.6).into();
    let draws = |s| {
        let cfg = SimConfig::new(3, svc.clone(), PenaltyFunction::Linear).with_scheduler(s).with_horizon(2_000).with_seed(4);
        let mut v = Vec::new();
        simulate_observed(&cfg, |d| v.push(d.service)).unwrap();
        v
    };
    assert_eq!(draws(SchedulerSpec::Maf), draws(SchedulerSpec::Rand));
}

#[test]
fn maf_beats_rand_with_zero_wait() {
    let svc: ServiceModel = two_point(0.5).into();
    let run = |s| {
        simulate(&SimConfig::new(3, svc.clone(), PenaltyFunction::Linear).with_scheduler(s).with_horizon(200_000).with_seed(6))
            .unwrap()
    };
    let (maf, rand) = (run(SchedulerSpec::Maf), run(SchedulerSpec::Rand));
    assert!(maf.ta_ap < rand.ta_ap);
    assert!(maf.ta_apd < rand.ta_apd);
}
