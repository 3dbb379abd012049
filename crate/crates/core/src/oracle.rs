//! Exact evaluation of stationary sampling policies and exhaustive search
//! over them, for checking the solver on tiny instances.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::stationary_distribution;
use crate::mdp::{expected_area, StateSpace};
use crate::penalty::PenaltyFunction;

/// Largest number of policies [`brute_force_best`] will enumerate.
pub const SEARCH_GUARD: f64 = 1e6;

/// A deterministic wait (in ticks) for every state of a space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StationaryPolicy {
    waits: Vec<u64>,
}

impl StationaryPolicy {
    pub fn new(space: &StateSpace, waits: Vec<u64>) -> Result<Self> {
        if waits.len() != space.len() {
            return Err(Error::Config(format!("policy has {} entries for {} states", waits.len(), space.len())));
        }
        if let Some(w) = waits.iter().find(|w| !space.menu().values().contains(w)) {
            return Err(Error::Config(format!("wait {w} is not on the menu")));
        }
        Ok(Self { waits })
    }

    pub fn zero(space: &StateSpace) -> Self {
        Self { waits: vec![0; space.len()] }
    }

    pub fn waits(&self) -> &[u64] {
        &self.waits
    }
}

/// Long-run Ta-AP of `policy` on the recurrent class reachable from the
/// reference state: `Σ π_s E[area(s, z_s)] / Σ π_s (z_s + E[Y])`.
pub fn evaluate_policy(space: &StateSpace, policy: &StationaryPolicy, g: &PenaltyFunction) -> Result<f64> {
    let z_idx = menu_indices(space, policy)?;
    evaluate_indexed(space, &z_idx, g, &|s, zi| expected_area(space.state(s), space.menu().values()[zi], g, space.service(), space.grid()))
}

/// States of the recurrent class reached from the reference state under `policy`.
pub fn recurrent_states(space: &StateSpace, policy: &StationaryPolicy) -> Result<Vec<usize>> {
    let z_idx = menu_indices(space, policy)?;
    recurrent_class(space, &z_idx)
}

fn menu_indices(space: &StateSpace, policy: &StationaryPolicy) -> Result<Vec<usize>> {
    if policy.waits.len() != space.len() {
        return Err(Error::Config("policy does not match the state space".into()));
    }
    policy
        .waits
        .iter()
        .map(|w| {
            space
                .menu()
                .values()
                .iter()
                .position(|v| v == w)
                .ok_or_else(|| Error::Config(format!("wait {w} is not on the menu")))
        })
        .collect()
}

fn evaluate_indexed<A>(space: &StateSpace, z_idx: &[usize], g: &PenaltyFunction, area: &A) -> Result<f64>
where
    A: Fn(usize, usize) -> f64,
{
    let _ = g;
    let class = recurrent_class(space, z_idx)?;
    let local: alloc::collections::BTreeMap<usize, usize> = class.iter().enumerate().map(|(k, s)| (*s, k)).collect();
    let probs = space.service().probs();
    let n = class.len();
    let mut p = vec![vec![0.0; n]; n];
    for (row, &s) in class.iter().enumerate() {
        for (yi, prob) in probs.iter().enumerate() {
            let t = space.next(s, z_idx[s], yi);
            p[row][local[&t]] += prob;
        }
    }
    let pi = stationary_distribution(&p)?;
    let grid = space.grid();
    let mean = space.service().moments().mean * grid.tick_length();
    let menu = space.menu().values();
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, &s) in class.iter().enumerate() {
        num += pi[k] * area(s, z_idx[s]);
        den += pi[k] * (grid.to_time(menu[z_idx[s]]) + mean);
    }
    Ok(num / den)
}

/// The unique closed communicating class reachable from the reference state.
fn recurrent_class(space: &StateSpace, z_idx: &[usize]) -> Result<Vec<usize>> {
    let ny = space.service().values().len();
    // reachable set from o
    let n = space.len();
    let mut local = vec![usize::MAX; n];
    let mut reach = Vec::new();
    let mut queue = VecDeque::new();
    let o = space.reference();
    local[o] = 0;
    reach.push(o);
    queue.push_back(o);
    while let Some(s) = queue.pop_front() {
        for yi in 0..ny {
            let t = space.next(s, z_idx[s], yi);
            if local[t] == usize::MAX {
                local[t] = reach.len();
                reach.push(t);
                queue.push_back(t);
            }
        }
    }
    let r = reach.len();
    let succ: Vec<Vec<usize>> = reach
        .iter()
        .map(|&s| {
            let mut v: Vec<usize> = (0..ny).map(|yi| local[space.next(s, z_idx[s], yi)]).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let comp = strongly_connected(&succ);
    let ncomp = comp.iter().copied().max().map_or(0, |c| c + 1);
    let mut closed = vec![true; ncomp];
    for (u, out) in succ.iter().enumerate() {
        for &v in out {
            if comp[u] != comp[v] {
                closed[comp[u]] = false;
            }
        }
    }
    let closed_ids: Vec<usize> = (0..ncomp).filter(|c| closed[*c]).collect();
    if closed_ids.len() != 1 {
        return Err(Error::MultipleRecurrentClasses(closed_ids.len()));
    }
    let mut class: Vec<usize> = (0..r).filter(|u| comp[*u] == closed_ids[0]).map(|u| reach[u]).collect();
    class.sort_unstable();
    Ok(class)
}

// Kosaraju with explicit stacks; returns a component id per vertex.
fn strongly_connected(succ: &[Vec<usize>]) -> Vec<usize> {
    let n = succ.len();
    let mut pred = vec![Vec::new(); n];
    for (u, out) in succ.iter().enumerate() {
        for &v in out {
            pred[v].push(u);
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    for start in 0..n {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut stack = vec![(start, 0usize)];
        while let Some((u, i)) = stack.pop() {
            if i < succ[u].len() {
                stack.push((u, i + 1));
                let v = succ[u][i];
                if !visited[v] {
                    visited[v] = true;
                    stack.push((v, 0));
                }
            } else {
                order.push(u);
            }
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut next_id = 0;
    for &root in order.iter().rev() {
        if comp[root] != usize::MAX {
            continue;
        }
        comp[root] = next_id;
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            for &v in &pred[u] {
                if comp[v] == usize::MAX {
                    comp[v] = next_id;
                    stack.push(v);
                }
            }
        }
        next_id += 1;
    }
    comp
}

/// Outcome of the exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub policy: StationaryPolicy,
    pub value: f64,
    pub evaluated: u64,
    /// Policies skipped because they reach several recurrent classes.
    pub skipped: u64,
}

/// Evaluates every stationary deterministic policy and returns the best.
///
/// Policies are enumerated with the first state as the most significant
/// digit and menu values ascending; the first minimum found wins ties.
pub fn brute_force_best(space: &StateSpace, g: &PenaltyFunction) -> Result<SearchResult> {
    let n = space.len();
    let nz = space.menu().len();
    let count = libm::pow(nz as f64, n as f64);
    if count > SEARCH_GUARD {
        return Err(Error::SearchTooLarge { count, guard: SEARCH_GUARD });
    }
    let areas: Vec<f64> = (0..n)
        .flat_map(|s| {
            space
                .menu()
                .values()
                .iter()
                .map(move |&z| expected_area(space.state(s), z, g, space.service(), space.grid()))
        })
        .collect();
    let area = |s: usize, zi: usize| areas[s * nz + zi];
    let mut digits = vec![0usize; n];
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut evaluated = 0u64;
    let mut skipped = 0u64;
    loop {
        match evaluate_indexed(space, &digits, g, &area) {
            Ok(v) => {
                evaluated += 1;
                if best.as_ref().is_none_or(|(_, b)| v < *b) {
                    best = Some((digits.clone(), v));
                }
            }
            Err(Error::MultipleRecurrentClasses(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
        // odometer: last state is the least significant digit
        let mut pos = n;
        loop {
            if pos == 0 {
                let (digits, value) = best.ok_or_else(|| Error::Domain("no policy could be evaluated".into()))?;
                let menu = space.menu().values();
                let policy = StationaryPolicy { waits: digits.iter().map(|&k| menu[k]).collect() };
                return Ok(SearchResult { policy, value, evaluated, skipped });
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < nz {
                break;
            }
            digits[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::zero_wait_ta_ap_linear;
    use crate::service::IidService;
    use crate::state::{TimeGrid, WaitingMenu};

    fn space(svc: &IidService, menu: &WaitingMenu, m: usize) -> StateSpace {
        StateSpace::enumerate(svc, menu, m, TimeGrid::default()).unwrap()
    }

    #[test]
    fn singleton_zero_policy() {
        let svc = IidService::constant(1).unwrap();
        let sp = space(&svc, &WaitingMenu::zero_only(), 2);
        let v = evaluate_policy(&sp, &StationaryPolicy::zero(&sp), &PenaltyFunction::Linear).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn constant_service_zero_policy() {
        let svc = IidService::constant(2).unwrap();
        let sp = space(&svc, &WaitingMenu::range(1, 1).unwrap(), 2);
        let v = evaluate_policy(&sp, &StationaryPolicy::zero(&sp), &PenaltyFunction::Linear).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
        let best = brute_force_best(&sp, &PenaltyFunction::Linear).unwrap();
        assert!((best.value - 8.0).abs() < 1e-12);
        assert!(best.policy.waits().iter().all(|w| *w == 0));
    }

    #[test]
    fn single_source_zero_wait_is_best() {
        let svc = IidService::new(vec![1, 2], vec![0.5, 0.5]).unwrap();
        let sp = space(&svc, &WaitingMenu::range(1, 1).unwrap(), 1);
        let best = brute_force_best(&sp, &PenaltyFunction::Linear).unwrap();
        assert!(best.policy.waits().iter().all(|w| *w == 0), "{best:?}");
    }

    #[test]
    fn zero_policy_matches_closed_form() {
        for (vals, probs, m) in [
            (vec![0u64, 3], vec![0.5, 0.5], 3usize),
            (vec![0, 3], vec![0.9, 0.1], 3),
            (vec![1, 2], vec![0.5, 0.5], 2),
            (vec![1, 4, 6], vec![0.2, 0.5, 0.3], 2),
        ] {
            let svc = IidService::new(vals, probs).unwrap();
            let sp = space(&svc, &WaitingMenu::zero_only(), m);
            let exact = evaluate_policy(&sp, &StationaryPolicy::zero(&sp), &PenaltyFunction::Linear).unwrap();
            let closed = zero_wait_ta_ap_linear(&svc, m, TimeGrid::default()).unwrap();
            assert!((exact - closed).abs() < 1e-9, "{exact} vs {closed}");
        }
    }

    #[test]
    fn guard_rejects_big_searches() {
        let svc = IidService::new(vec![0, 3], vec![0.5, 0.5]).unwrap();
        let sp = space(&svc, &WaitingMenu::range(4, 1).unwrap(), 3);
        assert!(matches!(brute_force_best(&sp, &PenaltyFunction::Linear), Err(Error::SearchTooLarge { .. })));
    }

    #[test]
    fn policy_validation() {
        let svc = IidService::constant(2).unwrap();
        let sp = space(&svc, &WaitingMenu::range(1, 1).unwrap(), 2);
        assert!(StationaryPolicy::new(&sp, vec![5; sp.len()]).is_err());
        assert!(StationaryPolicy::new(&sp, vec![]).is_err());
    }

    #[test]
    fn scc_on_a_small_graph() {
        // 0 -> 1 -> 2 -> 1, 3 -> 3
        let succ = vec![vec![1], vec![2], vec![1], vec![3]];
        let comp = strongly_connected(&succ);
        assert_eq!(comp[1], comp[2]);
        assert_ne!(comp[0], comp[1]);
        assert_ne!(comp[3], comp[1]);
    }
}
