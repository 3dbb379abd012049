use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::service::IidService;
use crate::state::{SystemState, TimeGrid, WaitingMenu};

/// Default upper bound on the number of enumerated states.
pub const DEFAULT_STATE_CAP: usize = 5_000_000;

/// The recurrent state space of the sampling MDP under MAF scheduling,
/// with a precomputed transition table.
#[derive(Debug, Clone)]
pub struct StateSpace {
    states: Vec<SystemState>,
    index: BTreeMap<Vec<u64>, usize>,
    m: usize,
    menu: WaitingMenu,
    service: IidService,
    grid: TimeGrid,
    reference: usize,
    // next[(s * |menu| + z) * |support| + y]
    next: Vec<u32>,
}

impl StateSpace {
    /// Enumerates every state reachable from the `m`-step images of the
    /// all-zero age vector, closed under all waits and service values.
    pub fn enumerate(service: &IidService, menu: &WaitingMenu, m: usize, grid: TimeGrid) -> Result<Self> {
        Self::enumerate_with_cap(service, menu, m, grid, DEFAULT_STATE_CAP)
    }

    pub fn enumerate_with_cap(
        service: &IidService,
        menu: &WaitingMenu,
        m: usize,
        grid: TimeGrid,
        cap: usize,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::Domain("need at least one source".into()));
        }
        let mut frontier: BTreeSet<SystemState> = BTreeSet::new();
        frontier.insert(SystemState::zeros(m));
        for _ in 0..m {
            let mut images = BTreeSet::new();
            for s in &frontier {
                for &z in menu.values() {
                    for &y in service.values() {
                        images.insert(s.transition(z, y));
                    }
                }
                if images.len() > cap {
                    return Err(Error::StateSpaceTooLarge { cap });
                }
            }
            frontier = images;
        }

        let mut seen: BTreeSet<SystemState> = frontier.clone();
        let mut queue: Vec<SystemState> = frontier.into_iter().collect();
        while let Some(s) = queue.pop() {
            for &z in menu.values() {
                for &y in service.values() {
                    let t = s.transition(z, y);
                    if !seen.contains(&t) {
                        seen.insert(t.clone());
                        queue.push(t);
                        if seen.len() > cap {
                            return Err(Error::StateSpaceTooLarge { cap });
                        }
                    }
                }
            }
        }
        Self::build(seen.into_iter().collect(), service.clone(), menu.clone(), m, grid)
    }

    /// Rebuilds a space from an explicit state list, checking closure.
    pub fn from_states(
        mut states: Vec<SystemState>,
        service: IidService,
        menu: WaitingMenu,
        m: usize,
        grid: TimeGrid,
    ) -> Result<Self> {
        if states.iter().any(|s| s.m() != m) {
            return Err(Error::InvalidState(format!("every state must have {m} ages")));
        }
        states.sort();
        states.dedup();
        Self::build(states, service, menu, m, grid)
    }

    fn build(
        states: Vec<SystemState>,
        service: IidService,
        menu: WaitingMenu,
        m: usize,
        grid: TimeGrid,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidState("empty state space".into()));
        }
        if states.len() > u32::MAX as usize {
            return Err(Error::StateSpaceTooLarge { cap: u32::MAX as usize });
        }
        let index: BTreeMap<Vec<u64>, usize> =
            states.iter().enumerate().map(|(k, s)| (s.ages().to_vec(), k)).collect();
        let mut next = Vec::with_capacity(states.len() * menu.len() * service.values().len());
        for s in &states {
            for &z in menu.values() {
                for &y in service.values() {
                    let t = s.transition(z, y);
                    let k = index
                        .get(t.ages())
                        .ok_or_else(|| Error::InvalidState(format!("state space is not closed: {s} -> {t}")))?;
                    next.push(*k as u32);
                }
            }
        }
        // States are sorted lexicographically, so the first minimum wins ties.
        let reference = states
            .iter()
            .enumerate()
            .min_by_key(|(k, s)| (s.age_sum(), *k))
            .map(|(k, _)| k)
            .unwrap_or(0);
        Ok(Self { states, index, m, menu, service, grid, reference, next })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[SystemState] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &SystemState {
        &self.states[k]
    }

    pub fn index_of(&self, ages: &[u64]) -> Option<usize> {
        self.index.get(ages).copied()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn menu(&self) -> &WaitingMenu {
        &self.menu
    }

    pub fn service(&self) -> &IidService {
        &self.service
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// Index of the reference state: minimal age sum, ties lexicographic.
    pub fn reference(&self) -> usize {
        self.reference
    }

    /// Index of the successor of state `s` under menu entry `z_idx` and
    /// service atom `y_idx`.
    #[inline]
    pub fn next(&self, s: usize, z_idx: usize, y_idx: usize) -> usize {
        let ny = self.service.values().len();
        self.next[(s * self.menu.len() + z_idx) * ny + y_idx] as usize
    }

    #[inline]
    pub(crate) fn successors(&self, s: usize, z_idx: usize) -> &[u32] {
        let ny = self.service.values().len();
        let start = (s * self.menu.len() + z_idx) * ny;
        &self.next[start..start + ny]
    }
}
