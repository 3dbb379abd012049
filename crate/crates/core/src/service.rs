//! Packet service-time laws on the tick grid.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::stationary_distribution;

const SUM_TOL: f64 = 1e-12;

/// Service-time moments in ticks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceMoments {
    pub mean: f64,
    pub second_moment: f64,
    /// Smallest value with positive probability.
    pub y_inf: u64,
    pub y_max: u64,
}

/// i.i.d. service times drawn from a finite distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct IidService {
    values: Vec<u64>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl IidService {
    /// Builds a distribution; zero-probability atoms are dropped and the
    /// remaining atoms are sorted by value.
    pub fn new(values: Vec<u64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(Error::InvalidService(format!(
                "need matching non-empty value/probability lists, got {} values and {} probabilities",
                values.len(),
                probs.len()
            )));
        }
        check_distribution(&probs, "service probabilities")?;
        let mut atoms: Vec<(u64, f64)> = values.into_iter().zip(probs).filter(|(_, p)| *p > 0.0).collect();
        atoms.sort_by_key(|(v, _)| *v);
        if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidService("service values must be distinct".into()));
        }
        if atoms.iter().all(|(v, _)| *v == 0) {
            return Err(Error::InvalidService("mean service time must be positive".into()));
        }
        let (values, probs): (Vec<u64>, Vec<f64>) = atoms.into_iter().unzip();
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { values, probs, cumulative })
    }

    pub fn constant(ticks: u64) -> Result<Self> {
        Self::new(alloc::vec![ticks], alloc::vec![1.0])
    }

    /// `low` with probability `p_low`, otherwise `high`.
    pub fn two_point(low: u64, high: u64, p_low: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_low) {
            return Err(Error::InvalidService(format!("probability {p_low} outside [0, 1]")));
        }
        if low == high {
            return Self::constant(low);
        }
        Self::new(alloc::vec![low, high], alloc::vec![p_low, 1.0 - p_low])
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Iterates over `(value, probability)` atoms in ascending value order.
    pub fn atoms(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.values.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn moments(&self) -> ServiceMoments {
        moments_of(&self.values, &self.probs)
    }

    /// The most likely value, ties resolved to the smaller value.
    pub fn mode(&self) -> u64 {
        mode_of(&self.values, &self.probs)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        let idx = self.cumulative.partition_point(|c| *c <= u);
        self.values[idx.min(self.values.len() - 1)]
    }
}

/// Service times following a finite Markov chain; state `k` emits `values[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovService {
    values: Vec<u64>,
    transition: Vec<Vec<f64>>,
    initial: Vec<f64>,
}

impl MarkovService {
    pub fn new(values: Vec<u64>, transition: Vec<Vec<f64>>, initial: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n == 0 || transition.len() != n || initial.len() != n {
            return Err(Error::InvalidService(format!(
                "markov service needs {n} values, an {n}x{n} transition matrix and an initial vector of length {n}"
            )));
        }
        for (k, row) in transition.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidService(format!("transition row {k} has {} entries, expected {n}", row.len())));
            }
            check_distribution(row, &format!("transition row {k}"))?;
        }
        check_distribution(&initial, "initial distribution")?;
        let mut sorted = values.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidService("service values must be distinct".into()));
        }
        if values.iter().all(|v| *v == 0) {
            return Err(Error::InvalidService("mean service time must be positive".into()));
        }
        Ok(Self { values, transition, initial })
    }

    /// Two-state chain emitting `low` with stationary probability 0.9 and
    /// `high` with 0.1; `sigma` controls the stickiness of both states.
    pub fn correlated(low: u64, high: u64, sigma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&sigma) {
            return Err(Error::InvalidService(format!("sigma {sigma} outside [0, 1]")));
        }
        let stay_low = (8.0 + sigma) / 9.0;
        Self::new(
            alloc::vec![low, high],
            alloc::vec![alloc::vec![stay_low, 1.0 - stay_low], alloc::vec![1.0 - sigma, sigma]],
            alloc::vec![0.9, 0.1],
        )
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn stationary(&self) -> Result<Vec<f64>> {
        stationary_distribution(&self.transition)
    }

    pub fn moments(&self) -> Result<ServiceMoments> {
        let pi = self.stationary()?;
        let support: Vec<(u64, f64)> = self.values.iter().copied().zip(pi).filter(|(_, p)| *p > 1e-15).collect();
        let (v, p): (Vec<u64>, Vec<f64>) = support.into_iter().unzip();
        Ok(moments_of(&v, &p))
    }

    pub fn mode(&self) -> u64 {
        mode_of(&self.values, &self.initial)
    }

    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        draw_index(&self.initial, rng)
    }

    /// Moves the chain one step from `state` and returns the emitted value
    /// together with the new state.
    pub fn next<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> (u64, usize) {
        let next = draw_index(&self.transition[state], rng);
        (self.values[next], next)
    }
}

/// The packet service-time law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawService", into = "RawService")]
pub enum ServiceModel {
    Iid(IidService),
    Markov(MarkovService),
}

impl ServiceModel {
    pub fn moments(&self) -> Result<ServiceMoments> {
        match self {
            Self::Iid(s) => Ok(s.moments()),
            Self::Markov(s) => s.moments(),
        }
    }

    pub fn as_iid(&self) -> Option<&IidService> {
        match self {
            Self::Iid(s) => Some(s),
            Self::Markov(_) => None,
        }
    }

    pub fn mode(&self) -> u64 {
        match self {
            Self::Iid(s) => s.mode(),
            Self::Markov(s) => s.mode(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Iid(s) => {
                let atoms: Vec<String> = s.atoms().map(|(v, p)| format!("{v}:{p}")).collect();
                format!("iid({})", atoms.join(";"))
            }
            Self::Markov(s) => {
                let rows: Vec<String> = s
                    .transition
                    .iter()
                    .map(|r| r.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";"))
                    .collect();
                let vals: Vec<String> = s.values.iter().map(|v| format!("{v}")).collect();
                format!("markov(values={};P={})", vals.join(";"), rows.join("|"))
            }
        }
    }
}

impl From<IidService> for ServiceModel {
    fn from(s: IidService) -> Self {
        Self::Iid(s)
    }
}

impl From<MarkovService> for ServiceModel {
    fn from(s: MarkovService) -> Self {
        Self::Markov(s)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawService {
    Iid { values: Vec<u64>, probs: Vec<f64> },
    Markov { values: Vec<u64>, transition: Vec<Vec<f64>>, initial: Vec<f64> },
}

impl TryFrom<RawService> for ServiceModel {
    type Error = Error;

    fn try_from(raw: RawService) -> Result<Self> {
        match raw {
            RawService::Iid { values, probs } => IidService::new(values, probs).map(Self::Iid),
            RawService::Markov { values, transition, initial } => {
                MarkovService::new(values, transition, initial).map(Self::Markov)
            }
        }
    }
}

impl From<ServiceModel> for RawService {
    fn from(m: ServiceModel) -> Self {
        match m {
            ServiceModel::Iid(s) => RawService::Iid { values: s.values, probs: s.probs },
            ServiceModel::Markov(s) => RawService::Markov { values: s.values, transition: s.transition, initial: s.initial },
        }
    }
}

fn check_distribution(probs: &[f64], what: &str) -> Result<()> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidService(format!("{what} must be finite and non-negative")));
    }
    let sum: f64 = probs.iter().sum();
    if libm::fabs(sum - 1.0) > SUM_TOL {
        return Err(Error::InvalidService(format!("{what} sum to {sum}, not 1")));
    }
    Ok(())
}

fn moments_of(values: &[u64], probs: &[f64]) -> ServiceMoments {
    let mut mean = 0.0;
    let mut second_moment = 0.0;
    for (v, p) in values.iter().zip(probs) {
        let y = *v as f64;
        mean += p * y;
        second_moment += p * y * y;
    }
    ServiceMoments {
        mean,
        second_moment,
        y_inf: values.iter().copied().min().unwrap_or(0),
        y_max: values.iter().copied().max().unwrap_or(0),
    }
}

fn mode_of(values: &[u64], probs: &[f64]) -> u64 {
    let mut best = (values[0], probs[0]);
    for (v, p) in values.iter().copied().zip(probs.iter().copied()).skip(1) {
        if p > best.1 || (p == best.1 && v < best.0) {
            best = (v, p);
        }
    }
    best.0
}

fn draw_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // Rounding left u above the accumulated mass; take the last reachable state.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}
