//! The tick grid, the waiting menu, and the sorted-age system state.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds per tick. Service and waiting times live on this grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TimeGrid {
    tick_length: f64,
}

impl TimeGrid {
    pub fn new(tick_length: f64) -> Result<Self> {
        if !(tick_length.is_finite() && tick_length > 0.0) {
            return Err(Error::Domain(format!("tick length must be positive, got {tick_length}")));
        }
        Ok(Self { tick_length })
    }

    pub fn tick_length(&self) -> f64 {
        self.tick_length
    }

    pub fn to_time(&self, ticks: u64) -> f64 {
        ticks as f64 * self.tick_length
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { tick_length: 1.0 }
    }
}

impl TryFrom<f64> for TimeGrid {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TimeGrid> for f64 {
    fn from(g: TimeGrid) -> f64 {
        g.tick_length
    }
}

/// The finite set of admissible waiting times, in ticks. Always contains 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct WaitingMenu {
    values: Vec<u64>,
}

impl WaitingMenu {
    /// Sorts and deduplicates `values`; fails unless 0 is present.
    pub fn new(mut values: Vec<u64>) -> Result<Self> {
        values.sort_unstable();
        values.dedup();
        if values.first() != Some(&0) {
            return Err(Error::InvalidMenu("the waiting menu must contain 0".into()));
        }
        Ok(Self { values })
    }

    /// `{0, step, 2·step, …}` up to and including `max` when it is a multiple.
    pub fn range(max: u64, step: u64) -> Result<Self> {
        if step == 0 {
            return Err(Error::InvalidMenu("menu step must be positive".into()));
        }
        Self::new((0..=max).step_by(step as usize).collect())
    }

    pub fn zero_only() -> Self {
        Self { values: alloc::vec![0] }
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> u64 {
        *self.values.last().unwrap_or(&0)
    }
}

impl TryFrom<Vec<u64>> for WaitingMenu {
    type Error = Error;
    fn try_from(v: Vec<u64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WaitingMenu> for Vec<u64> {
    fn from(m: WaitingMenu) -> Self {
        m.values
    }
}

/// Ages of all sources sorted non-increasingly, in ticks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct SystemState {
    ages: Vec<u64>,
}

impl SystemState {
    /// Requires `ages` to already be sorted non-increasingly.
    pub fn new(ages: Vec<u64>) -> Result<Self> {
        if ages.is_empty() {
            return Err(Error::InvalidState("a state needs at least one source".into()));
        }
        if ages.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidState(format!("ages {ages:?} are not sorted non-increasingly")));
        }
        Ok(Self { ages })
    }

    pub fn from_unsorted(mut ages: Vec<u64>) -> Result<Self> {
        ages.sort_unstable_by(|a, b| b.cmp(a));
        Self::new(ages)
    }

    pub fn zeros(m: usize) -> Self {
        Self { ages: alloc::vec![0; m] }
    }

    pub fn ages(&self) -> &[u64] {
        &self.ages
    }

    pub fn m(&self) -> usize {
        self.ages.len()
    }

    /// `A_s`, the sum of all ages.
    pub fn age_sum(&self) -> u64 {
        self.ages.iter().sum()
    }

    /// Next state after waiting `z` and a service time `y` under MAF: the
    /// oldest source is served and restarts at age `y`, every other age
    /// grows by `z + y`.
    pub fn transition(&self, z: u64, y: u64) -> SystemState {
        let mut ages = Vec::with_capacity(self.ages.len());
        ages.extend(self.ages[1..].iter().map(|a| a + z + y));
        ages.push(y);
        SystemState { ages }
    }

    /// Componentwise `self <= other`.
    pub fn dominated_by(&self, other: &SystemState) -> bool {
        self.ages.len() == other.ages.len() && self.ages.iter().zip(&other.ages).all(|(a, b)| a <= b)
    }
}

impl TryFrom<Vec<u64>> for SystemState {
    type Error = Error;
    fn try_from(v: Vec<u64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SystemState> for Vec<u64> {
    fn from(s: SystemState) -> Self {
        s.ages
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, a) in self.ages.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn st(a: &[u64]) -> SystemState {
        SystemState::new(a.to_vec()).unwrap()
    }

    #[test]
    fn transitions() {
        assert_eq!(st(&[5, 3, 1]).transition(2, 4), st(&[9, 7, 4]));
        assert_eq!(st(&[17]).transition(3, 2), st(&[2]));
        assert_eq!(st(&[4, 2]).transition(0, 1), st(&[3, 1]));
    }

    #[test]
    fn state_validation() {
        assert!(SystemState::new(vec![1, 3]).is_err());
        assert!(SystemState::new(vec![]).is_err());
        assert_eq!(SystemState::from_unsorted(vec![1, 3, 2]).unwrap(), st(&[3, 2, 1]));
        assert_eq!(st(&[5, 3, 1]).age_sum(), 9);
        assert_eq!(format!("{}", st(&[5, 3, 1])), "(5,3,1)");
    }

    #[test]
    fn menu_needs_zero() {
        assert!(WaitingMenu::new(vec![1, 2]).is_err());
        assert_eq!(WaitingMenu::new(vec![2, 0, 2, 1]).unwrap().values(), &[0, 1, 2]);
        assert_eq!(WaitingMenu::range(6, 2).unwrap().values(), &[0, 2, 4, 6]);
        assert!(WaitingMenu::range(6, 0).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0).is_err());
        assert!(TimeGrid::new(-1.0).is_err());
        assert_eq!(TimeGrid::new(0.5).unwrap().to_time(3), 1.5);
    }

    proptest! {
        #[test]
        fn transition_preserves_order(ages in proptest::collection::vec(0u64..50, 1..6), z in 0u64..10, y in 0u64..10) {
            let s = SystemState::from_unsorted(ages).unwrap();
            let next = s.transition(z, y);
            prop_assert_eq!(next.m(), s.m());
            prop_assert!(SystemState::new(next.ages().to_vec()).is_ok());
            prop_assert_eq!(*next.ages().last().unwrap(), y);
        }
    }
}
