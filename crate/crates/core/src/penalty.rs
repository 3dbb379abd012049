//! Age-penalty functions.
//!
//! A penalty `g` maps an age to a cost and must be non-decreasing on
//! `[0, ∞)`. Built-in kinds have exact antiderivatives; custom point
//! evaluators fall back to adaptive Simpson quadrature.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;

/// Absolute tolerance used when integrating custom penalties.
pub const CUSTOM_QUADRATURE_TOL: f64 = 1e-9;

type PointFn = dyn Fn(f64) -> f64 + Send + Sync;

/// A user-supplied point evaluator.
#[derive(Clone)]
pub struct CustomPenalty {
    name: String,
    f: Arc<PointFn>,
}

impl CustomPenalty {
    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for CustomPenalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPenalty").field("name", &self.name).finish_non_exhaustive()
    }
}

impl PartialEq for CustomPenalty {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.f, &other.f)
    }
}

/// The non-decreasing age-penalty function `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyFunction {
    /// `g(x) = x`
    Linear,
    /// `g(x) = e^{a x} - b`
    Exponential { a: f64, b: f64 },
    /// `g(x) = x^p`
    Power { p: f64 },
    /// `g(x) = ⌊x⌋`
    Stair,
    /// `g(x) = 1(x > q)`
    Indicator { q: f64 },
    #[serde(skip)]
    Custom(CustomPenalty),
}

impl PenaltyFunction {
    pub fn exponential(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a >= 0.0 && b.is_finite()) {
            return Err(Error::Domain(format!("exponential penalty needs a >= 0 and finite b, got a={a} b={b}")));
        }
        Ok(Self::Exponential { a, b })
    }

    pub fn power(p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::Domain(format!("power penalty needs p >= 0, got {p}")));
        }
        Ok(Self::Power { p })
    }

    pub fn indicator(q: f64) -> Result<Self> {
        if !q.is_finite() {
            return Err(Error::Domain(format!("indicator threshold must be finite, got {q}")));
        }
        Ok(Self::Indicator { q })
    }

    /// Wraps an arbitrary point evaluator.
    ///
    /// Monotonicity is spot-checked on a grid over `[0, 100]`; a violation is
    /// logged as a warning and the function is accepted anyway.
    pub fn custom<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let name = name.into();
        let mut prev = f(0.0);
        for k in 1..=400 {
            let x = k as f64 * 0.25;
            let v = f(x);
            if v < prev {
                log::warn!("custom penalty '{name}' decreases near x={x}; results assume a non-decreasing g");
                break;
            }
            prev = v;
        }
        Self::Custom(CustomPenalty { name, f: Arc::new(f) })
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Self::Linear)
    }

    /// Evaluates `g(x)` for `x >= 0`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("penalty argument must be non-negative, got {x}")));
        }
        Ok(self.at(x))
    }

    /// `∫_a^b g(τ) dτ` for `0 <= a <= b`.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        if !(a >= 0.0) || !(b >= a) {
            return Err(Error::Domain(format!("integration bounds must satisfy 0 <= a <= b, got [{a}, {b}]")));
        }
        Ok(self.area(a, b))
    }

    /// Unchecked point evaluation.
    pub(crate) fn at(&self, x: f64) -> f64 {
        match self {
            Self::Linear => x,
            Self::Exponential { a, b } => libm::exp(a * x) - b,
            Self::Power { p } => {
                if *p == 0.0 {
                    1.0
                } else {
                    libm::pow(x, *p)
                }
            }
            Self::Stair => libm::floor(x),
            Self::Indicator { q } => {
                if x > *q {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Custom(c) => (c.f)(x),
        }
    }

    /// Unchecked interval integral.
    pub(crate) fn area(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        match self {
            Self::Linear => 0.5 * (hi - lo) * (hi + lo),
            Self::Exponential { a, b } => {
                let w = hi - lo;
                if *a == 0.0 {
                    (1.0 - b) * w
                } else {
                    libm::exp(a * lo) * libm::expm1(a * w) / a - b * w
                }
            }
            Self::Power { p } => {
                let q = p + 1.0;
                (libm::pow(hi, q) - libm::pow(lo, q)) / q
            }
            Self::Stair => stair_antiderivative(hi) - stair_antiderivative(lo),
            Self::Indicator { q } => (hi - q).max(0.0) - (lo - q).max(0.0),
            Self::Custom(c) => adaptive_simpson(&|x| (c.f)(x), lo, hi, CUSTOM_QUADRATURE_TOL),
        }
    }

    /// `∫_a^b g` by adaptive quadrature regardless of kind.
    pub fn integral_by_quadrature(&self, a: f64, b: f64, tol: f64) -> Result<f64> {
        if !(a >= 0.0) || !(b >= a) {
            return Err(Error::Domain(format!("integration bounds must satisfy 0 <= a <= b, got [{a}, {b}]")));
        }
        let mut cuts = alloc::vec![a];
        match self {
            Self::Stair => {
                let mut k = libm::floor(a) + 1.0;
                while k < b {
                    cuts.push(k);
                    k += 1.0;
                }
            }
            Self::Indicator { q } if *q > a && *q < b => cuts.push(*q),
            _ => {}
        }
        cuts.push(b);
        Ok(cuts
            .windows(2)
            .map(|w| {
                let (lo, hi) = (w[0].next_up(), w[1].next_down());
                if lo > hi {
                    return self.at(w[0]) * (w[1] - w[0]);
                }
                adaptive_simpson(&|x| self.at(x.clamp(lo, hi)), w[0], w[1], tol)
            })
            .sum())
    }

    /// Short human-readable label, also used in CSV output.
    pub fn label(&self) -> String {
        match self {
            Self::Linear => "linear".into(),
            Self::Exponential { a, b } => format!("exp(a={a};b={b})"),
            Self::Power { p } => format!("power(p={p})"),
            Self::Stair => "stair".into(),
            Self::Indicator { q } => format!("indicator(q={q})"),
            Self::Custom(c) => format!("custom({})", c.name),
        }
    }
}

// ∫_0^x ⌊τ⌋ dτ = n(n-1)/2 + n(x-n) with n = ⌊x⌋.
fn stair_antiderivative(x: f64) -> f64 {
    let n = libm::floor(x);
    0.5 * n * (n - 1.0) + n * (x - n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn builtins() -> Vec<PenaltyFunction> {
        vec![
            PenaltyFunction::Linear,
            PenaltyFunction::exponential(0.1, 1.0).unwrap(),
            PenaltyFunction::exponential(0.0, 0.5).unwrap(),
            PenaltyFunction::power(0.1).unwrap(),
            PenaltyFunction::power(2.0).unwrap(),
            PenaltyFunction::Stair,
            PenaltyFunction::indicator(2.5).unwrap(),
        ]
    }

    #[test]
    fn point_values() {
        assert_eq!(PenaltyFunction::Linear.eval(3.0).unwrap(), 3.0);
        assert_eq!(PenaltyFunction::exponential(0.1, 1.0).unwrap().eval(0.0).unwrap(), 0.0);
        assert_eq!(PenaltyFunction::Stair.eval(2.7).unwrap(), 2.0);
        assert_eq!(PenaltyFunction::indicator(1.0).unwrap().eval(1.0).unwrap(), 0.0);
        assert_eq!(PenaltyFunction::indicator(1.0).unwrap().eval(1.5).unwrap(), 1.0);
        assert_eq!(PenaltyFunction::power(0.0).unwrap().eval(0.0).unwrap(), 1.0);
    }

    #[test]
    fn negative_argument_is_a_domain_error() {
        assert!(matches!(PenaltyFunction::Linear.eval(-0.1), Err(Error::Domain(_))));
        assert!(matches!(PenaltyFunction::Linear.eval(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn integral_values() {
        assert_eq!(PenaltyFunction::Linear.integral(2.0, 3.0).unwrap(), 2.5);
        assert_eq!(PenaltyFunction::Stair.integral(0.0, 2.5).unwrap(), 2.0);
        for g in builtins() {
            assert_eq!(g.integral(1.7, 1.7).unwrap(), 0.0);
        }
        assert!(PenaltyFunction::Linear.integral(3.0, 2.0).is_err());
        assert!(PenaltyFunction::Linear.integral(-1.0, 2.0).is_err());
    }

    #[test]
    fn constructor_validation() {
        assert!(PenaltyFunction::exponential(-0.1, 1.0).is_err());
        assert!(PenaltyFunction::power(-1.0).is_err());
        assert!(PenaltyFunction::indicator(f64::INFINITY).is_err());
    }

    #[test]
    fn custom_uses_quadrature() {
        let g = PenaltyFunction::custom("cube", |x| x * x * x);
        let v = g.integral(1.0, 2.0).unwrap();
        assert!((v - 3.75).abs() < 1e-9);
        assert_eq!(g.eval(2.0).unwrap(), 8.0);
    }

    #[test]
    fn serde_tags() {
        let g = PenaltyFunction::exponential(0.1, 1.0).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"kind":"exponential","a":0.1,"b":1.0}"#);
        let back: PenaltyFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
    }

    proptest! {
        #[test]
        fn monotone(x in 0.0f64..60.0, d in 0.0f64..20.0) {
            for g in builtins() {
                prop_assert!(g.eval(x).unwrap() <= g.eval(x + d).unwrap());
            }
        }

        #[test]
        fn additive(a in 0.0f64..30.0, d1 in 0.0f64..10.0, d2 in 0.0f64..10.0) {
            let (b, c) = (a + d1, a + d1 + d2);
            for g in builtins() {
                let whole = g.integral(a, c).unwrap();
                let split = g.integral(a, b).unwrap() + g.integral(b, c).unwrap();
                prop_assert!((whole - split).abs() <= 1e-9 * (1.0 + whole.abs()), "{:?}", g);
            }
        }

        #[test]
        fn closed_form_matches_quadrature(a in 0.0f64..20.0, w in 0.0f64..10.0) {
            for g in builtins() {
                let exact = g.integral(a, a + w).unwrap();
                let quad = g.integral_by_quadrature(a, a + w, 1e-10).unwrap();
                prop_assert!((exact - quad).abs() <= 1e-7, "{:?}: {} vs {}", g, exact, quad);
            }
        }
    }
}
