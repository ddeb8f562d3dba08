//! Binomial tails and number-of-false-alarms arithmetic.
//!
//! Everything here works with base-10 logarithms. An NFA of `1e-50` is
//! routine for a clean alignment, so raw probabilities are only materialized
//! for display or for comparison against the exact rational path used in
//! tests.

use std::cmp::Ordering;
use std::f64::consts::{LN_10, LN_2};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("binomial tail threshold k={k} exceeds trial count n={n}")]
    ThresholdExceedsTrials { n: u64, k: u64 },
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("number of tests must be positive, got {0}")]
    NonPositiveTests(f64),
}

/// Base-10 logarithm of a number of false alarms.
///
/// Ordering follows the underlying NFA. The wrapped value is never NaN for
/// values produced by the detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogNfa(f64);

impl LogNfa {
    pub fn new(log10_nfa: f64) -> Self {
        debug_assert!(!log10_nfa.is_nan());
        LogNfa(log10_nfa)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The raw NFA. Underflows to zero below roughly `1e-308`.
    pub fn nfa(self) -> f64 {
        10f64.powf(self.0)
    }

    pub fn is_meaningful(self, epsilon: f64) -> bool {
        is_meaningful(self, epsilon)
    }
}

impl Eq for LogNfa {}

impl PartialOrd for LogNfa {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LogNfa {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for LogNfa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "log10(NFA)={:.3}", self.0)
    }
}

/// Parameters of the binomial tail `B(n, k, p) = P[X >= k]`, `X ~ Bin(n, p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinTailParams {
    n: u64,
    k: u64,
    p: f64,
}

impl BinTailParams {
    pub fn new(n: u64, k: u64, p: f64) -> Result<Self, StatsError> {
        if k > n {
            return Err(StatsError::ThresholdExceedsTrials { n, k });
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(StatsError::ProbabilityOutOfRange(p));
        }
        Ok(BinTailParams { n, k, p })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// Relative size below which a series term no longer changes the sum.
const SERIES_CUTOFF: f64 = 1e-18;

/// Natural log of the binomial tail.
///
/// The sum is anchored on its largest term (the mode, or `k` when the mode
/// lies below `k`) and the remaining terms are accumulated as ratios to it,
/// so nothing underflows even for `k` in the thousands.
pub fn ln_binom_tail(params: BinTailParams) -> f64 {
    let BinTailParams { n, k, p } = params;
    if k == 0 {
        return 0.0;
    }
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return 0.0;
    }

    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let mode = (((n + 1) as f64) * p).floor().min(n as f64) as u64;
    let anchor = mode.max(k);
    let ln_anchor =
        ln_binomial(n, anchor) + anchor as f64 * ln_p + (n - anchor) as f64 * ln_q;

    let odds = p / (1.0 - p);
    let mut sum = 1.0;

    let mut term = 1.0;
    for j in anchor..n {
        term *= (n - j) as f64 / (j + 1) as f64 * odds;
        sum += term;
        if term < sum * SERIES_CUTOFF {
            break;
        }
    }

    let mut term = 1.0;
    let mut j = anchor;
    while j > k {
        term *= j as f64 / (n - j + 1) as f64 / odds;
        sum += term;
        if term < sum * SERIES_CUTOFF {
            break;
        }
        j -= 1;
    }

    (ln_anchor + sum.ln()).min(0.0)
}

pub fn log10_binom_tail(params: BinTailParams) -> f64 {
    ln_binom_tail(params) / LN_10
}

pub fn binom_tail(params: BinTailParams) -> f64 {
    ln_binom_tail(params).exp()
}

/// Exact tail computed in rational arithmetic, then rounded once to `f64`.
///
/// `p` is taken as the exact dyadic rational it represents. Cost grows
/// quickly with `n`; intended for cross-checking with `n <= 30` or so.
pub fn binom_tail_exact(params: BinTailParams) -> f64 {
    let BinTailParams { n, k, p } = params;
    let p = BigRational::from_float(p).expect("finite probability");
    let q = BigRational::one() - &p;
    let mut total = BigRational::zero();
    let mut coeff = BigInt::one();
    for j in 0..=n {
        if j >= k {
            let term = BigRational::from_integer(coeff.clone())
                * pow(&p, j)
                * pow(&q, n - j);
            total += term;
        }
        coeff = coeff * BigInt::from(n - j) / BigInt::from(j + 1);
    }
    total.to_f64().unwrap_or(0.0)
}

fn pow(base: &BigRational, exp: u64) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..exp {
        acc *= base;
    }
    acc
}

/// `ln P[at least one of n draws succeeds] = ln(1 - (1-p)^n)`.
///
/// `n` may be fractional: refined window counts are rescaled by clipped
/// band areas. For integer `n` this equals `ln_binom_tail(n, 1, p)`.
pub fn ln_at_least_one(n: f64, p: f64) -> f64 {
    if n <= 0.0 || p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let ln_none = n * (-p).ln_1p();
    // ln(1 - e^x) for x < 0
    if ln_none > -LN_2 {
        (-ln_none.exp_m1()).ln()
    } else {
        (-ln_none.exp()).ln_1p()
    }
}

/// `log10(tests) + tail_log10`.
pub fn nfa_from(tests: f64, tail_log10: f64) -> Result<LogNfa, StatsError> {
    if !(tests > 0.0) || !tests.is_finite() {
        return Err(StatsError::NonPositiveTests(tests));
    }
    Ok(LogNfa::new(tests.log10() + tail_log10))
}

/// `NFA < epsilon`, evaluated in the log domain.
pub fn is_meaningful(nfa: LogNfa, epsilon: f64) -> bool {
    nfa.value() < epsilon.log10()
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn tail_monotone_in_k_and_p(n in 1u64..60, p in 0.0f64..1.0, dp in 0.0f64..0.2) {
            let p2 = (p + dp).min(1.0);
            let mut prev = f64::INFINITY;
            for k in 0..=n {
                let t = ln_binom_tail(BinTailParams::new(n, k, p).unwrap());
                prop_assert!(t <= prev + 1e-12);
                let t2 = ln_binom_tail(BinTailParams::new(n, k, p2).unwrap());
                prop_assert!(t2 >= t - 1e-12);
                prev = t;
            }
        }

        #[test]
        fn nfa_monotone(t1 in 1.0f64..1e9, t2 in 1.0f64..1e9, a in -50.0f64..0.0, b in -50.0f64..0.0) {
            let x = nfa_from(t1, a).unwrap();
            let y = nfa_from(t2, b).unwrap();
            if t1 <= t2 && a <= b {
                prop_assert!(x <= y);
            }
            if x < y {
                prop_assert!(!(is_meaningful(y, 1.0) && !is_meaningful(x, 1.0)));
            }
        }
    }
}
