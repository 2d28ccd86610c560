//! One-sample Wilcoxon signed-rank test on paired differences.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::util::rng;

/// Largest nonzero sample size tested by exact enumeration.
pub const EXACT_MAX_N: usize = 20;
pub const PERMUTATION_RESAMPLES: u32 = 100_000;
const PERMUTATION_SEED: u64 = 0x57_11c0_c0de;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// Differences tend to be positive.
    #[default]
    Greater,
    Less,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub n_nonzero: usize,
    pub w_plus: f64,
    pub p_value: f64,
    pub alternative: Alternative,
    pub method: Method,
}

/// Midranks of `values` (1-based), ties sharing the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn p_from_tails(ge: f64, le: f64, alternative: Alternative) -> f64 {
    match alternative {
        Alternative::Greater => ge,
        Alternative::Less => le,
        Alternative::TwoSided => (2.0 * ge.min(le)).min(1.0),
    }
}

/// Zeros are dropped; tied magnitudes get midranks. Up to
/// [`EXACT_MAX_N`] nonzero differences the null distribution is counted
/// exactly over all sign assignments, beyond that it is sampled.
pub fn wilcoxon_signed_rank(diffs: &[f64], alternative: Alternative) -> Result<WilcoxonResult, AnalyticsError> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(AnalyticsError::NonFinite);
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return Err(AnalyticsError::AllZeroDiffs);
    }
    let mags: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&mags);
    let w_plus: f64 = nonzero.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    if n <= EXACT_MAX_N {
        // Midranks are multiples of 1/2, so doubled ranks are integers and
        // the null distribution of 2 W+ is a subset-sum count.
        let doubled = ranks.iter().map(|r| (r * 2.0 + 0.5) as usize);
        let total = n * (n + 1);
        let mut counts = vec![0u64; total + 1];
        counts[0] = 1;
        let mut reach = 0;
        for r in doubled {
            reach += r;
            for s in (r..=reach).rev() {
                counts[s] += counts[s - r];
            }
        }
        let observed = (w_plus * 2.0 + 0.5) as usize;
        let all = (1u64 << n) as f64;
        let ge = counts[observed..].iter().sum::<u64>() as f64 / all;
        let le = counts[..=observed].iter().sum::<u64>() as f64 / all;
        return Ok(WilcoxonResult { n_nonzero: n, w_plus, p_value: p_from_tails(ge, le, alternative), alternative, method: Method::Exact });
    }

    let mut r = rng(PERMUTATION_SEED, "wilcoxon");
    let (mut ge, mut le) = (0u64, 0u64);
    let eps = 1e-9;
    for _ in 0..PERMUTATION_RESAMPLES {
        let w: f64 = ranks.iter().filter(|_| r.random::<bool>()).sum();
        if w >= w_plus - eps {
            ge += 1;
        }
        if w <= w_plus + eps {
            le += 1;
        }
    }
    let b = f64::from(PERMUTATION_RESAMPLES) + 1.0;
    let (ge, le) = ((ge as f64 + 1.0) / b, (le as f64 + 1.0) / b);
    Ok(WilcoxonResult { n_nonzero: n, w_plus, p_value: p_from_tails(ge, le, alternative), alternative, method: Method::Permutation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: O(n^2) midranks and explicit enumeration of every
    /// sign pattern.
    fn oracle(diffs: &[f64], alternative: Alternative) -> (f64, f64) {
        let d: Vec<f64> = diffs.iter().copied().filter(|x| *x != 0.0).collect();
        let n = d.len();
        let rank = |i: usize| {
            let a = d[i].abs();
            let less = d.iter().filter(|x| x.abs() < a).count() as f64;
            let equal = d.iter().filter(|x| x.abs() == a).count() as f64;
            less + (equal + 1.0) / 2.0
        };
        let ranks: Vec<f64> = (0..n).map(rank).collect();
        let observed: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
        let (mut ge, mut le) = (0u32, 0u32);
        for mask in 0u32..(1 << n) {
            let w: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            ge += u32::from(w >= observed);
            le += u32::from(w <= observed);
        }
        let all = f64::from(1u32 << n);
        (observed, p_from_tails(f64::from(ge) / all, f64::from(le) / all, alternative))
    }

    #[test]
    fn three_positive() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], Alternative::Greater).unwrap();
        assert_eq!(r.w_plus, 6.0);
        assert!((r.p_value - 0.125).abs() < 1e-15);
        assert_eq!(r.method, Method::Exact);
    }

    #[test]
    fn three_negative() {
        let r = wilcoxon_signed_rank(&[-1.0, -2.0, -3.0], Alternative::Greater).unwrap();
        assert_eq!(r.w_plus, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn zeros() {
        assert_eq!(wilcoxon_signed_rank(&[0.0, 0.0], Alternative::Greater), Err(AnalyticsError::AllZeroDiffs));
        assert_eq!(wilcoxon_signed_rank(&[0.0, 1.0], Alternative::Greater).unwrap().n_nonzero, 1);
    }

    #[test]
    fn midrank_ties() {
        assert_eq!(midranks(&[2.0, 1.0, 2.0, 3.0]), vec![2.5, 1.0, 2.5, 4.0]);
    }

    /// The statistic depends only on the multiset of differences, so every
    /// multiset of length 1..=8 over -3..=3 covers all vectors up to order.
    #[test]
    fn exhaustive_against_enumeration() {
        fn walk(prefix: &mut Vec<f64>, min: i32, checked: &mut usize) {
            if !prefix.is_empty() && prefix.iter().any(|d| *d != 0.0) {
                for alt in [Alternative::Greater, Alternative::Less, Alternative::TwoSided] {
                    let got = wilcoxon_signed_rank(prefix, alt).unwrap();
                    let (w, p) = oracle(prefix, alt);
                    assert_eq!(got.w_plus, w, "{prefix:?}");
                    assert!((got.p_value - p).abs() <= 1e-12, "{prefix:?} {alt:?}: {} vs {p}", got.p_value);
                }
                *checked += 1;
            }
            if prefix.len() == 8 {
                return;
            }
            for v in min..=3 {
                prefix.push(f64::from(v));
                walk(prefix, v, checked);
                prefix.pop();
            }
        }
        let mut checked = 0;
        walk(&mut Vec::new(), -3, &mut checked);
        assert!(checked > 6000);
    }

    #[test]
    fn large_n_uses_permutation() {
        let diffs: Vec<f64> = (1..=25).map(|i| if i % 5 == 0 { -f64::from(i) } else { f64::from(i) }).collect();
        let r = wilcoxon_signed_rank(&diffs, Alternative::Greater).unwrap();
        assert_eq!(r.method, Method::Permutation);
        assert!(r.p_value > 0.0 && r.p_value < 0.05);
        assert_eq!(r, wilcoxon_signed_rank(&diffs, Alternative::Greater).unwrap());
    }

    proptest! {
        #[test]
        fn order_invariant(mut d in prop::collection::vec(-3i32..=3, 1..10), seed in any::<u64>()) {
            prop_assume!(d.iter().any(|x| *x != 0));
            let a: Vec<f64> = d.iter().map(|x| f64::from(*x)).collect();
            let mut r = rng(seed, "shuffle");
            for i in (1..d.len()).rev() {
                d.swap(i, r.random_range(0..=i));
            }
            let b: Vec<f64> = d.iter().map(|x| f64::from(*x)).collect();
            prop_assert_eq!(wilcoxon_signed_rank(&a, Alternative::Greater).unwrap(), wilcoxon_signed_rank(&b, Alternative::Greater).unwrap());
        }
    }
}
