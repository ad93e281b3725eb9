//! Exhaustive Infinite Aggregation for tiny training sets.
//!
//! Each base classifier trains on a Bernoulli(1/k) sample of the training
//! set, and the vote share of class `c` is the probability that such a
//! classifier predicts `c`. Here the expectation is summed over all
//! `2^|D|` subsets in exact rationals, so this is only usable when `|D|` is
//! around 16 or less.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::datamodel::{canonical_sort, ClassIndex, Dataset, LabeledSample};
use crate::error::{Error, Result};
use crate::learners::{predict, train, LearnerSpec};

pub type Rational = BigRational;

pub const DEFAULT_IA_LIMIT: usize = 16;

/// Exact vote shares of Infinite Aggregation at one input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IAVoteDistribution {
    /// `ia[c]`: probability a random base classifier predicts `c`.
    pub ia: Vec<Rational>,
    /// `given[t][c]`: the same probability, conditioned on training sample
    /// `t` (in canonical order) being drawn.
    pub given: Vec<Vec<Rational>>,
    /// Training samples in canonical order, aligned with `given`.
    pub samples: Vec<LabeledSample>,
    pub k: usize,
    pub prediction: ClassIndex,
}

/// Rational argmax with ties to the smaller index.
fn argmax(values: &[Rational]) -> ClassIndex {
    let mut best = 0;
    for (c, v) in values.iter().enumerate() {
        if v > &values[best] {
            best = c;
        }
    }
    best
}

fn check_size(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        return Err(Error::InstanceTooLarge { size: n, limit });
    }
    Ok(())
}

/// Prediction of the base learner trained on each subset `mask` of
/// `samples` (bit `t` selects `samples[t]`).
fn subset_predictions(
    samples: &[LabeledSample],
    x: &[u64],
    spec: &LearnerSpec,
    n_classes: usize,
) -> Result<Vec<ClassIndex>> {
    let n = samples.len();
    (0u64..1 << n)
        .into_par_iter()
        .map(|mask| {
            // samples are canonical-sorted, so any sub-sequence is too
            let subset: Vec<LabeledSample> = (0..n)
                .filter(|t| mask >> t & 1 == 1)
                .map(|t| samples[t].clone())
                .collect();
            predict(&train(spec, &subset, n_classes)?, x)
        })
        .collect()
}

pub fn ia_votes(
    dataset: &Dataset,
    x: &[u64],
    k: usize,
    spec: &LearnerSpec,
    limit: usize,
) -> Result<IAVoteDistribution> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    let samples = canonical_sort(dataset.samples().to_vec());
    let n = samples.len();
    check_size(n, limit)?;
    let n_classes = dataset.n_classes();
    let preds = subset_predictions(&samples, x, spec, n_classes)?;

    // Pr[S] = (k-1)^(n-|S|) / k^n; conditioning on t in S divides by 1/k.
    let kk = BigInt::from(k);
    let km1 = BigInt::from(k - 1);
    let pow_km1: Vec<BigInt> = (0..=n).map(|e| num_traits::pow(km1.clone(), e)).collect();
    let mut mass = vec![BigInt::zero(); n_classes];
    let mut given_mass = vec![vec![BigInt::zero(); n_classes]; n];
    for (mask, &c) in preds.iter().enumerate() {
        let size = (mask as u64).count_ones() as usize;
        let w = &pow_km1[n - size];
        mass[c] += w;
        for (t, g) in given_mass.iter_mut().enumerate() {
            if mask >> t & 1 == 1 {
                g[c] += w;
            }
        }
    }
    let denom = num_traits::pow(kk.clone(), n);
    let cond_denom = if n == 0 {
        BigInt::one()
    } else {
        num_traits::pow(kk, n - 1)
    };
    let ia: Vec<Rational> = mass
        .into_iter()
        .map(|m| Rational::new(m, denom.clone()))
        .collect();
    let given = given_mass
        .into_iter()
        .map(|g| {
            g.into_iter()
                .map(|m| Rational::new(m, cond_denom.clone()))
                .collect()
        })
        .collect();
    Ok(IAVoteDistribution {
        prediction: argmax(&ia),
        ia,
        given,
        samples,
        k,
    })
}

/// Sum of the `m` largest elements of `finite` plus unlimited copies of
/// `bulk`. `finite` must be sorted in descending order.
fn top_sum(finite: &[Rational], bulk: &Rational, m: usize) -> Rational {
    let mut sum = Rational::zero();
    let mut taken = 0;
    for e in finite {
        if taken == m || e < bulk {
            break;
        }
        sum += e;
        taken += 1;
    }
    sum + bulk * Rational::from_integer(BigInt::from(m - taken))
}

/// Largest certified budget against challenger `challenger`.
fn challenger_radius(dist: &IAVoteDistribution, challenger: ClassIndex) -> usize {
    let c = dist.prediction;
    let one = Rational::one();
    let mut finite: Vec<Rational> = dist
        .given
        .iter()
        .map(|g| &one + &g[c] - &g[challenger])
        .collect();
    finite.sort_by(|a, b| b.cmp(a));
    let gap = &dist.ia[c] - &dist.ia[challenger];
    let bulk = &one + &gap;
    let k = Rational::from_integer(BigInt::from(dist.k));
    let strict = challenger < c;
    let holds = |m: usize| {
        let lhs = top_sum(&finite, &bulk, m) / &k;
        match lhs.cmp(&gap) {
            Ordering::Less => true,
            Ordering::Equal => !strict,
            Ordering::Greater => false,
        }
    };
    // bulk >= 1, so the top-m sum grows by at least 1 per step and the
    // loop ends within k * gap + 1 steps.
    let mut m = 0;
    while holds(m + 1) {
        m += 1;
    }
    m
}

/// Certified radius of the IA prediction. Budget 0 is always granted; the
/// margin condition is applied from budget 1 upward. A single-class problem
/// has no challenger and yields `i64::MAX`.
pub fn ia_radius(dist: &IAVoteDistribution) -> i64 {
    (0..dist.ia.len())
        .filter(|&c| c != dist.prediction)
        .map(|c| challenger_radius(dist, c) as i64)
        .min()
        .unwrap_or(i64::MAX)
}

/// Calls `f` on each multiset of size at most `budget` drawn from `pool`
/// with repetition (as counts per pool entry).
fn for_each_insertion(pool_len: usize, budget: usize, f: &mut impl FnMut(&[usize]) -> bool) -> bool {
    fn rec(
        counts: &mut Vec<usize>,
        pos: usize,
        left: usize,
        f: &mut impl FnMut(&[usize]) -> bool,
    ) -> bool {
        if pos == counts.len() {
            return f(counts);
        }
        for n in 0..=left {
            counts[pos] = n;
            if rec(counts, pos + 1, left - n, f) {
                return true;
            }
        }
        counts[pos] = 0;
        false
    }
    let mut counts = vec![0; pool_len];
    rec(&mut counts, 0, budget, f)
}

/// Whether every training set reachable from `dataset` by removing some of
/// its samples and inserting copies of `pool` entries, `budget` changes in
/// total, keeps the IA prediction at `x`. Inserted samples come only from
/// `pool`, so `true` does not mean the prediction is robust in general.
pub fn ia_brute_force_check(
    dataset: &Dataset,
    x: &[u64],
    k: usize,
    spec: &LearnerSpec,
    budget: usize,
    pool: &[LabeledSample],
    limit: usize,
) -> Result<bool> {
    let n = dataset.len();
    check_size(n + if pool.is_empty() { 0 } else { budget }, limit)?;
    let base = ia_votes(dataset, x, k, spec, limit)?.prediction;
    if budget == 0 {
        return Ok(true);
    }
    let samples = dataset.samples();
    let mut failure: Option<Error> = None;
    let mut flipped = false;
    for removal in 0u64..1 << n {
        let removed = removal.count_ones() as usize;
        if removed > budget {
            continue;
        }
        let kept: Vec<LabeledSample> = (0..n)
            .filter(|t| removal >> t & 1 == 0)
            .map(|t| samples[t].clone())
            .collect();
        let stop = for_each_insertion(pool.len(), budget - removed, &mut |counts| {
            if removed == 0 && counts.iter().all(|&c| c == 0) {
                return false;
            }
            let mut poisoned = kept.clone();
            for (s, &times) in pool.iter().zip(counts) {
                poisoned.extend(std::iter::repeat(s.clone()).take(times));
            }
            let outcome = Dataset::new(poisoned, dataset.n_classes(), dataset.feature_dim())
                .and_then(|d| ia_votes(&d, x, k, spec, limit));
            match outcome {
                Ok(dist) if dist.prediction != base => {
                    flipped = true;
                    true
                }
                Ok(_) => false,
                Err(e) => {
                    failure = Some(e);
                    true
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if stop {
            break;
        }
    }
    Ok(!flipped)
}

/// JSON-friendly `"num/den"` rendering.
pub fn rational_string(r: &Rational) -> String {
    if r.denom().is_one() {
        format!("{}/1", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Lossy conversion for advisory float output.
pub fn rational_to_f64(r: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    let sign = if r.is_negative() { -1.0 } else { 1.0 };
    let abs = r.abs();
    let num = abs.numer().to_f64().unwrap_or(f64::INFINITY);
    let den = abs.denom().to_f64().unwrap_or(f64::INFINITY);
    sign * num / den
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactValue {
    pub exact: String,
    pub value: f64,
}

impl From<&Rational> for ExactValue {
    fn from(r: &Rational) -> Self {
        Self {
            exact: rational_string(r),
            value: rational_to_f64(r),
        }
    }
}
