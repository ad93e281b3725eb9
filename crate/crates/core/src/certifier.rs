//! Robustness certificates computed from a vote row.
//!
//! Everything here works on integers. Scaling the Finite Aggregation
//! condition by `kd` turns every per-partition term into
//! `e_j = d + a_{c,j} - a_{c',j}` and the margin into
//! `N_c - N_{c'} - [c' < c]`, so a budget of `m` poisons is certified
//! against challenger `c'` exactly when the `m` largest `e_j` sum to at most
//! that margin.

use num_rational::Ratio;
use rayon::prelude::*;
use serde::Serialize;

use crate::datamodel::ClassIndex;
use crate::ensemble::{aggregate_prediction, vote_counts, VoteMatrix};
use crate::error::{Error, Result};
use crate::hashing::{spread, SpreadOffsets};

/// Default cap on the number of partition subsets enumerated by
/// [`certified_accuracy`].
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarginTable {
    pub prediction: ClassIndex,
    /// `counts[c]` = N_c, the number of classifiers voting `c`.
    pub counts: Vec<usize>,
    /// `per_partition[c][j]` = a_{c,j}, votes for `c` among `spread(j)`.
    pub per_partition: Vec<Vec<usize>>,
    pub kd: usize,
    pub d: usize,
}

impl MarginTable {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    /// `N_c - N_{c'} - [c' < c]` for the predicted class `c`.
    pub fn rhs(&self, challenger: ClassIndex) -> i64 {
        let c = self.prediction;
        self.counts[c] as i64 - self.counts[challenger] as i64 - i64::from(challenger < c)
    }

    fn challengers(&self) -> impl Iterator<Item = ClassIndex> + '_ {
        (0..self.n_classes()).filter(move |&c| c != self.prediction)
    }
}

pub fn margin_table(row: &[ClassIndex], offsets: &SpreadOffsets, n_classes: usize) -> MarginTable {
    let kd = offsets.kd();
    assert_eq!(row.len(), kd, "vote row length must equal kd");
    let mut per_partition = vec![vec![0usize; kd]; n_classes];
    for j in 0..kd {
        for i in spread(j, offsets) {
            per_partition[row[i]][j] += 1;
        }
    }
    MarginTable {
        prediction: aggregate_prediction(row, n_classes),
        counts: vote_counts(row, n_classes),
        per_partition,
        kd,
        d: offsets.d(),
    }
}

/// Per-partition worst-case margin reductions against one challenger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeltaMultiset {
    pub challenger: ClassIndex,
    /// Sorted in descending order.
    pub elements: Vec<usize>,
    pub rhs: i64,
}

impl DeltaMultiset {
    /// Largest `m` (capped at the element count) whose top-`m` sum fits
    /// under `rhs`.
    pub fn max_budget(&self) -> usize {
        let mut sum = 0i64;
        for (m, &e) in self.elements.iter().enumerate() {
            sum += e as i64;
            if sum > self.rhs {
                return m;
            }
        }
        self.elements.len()
    }

    /// Whether the `min(m, len)` largest elements sum to at most `rhs`.
    pub fn admits(&self, m: usize) -> bool {
        let top: i64 = self.elements.iter().take(m).map(|&e| e as i64).sum();
        top <= self.rhs
    }
}

/// Builds the multiset over `scope` (all partitions when `None`).
pub fn delta_multiset(
    table: &MarginTable,
    challenger: ClassIndex,
    scope: Option<&[usize]>,
) -> DeltaMultiset {
    let c = table.prediction;
    let element = |j: usize| table.d + table.per_partition[c][j] - table.per_partition[challenger][j];
    let mut elements: Vec<usize> = match scope {
        Some(q) => q.iter().map(|&j| element(j)).collect(),
        None => (0..table.kd).map(element).collect(),
    };
    elements.sort_unstable_by(|a, b| b.cmp(a));
    DeltaMultiset {
        challenger,
        elements,
        rhs: table.rhs(challenger),
    }
}

fn wrong(table: &MarginTable, label: Option<ClassIndex>) -> bool {
    label.is_some_and(|l| l != table.prediction)
}

/// Finite Aggregation certified radius, or -1 for a misclassified sample.
/// A single-class problem has no challenger and gets the cap `kd`.
pub fn fa_radius(table: &MarginTable, label: Option<ClassIndex>) -> i64 {
    if wrong(table, label) {
        return -1;
    }
    table
        .challengers()
        .map(|c| delta_multiset(table, c, None).max_budget())
        .min()
        .unwrap_or(table.kd) as i64
}

/// Baseline radius on the same `kd` classifiers, treating every poison as
/// able to move `d` votes (each element replaced by `2d`).
pub fn naive_radius(table: &MarginTable, label: Option<ClassIndex>) -> i64 {
    if wrong(table, label) {
        return -1;
    }
    let step = 2 * table.d as i64;
    table
        .challengers()
        .map(|c| (table.rhs(c) / step).min(table.kd as i64))
        .min()
        .unwrap_or(table.kd as i64)
}

/// DPA certified radius from the vote counts of `k` disjoint-partition
/// classifiers.
pub fn dpa_radius(counts: &[usize], label: Option<ClassIndex>) -> i64 {
    let c = crate::learners::argmax_smallest(counts);
    if label.is_some_and(|l| l != c) {
        return -1;
    }
    let k: usize = counts.iter().sum();
    (0..counts.len())
        .filter(|&o| o != c)
        .map(|o| {
            let gap = counts[c] as i64 - counts[o] as i64 - i64::from(o < c);
            (gap / 2).max(0)
        })
        .min()
        .unwrap_or(k as i64)
}

/// Certificate under poisons confined to the partitions in `q`.
pub fn conditional_certified(
    table: &MarginTable,
    q: &[usize],
    budget: usize,
    label: Option<ClassIndex>,
) -> bool {
    if wrong(table, label) {
        return false;
    }
    table
        .challengers()
        .all(|c| delta_multiset(table, c, Some(q)).admits(budget))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SampleCertificate {
    pub predicted: ClassIndex,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<ClassIndex>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    pub dpa_radius: i64,
    pub fa_radius: i64,
}

pub fn certify_row(
    row: &[ClassIndex],
    offsets: &SpreadOffsets,
    n_classes: usize,
    label: Option<ClassIndex>,
) -> SampleCertificate {
    let table = margin_table(row, offsets, n_classes);
    SampleCertificate {
        predicted: table.prediction,
        label,
        correct: label.map(|l| l == table.prediction),
        dpa_radius: naive_radius(&table, label),
        fa_radius: fa_radius(&table, label),
    }
}

/// Certifies every row of a vote matrix, in row order.
pub fn certify_matrix(vm: &VoteMatrix) -> Vec<SampleCertificate> {
    vm.votes()
        .par_iter()
        .enumerate()
        .map(|(t, row)| certify_row(row, vm.offsets(), vm.n_classes(), vm.label(t)))
        .collect()
}

/// `curve[m]` = fraction of samples with radius at least `m`.
pub fn certified_fraction_curve(radii: &[i64], max_attack_size: usize) -> Vec<Ratio<u64>> {
    let n = radii.len() as u64;
    (0..=max_attack_size)
        .map(|m| {
            if n == 0 {
                return Ratio::from_integer(0);
            }
            let hits = radii.iter().filter(|&&r| r >= m as i64).count() as u64;
            Ratio::new(hits, n)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertifiedAccuracy {
    pub budget: usize,
    pub value: Ratio<u64>,
    /// The first (lexicographically) worst-case partition set.
    pub argmin_q: Vec<usize>,
}

/// `C(n, r)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, r: usize) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// The `rank`-th `r`-subset of `[0, n)` in lexicographic order.
fn unrank_combination(n: usize, r: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(r);
    let mut next = 0;
    for slot in 0..r {
        let mut x = next;
        loop {
            let with_x = binomial(n - x - 1, r - slot - 1);
            if rank < with_x {
                break;
            }
            rank -= with_x;
            x += 1;
        }
        out.push(x);
        next = x + 1;
    }
    out
}

/// Worst-case test accuracy when one shared set of at most `budget` poisons
/// hits every sample. Only partition sets of size `min(budget, kd)` are
/// enumerated: enlarging `Q` can only remove certificates.
pub fn certified_accuracy(
    tables: &[(MarginTable, ClassIndex)],
    budget: usize,
    cap: u128,
) -> Result<CertifiedAccuracy> {
    if tables.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let kd = tables[0].0.kd;
    let size = budget.min(kd);
    let count = binomial(kd, size);
    if count > cap {
        return Err(Error::EnumerationTooLarge { count, cap });
    }
    let certified_under = |q: &[usize]| -> usize {
        tables
            .iter()
            .filter(|(t, label)| conditional_certified(t, q, budget, Some(*label)))
            .count()
    };
    let (hits, rank) = (0..count as u64)
        .into_par_iter()
        .map(|rank| {
            let q = unrank_combination(kd, size, rank as u128);
            (certified_under(&q), rank)
        })
        .min()
        .expect("at least one subset");
    Ok(CertifiedAccuracy {
        budget,
        value: Ratio::new(hits as u64, tables.len() as u64),
        argmin_q: unrank_combination(kd, size, rank as u128),
    })
}

/// Margin tables paired with labels, as [`certified_accuracy`] expects.
pub fn labeled_tables(vm: &VoteMatrix) -> Result<Vec<(MarginTable, ClassIndex)>> {
    let labels = vm.labels().ok_or(Error::MissingLabels)?;
    Ok(vm
        .votes()
        .iter()
        .zip(labels)
        .map(|(row, &l)| (margin_table(row, vm.offsets(), vm.n_classes()), l))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadiusStats {
    /// Fraction of all samples whose FA radius beats the baseline.
    pub pr_radius_up: Ratio<u64>,
    /// Mean improvement among those samples (0 if there are none).
    pub mean_delta_r: Ratio<u64>,
}

pub fn radius_stats(fa: &[i64], dpa: &[i64]) -> Result<RadiusStats> {
    if fa.len() != dpa.len() {
        return Err(Error::LengthMismatch {
            left: fa.len(),
            right: dpa.len(),
        });
    }
    let gains: Vec<u64> = fa
        .iter()
        .zip(dpa)
        .filter(|(f, d)| f > d)
        .map(|(f, d)| (f - d) as u64)
        .collect();
    let up = gains.len() as u64;
    Ok(RadiusStats {
        pr_radius_up: if fa.is_empty() {
            Ratio::from_integer(0)
        } else {
            Ratio::new(up, fa.len() as u64)
        },
        mean_delta_r: if up == 0 {
            Ratio::from_integer(0)
        } else {
            Ratio::new(gains.iter().sum(), up)
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertificateReport {
    pub certificates: Vec<SampleCertificate>,
    pub curve: Vec<Ratio<u64>>,
    pub stats: RadiusStats,
}

pub fn certificate_report(vm: &VoteMatrix, max_attack_size: usize) -> CertificateReport {
    let certificates = certify_matrix(vm);
    let fa: Vec<i64> = certificates.iter().map(|c| c.fa_radius).collect();
    let dpa: Vec<i64> = certificates.iter().map(|c| c.dpa_radius).collect();
    CertificateReport {
        curve: certified_fraction_curve(&fa, max_attack_size),
        stats: radius_stats(&fa, &dpa).expect("equal lengths"),
        certificates,
    }
}
