//! Exhaustive poisoning adversary for small ensembles.
//!
//! Each inserted or removed sample lands in one partition, so `m` poisons
//! touch at most `m` partitions `H`, and only the classifiers in
//! `A(H) = union of spread(j) for j in H` can change their vote. Those
//! classifiers may vote arbitrarily.
//!
//! It suffices to try, for each challenger `c''`, setting all of `A(H)` to
//! `c''`. If some reassignment makes a class `c* != c` win, sending every
//! affected vote to `c*` raises `N_{c*}` and lowers `N_c` at least as much,
//! so `c*` still beats `c`. Flips are also monotone in `H`, so only
//! `|H| = m` needs checking at each budget.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::certifier::{dpa_radius, fa_radius, margin_table};
use crate::datamodel::ClassIndex;
use crate::ensemble::{aggregate_prediction, vote_counts};
use crate::error::{Error, Result};
use crate::hashing::{spread, SpreadOffsets};

pub const DEFAULT_ORACLE_LIMIT: usize = 16;

/// One attack outcome: poisoning partitions `affected_partitions` and
/// sending every affected classifier to `challenger`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PoisonScenario {
    pub affected_partitions: Vec<usize>,
    pub challenger: ClassIndex,
    pub affected_classifiers: Vec<usize>,
}

impl PoisonScenario {
    pub fn new(affected_partitions: Vec<usize>, challenger: ClassIndex, offsets: &SpreadOffsets) -> Self {
        let mut hit = vec![false; offsets.kd()];
        for &j in &affected_partitions {
            for i in spread(j, offsets) {
                hit[i] = true;
            }
        }
        Self {
            affected_partitions,
            challenger,
            affected_classifiers: (0..offsets.kd()).filter(|&i| hit[i]).collect(),
        }
    }

    /// Prediction after the attack.
    pub fn apply(&self, row: &[ClassIndex], n_classes: usize) -> ClassIndex {
        let mut poisoned = row.to_vec();
        for &i in &self.affected_classifiers {
            poisoned[i] = self.challenger;
        }
        aggregate_prediction(&poisoned, n_classes)
    }
}

/// Calls `f` on every `size`-subset of `pool` in lexicographic order,
/// stopping early when `f` returns true. Returns whether it stopped.
fn any_subset(pool: &[usize], size: usize, mut f: impl FnMut(&[usize]) -> bool) -> bool {
    if size > pool.len() {
        return false;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    let mut chosen = vec![0usize; size];
    loop {
        for (slot, &i) in idx.iter().enumerate() {
            chosen[slot] = pool[i];
        }
        if f(&chosen) {
            return true;
        }
        // advance to the next combination
        let mut pos = size;
        loop {
            if pos == 0 {
                return false;
            }
            pos -= 1;
            if idx[pos] < pool.len() - size + pos {
                break;
            }
        }
        idx[pos] += 1;
        for later in pos + 1..size {
            idx[later] = idx[later - 1] + 1;
        }
    }
}

/// Whether some attack on exactly `size` partitions drawn from `pool`
/// changes the prediction away from `base`.
fn flips_with(
    row: &[ClassIndex],
    offsets: &SpreadOffsets,
    n_classes: usize,
    base: ClassIndex,
    pool: &[usize],
    size: usize,
) -> bool {
    let kd = offsets.kd();
    let mut affected = vec![false; kd];
    any_subset(pool, size, |h| {
        affected.iter_mut().for_each(|a| *a = false);
        for &j in h {
            for i in spread(j, offsets) {
                affected[i] = true;
            }
        }
        let mut counts = vec![0usize; n_classes];
        let mut n_affected = 0;
        for (i, &v) in row.iter().enumerate() {
            if affected[i] {
                n_affected += 1;
            } else {
                counts[v] += 1;
            }
        }
        (0..n_classes).filter(|&c| c != base).any(|target| {
            counts[target] += n_affected;
            let flipped = crate::learners::argmax_smallest(&counts) != base;
            counts[target] -= n_affected;
            flipped
        })
    })
}

fn check_limit(kd: usize, limit: usize) -> Result<()> {
    if kd > limit {
        return Err(Error::InstanceTooLarge { size: kd, limit });
    }
    Ok(())
}

/// Exact worst-case radius of the adversary model: the largest `m` such
/// that no attack on `m` partitions changes the prediction. -1 if the
/// prediction is wrong; `kd` if nothing can flip it.
pub fn exact_poison_radius(
    row: &[ClassIndex],
    offsets: &SpreadOffsets,
    n_classes: usize,
    label: Option<ClassIndex>,
    limit: usize,
) -> Result<i64> {
    let kd = offsets.kd();
    check_limit(kd, limit)?;
    let base = aggregate_prediction(row, n_classes);
    if label.is_some_and(|l| l != base) {
        return Ok(-1);
    }
    let all: Vec<usize> = (0..kd).collect();
    for m in 1..=kd {
        if flips_with(row, offsets, n_classes, base, &all, m) {
            return Ok(m as i64 - 1);
        }
    }
    Ok(kd as i64)
}

/// True iff no attack confined to partitions in `q` with at most `m`
/// poisons changes the prediction.
pub fn conditional_exact_check(
    row: &[ClassIndex],
    offsets: &SpreadOffsets,
    q: &[usize],
    m: usize,
    n_classes: usize,
    limit: usize,
) -> Result<bool> {
    check_limit(offsets.kd(), limit)?;
    let size = m.min(q.len());
    if size == 0 {
        return Ok(true);
    }
    let base = aggregate_prediction(row, n_classes);
    Ok(!flips_with(row, offsets, n_classes, base, q, size))
}

/// A row whose certificate exceeds the exact radius.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub row: usize,
    pub fa_radius: i64,
    pub exact_radius: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub rows_checked: usize,
    pub violations: Vec<Violation>,
    /// Rows where `d = 1`, `R = {0}` and the FA and DPA radii disagree.
    pub dpa_mismatches: Vec<usize>,
    pub dpa_rows_checked: usize,
    /// `exact - fa` -> number of rows.
    pub gap_histogram: BTreeMap<i64, usize>,
}

impl VerificationReport {
    pub fn is_sound(&self) -> bool {
        self.violations.is_empty() && self.dpa_mismatches.is_empty()
    }
}

pub fn verify_certificates(
    rows: &[Vec<ClassIndex>],
    offsets: &SpreadOffsets,
    n_classes: usize,
    limit: usize,
) -> Result<VerificationReport> {
    check_limit(offsets.kd(), limit)?;
    let dpa_layout = offsets.offsets() == [0];
    let per_row = rows
        .par_iter()
        .enumerate()
        .map(|(t, row)| {
            if row.len() != offsets.kd() {
                return Err(Error::RowLength {
                    row: t,
                    expected: offsets.kd(),
                    found: row.len(),
                });
            }
            let fa = fa_radius(&margin_table(row, offsets, n_classes), None);
            let exact = exact_poison_radius(row, offsets, n_classes, None, limit)?;
            let dpa = dpa_layout.then(|| dpa_radius(&vote_counts(row, n_classes), None));
            Ok((fa, exact, dpa))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = VerificationReport {
        rows_checked: rows.len(),
        violations: Vec::new(),
        dpa_mismatches: Vec::new(),
        dpa_rows_checked: 0,
        gap_histogram: BTreeMap::new(),
    };
    for (row, (fa, exact, dpa)) in per_row.into_iter().enumerate() {
        if fa > exact {
            report.violations.push(Violation {
                row,
                fa_radius: fa,
                exact_radius: exact,
            });
        }
        *report.gap_histogram.entry(exact - fa).or_default() += 1;
        if let Some(dpa) = dpa {
            report.dpa_rows_checked += 1;
            if dpa != fa {
                report.dpa_mismatches.push(row);
            }
        }
    }
    Ok(report)
}
