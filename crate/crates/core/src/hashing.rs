//! Split and spread hashing.
//!
//! `split_hash` places each training sample in one of `kd` partitions by
//! the sum of its features. The spread hash then sends partition `j` to the
//! `d` classifiers `{(j + r) mod kd : r in R}`, where the offset set `R` is
//! drawn once from a seeded generator. Every classifier receives exactly
//! `d` partitions, and every partition feeds exactly `d` classifiers.

use serde::{Deserialize, Serialize};

use crate::datamodel::{canonical_sort, AggregationConfig, Dataset, LabeledSample};
use crate::error::{Error, Result};

/// Partition index of a sample: the feature sum modulo `kd`. The label does
/// not participate.
pub fn split_hash(sample: &LabeledSample, kd: usize) -> usize {
    split_hash_features(&sample.features, kd)
}

pub fn split_hash_features(features: &[u64], kd: usize) -> usize {
    assert!(kd > 0, "kd must be positive");
    let m = kd as u64;
    features.iter().fold(0u64, |acc, &f| (acc + f % m) % m) as usize
}

/// xorshift64* with a SplitMix64-scrambled seed.
///
/// Update: `x ^= x >> 12; x ^= x << 25; x ^= x >> 27`, output
/// `x * 0x2545F4914F6CDD1D`. The initial state is
/// `splitmix64(seed)`, replaced by `0x9E3779B97F4A7C15` if it is zero.
#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let state = match splitmix64(seed) {
            0 => 0x9E37_79B9_7F4A_7C15,
            s => s,
        };
        Self { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform integer in `[0, n)` by rejection sampling.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let limit = u64::MAX - u64::MAX % n;
        loop {
            let x = self.next_u64();
            if x < limit {
                return x % n;
            }
        }
    }
}

/// How [`generate_offsets`] picks `R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OffsetMode {
    #[default]
    Seeded,
    /// Forces `R = {0}` when `d = 1`, making the layout identical to DPA.
    DpaCompatible,
}

/// The offset set `R`: `d` distinct values in `[0, kd)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpreadOffsets {
    offsets: Vec<usize>,
    kd: usize,
}

impl SpreadOffsets {
    pub fn new(offsets: Vec<usize>, kd: usize) -> Result<Self> {
        if kd == 0 {
            return Err(Error::InvalidOffsets("kd must be positive".into()));
        }
        if offsets.is_empty() {
            return Err(Error::InvalidOffsets("offset set is empty".into()));
        }
        if let Some(r) = offsets.iter().find(|&&r| r >= kd) {
            return Err(Error::InvalidOffsets(format!("offset {r} is not below kd={kd}")));
        }
        let mut seen = vec![false; kd];
        for &r in &offsets {
            if std::mem::replace(&mut seen[r], true) {
                return Err(Error::InvalidOffsets(format!("offset {r} repeated")));
            }
        }
        Ok(Self { offsets, kd })
    }

    /// The DPA layout: `R = {0}` over `k` partitions.
    pub fn identity(kd: usize) -> Self {
        Self::new(vec![0], kd).expect("kd must be positive")
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn kd(&self) -> usize {
        self.kd
    }

    pub fn d(&self) -> usize {
        self.offsets.len()
    }
}

/// Draws `R` for `(k, d, seed)`: a partial Fisher-Yates shuffle of
/// `[0, kd)` keeps the first `d` entries, which are returned sorted.
pub fn generate_offsets(k: usize, d: usize, seed: u64, mode: OffsetMode) -> Result<SpreadOffsets> {
    if k == 0 || d == 0 {
        return Err(Error::InvalidConfig(format!(
            "k and d must be positive (k={k}, d={d})"
        )));
    }
    let kd = k
        .checked_mul(d)
        .ok_or_else(|| Error::InvalidConfig("k*d overflows".into()))?;
    if d > kd {
        return Err(Error::DTooLarge { d, kd });
    }
    if d == 1 && mode == OffsetMode::DpaCompatible {
        return SpreadOffsets::new(vec![0], kd);
    }
    let mut rng = XorShift64Star::new(seed);
    let mut pool: Vec<usize> = (0..kd).collect();
    for i in 0..d {
        let j = i + rng.below((kd - i) as u64) as usize;
        pool.swap(i, j);
    }
    let mut chosen = pool[..d].to_vec();
    chosen.sort_unstable();
    SpreadOffsets::new(chosen, kd)
}

/// Classifiers that consume partition `j`.
pub fn spread(j: usize, offsets: &SpreadOffsets) -> Vec<usize> {
    let kd = offsets.kd;
    debug_assert!(j < kd);
    offsets.offsets.iter().map(|&r| (j + r) % kd).collect()
}

/// Partitions consumed by classifier `i`.
pub fn spread_inverse(i: usize, offsets: &SpreadOffsets) -> Vec<usize> {
    let kd = offsets.kd;
    debug_assert!(i < kd);
    offsets.offsets.iter().map(|&r| (i + kd - r) % kd).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionAssignment {
    /// `partition_of[t]` is the partition of the `t`-th dataset sample.
    pub partition_of: Vec<usize>,
    pub partitions: Vec<Vec<LabeledSample>>,
}

impl PartitionAssignment {
    pub fn kd(&self) -> usize {
        self.partitions.len()
    }
}

pub fn build_partitions(dataset: &Dataset, config: &AggregationConfig) -> PartitionAssignment {
    let kd = config.kd();
    let mut partitions = vec![Vec::new(); kd];
    let partition_of = dataset
        .samples()
        .iter()
        .map(|s| {
            let j = split_hash(s, kd);
            partitions[j].push(s.clone());
            j
        })
        .collect();
    PartitionAssignment {
        partition_of,
        partitions,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetLayout {
    /// `subsets[i]` is the canonical-sorted training set of classifier `i`.
    pub subsets: Vec<Vec<LabeledSample>>,
}

pub fn build_subsets(assignment: &PartitionAssignment, offsets: &SpreadOffsets) -> SubsetLayout {
    assert_eq!(assignment.kd(), offsets.kd(), "kd mismatch between partitions and offsets");
    let subsets = (0..offsets.kd())
        .map(|i| {
            let merged = spread_inverse(i, offsets)
                .into_iter()
                .flat_map(|j| assignment.partitions[j].iter().cloned())
                .collect();
            canonical_sort(merged)
        })
        .collect();
    SubsetLayout { subsets }
}
