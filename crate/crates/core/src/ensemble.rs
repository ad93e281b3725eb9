//! Training the `kd` base classifiers and collecting their votes.
//!
//! The [`VoteMatrix`] is the durable artifact of a run: every certificate
//! is a function of the votes and the spread offsets alone.

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{AggregationConfig, ClassIndex, Dataset};
use crate::error::{Error, Result};
use crate::hashing::{build_partitions, build_subsets, SpreadOffsets};
use crate::learners::{argmax_smallest, predict, train, LearnerSpec, TrainedModel};

/// Trains classifier `i` on subset `S_i`. Output order follows the subset
/// index, whatever the thread pool does.
pub fn train_ensemble(
    dataset: &Dataset,
    config: &AggregationConfig,
    offsets: &SpreadOffsets,
    spec: &LearnerSpec,
) -> Result<Vec<TrainedModel>> {
    if offsets.kd() != config.kd() || offsets.d() != config.d {
        return Err(Error::InvalidOffsets(format!(
            "offsets describe kd={}, d={} but config has kd={}, d={}",
            offsets.kd(),
            offsets.d(),
            config.kd(),
            config.d
        )));
    }
    let layout = build_subsets(&build_partitions(dataset, config), offsets);
    layout
        .subsets
        .par_iter()
        .map(|subset| train(spec, subset, config.n_classes))
        .collect()
}

/// Votes of every base classifier on every test input, plus the metadata
/// needed to certify them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteMatrix {
    k: usize,
    d: usize,
    n_classes: usize,
    offsets: SpreadOffsets,
    labels: Option<Vec<ClassIndex>>,
    votes: Vec<Vec<ClassIndex>>,
}

/// On-disk layout of a [`VoteMatrix`].
#[derive(Debug, Serialize, Deserialize)]
struct VoteMatrixJson {
    k: usize,
    d: usize,
    offsets: Vec<usize>,
    n_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<ClassIndex>>,
    votes: Vec<Vec<ClassIndex>>,
}

impl VoteMatrix {
    pub fn new(
        k: usize,
        d: usize,
        n_classes: usize,
        offsets: SpreadOffsets,
        labels: Option<Vec<ClassIndex>>,
        votes: Vec<Vec<ClassIndex>>,
    ) -> Result<Self> {
        if k == 0 || d == 0 || n_classes == 0 {
            return Err(Error::InvalidConfig(
                "k, d and n_classes must be positive".into(),
            ));
        }
        let kd = k * d;
        if offsets.kd() != kd || offsets.d() != d {
            return Err(Error::InvalidOffsets(format!(
                "expected {d} offsets over kd={kd}, got {} over kd={}",
                offsets.d(),
                offsets.kd()
            )));
        }
        for (row, r) in votes.iter().enumerate() {
            if r.len() != kd {
                return Err(Error::RowLength {
                    row,
                    expected: kd,
                    found: r.len(),
                });
            }
            if let Some(&vote) = r.iter().find(|&&v| v >= n_classes) {
                return Err(Error::VoteOutOfRange {
                    row,
                    vote,
                    n_classes,
                });
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != votes.len() {
                return Err(Error::LengthMismatch {
                    left: labels.len(),
                    right: votes.len(),
                });
            }
            if let Some((row, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
                return Err(Error::LabelOutOfRange {
                    row,
                    label: l as i64,
                    n_classes,
                });
            }
        }
        Ok(Self {
            k,
            d,
            n_classes,
            offsets,
            labels,
            votes,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn kd(&self) -> usize {
        self.k * self.d
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn offsets(&self) -> &SpreadOffsets {
        &self.offsets
    }

    pub fn labels(&self) -> Option<&[ClassIndex]> {
        self.labels.as_deref()
    }

    pub fn votes(&self) -> &[Vec<ClassIndex>] {
        &self.votes
    }

    pub fn n_rows(&self) -> usize {
        self.votes.len()
    }

    pub fn label(&self, row: usize) -> Option<ClassIndex> {
        self.labels.as_ref().map(|l| l[row])
    }

    pub fn to_json(&self) -> String {
        let wire = VoteMatrixJson {
            k: self.k,
            d: self.d,
            offsets: self.offsets.offsets().to_vec(),
            n_classes: self.n_classes,
            labels: self.labels.clone(),
            votes: self.votes.clone(),
        };
        serde_json::to_string(&wire).expect("vote matrix serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: VoteMatrixJson =
            serde_json::from_str(text).map_err(|e| Error::Parse {
                row: e.line(),
                message: e.to_string(),
            })?;
        let kd = wire
            .k
            .checked_mul(wire.d)
            .filter(|&kd| kd > 0)
            .ok_or_else(|| Error::InvalidConfig("k and d must be positive".into()))?;
        let offsets = SpreadOffsets::new(wire.offsets, kd)?;
        Self::new(wire.k, wire.d, wire.n_classes, offsets, wire.labels, wire.votes)
    }
}

pub fn collect_votes(
    models: &[TrainedModel],
    test_inputs: &[Vec<u64>],
    config: &AggregationConfig,
    offsets: &SpreadOffsets,
    labels: Option<Vec<ClassIndex>>,
) -> Result<VoteMatrix> {
    if models.len() != config.kd() {
        return Err(Error::LengthMismatch {
            left: models.len(),
            right: config.kd(),
        });
    }
    let votes = test_inputs
        .par_iter()
        .map(|x| models.iter().map(|m| predict(m, x)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    VoteMatrix::new(
        config.k,
        config.d,
        config.n_classes,
        offsets.clone(),
        labels,
        votes,
    )
}

/// Per-class vote counts `N_c` of a row.
pub fn vote_counts(row: &[ClassIndex], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_classes];
    for &v in row {
        counts[v] += 1;
    }
    counts
}

/// Majority vote with ties going to the smaller class index.
pub fn aggregate_prediction(row: &[ClassIndex], n_classes: usize) -> ClassIndex {
    argmax_smallest(&vote_counts(row, n_classes))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsembleStats {
    pub clean_accuracy: Ratio<u64>,
    /// Mean over classifiers of each classifier's own test accuracy.
    pub base_accuracy: Ratio<u64>,
}

pub fn ensemble_stats(vm: &VoteMatrix) -> Result<EnsembleStats> {
    let labels = vm.labels().ok_or(Error::MissingLabels)?;
    if vm.n_rows() == 0 {
        return Err(Error::EmptyTestSet);
    }
    let mut clean = 0u64;
    let mut base = 0u64;
    for (row, &label) in vm.votes().iter().zip(labels) {
        if aggregate_prediction(row, vm.n_classes()) == label {
            clean += 1;
        }
        base += row.iter().filter(|&&v| v == label).count() as u64;
    }
    let n = vm.n_rows() as u64;
    Ok(EnsembleStats {
        clean_accuracy: Ratio::new(clean, n),
        base_accuracy: Ratio::new(base, n * vm.kd() as u64),
    })
}
