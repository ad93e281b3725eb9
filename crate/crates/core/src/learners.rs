//! Deterministic base learners.
//!
//! Two built-ins are provided: a majority-label model that ignores the
//! input, and a nearest-centroid model whose distance comparisons are done
//! in exact integers. A third kind, `external-votes`, marks ensembles whose
//! votes were produced elsewhere and is never trained here.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::datamodel::{ClassIndex, LabeledSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    MajorityLabel,
    NearestCentroid,
    ExternalVotes,
}

impl LearnerKind {
    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::MajorityLabel => "majority-label",
            LearnerKind::NearestCentroid => "nearest-centroid",
            LearnerKind::ExternalVotes => "external-votes",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "majority-label" | "majority" => Ok(LearnerKind::MajorityLabel),
            "nearest-centroid" | "centroid" => Ok(LearnerKind::NearestCentroid),
            "external-votes" | "external" => Ok(LearnerKind::ExternalVotes),
            other => Err(Error::UnknownLearnerKind(other.to_string())),
        }
    }
}

/// Which learner to use. The built-ins take no parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind) -> Self {
        Self { kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Centroid {
    class: ClassIndex,
    count: u64,
    sums: Vec<u128>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum ModelState {
    Constant(ClassIndex),
    Centroids {
        feature_dim: usize,
        centroids: Vec<Centroid>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainedModel {
    state: ModelState,
    n_classes: usize,
}

impl TrainedModel {
    /// A model that predicts `class` for every input.
    pub fn constant(class: ClassIndex, n_classes: usize) -> Self {
        Self {
            state: ModelState::Constant(class),
            n_classes,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }
}

/// Trains `spec` on a canonical-sorted subset. Empty subsets give a model
/// that always predicts class 0.
pub fn train(spec: &LearnerSpec, subset: &[LabeledSample], n_classes: usize) -> Result<TrainedModel> {
    if spec.kind == LearnerKind::ExternalVotes {
        return Err(Error::NotTrainable(spec.kind.to_string()));
    }
    if subset.is_empty() {
        return Ok(TrainedModel::constant(0, n_classes));
    }
    match spec.kind {
        LearnerKind::MajorityLabel => {
            let mut counts = vec![0usize; n_classes];
            for s in subset {
                counts[s.label] += 1;
            }
            Ok(TrainedModel::constant(argmax_smallest(&counts), n_classes))
        }
        LearnerKind::NearestCentroid => {
            let feature_dim = subset[0].features.len();
            let mut acc: Vec<Option<Centroid>> = vec![None; n_classes];
            for s in subset {
                if s.features.len() != feature_dim {
                    return Err(Error::DimensionMismatch {
                        expected: feature_dim,
                        found: s.features.len(),
                    });
                }
                let c = acc[s.label].get_or_insert_with(|| Centroid {
                    class: s.label,
                    count: 0,
                    sums: vec![0; feature_dim],
                });
                c.count += 1;
                for (sum, &f) in c.sums.iter_mut().zip(&s.features) {
                    *sum += f as u128;
                }
            }
            Ok(TrainedModel {
                state: ModelState::Centroids {
                    feature_dim,
                    centroids: acc.into_iter().flatten().collect(),
                },
                n_classes,
            })
        }
        LearnerKind::ExternalVotes => unreachable!(),
    }
}

/// Index of the largest count, ties to the smaller index.
pub(crate) fn argmax_smallest(counts: &[usize]) -> ClassIndex {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

/// `|count * x - sums|^2`, i.e. the squared distance to the centroid scaled
/// by `count^2`.
fn scaled_sq_distance(x: &[u64], c: &Centroid) -> BigInt {
    let n = BigInt::from(c.count);
    x.iter()
        .zip(&c.sums)
        .map(|(&xi, &si)| {
            let diff = &n * BigInt::from(xi) - BigInt::from(si);
            &diff * &diff
        })
        .sum()
}

pub fn predict(model: &TrainedModel, features: &[u64]) -> Result<ClassIndex> {
    match &model.state {
        ModelState::Constant(c) => Ok(*c),
        ModelState::Centroids {
            feature_dim,
            centroids,
        } => {
            if features.len() != *feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: *feature_dim,
                    found: features.len(),
                });
            }
            // dist_c = D_c / n_c^2; compare D_a * n_b^2 against D_b * n_a^2.
            let mut best: Option<(&Centroid, BigInt)> = None;
            for c in centroids {
                let dist = scaled_sq_distance(features, c);
                let better = match &best {
                    None => true,
                    Some((b, bd)) => {
                        let lhs = &dist * BigInt::from(b.count) * BigInt::from(b.count);
                        let rhs = bd * BigInt::from(c.count) * BigInt::from(c.count);
                        lhs.cmp(&rhs) == Ordering::Less
                    }
                };
                if better {
                    best = Some((c, dist));
                }
            }
            // centroids are in ascending class order, so strict `<` keeps the
            // smaller index on ties
            Ok(best.map_or(0, |(c, _)| c.class))
        }
    }
}
