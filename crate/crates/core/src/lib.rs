//! Finite Aggregation: partition-based ensembles with exact certificates
//! against data poisoning.
//!
//! A training set is split into `kd` partitions by a feature-sum hash, each
//! partition is spread to `d` of the `kd` base classifiers, and the
//! ensemble predicts by majority vote. [`certifier`] turns the vote matrix
//! into certified radii; [`oracle`] checks them by exhaustive attack on
//! small ensembles; [`infinite_aggregation`] evaluates the `d -> infinity`
//! limit exactly for tiny training sets.

pub mod certifier;
pub mod datamodel;
pub mod ensemble;
pub mod error;
pub mod hashing;
pub mod infinite_aggregation;
pub mod learners;
pub mod oracle;

pub use certifier::{
    certificate_report, certified_accuracy, certified_fraction_curve, conditional_certified,
    dpa_radius, fa_radius, margin_table, naive_radius, radius_stats, CertificateReport,
    CertifiedAccuracy, DeltaMultiset, MarginTable, RadiusStats, SampleCertificate,
};
pub use datamodel::{canonical_sort, AggregationConfig, ClassIndex, Dataset, LabeledSample};
pub use ensemble::{aggregate_prediction, collect_votes, ensemble_stats, train_ensemble, EnsembleStats, VoteMatrix};
pub use error::{Error, Result};
pub use hashing::{generate_offsets, split_hash, spread, spread_inverse, OffsetMode, SpreadOffsets};
pub use learners::{LearnerKind, LearnerSpec, TrainedModel};
