//! Group Classification Machine (GCM).
//!
//! Convex training of linear classifiers whose loss is aggregated per group
//! of candidates: the annotated key candidate of every positive group and the
//! worst candidate of every negative group. Groups are scored at test time by
//! their maximal candidate score.
//!
//! Alongside the grouped trainer the crate ships the per-candidate variant,
//! an SVM baseline, MI-SVM, polynomial feature expansion, ROC/AUC evaluation
//! at candidate and group level, cross-validation over λ, dataset and model
//! file formats and a synthetic data generator.

pub mod baselines;
pub mod cli;
pub mod compare;
pub mod error;
pub mod eval;
pub mod expansion;
pub mod io;
pub mod model;
pub mod objective;
pub mod penalty;
pub mod solver;
pub mod train;

pub use error::{Error, Result};
pub use model::{Aggregation, Candidate, Dataset, Group, GroupBlock, Hyperparams, Label, LinearModel, ObjectiveSpec};
