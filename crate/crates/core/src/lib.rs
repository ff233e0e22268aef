//! Ranks pre-trained models for a downstream task by the log maximum evidence
//! (LogME) of a Bayesian linear head on their features, and builds the
//! posterior-predictive heads used for teacher-guided tuning.
//!
//! - [`evidence`]: evidence of the linear head and its three maximizers.
//! - [`logme`]: per-task scores averaged over label dimensions.
//! - [`ranking`]: Kendall's τ, weighted τ and hub rankings.
//! - [`predictive`]: posterior predictive heads and the tuning losses.
//! - [`tuning`]: a toy student trained with analytic gradients.
//! - [`io`]: feature, label, manifest and head file formats.

pub mod bench;
pub mod cli;
pub mod error;
pub mod evidence;
pub mod hub;
pub mod io;
pub mod logme;
pub mod predictive;
pub mod ranking;
pub mod tuning;

pub use error::{Error, Result};
pub use evidence::{
    Backend, EvidenceSolution, FeatureMatrix, LabelVector, SolverOptions, SvdFactors,
};
pub use hub::{rank_manifest, HubRanking};
pub use logme::{compute_logme, LogMeOptions, LogMeReport, TaskKind, TaskLabels};
pub use predictive::PredictiveHead;
pub use ranking::{kendall_tau, rank_hub, weighted_tau, RankReport, ScorePair, TruthDirection};
