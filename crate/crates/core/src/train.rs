//! Training entry points shared by the CLI, cross-validation and the C ABI.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{train_mi_svm, MiSvmConfig, SelectorState};
use crate::error::{Error, Result};
use crate::model::{Aggregation, Dataset, Hyperparams, LinearModel};
use crate::objective::DatasetObjective;
use crate::solver::{minimize, SolveTrace, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Grouped objective: key candidate per positive group, worst candidate
    /// per negative group.
    Gcm,
    /// Same penalties, every labelled candidate counted separately.
    #[serde(rename = "gcm-nogroup")]
    GcmNoGroup,
    /// Per-candidate baseline; usually run with `delta = 0`.
    Svm,
    /// Multiple-instance baseline that ignores key annotations.
    #[serde(rename = "misvm")]
    MiSvm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Gcm, Algorithm::GcmNoGroup, Algorithm::Svm, Algorithm::MiSvm];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gcm => "gcm",
            Algorithm::GcmNoGroup => "gcm-nogroup",
            Algorithm::Svm => "svm",
            Algorithm::MiSvm => "misvm",
        }
    }

    /// Whether the algorithm targets group-level performance; decides the
    /// model-selection criterion.
    pub fn is_grouped(self) -> bool {
        matches!(self, Algorithm::Gcm | Algorithm::MiSvm)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config(format!("unknown algorithm `{s}` (expected gcm, gcm-nogroup, svm or misvm)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub solver: SolverConfig,
    pub threads: usize,
    pub misvm_max_outer_iterations: usize,
    /// Start the grouped objective from the per-candidate optimum instead of
    /// zero. At zero every row of a group ties for the maximum and the
    /// solver can stall on that kink.
    pub grouped_warm_start: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            solver: SolverConfig::default(),
            threads: 1,
            misvm_max_outer_iterations: 50,
            grouped_warm_start: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub model: LinearModel,
    pub trace: SolveTrace,
    pub outer_iterations: Option<usize>,
    pub selector: Option<SelectorState>,
}

/// Minimises one dataset objective from `w = 0, b = 0`.
pub fn train_objective(
    data: &Dataset,
    hp: &Hyperparams,
    aggregation: Aggregation,
    cfg: &SolverConfig,
    threads: usize,
) -> Result<(LinearModel, SolveTrace)> {
    train_objective_from(data, hp, aggregation, cfg, threads, LinearModel::zeros(data.dim()))
}

/// As [`train_objective`] from an explicit start model.
pub fn train_objective_from(
    data: &Dataset,
    hp: &Hyperparams,
    aggregation: Aggregation,
    cfg: &SolverConfig,
    threads: usize,
    start: LinearModel,
) -> Result<(LinearModel, SolveTrace)> {
    start.check_dim(data.dim())?;
    if hp.lambda == 1.0 {
        log::warn!("lambda = 1 disables regularisation; on separable data the optimum may not be attained");
    }
    let objective = DatasetObjective::new(data, *hp, aggregation, threads)?;
    let (x, trace) = minimize(&objective, start.to_point(), cfg)?;
    let model = LinearModel::from_point(&x);
    LinearModel::new(model.w, model.b).map(|m| (m, trace))
}

pub fn train(data: &Dataset, algo: Algorithm, hp: &Hyperparams, opts: &TrainOptions) -> Result<TrainReport> {
    hp.validate()?;
    let (aggregation, hp) = match algo {
        Algorithm::Gcm => (Aggregation::Grouped, *hp),
        Algorithm::GcmNoGroup | Algorithm::Svm => (Aggregation::PerCandidate, *hp),
        Algorithm::MiSvm => {
            if !(hp.lambda > 0.0 && hp.lambda < 1.0) {
                return Err(Error::InvalidParameter {
                    name: "lambda",
                    value: hp.lambda,
                    reason: "MI-SVM needs 0 < lambda < 1 (C = lambda / (1 - lambda))",
                });
            }
            let cfg = MiSvmConfig {
                c_tradeoff: MiSvmConfig::c_for_lambda(hp.lambda),
                epsilon: hp.epsilon,
                inner_delta: hp.delta,
                max_outer_iterations: opts.misvm_max_outer_iterations,
                inner_solver: opts.solver.clone(),
                threads: opts.threads,
            };
            let out = train_mi_svm(data, &cfg)?;
            return Ok(TrainReport {
                model: out.model,
                trace: out.trace,
                outer_iterations: Some(out.outer_iterations),
                selector: Some(out.selector),
            });
        }
    };
    let (model, trace) = if aggregation == Aggregation::Grouped && opts.grouped_warm_start {
        let (start, _) = train_objective(data, &hp, Aggregation::PerCandidate, &opts.solver, opts.threads)?;
        train_objective_from(data, &hp, aggregation, &opts.solver, opts.threads, start)?
    } else {
        train_objective(data, &hp, aggregation, &opts.solver, opts.threads)?
    };
    Ok(TrainReport {
        model,
        trace,
        outer_iterations: None,
        selector: None,
    })
}
