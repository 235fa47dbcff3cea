//! Comparison algorithms: the class-balanced unconstrained SVM and MI-SVM.
//!
//! MI-SVM's quadratic program is solved in the same normalised unconstrained
//! form as every other objective here. Its trade-off `C` maps onto the shared
//! λ through `λ = C / (1 + C)`; negatives are used row by row.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Aggregation, Dataset, Hyperparams, Label, LinearModel};
use crate::objective::{partition_groups, GradientVector, LossAccumulator, ObjectiveValue};
use crate::solver::{minimize, Problem, SolveTrace, SolverConfig};
use crate::train::train_objective;

/// Per-candidate training on every labelled row, no grouping. With `delta = 0`
/// the loss is the exact hinge; a large `epsilon` gives squared-norm
/// regularisation.
pub fn train_svm_baseline(data: &Dataset, hp: &Hyperparams, cfg: &SolverConfig) -> Result<LinearModel> {
    Ok(train_objective(data, hp, Aggregation::PerCandidate, cfg, 1)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiSvmConfig {
    /// `C > 0`.
    pub c_tradeoff: f64,
    pub epsilon: f64,
    pub inner_delta: f64,
    pub max_outer_iterations: usize,
    pub inner_solver: SolverConfig,
    pub threads: usize,
}

impl Default for MiSvmConfig {
    fn default() -> Self {
        MiSvmConfig {
            c_tradeoff: 1.0,
            epsilon: 1.0,
            inner_delta: 0.0,
            max_outer_iterations: 50,
            inner_solver: SolverConfig::default(),
            threads: 1,
        }
    }
}

impl MiSvmConfig {
    /// `C / (1 + C)`.
    pub fn lambda(&self) -> f64 {
        self.c_tradeoff / (1.0 + self.c_tradeoff)
    }

    /// Inverse of [`MiSvmConfig::lambda`].
    pub fn c_for_lambda(lambda: f64) -> f64 {
        lambda / (1.0 - lambda)
    }

    pub fn hyperparams(&self) -> Result<Hyperparams> {
        if !(self.c_tradeoff > 0.0 && self.c_tradeoff.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "c_tradeoff",
                value: self.c_tradeoff,
                reason: "must be positive and finite",
            });
        }
        Hyperparams::new(self.lambda(), self.epsilon, self.inner_delta)
    }
}

/// Row chosen to represent each positive group.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectorState {
    pub selected_row_per_positive_group: BTreeMap<u64, usize>,
}

impl SelectorState {
    /// Highest-scoring row of every positive group (first row on ties).
    pub fn from_model(model: &LinearModel, data: &Dataset) -> Self {
        let selected_row_per_positive_group = data
            .groups()
            .iter()
            .filter(|g| g.label.is_positive())
            .map(|g| {
                let mut best = g.rows.start;
                let mut best_score = model.score(data.row(best));
                for i in g.rows.clone().skip(1) {
                    let s = model.score(data.row(i));
                    if s > best_score {
                        best = i;
                        best_score = s;
                    }
                }
                (g.id, best)
            })
            .collect();
        SelectorState {
            selected_row_per_positive_group,
        }
    }

    /// The annotated key rows.
    pub fn from_keys(data: &Dataset) -> Self {
        SelectorState {
            selected_row_per_positive_group: data
                .groups()
                .iter()
                .filter_map(|g| g.key.map(|k| (g.id, k)))
                .collect(),
        }
    }

    fn representatives(&self, data: &Dataset) -> Vec<f64> {
        let mut reps = Vec::with_capacity(self.selected_row_per_positive_group.len() * data.dim());
        for &row in self.selected_row_per_positive_group.values() {
            reps.extend_from_slice(data.row(row));
        }
        reps
    }
}

/// Mean feature vector of every positive group, in group order.
fn group_means(data: &Dataset) -> Vec<f64> {
    let d = data.dim();
    let mut reps = Vec::new();
    for g in data.groups().iter().filter(|g| g.label.is_positive()) {
        let mut mean = vec![0.0; d];
        for i in g.rows.clone() {
            for (m, x) in mean.iter_mut().zip(data.row(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= g.len() as f64);
        reps.extend(mean);
    }
    reps
}

/// Per-candidate objective whose positives are explicit representative rows
/// (one per positive group) and whose negatives are every negative row.
pub struct RepresentativeObjective<'a> {
    data: &'a Dataset,
    positives: Vec<f64>,
    hyperparams: Hyperparams,
    threads: usize,
}

impl<'a> RepresentativeObjective<'a> {
    pub fn new(data: &'a Dataset, positives: Vec<f64>, hyperparams: Hyperparams, threads: usize) -> Result<Self> {
        if positives.len() % data.dim() != 0 {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                found: positives.len() % data.dim(),
            });
        }
        Ok(RepresentativeObjective {
            data,
            positives,
            hyperparams,
            threads: threads.max(1),
        })
    }

    pub fn evaluate(&self, model: &LinearModel, with_gradient: bool) -> Result<(ObjectiveValue, Option<GradientVector>)> {
        model.check_dim(self.data.dim())?;
        let hp = &self.hyperparams;
        let mut acc = LossAccumulator::new(model, hp, Aggregation::PerCandidate, with_gradient)?;
        for x in self.positives.chunks_exact(self.data.dim()) {
            acc.push_positive_row(x);
        }
        let run = |range: std::ops::Range<usize>| -> Result<LossAccumulator<'_>> {
            let mut part = LossAccumulator::new(model, hp, Aggregation::PerCandidate, with_gradient)?;
            for g in &self.data.groups()[range] {
                if g.label == Label::Negative {
                    part.push_negative_block(&self.data.block(g));
                }
            }
            Ok(part)
        };
        let ranges = partition_groups(self.data, self.threads);
        let parts: Vec<Result<LossAccumulator<'_>>> = if ranges.len() == 1 {
            vec![run(ranges[0].clone())]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = ranges.iter().cloned().map(|r| s.spawn(move || run(r))).collect();
                handles.into_iter().map(|h| h.join().expect("objective worker panicked")).collect()
            })
        };
        for p in parts {
            acc.merge(&p?);
        }
        acc.finish()
    }
}

impl Problem for RepresentativeObjective<'_> {
    fn dim(&self) -> usize {
        self.data.dim() + 1
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.evaluate(&LinearModel::from_point(x), false)
            .map(|(v, _)| v.total)
            .unwrap_or(f64::NAN)
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        match self.evaluate(&LinearModel::from_point(x), true) {
            Ok((v, Some(g))) => (v.total, g.to_point()),
            _ => (f64::NAN, vec![f64::NAN; x.len()]),
        }
    }
}

/// MI-SVM's inner objective for a fixed selector.
pub fn mi_svm_inner_objective(
    model: &LinearModel,
    data: &Dataset,
    selector: &SelectorState,
    hp: &Hyperparams,
) -> Result<ObjectiveValue> {
    let obj = RepresentativeObjective::new(data, selector.representatives(data), *hp, 1)?;
    Ok(obj.evaluate(model, false)?.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MiSvmOutcome {
    pub model: LinearModel,
    /// Selector computed from `model`.
    pub selector: SelectorState,
    pub outer_iterations: usize,
    /// True when the selector reached a fixed point before the cap.
    pub converged: bool,
    /// Solver trace of the last inner problem.
    pub trace: SolveTrace,
}

fn solve_inner(
    data: &Dataset,
    reps: Vec<f64>,
    start: &LinearModel,
    hp: &Hyperparams,
    cfg: &MiSvmConfig,
) -> Result<(LinearModel, SolveTrace)> {
    let obj = RepresentativeObjective::new(data, reps, *hp, cfg.threads)?;
    let (x, trace) = minimize(&obj, start.to_point(), &cfg.inner_solver)?;
    Ok((LinearModel::new(x[..data.dim()].to_vec(), x[data.dim()])?, trace))
}

/// Alternates between choosing the highest-scoring row of each positive group
/// and retraining, starting from the group means, until the selection stops
/// changing or `max_outer_iterations` inner problems have been solved. Each
/// retraining starts from the previous model. Key flags are ignored.
pub fn train_mi_svm(data: &Dataset, cfg: &MiSvmConfig) -> Result<MiSvmOutcome> {
    let hp = cfg.hyperparams()?;
    if data.n_positive_groups() == 0 {
        return Err(Error::config("MI-SVM needs at least one positive group"));
    }
    if data.n_negative_groups() == 0 {
        return Err(Error::config("MI-SVM needs at least one negative group"));
    }
    if cfg.max_outer_iterations == 0 {
        return Err(Error::config("max_outer_iterations must be at least 1"));
    }
    let (mut model, mut trace) = solve_inner(data, group_means(data), &LinearModel::zeros(data.dim()), &hp, cfg)?;
    let mut outer = 1;
    let mut previous: Option<SelectorState> = None;
    loop {
        let selector = SelectorState::from_model(&model, data);
        if log::log_enabled!(log::Level::Debug) {
            let changed = previous.as_ref().map_or(selector.selected_row_per_positive_group.len(), |p| {
                p.selected_row_per_positive_group
                    .iter()
                    .zip(&selector.selected_row_per_positive_group)
                    .filter(|(a, b)| a.1 != b.1)
                    .count()
            });
            log::debug!(
                "MI-SVM outer {outer}: inner {} after {} iterations, {changed} selections changed",
                trace.termination,
                trace.iterations
            );
        }
        if previous.as_ref() == Some(&selector) {
            return Ok(MiSvmOutcome {
                model,
                selector,
                outer_iterations: outer,
                converged: true,
                trace,
            });
        }
        if outer >= cfg.max_outer_iterations {
            log::warn!("MI-SVM stopped at the outer iteration cap ({outer}) before the selector settled");
            return Ok(MiSvmOutcome {
                model,
                selector,
                outer_iterations: outer,
                converged: false,
                trace,
            });
        }
        (model, trace) = solve_inner(data, selector.representatives(data), &model, &hp, cfg)?;
        outer += 1;
        previous = Some(selector);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Candidate;
    use crate::objective::eval_grouped;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(seed: u64, n: usize, sep: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cands = (0..n)
            .map(|i| {
                let pos = i % 2 == 0;
                let centre = if pos { sep } else { -sep };
                Candidate {
                    group_id: i as u64,
                    label: if pos { Label::Positive } else { Label::Negative },
                    is_key: pos,
                    features: vec![centre + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                }
            })
            .collect();
        Dataset::new(2, cands).unwrap()
    }

    #[test]
    fn separable_blobs_fully_classified() {
        let data = blobs(1, 40, 2.0);
        let hp = Hyperparams::new(0.9, 1.0, 0.5).unwrap();
        let m = train_svm_baseline(&data, &hp, &SolverConfig::default()).unwrap();
        for i in 0..data.n_rows() {
            let cd = data.candidate(i);
            assert!(m.soft_margin(&cd).unwrap() > 0.0, "row {i} misclassified");
        }
    }

    #[test]
    fn symmetric_pair_has_zero_bias() {
        let data = Dataset::new(
            2,
            vec![
                Candidate {
                    group_id: 0,
                    label: Label::Positive,
                    is_key: true,
                    features: vec![1.0, 0.0],
                },
                Candidate {
                    group_id: 1,
                    label: Label::Negative,
                    is_key: false,
                    features: vec![-1.0, 0.0],
                },
            ],
        )
        .unwrap();
        let hp = Hyperparams::new(0.5, 1.0, 0.0).unwrap();
        let m = train_svm_baseline(&data, &hp, &SolverConfig::default()).unwrap();
        assert!(m.w[0] > 0.0);
        assert!(m.b.abs() <= 1e-6, "b = {}", m.b);
    }

    #[test]
    fn optimum_beats_random_probes() {
        let data = blobs(2, 60, 0.5);
        let hp = Hyperparams::new(0.5, 1.0, 0.5).unwrap();
        let m = train_svm_baseline(&data, &hp, &SolverConfig::default()).unwrap();
        let best = crate::objective::eval_per_candidate(&m, &data, &hp).unwrap().total;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let probe = LinearModel::new(
                vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)],
                rng.random_range(-3.0..3.0),
            )
            .unwrap();
            let v = crate::objective::eval_per_candidate(&probe, &data, &hp).unwrap().total;
            assert!(best <= v + 1e-12);
        }
    }

    fn bags(seed: u64, n_pos: usize, n_neg: usize, bag: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cands = Vec::new();
        for g in 0..(n_pos + n_neg) {
            let pos = g < n_pos;
            let key = rng.random_range(0..bag);
            for i in 0..bag {
                let shift = if pos && i == key { 2.5 } else { 0.0 };
                cands.push(Candidate {
                    group_id: g as u64,
                    label: if pos { Label::Positive } else { Label::Negative },
                    is_key: pos && i == key,
                    features: vec![shift + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                });
            }
        }
        Dataset::new(2, cands).unwrap()
    }

    #[test]
    fn singleton_positive_bags_match_svm() {
        let mut data_rows: Vec<Candidate> = bags(3, 0, 6, 3).candidates().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for g in 100..104u64 {
            data_rows.push(Candidate {
                group_id: g,
                label: Label::Positive,
                is_key: true,
                features: vec![1.5 + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            });
        }
        let data = Dataset::new(2, data_rows).unwrap();
        let cfg = MiSvmConfig::default();
        let out = train_mi_svm(&data, &cfg).unwrap();
        assert!(out.converged);
        assert!(out.outer_iterations <= 2);
        let svm = train_svm_baseline(&data, &cfg.hyperparams().unwrap(), &cfg.inner_solver).unwrap();
        for (a, b) in out.model.w.iter().zip(&svm.w) {
            assert!((a - b).abs() <= 1e-6);
        }
        assert!((out.model.b - svm.b).abs() <= 1e-6);
    }

    #[test]
    fn selector_reaches_fixed_point_and_is_argmax() {
        let data = bags(5, 10, 10, 8);
        let out = train_mi_svm(&data, &MiSvmConfig::default()).unwrap();
        assert!(out.outer_iterations <= 50);
        assert!(out.converged);
        for (gid, &row) in &out.selector.selected_row_per_positive_group {
            let g = data.group(*gid).unwrap();
            assert!(g.rows.contains(&row));
            let s = out.model.score(data.row(row));
            for i in g.rows.clone() {
                assert!(out.model.score(data.row(i)) <= s);
            }
        }
    }

    #[test]
    fn key_selector_matches_grouped_objective_with_singleton_negatives() {
        let mut cands: Vec<Candidate> = bags(6, 5, 0, 4).candidates().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for g in 50..70u64 {
            cands.push(Candidate {
                group_id: g,
                label: Label::Negative,
                is_key: false,
                features: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            });
        }
        let data = Dataset::new(2, cands).unwrap();
        let hp = Hyperparams::new(0.7, 1.0, 0.5).unwrap();
        let selector = SelectorState::from_keys(&data);
        for _ in 0..5 {
            let m = LinearModel::new(vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)], rng.random_range(-1.0..1.0))
                .unwrap();
            let a = mi_svm_inner_objective(&m, &data, &selector, &hp).unwrap().total;
            let b = eval_grouped(&m, &data, &hp).unwrap().total;
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn no_positive_groups_is_an_error() {
        let data = bags(8, 0, 4, 3);
        assert!(matches!(train_mi_svm(&data, &MiSvmConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn lambda_mapping_round_trips() {
        for c in [0.01, 1.0, 19.0] {
            let cfg = MiSvmConfig {
                c_tradeoff: c,
                ..MiSvmConfig::default()
            };
            assert!((MiSvmConfig::c_for_lambda(cfg.lambda()) - c).abs() < 1e-12 * c.max(1.0));
        }
    }
}
