//! Train several algorithms on one split and report candidate and group AUC
//! for each.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::evaluate_model;
use crate::model::{Dataset, Hyperparams, Label};
use crate::train::{train, Algorithm, TrainOptions};

/// Splits groups into (train, test), stratified by polarity: a
/// `test_fraction` share of each class (rounded, at least one) goes to test.
pub fn split_groups(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter {
            name: "test_fraction",
            value: test_fraction,
            reason: "must lie in (0, 1)",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fit = Vec::new();
    let mut test = Vec::new();
    for label in [Label::Positive, Label::Negative] {
        let mut idx: Vec<usize> = (0..data.groups().len())
            .filter(|&i| data.groups()[i].label == label)
            .collect();
        if idx.len() < 2 {
            return Err(Error::config("each class needs at least two groups to split"));
        }
        idx.shuffle(&mut rng);
        let n_test = ((idx.len() as f64 * test_fraction).round() as usize).clamp(1, idx.len() - 1);
        test.extend_from_slice(&idx[..n_test]);
        fit.extend_from_slice(&idx[n_test..]);
    }
    fit.sort_unstable();
    test.sort_unstable();
    Ok((data.subset_groups(&fit)?, data.subset_groups(&test)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub algorithm: Algorithm,
    pub hyperparams: Hyperparams,
    pub candidate_auc: f64,
    pub group_auc: f64,
    pub termination: String,
    pub iterations: usize,
    pub outer_iterations: Option<usize>,
}

/// Trains each `(algorithm, hyperparams)` pair on `fit` and scores it on
/// `test`, in the given order.
pub fn compare(
    fit: &Dataset,
    test: &Dataset,
    runs: &[(Algorithm, Hyperparams)],
    opts: &TrainOptions,
) -> Result<Vec<CompareRow>> {
    runs.iter()
        .map(|&(algorithm, hyperparams)| {
            let report = train(fit, algorithm, &hyperparams, opts)?;
            let (eval, _) = evaluate_model(&report.model, test)?;
            log::info!(
                "{algorithm}: candidate AUC {:.4}, group AUC {:.4} ({})",
                eval.candidate_auc,
                eval.group_auc,
                report.trace.termination
            );
            Ok(CompareRow {
                algorithm,
                hyperparams,
                candidate_auc: eval.candidate_auc,
                group_auc: eval.group_auc,
                termination: report.trace.termination.to_string(),
                iterations: report.trace.iterations,
                outer_iterations: report.outer_iterations,
            })
        })
        .collect()
}

/// The standard four-way line-up: both objectives with `hp`, and the two
/// hinge baselines with `delta = 0` and Huber width `baseline_epsilon`.
pub fn standard_runs(hp: &Hyperparams, baseline_epsilon: f64) -> Result<Vec<(Algorithm, Hyperparams)>> {
    let baseline = Hyperparams::new(hp.lambda, baseline_epsilon, 0.0)?;
    Ok(vec![
        (Algorithm::Gcm, *hp),
        (Algorithm::GcmNoGroup, *hp),
        (Algorithm::Svm, baseline),
        (Algorithm::MiSvm, baseline),
    ])
}

pub fn write_compare_csv<W: std::io::Write>(rows: &[CompareRow], mut out: W) -> Result<()> {
    writeln!(
        out,
        "algorithm,lambda,epsilon,delta,candidate_auc,group_auc,termination,iterations,outer_iterations"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.algorithm,
            r.hyperparams.lambda,
            r.hyperparams.epsilon,
            r.hyperparams.delta,
            r.candidate_auc,
            r.group_auc,
            r.termination,
            r.iterations,
            r.outer_iterations.map_or(String::new(), |o| o.to_string())
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::synth::{generate, GeneratorSpec};

    #[test]
    fn split_is_stratified_and_disjoint() {
        let data = generate(&GeneratorSpec {
            n_pos_groups: 10,
            n_neg_groups: 30,
            min_candidates: 2,
            max_candidates: 4,
            ..GeneratorSpec::default()
        })
        .unwrap();
        let (fit, test) = split_groups(&data, 0.3, 5).unwrap();
        assert_eq!(test.n_positive_groups(), 3);
        assert_eq!(test.n_negative_groups(), 9);
        assert_eq!(fit.groups().len() + test.groups().len(), 40);
        for g in test.groups() {
            assert!(fit.group(g.id).is_none());
        }
        assert_eq!(split_groups(&data, 0.3, 5).unwrap(), (fit, test));
    }

    #[test]
    fn easy_preset_is_solved_by_every_algorithm() {
        let data = generate(&GeneratorSpec::preset("easy", 1).unwrap()).unwrap();
        let (fit, test) = split_groups(&data, 0.5, 1).unwrap();
        let runs = standard_runs(&Hyperparams::default(), 100.0).unwrap();
        let rows = compare(&fit, &test, &runs, &TrainOptions::default()).unwrap();
        assert_eq!(rows.len(), 4);
        let gcm = &rows[0];
        assert!(gcm.group_auc >= 0.99, "group AUC {}", gcm.group_auc);
        let mut csv = Vec::new();
        write_compare_csv(&rows, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
    }
}
