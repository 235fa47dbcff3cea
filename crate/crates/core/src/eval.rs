//! Group scoring, ROC/AUC at candidate and group level, and cross-validation
//! over λ.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Hyperparams, Label, LinearModel};
use crate::train::{train, Algorithm, TrainOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredGroup {
    pub group_id: u64,
    pub label: Label,
    /// Maximum raw score over the group's candidates.
    pub group_score: f64,
    /// Dataset row attaining `group_score` (first one on ties).
    pub argmax_row: usize,
}

pub fn score_groups(model: &LinearModel, data: &Dataset) -> Result<Vec<ScoredGroup>> {
    model.check_dim(data.dim())?;
    data.groups()
        .iter()
        .map(|g| {
            if g.is_empty() {
                return Err(Error::config(format!("group {} has no candidates", g.id)));
            }
            let mut best = g.rows.start;
            let mut best_score = model.score(data.row(best));
            for i in g.rows.clone().skip(1) {
                let s = model.score(data.row(i));
                if s > best_score {
                    best = i;
                    best_score = s;
                }
            }
            Ok(ScoredGroup {
                group_id: g.id,
                label: g.label,
                group_score: best_score,
                argmax_row: best,
            })
        })
        .collect()
}

/// Scores of the rows that carry a candidate-level label: key rows of
/// positive groups and every negative row.
pub fn candidate_scores(model: &LinearModel, data: &Dataset) -> Result<Vec<(f64, Label)>> {
    model.check_dim(data.dim())?;
    let mut out = Vec::with_capacity(data.n_negative_rows() + data.n_positive_groups());
    for g in data.groups() {
        match g.label {
            Label::Positive => {
                if let Some(k) = g.key {
                    out.push((model.score(data.row(k)), Label::Positive));
                }
            }
            Label::Negative => out.extend(g.rows.clone().map(|i| (model.score(data.row(i)), Label::Negative))),
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Items scoring at or above this value are called positive. The first
    /// point uses `+inf`.
    pub threshold: f64,
}

/// ROC curve over distinct score thresholds, descending, with tied scores
/// crossing the threshold together, and its trapezoidal area.
pub fn roc_auc(scores: &[(f64, Label)]) -> Result<(Vec<RocPoint>, f64)> {
    if scores.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::Numerical("NaN score in ROC input".into()));
    }
    let n_pos = scores.iter().filter(|(_, l)| l.is_positive()).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::config("ROC needs both positive and negative items"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut roc = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        let (prev_tp, prev_fp) = (tp, fp);
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1.is_positive() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area += (fp - prev_fp) as f64 * (tp + prev_tp) as f64 / 2.0;
        roc.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold,
        });
    }
    Ok((roc, area / (n_pos as f64 * n_neg as f64)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub candidate_roc: Vec<RocPoint>,
    pub candidate_auc: f64,
    pub group_roc: Vec<RocPoint>,
    pub group_auc: f64,
}

pub fn evaluate_model(model: &LinearModel, data: &Dataset) -> Result<(EvalReport, Vec<ScoredGroup>)> {
    let (candidate_roc, candidate_auc) = roc_auc(&candidate_scores(model, data)?)?;
    let groups = score_groups(model, data)?;
    let group_pairs: Vec<(f64, Label)> = groups.iter().map(|g| (g.group_score, g.label)).collect();
    let (group_roc, group_auc) = roc_auc(&group_pairs)?;
    Ok((
        EvalReport {
            candidate_roc,
            candidate_auc,
            group_roc,
            group_auc,
        },
        groups,
    ))
}

impl EvalReport {
    /// `level,fpr,tpr,threshold` rows for both curves, then one
    /// `# candidate_auc=… group_auc=…` line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "level,fpr,tpr,threshold")?;
        for (level, roc) in [("candidate", &self.candidate_roc), ("group", &self.group_roc)] {
            for p in roc {
                writeln!(out, "{level},{},{},{}", p.fpr, p.tpr, p.threshold)?;
            }
        }
        writeln!(out, "# candidate_auc={} group_auc={}", self.candidate_auc, self.group_auc)?;
        Ok(())
    }
}

pub fn write_groups_csv<W: Write>(groups: &[ScoredGroup], mut out: W) -> Result<()> {
    writeln!(out, "group_id,label,group_score,argmax_row")?;
    for g in groups {
        writeln!(out, "{},{},{},{}", g.group_id, g.label.as_i8(), g.group_score, g.argmax_row)?;
    }
    Ok(())
}

/// `0.05, 0.10, …, 0.95`.
pub fn default_lambda_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: usize,
    pub lambda_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for CvPlan {
    fn default() -> Self {
        CvPlan {
            folds: 5,
            lambda_grid: default_lambda_grid(),
            seed: 0,
        }
    }
}

impl CvPlan {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidParameter {
                name: "folds",
                value: self.folds as f64,
                reason: "need at least 2 folds",
            });
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::config("lambda grid is empty"));
        }
        for &l in &self.lambda_grid {
            if !(l > 0.0 && l < 1.0) {
                return Err(Error::InvalidParameter {
                    name: "lambda",
                    value: l,
                    reason: "grid values must lie in (0, 1)",
                });
            }
        }
        Ok(())
    }
}

/// Fold index for every group position. Positive and negative groups are
/// shuffled separately and dealt round-robin, so per-fold class counts differ
/// by at most one from balance.
pub fn assign_folds(data: &Dataset, plan: &CvPlan) -> Result<Vec<usize>> {
    plan.validate()?;
    if data.groups().len() < plan.folds {
        return Err(Error::config(format!(
            "{} groups cannot fill {} folds",
            data.groups().len(),
            plan.folds
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut folds = vec![0; data.groups().len()];
    let mut offset = 0;
    for label in [Label::Positive, Label::Negative] {
        let mut idx: Vec<usize> = (0..data.groups().len())
            .filter(|&i| data.groups()[i].label == label)
            .collect();
        idx.shuffle(&mut rng);
        for (j, &g) in idx.iter().enumerate() {
            folds[g] = (offset + j) % plan.folds;
        }
        // continue the deal where the positives stopped
        offset = (offset + idx.len()) % plan.folds;
    }
    Ok(folds)
}

/// Which validation AUC picks λ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionLevel {
    Candidate,
    Group,
}

impl SelectionLevel {
    pub fn for_algorithm(algo: Algorithm) -> Self {
        if algo.is_grouped() {
            SelectionLevel::Group
        } else {
            SelectionLevel::Candidate
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub mean_group_auc: f64,
    pub mean_candidate_auc: f64,
    pub folds_used: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub best_lambda: f64,
    pub selection: SelectionLevel,
    pub scores: Vec<LambdaScore>,
}

/// Grid search over λ with `epsilon` and `delta` held fixed. Folds whose
/// training or validation part lacks a class are skipped.
pub fn cross_validate(
    data: &Dataset,
    algo: Algorithm,
    plan: &CvPlan,
    epsilon: f64,
    delta: f64,
    opts: &TrainOptions,
) -> Result<CvOutcome> {
    cross_validate_by(data, algo, plan, epsilon, delta, opts, SelectionLevel::for_algorithm(algo))
}

pub fn cross_validate_by(
    data: &Dataset,
    algo: Algorithm,
    plan: &CvPlan,
    epsilon: f64,
    delta: f64,
    opts: &TrainOptions,
    selection: SelectionLevel,
) -> Result<CvOutcome> {
    let fold_of = assign_folds(data, plan)?;
    let mut splits = Vec::new();
    for fold in 0..plan.folds {
        let (valid, fit): (Vec<usize>, Vec<usize>) = (0..fold_of.len()).partition(|&g| fold_of[g] == fold);
        let fit_data = data.subset_groups(&fit)?;
        let valid_data = data.subset_groups(&valid)?;
        let usable = fit_data.n_positive_groups() > 0
            && fit_data.n_negative_groups() > 0
            && valid_data.n_positive_groups() > 0
            && valid_data.n_negative_groups() > 0;
        if usable {
            splits.push((fit_data, valid_data));
        } else {
            log::warn!("fold {fold} skipped: a class is missing from its training or validation part");
        }
    }
    if splits.is_empty() {
        return Err(Error::config("every fold lacks a class; cannot cross-validate"));
    }
    let mut scores = Vec::with_capacity(plan.lambda_grid.len());
    for &lambda in &plan.lambda_grid {
        let hp = Hyperparams::new(lambda, epsilon, delta)?;
        let (mut g_sum, mut c_sum) = (0.0, 0.0);
        for (fit_data, valid_data) in &splits {
            let report = train(fit_data, algo, &hp, opts)?;
            let (eval, _) = evaluate_model(&report.model, valid_data)?;
            g_sum += eval.group_auc;
            c_sum += eval.candidate_auc;
        }
        let n = splits.len() as f64;
        log::info!("lambda {lambda}: group AUC {:.4}, candidate AUC {:.4}", g_sum / n, c_sum / n);
        scores.push(LambdaScore {
            lambda,
            mean_group_auc: g_sum / n,
            mean_candidate_auc: c_sum / n,
            folds_used: splits.len(),
        });
    }
    let key = |s: &LambdaScore| match selection {
        SelectionLevel::Group => s.mean_group_auc,
        SelectionLevel::Candidate => s.mean_candidate_auc,
    };
    let mut best = &scores[0];
    for s in &scores[1..] {
        if key(s) > key(best) {
            best = s;
        }
    }
    Ok(CvOutcome {
        best_lambda: best.lambda,
        selection,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Candidate;
    use rand::Rng;

    fn cand(group_id: u64, label: Label, is_key: bool, x: f64) -> Candidate {
        Candidate {
            group_id,
            label,
            is_key,
            features: vec![x],
        }
    }

    fn pair_count_auc(scores: &[(f64, Label)]) -> f64 {
        let mut hits = 0.0;
        let (mut np, mut nn) = (0, 0);
        for (s, l) in scores {
            if l.is_positive() {
                np += 1;
            } else {
                nn += 1;
            }
            for (s2, l2) in scores {
                if l.is_positive() && !l2.is_positive() {
                    hits += if s > s2 {
                        1.0
                    } else if s == s2 {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        hits / (np * nn) as f64
    }

    #[test]
    fn group_score_is_the_max() {
        let data = Dataset::new(
            1,
            vec![
                cand(4, Label::Positive, true, -1.0),
                cand(4, Label::Positive, false, 0.3),
                cand(4, Label::Positive, false, 2.2),
                cand(4, Label::Positive, false, -0.7),
                cand(9, Label::Negative, false, 0.5),
            ],
        )
        .unwrap();
        let identity = LinearModel::new(vec![1.0], 0.0).unwrap();
        let groups = score_groups(&identity, &data).unwrap();
        assert_eq!(groups[0].group_score, 2.2);
        assert_eq!(groups[0].argmax_row, 2);
        assert_eq!(groups[1].group_score, 0.5);
        assert_eq!(groups[1].argmax_row, 4);
    }

    #[test]
    fn group_score_matches_naive_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut cands = Vec::new();
        for g in 0..30u64 {
            let pos = g % 3 == 0;
            let len = rng.random_range(1..7);
            let key = rng.random_range(0..len);
            for i in 0..len {
                cands.push(Candidate {
                    group_id: g,
                    label: if pos { Label::Positive } else { Label::Negative },
                    is_key: pos && i == key,
                    features: vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
                });
            }
        }
        let data = Dataset::new(2, cands).unwrap();
        let m = LinearModel::new(vec![0.7, -1.3], 0.2).unwrap();
        for sg in score_groups(&m, &data).unwrap() {
            let g = data.group(sg.group_id).unwrap();
            let naive = g.rows.clone().map(|i| m.score(data.row(i))).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(sg.group_score, naive);
        }
    }

    #[test]
    fn ties_pick_lowest_row() {
        let data = Dataset::new(
            1,
            vec![
                cand(0, Label::Positive, true, 1.0),
                cand(0, Label::Positive, false, 1.0),
                cand(1, Label::Negative, false, 0.0),
            ],
        )
        .unwrap();
        let m = LinearModel::new(vec![1.0], 0.0).unwrap();
        assert_eq!(score_groups(&m, &data).unwrap()[0].argmax_row, 0);
    }

    #[test]
    fn auc_examples() {
        let sep = [(3.0, Label::Positive), (2.0, Label::Positive), (1.0, Label::Negative), (0.0, Label::Negative)];
        assert_eq!(roc_auc(&sep).unwrap().1, 1.0);
        let flat = [(1.0, Label::Positive), (1.0, Label::Negative), (1.0, Label::Negative)];
        let (roc, auc) = roc_auc(&flat).unwrap();
        assert_eq!(auc, 0.5);
        assert_eq!(roc.len(), 2);
        assert!(matches!(roc_auc(&[(1.0, Label::Positive)]), Err(Error::Config(_))));
    }

    #[test]
    fn auc_matches_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for round in 0..50 {
            let n = if round == 0 { 10 } else { rng.random_range(2..40) };
            let mut scores: Vec<(f64, Label)> = (0..n)
                .map(|i| {
                    // coarse scores force ties in later rounds
                    let s = if round % 2 == 0 { rng.random::<f64>() } else { rng.random_range(0..4) as f64 };
                    (s, if i % 2 == 0 { Label::Positive } else { Label::Negative })
                })
                .collect();
            scores.shuffle(&mut rng);
            let (roc, auc) = roc_auc(&scores).unwrap();
            assert!((auc - pair_count_auc(&scores)).abs() < 1e-12);
            for w in roc.windows(2) {
                assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            }
            let last = roc.last().unwrap();
            assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let scores: Vec<(f64, Label)> = (0..60)
            .map(|i| (rng.random_range(-3.0..3.0), if i % 3 == 0 { Label::Positive } else { Label::Negative }))
            .collect();
        let mapped: Vec<(f64, Label)> = scores.iter().map(|&(s, l)| (s.exp() * 2.0 + 1.0, l)).collect();
        assert_eq!(roc_auc(&scores).unwrap().1, roc_auc(&mapped).unwrap().1);
    }

    fn blobs(seed: u64, n_pos: usize, n_neg: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cands = Vec::new();
        for g in 0..(n_pos + n_neg) {
            let pos = g < n_pos;
            for i in 0..3 {
                let shift = if pos && i == 0 { 1.5 } else { 0.0 };
                cands.push(Candidate {
                    group_id: g as u64,
                    label: if pos { Label::Positive } else { Label::Negative },
                    is_key: pos && i == 0,
                    features: vec![shift + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                });
            }
        }
        Dataset::new(2, cands).unwrap()
    }

    #[test]
    fn folds_are_stratified_and_never_split_groups() {
        let data = blobs(1, 13, 41);
        let plan = CvPlan {
            folds: 5,
            ..CvPlan::default()
        };
        let folds = assign_folds(&data, &plan).unwrap();
        assert_eq!(folds.len(), data.groups().len());
        for label in [Label::Positive, Label::Negative] {
            let total = data.groups().iter().filter(|g| g.label == label).count();
            for f in 0..5 {
                let c = (0..folds.len()).filter(|&g| folds[g] == f && data.groups()[g].label == label).count();
                let ideal = total as f64 / 5.0;
                assert!((c as f64 - ideal).abs() <= 1.0, "fold {f} has {c} of {total}");
            }
        }
        assert_eq!(folds, assign_folds(&data, &plan).unwrap());
    }

    #[test]
    fn single_lambda_grid_returns_it() {
        let data = blobs(2, 10, 20);
        let plan = CvPlan {
            folds: 3,
            lambda_grid: vec![0.3],
            seed: 1,
        };
        let out = cross_validate(&data, Algorithm::Gcm, &plan, 1.0, 0.5, &TrainOptions::default()).unwrap();
        assert_eq!(out.best_lambda, 0.3);
        assert_eq!(out.scores.len(), 1);
        assert_eq!(out.scores[0].folds_used, 3);
    }

    #[test]
    fn cv_is_deterministic() {
        let data = blobs(3, 10, 20);
        let plan = CvPlan {
            folds: 3,
            lambda_grid: vec![0.2, 0.5, 0.8],
            seed: 9,
        };
        let a = cross_validate(&data, Algorithm::Gcm, &plan, 1.0, 0.5, &TrainOptions::default()).unwrap();
        let b = cross_validate(&data, Algorithm::Gcm, &plan, 1.0, 0.5, &TrainOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cv_rejects_one_fold_and_single_class_folds() {
        let data = blobs(4, 1, 20);
        let one = CvPlan {
            folds: 1,
            ..CvPlan::default()
        };
        assert!(matches!(assign_folds(&data, &one), Err(Error::InvalidParameter { .. })));
        // a single positive group leaves every fold without a class somewhere
        let plan = CvPlan {
            folds: 2,
            lambda_grid: vec![0.5],
            seed: 0,
        };
        assert!(matches!(
            cross_validate(&data, Algorithm::Gcm, &plan, 1.0, 0.5, &TrainOptions::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn csv_output_is_stable() {
        let data = blobs(5, 6, 6);
        let m = LinearModel::new(vec![1.0, 0.0], 0.0).unwrap();
        let (report, groups) = evaluate_model(&m, &data).unwrap();
        let mut a = Vec::new();
        report.write_csv(&mut a).unwrap();
        let mut b = Vec::new();
        report.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("level,fpr,tpr,threshold\ncandidate,0,0,inf\n"));
        assert!(text.trim_end().lines().last().unwrap().starts_with("# candidate_auc="));
        let mut g = Vec::new();
        write_groups_csv(&groups, &mut g).unwrap();
        assert_eq!(String::from_utf8(g).unwrap().lines().count(), 13);
    }
}
