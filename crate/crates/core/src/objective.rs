//! Training objectives and their (sub)gradients.
//!
//! Both objectives share the regulariser `(1-λ)/d · Σ_j huber(w_j)` and
//! class-balanced loss terms `λ/n₊ · Σ loss₊ + λ/n₋ · Σ loss₋`:
//!
//! * [`Aggregation::PerCandidate`] sums the smoothed hinge loss of every
//!   labelled candidate; `n₊`, `n₋` count candidates.
//! * [`Aggregation::Grouped`] (GCM) takes the key candidate of each positive
//!   group and the worst (maximal-loss) candidate of each negative group;
//!   `n₊`, `n₋` count groups.
//!
//! The labelled candidates of the per-candidate objective are the key rows of
//! positive groups and all rows of negative groups. Non-key rows of positive
//! groups carry no candidate-level annotation and are left out of training.
//!
//! Evaluation streams over [`GroupBlock`]s, keeping only `(max loss, argmax)`
//! per negative group, so the in-memory dataset and the binary stream reader
//! run exactly the same arithmetic.

use crate::error::{Error, Result};
use crate::model::{Aggregation, Dataset, GroupBlock, Hyperparams, Label, LinearModel, ObjectiveSpec};
use crate::penalty::{HingeRegion, Huber, SmoothedHinge};
use crate::solver::Problem;

/// Objective value split into its three summands.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveValue {
    pub total: f64,
    pub regularization_term: f64,
    pub positive_loss_term: f64,
    pub negative_loss_term: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector {
    pub grad_w: Vec<f64>,
    pub grad_b: f64,
}

impl GradientVector {
    pub fn to_point(&self) -> Vec<f64> {
        let mut v = self.grad_w.clone();
        v.push(self.grad_b);
        v
    }
}

/// Rows whose soft margin lies in the linear (`t < 1-2δ`) or quadratic
/// (`1-2δ <= t < 1`) region of the loss, among the rows that contribute.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ActiveSets {
    pub linear_set: Vec<usize>,
    pub quadratic_set: Vec<usize>,
}

/// How a negative group's row losses collapse to one number; only used for
/// diagnostics, training always uses the max.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupReduction {
    Max,
    Mean,
}

/// Running sums for one class.
#[derive(Clone, Debug, PartialEq)]
struct ClassSums {
    loss: f64,
    count: usize,
    grad_w: Vec<f64>,
    grad_b: f64,
}

impl ClassSums {
    fn new(d: usize, with_gradient: bool) -> Self {
        ClassSums {
            loss: 0.0,
            count: 0,
            grad_w: if with_gradient { vec![0.0; d] } else { Vec::new() },
            grad_b: 0.0,
        }
    }

    fn merge(&mut self, other: &ClassSums) {
        self.loss += other.loss;
        self.count += other.count;
        for (a, b) in self.grad_w.iter_mut().zip(&other.grad_w) {
            *a += b;
        }
        self.grad_b += other.grad_b;
    }
}

/// Streaming accumulator for the objective and its gradient.
///
/// Feed it group blocks (or explicit positive rows) in a fixed order, then
/// call [`LossAccumulator::finish`]. Partial accumulators built over
/// consecutive block ranges can be combined with [`LossAccumulator::merge`].
#[derive(Clone, Debug)]
pub struct LossAccumulator<'m> {
    model: &'m LinearModel,
    hinge: SmoothedHinge,
    huber: Huber,
    lambda: f64,
    aggregation: Aggregation,
    with_gradient: bool,
    pos: ClassSums,
    neg: ClassSums,
    active: Option<ActiveSets>,
}

impl<'m> LossAccumulator<'m> {
    pub fn new(
        model: &'m LinearModel,
        hp: &Hyperparams,
        aggregation: Aggregation,
        with_gradient: bool,
    ) -> Result<Self> {
        hp.validate()?;
        let d = model.dim();
        Ok(LossAccumulator {
            model,
            hinge: SmoothedHinge::new(hp.delta)?,
            huber: Huber::new(hp.epsilon)?,
            lambda: hp.lambda,
            aggregation,
            with_gradient,
            pos: ClassSums::new(d, with_gradient),
            neg: ClassSums::new(d, with_gradient),
            active: None,
        })
    }

    /// Also record the active sets of contributing rows.
    pub fn track_active_sets(mut self) -> Self {
        self.active = Some(ActiveSets::default());
        self
    }

    fn add_row(&mut self, x: &[f64], label: Label, row: Option<usize>) {
        let y = label.sign();
        let t = y * self.model.score(x);
        let loss = self.hinge.value(t);
        let region = self.hinge.region(t);
        if let (Some(active), Some(row)) = (self.active.as_mut(), row) {
            match region {
                HingeRegion::Linear => active.linear_set.push(row),
                HingeRegion::Quadratic => active.quadratic_set.push(row),
                HingeRegion::Inactive => {}
            }
        }
        let with_gradient = self.with_gradient;
        let sums = match label {
            Label::Positive => &mut self.pos,
            Label::Negative => &mut self.neg,
        };
        sums.loss += loss;
        sums.count += 1;
        if with_gradient {
            // d loss / d score = y · L'(t): -y on the linear region,
            // y(t-1)/(2δ) on the quadratic one
            if region == HingeRegion::Inactive {
                return;
            }
            let g = y * self.hinge.derivative(t);
            for (gw, xi) in sums.grad_w.iter_mut().zip(x) {
                *gw += g * xi;
            }
            sums.grad_b += g;
        }
    }

    /// Adds one positive candidate outside any dataset (e.g. MI-SVM's
    /// selected or averaged rows).
    pub fn push_positive_row(&mut self, x: &[f64]) {
        self.add_row(x, Label::Positive, None);
    }

    /// Adds one group according to the configured aggregation.
    pub fn push_block(&mut self, block: &GroupBlock<'_>) {
        match block.label {
            Label::Positive => {
                if let Some(k) = block.key {
                    self.add_row(block.row(k), Label::Positive, Some(block.first_row + k));
                }
            }
            Label::Negative => self.push_negative_block(block),
        }
    }

    /// Adds a negative group according to the configured aggregation.
    pub fn push_negative_block(&mut self, block: &GroupBlock<'_>) {
        debug_assert_eq!(block.label, Label::Negative);
        match self.aggregation {
            Aggregation::PerCandidate => {
                for (i, x) in block.rows().enumerate() {
                    self.add_row(x, Label::Negative, Some(block.first_row + i));
                }
            }
            Aggregation::Grouped => {
                if let Some(i) = argmax_loss(self.model, &self.hinge, block) {
                    self.add_row(block.row(i), Label::Negative, Some(block.first_row + i));
                }
            }
        }
    }

    /// Appends the sums of an accumulator built over the following blocks.
    pub fn merge(&mut self, other: &LossAccumulator<'_>) {
        self.pos.merge(&other.pos);
        self.neg.merge(&other.neg);
        if let (Some(a), Some(b)) = (self.active.as_mut(), other.active.as_ref()) {
            a.linear_set.extend_from_slice(&b.linear_set);
            a.quadratic_set.extend_from_slice(&b.quadratic_set);
        }
    }

    /// Number of rows (or groups) that contributed a loss term, per class.
    pub fn counts(&self) -> (usize, usize) {
        (self.pos.count, self.neg.count)
    }

    pub fn take_active_sets(&mut self) -> Option<ActiveSets> {
        self.active.take()
    }

    /// Normalises the sums and adds the regulariser.
    pub fn finish(&self) -> Result<(ObjectiveValue, Option<GradientVector>)> {
        let lambda = self.lambda;
        let d = self.model.dim() as f64;
        if lambda > 0.0 && (self.pos.count == 0 || self.neg.count == 0) {
            return Err(Error::config(format!(
                "both classes must be present when lambda > 0 (positive terms: {}, negative terms: {})",
                self.pos.count, self.neg.count
            )));
        }
        let (pos_scale, neg_scale) = if lambda > 0.0 {
            (lambda / self.pos.count as f64, lambda / self.neg.count as f64)
        } else {
            (0.0, 0.0)
        };
        let reg_scale = (1.0 - lambda) / d;
        let regularization_term = reg_scale * self.model.w.iter().map(|&w| self.huber.value(w)).sum::<f64>();
        let positive_loss_term = pos_scale * self.pos.loss;
        let negative_loss_term = neg_scale * self.neg.loss;
        let value = ObjectiveValue {
            total: regularization_term + positive_loss_term + negative_loss_term,
            regularization_term,
            positive_loss_term,
            negative_loss_term,
        };
        let grad = self.with_gradient.then(|| {
            let grad_w = self
                .model
                .w
                .iter()
                .zip(self.pos.grad_w.iter().zip(&self.neg.grad_w))
                .map(|(&w, (gp, gn))| reg_scale * self.huber.derivative(w) + pos_scale * gp + neg_scale * gn)
                .collect();
            GradientVector {
                grad_w,
                grad_b: pos_scale * self.pos.grad_b + neg_scale * self.neg.grad_b,
            }
        });
        Ok((value, grad))
    }
}

/// Row (offset in the block) with the largest loss; the first one on ties.
pub fn argmax_loss(model: &LinearModel, hinge: &SmoothedHinge, block: &GroupBlock<'_>) -> Option<usize> {
    let y = block.label.sign();
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in block.rows().enumerate() {
        let loss = hinge.value(y * model.score(x));
        match best {
            Some((_, b)) if loss <= b => {}
            _ => best = Some((i, loss)),
        }
    }
    best.map(|(i, _)| i)
}

/// Splits the groups into at most `parts` contiguous ranges of similar row
/// counts. The split depends only on the dataset and `parts`.
pub fn partition_groups(data: &Dataset, parts: usize) -> Vec<std::ops::Range<usize>> {
    let groups = data.groups();
    let parts = parts.max(1);
    let total = data.n_rows();
    let mut ranges = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 1..parts {
        let target = total * p / parts;
        let mut end = start;
        while end < groups.len() && groups[end].rows.end <= target {
            end += 1;
        }
        if end > start {
            ranges.push(start..end);
            start = end;
        }
    }
    if start < groups.len() || ranges.is_empty() {
        ranges.push(start..groups.len());
    }
    ranges
}

/// Evaluates the objective over an in-memory dataset, optionally split over
/// `threads` workers. Partial sums are combined in group order, so results
/// are bit-identical for a fixed thread count.
pub fn evaluate(
    model: &LinearModel,
    data: &Dataset,
    hp: &Hyperparams,
    aggregation: Aggregation,
    with_gradient: bool,
    threads: usize,
) -> Result<(ObjectiveValue, Option<GradientVector>)> {
    model.check_dim(data.dim())?;
    let ranges = partition_groups(data, threads);
    let run = |range: std::ops::Range<usize>| -> Result<LossAccumulator<'_>> {
        let mut acc = LossAccumulator::new(model, hp, aggregation, with_gradient)?;
        for g in &data.groups()[range] {
            acc.push_block(&data.block(g));
        }
        Ok(acc)
    };
    let partials: Vec<Result<LossAccumulator<'_>>> = if ranges.len() == 1 {
        vec![run(ranges[0].clone())]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = ranges.iter().cloned().map(|r| s.spawn(move || run(r))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("objective worker panicked"))
                .collect()
        })
    };
    let mut it = partials.into_iter();
    let mut acc = it.next().expect("at least one partition")?;
    for p in it {
        acc.merge(&p?);
    }
    acc.finish()
}

pub fn eval_per_candidate(model: &LinearModel, data: &Dataset, hp: &Hyperparams) -> Result<ObjectiveValue> {
    Ok(evaluate(model, data, hp, Aggregation::PerCandidate, false, 1)?.0)
}

pub fn eval_grouped(model: &LinearModel, data: &Dataset, hp: &Hyperparams) -> Result<ObjectiveValue> {
    Ok(evaluate(model, data, hp, Aggregation::Grouped, false, 1)?.0)
}

pub fn gradient_per_candidate(model: &LinearModel, data: &Dataset, hp: &Hyperparams) -> Result<GradientVector> {
    Ok(evaluate(model, data, hp, Aggregation::PerCandidate, true, 1)?
        .1
        .expect("gradient requested"))
}

/// Subgradient of the grouped objective: only the argmax-loss row of each
/// negative group (lowest row on ties) and each positive key row contribute.
pub fn subgradient_grouped(model: &LinearModel, data: &Dataset, hp: &Hyperparams) -> Result<GradientVector> {
    Ok(evaluate(model, data, hp, Aggregation::Grouped, true, 1)?
        .1
        .expect("gradient requested"))
}

/// Rows in the linear and quadratic loss regions among the rows that
/// contribute under `spec.aggregation`.
pub fn active_sets(model: &LinearModel, data: &Dataset, spec: &ObjectiveSpec) -> Result<ActiveSets> {
    model.check_dim(data.dim())?;
    let mut acc = LossAccumulator::new(model, &spec.hyperparams, spec.aggregation, false)?.track_active_sets();
    for b in data.blocks() {
        acc.push_block(&b);
    }
    Ok(acc.take_active_sets().unwrap_or_default())
}

/// Grouped objective that also takes the max loss over every positive group
/// instead of its key row. Evaluation only: it rewards raising the weakest
/// candidate of a positive group, which is not what the group score needs.
pub fn eval_grouped_positive_max(model: &LinearModel, data: &Dataset, hp: &Hyperparams) -> Result<ObjectiveValue> {
    model.check_dim(data.dim())?;
    let hinge = SmoothedHinge::new(hp.delta)?;
    let mut acc = LossAccumulator::new(model, hp, Aggregation::Grouped, false)?;
    for b in data.blocks() {
        match b.label {
            Label::Negative => acc.push_negative_block(&b),
            Label::Positive => {
                if let Some(i) = argmax_loss(model, &hinge, &b) {
                    acc.push_positive_row(b.row(i));
                }
            }
        }
    }
    Ok(acc.finish()?.0)
}

/// Loss of each negative group under the given reduction, in group order.
pub fn negative_group_losses(
    model: &LinearModel,
    data: &Dataset,
    hp: &Hyperparams,
    reduction: GroupReduction,
) -> Result<Vec<(u64, f64)>> {
    model.check_dim(data.dim())?;
    let hinge = SmoothedHinge::new(hp.delta)?;
    Ok(data
        .blocks()
        .filter(|b| b.label == Label::Negative)
        .map(|b| {
            let losses = b.rows().map(|x| hinge.value(-model.score(x)));
            let v = match reduction {
                GroupReduction::Max => losses.fold(0.0, f64::max),
                GroupReduction::Mean => losses.sum::<f64>() / b.len() as f64,
            };
            (b.group_id, v)
        })
        .collect())
}

/// A dataset objective packaged for the solver.
pub struct DatasetObjective<'a> {
    pub data: &'a Dataset,
    pub hyperparams: Hyperparams,
    pub aggregation: Aggregation,
    pub threads: usize,
}

impl<'a> DatasetObjective<'a> {
    /// Checks that the objective is well defined (both classes contribute
    /// when λ > 0).
    pub fn new(data: &'a Dataset, hyperparams: Hyperparams, aggregation: Aggregation, threads: usize) -> Result<Self> {
        hyperparams.validate()?;
        let obj = DatasetObjective {
            data,
            hyperparams,
            aggregation,
            threads: threads.max(1),
        };
        evaluate(&LinearModel::zeros(data.dim()), data, &hyperparams, aggregation, false, 1)?;
        Ok(obj)
    }
}

impl Problem for DatasetObjective<'_> {
    fn dim(&self) -> usize {
        self.data.dim() + 1
    }

    fn value(&self, x: &[f64]) -> f64 {
        let model = LinearModel::from_point(x);
        evaluate(&model, self.data, &self.hyperparams, self.aggregation, false, self.threads)
            .map(|(v, _)| v.total)
            .unwrap_or(f64::NAN)
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let model = LinearModel::from_point(x);
        match evaluate(&model, self.data, &self.hyperparams, self.aggregation, true, self.threads) {
            Ok((v, Some(g))) => (v.total, g.to_point()),
            _ => (f64::NAN, vec![f64::NAN; x.len()]),
        }
    }
}
