//! Domain types shared by every other module: candidates, grouped datasets,
//! the linear model and the hyperparameters of the training objectives.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class of a candidate or group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    /// `+1.0` or `-1.0`.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }

    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            1 => Some(Label::Positive),
            -1 => Some(Label::Negative),
            _ => None,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

/// One candidate example (e.g. a region proposal) inside a group.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub group_id: u64,
    pub label: Label,
    /// Marks the annotated candidate of a positive group.
    pub is_key: bool,
    pub features: Vec<f64>,
}

/// Index entry for one group of a [`Dataset`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Group {
    pub id: u64,
    pub label: Label,
    /// Rows of the group; groups always occupy a contiguous row range.
    pub rows: Range<usize>,
    /// Absolute row index of the key candidate (positive groups only).
    pub key: Option<usize>,
}

impl Group {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Borrowed view of one group's rows, shared by in-memory datasets and the
/// streaming binary reader so both feed the same objective code.
#[derive(Clone, Copy, Debug)]
pub struct GroupBlock<'a> {
    pub group_id: u64,
    pub label: Label,
    /// Offset of the key candidate inside the block.
    pub key: Option<usize>,
    /// Absolute row index of the first row of the block.
    pub first_row: usize,
    /// Row-major features, `len() * d` values.
    pub features: &'a [f64],
    pub d: usize,
}

impl<'a> GroupBlock<'a> {
    pub fn len(&self) -> usize {
        if self.d == 0 {
            0
        } else {
            self.features.len() / self.d
        }
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &'a [f64]> + 'a {
        self.features.chunks_exact(self.d.max(1))
    }

    pub fn key_row(&self) -> Option<&'a [f64]> {
        self.key.map(|k| self.row(k))
    }
}

/// Candidates organised into label-homogeneous groups.
///
/// Rows are stored sorted by group id (stable, so the input order inside each
/// group is preserved) with features in one row-major buffer. Every positive
/// group has exactly one key candidate; negative groups have none.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    d: usize,
    features: Vec<f64>,
    group_ids: Vec<u64>,
    labels: Vec<Label>,
    is_key: Vec<bool>,
    groups: Vec<Group>,
}

impl Dataset {
    /// Builds a dataset from candidates in any order.
    pub fn new(d: usize, mut candidates: Vec<Candidate>) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("feature dimension must be at least 1"));
        }
        for c in &candidates {
            if c.features.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: c.features.len(),
                });
            }
        }
        candidates.sort_by_key(|c| c.group_id);
        let n = candidates.len();
        let mut features = Vec::with_capacity(n * d);
        let mut group_ids = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut is_key = Vec::with_capacity(n);
        for c in candidates {
            features.extend_from_slice(&c.features);
            group_ids.push(c.group_id);
            labels.push(c.label);
            is_key.push(c.is_key);
        }
        Self::from_sorted_parts(d, features, group_ids, labels, is_key)
    }

    /// Builds a dataset from columns whose rows are already grouped by
    /// ascending group id. Fails with [`Error::UnsortedGroups`] otherwise.
    pub fn from_sorted_parts(
        d: usize,
        features: Vec<f64>,
        group_ids: Vec<u64>,
        labels: Vec<Label>,
        is_key: Vec<bool>,
    ) -> Result<Self> {
        let n = group_ids.len();
        if d == 0 {
            return Err(Error::config("feature dimension must be at least 1"));
        }
        if features.len() != n * d || labels.len() != n || is_key.len() != n {
            return Err(Error::config("dataset columns have inconsistent lengths"));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::MalformedRecord {
                record: (pos / d) as u64,
                message: "non-finite feature value".into(),
            });
        }
        let mut groups: Vec<Group> = Vec::new();
        let mut start = 0;
        while start < n {
            let id = group_ids[start];
            let mut end = start + 1;
            while end < n && group_ids[end] == id {
                end += 1;
            }
            if let Some(prev) = groups.last() {
                if prev.id >= id {
                    return Err(Error::UnsortedGroups {
                        group_id: id,
                        record: start as u64,
                    });
                }
            }
            groups.push(build_group(id, start..end, &labels, &is_key)?);
            start = end;
        }
        Ok(Dataset {
            d,
            features,
            group_ids,
            labels,
            is_key,
            groups,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    /// Looks up a group by id.
    pub fn group(&self, id: u64) -> Option<&Group> {
        self.groups
            .binary_search_by_key(&id, |g| g.id)
            .ok()
            .map(|i| &self.groups[i])
    }

    pub fn n_positive_groups(&self) -> usize {
        self.groups.iter().filter(|g| g.label.is_positive()).count()
    }

    pub fn n_negative_groups(&self) -> usize {
        self.groups.len() - self.n_positive_groups()
    }

    pub fn n_negative_rows(&self) -> usize {
        self.labels.iter().filter(|l| !l.is_positive()).count()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn group_id(&self, i: usize) -> u64 {
        self.group_ids[i]
    }

    pub fn is_key(&self, i: usize) -> bool {
        self.is_key[i]
    }

    pub fn candidate(&self, i: usize) -> Candidate {
        Candidate {
            group_id: self.group_ids[i],
            label: self.labels[i],
            is_key: self.is_key[i],
            features: self.row(i).to_vec(),
        }
    }

    pub fn candidates(&self) -> impl Iterator<Item = Candidate> + '_ {
        (0..self.n_rows()).map(|i| self.candidate(i))
    }

    pub fn block(&self, group: &Group) -> GroupBlock<'_> {
        GroupBlock {
            group_id: group.id,
            label: group.label,
            key: group.key.map(|k| k - group.rows.start),
            first_row: group.rows.start,
            features: &self.features[group.rows.start * self.d..group.rows.end * self.d],
            d: self.d,
        }
    }

    /// Group blocks in ascending group-id order.
    pub fn blocks(&self) -> impl Iterator<Item = GroupBlock<'_>> + '_ {
        self.groups.iter().map(move |g| self.block(g))
    }

    /// Copies the listed groups (by position in [`Dataset::groups`]) into a
    /// new dataset.
    pub fn subset_groups(&self, positions: &[usize]) -> Result<Dataset> {
        let mut sorted = positions.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let rows: usize = sorted.iter().map(|&p| self.groups[p].len()).sum();
        let mut features = Vec::with_capacity(rows * self.d);
        let mut group_ids = Vec::with_capacity(rows);
        let mut labels = Vec::with_capacity(rows);
        let mut is_key = Vec::with_capacity(rows);
        for &p in &sorted {
            let g = &self.groups[p];
            features.extend_from_slice(&self.features[g.rows.start * self.d..g.rows.end * self.d]);
            group_ids.extend_from_slice(&self.group_ids[g.rows.clone()]);
            labels.extend_from_slice(&self.labels[g.rows.clone()]);
            is_key.extend_from_slice(&self.is_key[g.rows.clone()]);
        }
        Dataset::from_sorted_parts(self.d, features, group_ids, labels, is_key)
    }

    /// Replaces every feature vector through `f`, keeping the group structure.
    pub fn map_rows<F>(&self, new_d: usize, mut f: F) -> Result<Dataset>
    where
        F: FnMut(&[f64], &mut Vec<f64>),
    {
        let mut features = Vec::with_capacity(self.n_rows() * new_d);
        for i in 0..self.n_rows() {
            let before = features.len();
            f(self.row(i), &mut features);
            if features.len() - before != new_d {
                return Err(Error::DimensionMismatch {
                    expected: new_d,
                    found: features.len() - before,
                });
            }
        }
        Dataset::from_sorted_parts(
            new_d,
            features,
            self.group_ids.clone(),
            self.labels.clone(),
            self.is_key.clone(),
        )
    }
}

pub(crate) fn build_group(
    id: u64,
    rows: Range<usize>,
    labels: &[Label],
    is_key: &[bool],
) -> Result<Group> {
    let label = labels[rows.start];
    if labels[rows.clone()].iter().any(|&l| l != label) {
        return Err(Error::MixedLabelGroup { group_id: id });
    }
    let keys: Vec<usize> = rows.clone().filter(|&i| is_key[i]).collect();
    let key = match label {
        Label::Negative => {
            if !keys.is_empty() {
                return Err(Error::KeyOnNegative { group_id: id });
            }
            None
        }
        Label::Positive => match keys.len() {
            0 => return Err(Error::MissingKey { group_id: id }),
            1 => Some(keys[0]),
            count => return Err(Error::MultipleKeys { group_id: id, count }),
        },
    };
    Ok(Group {
        id,
        label,
        rows,
        key,
    })
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linear classifier `score(x) = w·x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LinearModel {
    pub fn new(w: Vec<f64>, b: f64) -> Result<Self> {
        if w.iter().chain(std::iter::once(&b)).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("model has non-finite coefficients".into()));
        }
        Ok(LinearModel { w, b })
    }

    pub fn zeros(d: usize) -> Self {
        LinearModel { w: vec![0.0; d], b: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Raw score `w·x + b` without a dimension check.
    #[inline]
    pub fn score(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }

    pub fn checked_score(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.score(x))
    }

    /// `y·(w·x + b)`.
    pub fn soft_margin(&self, candidate: &Candidate) -> Result<f64> {
        self.check_dim(candidate.features.len())?;
        Ok(candidate.label.sign() * self.score(&candidate.features))
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                found: d,
            });
        }
        Ok(())
    }

    /// Packs `(w, b)` into one optimisation vector, bias last.
    pub fn to_point(&self) -> Vec<f64> {
        let mut p = self.w.clone();
        p.push(self.b);
        p
    }

    pub fn from_point(point: &[f64]) -> Self {
        let (b, w) = point.split_last().expect("point holds at least the bias");
        LinearModel { w: w.to_vec(), b: *b }
    }
}

/// Trade-off λ, Huber width ε and hinge smoothing δ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda: f64,
    pub epsilon: f64,
    pub delta: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda: 0.5,
            epsilon: 1.0,
            delta: 0.5,
        }
    }
}

impl Hyperparams {
    pub fn new(lambda: f64, epsilon: f64, delta: f64) -> Result<Self> {
        let hp = Hyperparams {
            lambda,
            epsilon,
            delta,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                value: self.lambda,
                reason: "must lie in [0, 1]",
            });
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                value: self.epsilon,
                reason: "must be positive and finite",
            });
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "delta",
                value: self.delta,
                reason: "must be non-negative and finite",
            });
        }
        Ok(())
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Hyperparams { lambda, ..self }
    }
}

/// How training losses are aggregated over the rows of a group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Aggregation {
    /// Every labelled candidate contributes its own loss.
    PerCandidate,
    /// Key candidate per positive group, worst candidate per negative group.
    Grouped,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub hyperparams: Hyperparams,
    pub aggregation: Aggregation,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(group_id: u64, label: Label, is_key: bool, features: Vec<f64>) -> Candidate {
        Candidate {
            group_id,
            label,
            is_key,
            features,
        }
    }

    #[test]
    fn soft_margin_examples() {
        let zero = LinearModel::zeros(2);
        let c = cand(0, Label::Positive, true, vec![3.0, -4.0]);
        assert_eq!(zero.soft_margin(&c).unwrap(), 0.0);

        let m = LinearModel::new(vec![1.0, 1.0], -1.0).unwrap();
        let pos = cand(0, Label::Positive, true, vec![2.0, 1.0]);
        assert_eq!(m.soft_margin(&pos).unwrap(), 2.0);
        let neg = Candidate {
            label: Label::Negative,
            is_key: false,
            ..pos.clone()
        };
        assert_eq!(m.soft_margin(&neg).unwrap(), -2.0);
    }

    #[test]
    fn soft_margin_dimension_mismatch() {
        let m = LinearModel::zeros(3);
        let c = cand(0, Label::Positive, true, vec![1.0]);
        assert!(matches!(
            m.soft_margin(&c),
            Err(Error::DimensionMismatch { expected: 3, found: 1 })
        ));
    }

    #[test]
    fn dataset_sorts_groups_and_keeps_row_order() {
        let data = Dataset::new(
            1,
            vec![
                cand(5, Label::Negative, false, vec![1.0]),
                cand(2, Label::Positive, false, vec![2.0]),
                cand(5, Label::Negative, false, vec![3.0]),
                cand(2, Label::Positive, true, vec![4.0]),
            ],
        )
        .unwrap();
        let ids: Vec<u64> = data.groups().iter().map(|g| g.id).collect();
        assert_eq!(ids, vec![2, 5]);
        assert_eq!(data.features(), &[2.0, 4.0, 1.0, 3.0]);
        assert_eq!(data.group(2).unwrap().key, Some(1));
        assert_eq!(data.n_positive_groups(), 1);
        assert_eq!(data.n_negative_groups(), 1);
        let blk = data.block(data.group(2).unwrap());
        assert_eq!(blk.key_row(), Some(&[4.0][..]));
    }

    #[test]
    fn dataset_rejects_structural_violations() {
        let mixed = Dataset::new(
            1,
            vec![
                cand(1, Label::Positive, true, vec![0.0]),
                cand(1, Label::Negative, false, vec![0.0]),
            ],
        );
        assert!(matches!(mixed, Err(Error::MixedLabelGroup { group_id: 1 })));

        let missing = Dataset::new(1, vec![cand(3, Label::Positive, false, vec![0.0])]);
        assert!(matches!(missing, Err(Error::MissingKey { group_id: 3 })));

        let double = Dataset::new(
            1,
            vec![
                cand(3, Label::Positive, true, vec![0.0]),
                cand(3, Label::Positive, true, vec![1.0]),
            ],
        );
        assert!(matches!(double, Err(Error::MultipleKeys { group_id: 3, count: 2 })));

        let neg_key = Dataset::new(1, vec![cand(4, Label::Negative, true, vec![0.0])]);
        assert!(matches!(neg_key, Err(Error::KeyOnNegative { group_id: 4 })));

        let bad_dim = Dataset::new(2, vec![cand(4, Label::Negative, false, vec![0.0])]);
        assert!(matches!(bad_dim, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn sorted_parts_reject_split_groups() {
        let r = Dataset::from_sorted_parts(
            1,
            vec![0.0, 0.0, 0.0],
            vec![1, 2, 1],
            vec![Label::Negative; 3],
            vec![false; 3],
        );
        assert!(matches!(r, Err(Error::UnsortedGroups { group_id: 1, record: 2 })));
    }

    #[test]
    fn hyperparams_ranges() {
        assert!(Hyperparams::new(0.5, 1.0, 0.0).is_ok());
        assert!(Hyperparams::new(1.5, 1.0, 0.5).is_err());
        assert!(Hyperparams::new(0.5, 0.0, 0.5).is_err());
        assert!(Hyperparams::new(0.5, 1.0, -0.1).is_err());
    }

    #[test]
    fn point_round_trip() {
        let m = LinearModel::new(vec![1.5, -2.0], 0.25).unwrap();
        assert_eq!(LinearModel::from_point(&m.to_point()), m);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn soft_margin_is_linear_in_model(
                w1 in proptest::collection::vec(-5.0f64..5.0, 3),
                w2 in proptest::collection::vec(-5.0f64..5.0, 3),
                b1 in -5.0f64..5.0, b2 in -5.0f64..5.0,
                x in proptest::collection::vec(-5.0f64..5.0, 3),
                a in -3.0f64..3.0, c in -3.0f64..3.0,
                positive in any::<bool>(),
            ) {
                let label = if positive { Label::Positive } else { Label::Negative };
                let cd = cand(0, label, false, x);
                let m1 = LinearModel::new(w1.clone(), b1).unwrap();
                let m2 = LinearModel::new(w2.clone(), b2).unwrap();
                let w: Vec<f64> = w1.iter().zip(&w2).map(|(p, q)| a * p + c * q).collect();
                let mix = LinearModel::new(w, a * b1 + c * b2).unwrap();
                let lhs = mix.soft_margin(&cd).unwrap();
                let rhs = a * m1.soft_margin(&cd).unwrap() + c * m2.soft_margin(&cd).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));

                let flipped = Candidate {
                    label: if positive { Label::Negative } else { Label::Positive },
                    ..cd.clone()
                };
                prop_assert_eq!(m1.soft_margin(&flipped).unwrap(), -m1.soft_margin(&cd).unwrap());
            }
        }
    }
}
