//! Polynomial lift of the input features, plus an explicit affine scaler.
//!
//! Monomials of total degree `1..=degree` are emitted in graded lexicographic
//! order: by degree, then by descending exponent of the first variable, then
//! the second, and so on. For `d = 2, degree = 3`:
//! `x1, x2, x1², x1·x2, x2², x1³, x1²·x2, x1·x2², x2³`.
//! The constant monomial is omitted; the model bias plays its role.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;

/// Name of the monomial order recorded in model files.
pub const MONOMIAL_ORDER: &str = "graded-lex";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionSpec {
    pub degree: u32,
    pub max_output_features: Option<usize>,
}

impl ExpansionSpec {
    pub fn new(degree: u32) -> Self {
        ExpansionSpec {
            degree,
            max_output_features: None,
        }
    }
}

/// `C(d + degree, degree) - 1`, or `None` on overflow.
pub fn expanded_dim(d: usize, degree: u32) -> Option<usize> {
    let mut c: u128 = 1;
    for i in 1..=degree as u128 {
        c = c.checked_mul(d as u128 + i)? / i;
    }
    usize::try_from(c - 1).ok()
}

/// Exponent vectors of every monomial, in graded lexicographic order.
pub fn monomials(d: usize, degree: u32) -> Vec<Vec<u32>> {
    fn fill(var: usize, remaining: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if var + 1 == cur.len() {
            cur[var] = remaining;
            out.push(cur.clone());
            return;
        }
        for e in (0..=remaining).rev() {
            cur[var] = e;
            fill(var + 1, remaining - e, cur, out);
        }
    }
    let mut out = Vec::new();
    if d == 0 {
        return out;
    }
    let mut cur = vec![0; d];
    for k in 1..=degree {
        fill(0, k, &mut cur, &mut out);
    }
    out
}

/// Evaluates the monomials of `x`, appending to `out`.
pub fn expand_row(x: &[f64], monomials: &[Vec<u32>], out: &mut Vec<f64>) {
    for exps in monomials {
        let mut v = 1.0;
        for (xi, &e) in x.iter().zip(exps) {
            for _ in 0..e {
                v *= xi;
            }
        }
        out.push(v);
    }
}

/// Replaces every feature vector by its monomial vector; labels, groups and
/// key flags are untouched.
pub fn expand(data: &Dataset, spec: &ExpansionSpec) -> Result<Dataset> {
    if spec.degree == 0 {
        return Err(Error::config("expansion degree must be at least 1"));
    }
    let d = data.dim();
    let out_dim = expanded_dim(d, spec.degree)
        .ok_or_else(|| Error::config(format!("degree {} expansion of {d} features overflows", spec.degree)))?;
    if let Some(cap) = spec.max_output_features {
        if out_dim > cap {
            return Err(Error::config(format!(
                "degree {} expansion of {d} features needs {out_dim} features, cap is {cap}",
                spec.degree
            )));
        }
    }
    let monos = monomials(d, spec.degree);
    data.map_rows(out_dim, |x, out| expand_row(x, &monos, out))
}

/// Per-feature affine map `(x - offset) / scale`, fitted on a training set
/// and stored with the model. Never applied implicitly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineScaler {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl AffineScaler {
    /// Standardises each feature to zero mean and unit variance over all rows.
    /// Constant features keep scale 1.
    pub fn fit(data: &Dataset) -> Self {
        let d = data.dim();
        let n = data.n_rows().max(1) as f64;
        let mut mean = vec![0.0; d];
        for i in 0..data.n_rows() {
            for (m, x) in mean.iter_mut().zip(data.row(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..data.n_rows() {
            for ((v, m), x) in var.iter_mut().zip(&mean).zip(data.row(i)) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        AffineScaler { offset: mean, scale }
    }

    pub fn transform_row(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend(x.iter().zip(&self.offset).zip(&self.scale).map(|((x, o), s)| (x - o) / s));
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.offset.len() {
            return Err(Error::DimensionMismatch {
                expected: self.offset.len(),
                found: data.dim(),
            });
        }
        data.map_rows(data.dim(), |x, out| self.transform_row(x, out))
    }
}
