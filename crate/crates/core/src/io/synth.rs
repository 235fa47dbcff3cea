//! Seeded synthetic group data.
//!
//! Every row starts as isotropic Gaussian background noise. In a positive
//! group one row (the key) is shifted by `key_shift` along each of the first
//! `informative_features` features. With probability `outlier_rate` a negative
//! group receives one outlier row shifted by `outlier_shift` along the same
//! features, plus `outlier_marker_shift` on the last feature, a direction the
//! keys never use. Independently, each non-key row becomes clutter with
//! probability `clutter_rate`: its last informative feature is raised by
//! `clutter_shift`. Groups are numbered from 0, positives first.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::binary::BinaryWriter;
use crate::model::{Dataset, Label};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub n_pos_groups: usize,
    pub n_neg_groups: usize,
    /// Group sizes are uniform on `min_candidates..=max_candidates`.
    pub min_candidates: usize,
    pub max_candidates: usize,
    pub d: usize,
    pub informative_features: usize,
    pub key_shift: f64,
    pub noise_scale: f64,
    pub outlier_rate: f64,
    pub outlier_shift: f64,
    pub outlier_marker_shift: f64,
    pub clutter_rate: f64,
    pub clutter_shift: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            seed: 0,
            n_pos_groups: 100,
            n_neg_groups: 1000,
            min_candidates: 150,
            max_candidates: 250,
            d: 13,
            informative_features: 3,
            key_shift: 2.0,
            noise_scale: 1.0,
            outlier_rate: 0.0,
            outlier_shift: 0.0,
            outlier_marker_shift: 0.0,
            clutter_rate: 0.0,
            clutter_shift: 0.0,
        }
    }
}

/// Names accepted by [`GeneratorSpec::preset`].
pub const PRESETS: [&str; 2] = ["fig5-regime", "easy"];

impl GeneratorSpec {
    /// * `fig5-regime`: 100 positive and 5000 negative groups of ~200
    ///   candidates, one key per positive group, 2% of negative groups
    ///   carrying one outlier that resembles a key, and rare extreme clutter
    ///   on the second of two informative features.
    /// * `easy`: well separated keys, no outliers.
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "fig5-regime" => Ok(GeneratorSpec {
                seed,
                n_pos_groups: 100,
                n_neg_groups: 5000,
                informative_features: 2,
                key_shift: 3.0,
                outlier_rate: 0.02,
                outlier_shift: 3.0,
                outlier_marker_shift: 4.0,
                clutter_rate: 0.002,
                clutter_shift: 12.0,
                ..GeneratorSpec::default()
            }),
            "easy" => Ok(GeneratorSpec {
                seed,
                n_pos_groups: 50,
                n_neg_groups: 200,
                min_candidates: 20,
                max_candidates: 40,
                key_shift: 4.0,
                ..GeneratorSpec::default()
            }),
            other => Err(Error::config(format!(
                "unknown generator preset `{other}` (known: {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pos_groups == 0 {
            return Err(Error::config("generator needs at least one positive group"));
        }
        if self.n_neg_groups == 0 {
            return Err(Error::config("generator needs at least one negative group"));
        }
        if self.min_candidates == 0 || self.min_candidates > self.max_candidates {
            return Err(Error::config("group sizes need 1 <= min_candidates <= max_candidates"));
        }
        if self.d == 0 || self.informative_features > self.d {
            return Err(Error::config("need d >= 1 and informative_features <= d"));
        }
        for (name, v) in [("outlier_rate", self.outlier_rate), ("clutter_rate", self.clutter_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "must lie in [0, 1]",
                });
            }
        }
        if self.clutter_rate > 0.0 && self.informative_features == 0 {
            return Err(Error::config("clutter needs at least one informative feature"));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "noise_scale",
                value: self.noise_scale,
                reason: "must be positive and finite",
            });
        }
        for (name, v) in [
            ("key_shift", self.key_shift),
            ("outlier_shift", self.outlier_shift),
            ("outlier_marker_shift", self.outlier_marker_shift),
            ("clutter_shift", self.clutter_shift),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "must be finite",
                });
            }
        }
        Ok(())
    }
}

/// One generated group; its rows are in the buffer passed to
/// [`Generator::next_group`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GeneratedGroup {
    pub group_id: u64,
    pub label: Label,
    pub len: usize,
    pub key: Option<usize>,
    pub outlier: Option<usize>,
}

/// Produces groups one at a time. Sizes are drawn up front from their own
/// stream so the total row count is known before any row is written.
pub struct Generator {
    spec: GeneratorSpec,
    sizes: Vec<usize>,
    rng: ChaCha8Rng,
    next: usize,
}

impl Generator {
    pub fn new(spec: &GeneratorSpec) -> Result<Self> {
        spec.validate()?;
        let mut size_rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let n_groups = spec.n_pos_groups + spec.n_neg_groups;
        let sizes = (0..n_groups)
            .map(|_| size_rng.random_range(spec.min_candidates..=spec.max_candidates))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(1);
        Ok(Generator {
            spec: spec.clone(),
            sizes,
            rng,
            next: 0,
        })
    }

    pub fn total_rows(&self) -> u64 {
        self.sizes.iter().map(|&s| s as u64).sum()
    }

    /// Fills `rows` (cleared first) with the next group's row-major features.
    pub fn next_group(&mut self, rows: &mut Vec<f64>) -> Option<GeneratedGroup> {
        if self.next == self.sizes.len() {
            return None;
        }
        let index = self.next;
        self.next += 1;
        let spec = &self.spec;
        let len = self.sizes[index];
        let positive = index < spec.n_pos_groups;
        let key = positive.then(|| self.rng.random_range(0..len));
        let outlier = (!positive && self.rng.random_bool(spec.outlier_rate)).then(|| self.rng.random_range(0..len));
        rows.clear();
        rows.reserve(len * spec.d);
        for _ in 0..len * spec.d {
            let z: f64 = self.rng.sample(StandardNormal);
            rows.push(spec.noise_scale * z);
        }
        if spec.clutter_rate > 0.0 {
            let j = spec.informative_features - 1;
            for i in 0..len {
                if self.rng.random_bool(spec.clutter_rate) && key != Some(i) && outlier != Some(i) {
                    rows[i * spec.d + j] += spec.clutter_shift;
                }
            }
        }
        if let Some(k) = key {
            for v in &mut rows[k * spec.d..k * spec.d + spec.informative_features] {
                *v += spec.key_shift;
            }
        }
        if let Some(o) = outlier {
            for v in &mut rows[o * spec.d..o * spec.d + spec.informative_features] {
                *v += spec.outlier_shift;
            }
            rows[o * spec.d + spec.d - 1] += spec.outlier_marker_shift;
        }
        Some(GeneratedGroup {
            group_id: index as u64,
            label: if positive { Label::Positive } else { Label::Negative },
            len,
            key,
            outlier,
        })
    }
}

pub fn generate(spec: &GeneratorSpec) -> Result<Dataset> {
    let mut gen = Generator::new(spec)?;
    let n = gen.total_rows() as usize;
    let mut features = Vec::with_capacity(n * spec.d);
    let mut group_ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut is_key = Vec::with_capacity(n);
    let mut rows = Vec::new();
    while let Some(g) = gen.next_group(&mut rows) {
        features.extend_from_slice(&rows);
        for i in 0..g.len {
            group_ids.push(g.group_id);
            labels.push(g.label);
            is_key.push(g.key == Some(i));
        }
    }
    Dataset::from_sorted_parts(spec.d, features, group_ids, labels, is_key)
}

/// Writes the generated data straight to the binary format without holding
/// it in memory.
pub fn generate_binary<W: Write>(spec: &GeneratorSpec, out: W) -> Result<W> {
    let mut gen = Generator::new(spec)?;
    let mut w = BinaryWriter::new(out, spec.d, gen.total_rows())?;
    let mut rows = Vec::new();
    while let Some(g) = gen.next_group(&mut rows) {
        for (i, x) in rows.chunks_exact(spec.d).enumerate() {
            w.write_row(g.group_id, g.label, g.key == Some(i), x)?;
        }
    }
    w.finish()
}
