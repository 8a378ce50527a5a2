//! Extension of metrics on `A` to metrics on `X`.
//!
//! `E(d)(x, y) = Σ_s 2^-(s+1) · [W_d(H(x,s), H(y,s)) + ‖h(x,s) - h(y,s)‖_∞]`.
//! In exact mode the levels above `S*` are summed in closed form; in truncated
//! mode the series is cut at a chosen level and a certified bound on the
//! omitted tail is reported.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{self, Embedding};
use crate::error::{Error, Result};
use crate::metric::{infer_mode, sup_distance, DistMatrix, MetricFamily, MetricMode, SubsetPair};

/// Deepest level truncated mode will go to when asked for a target bound.
pub const MAX_TRUNCATION_LEVEL: u32 = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Truncation {
    /// Sum levels `0..=S`.
    Level(u32),
    /// Smallest `S <= 64` whose certified bound is at most this value.
    Bound(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    Exact,
    Truncated(Truncation),
}

/// The `d`-independent part of the construction for a fixed `(X, A, w)`.
#[derive(Clone, Debug)]
pub struct Precomputation {
    pair: SubsetPair,
    embedding: Embedding,
    /// `max_{x,y} min_{b ∈ A} (4 w(x,b) + 4 w(y,b))`.
    tail_spread: f64,
}

impl Precomputation {
    pub fn new(pair: SubsetPair) -> Result<Self> {
        let embedding = embedding::embed(&pair)?;
        let w = pair.w();
        let n = pair.len();
        let mut tail_spread = 0.0_f64;
        for x in 0..n {
            for y in x..n {
                let best = pair
                    .subset()
                    .iter()
                    .map(|&b| 4.0 * w.get(x, b) + 4.0 * w.get(y, b))
                    .fold(f64::INFINITY, f64::min);
                tail_spread = tail_spread.max(best);
            }
        }
        Ok(Self {
            pair,
            embedding,
            tail_spread,
        })
    }

    pub fn pair(&self) -> &SubsetPair {
        &self.pair
    }

    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    pub fn s_star(&self) -> u32 {
        self.embedding.s_star
    }

    /// Certified bound on the series tail beyond level `level` for a metric
    /// at sup-distance `gap` from `w|A`.
    pub fn tail_bound(&self, level: u32, gap: f64) -> f64 {
        embedding::level_weight(level) * (self.tail_spread + 2.0 + 2.0 * gap)
    }

    fn check_dims(&self, d: &DistMatrix) -> Result<()> {
        if d.len() != self.pair.subset_len() {
            return Err(Error::DimensionMismatch {
                expected: self.pair.subset_len(),
                found: d.len(),
            });
        }
        Ok(())
    }

    /// Per-level distance between `x` and `y` at level `s` under `d`.
    pub fn level_term(&self, d: &DistMatrix, x: usize, y: usize, s: u32) -> Result<f64> {
        let p = self.embedding.points[x].snapshot_at(s, &self.pair);
        let q = self.embedding.points[y].snapshot_at(s, &self.pair);
        embedding::hybrid_distance(d, &p, &q)
    }

    /// Closed-form per-level distance above `S*`.
    pub fn tail_term(&self, d: &DistMatrix, x: usize, y: usize) -> f64 {
        if x == y {
            return 0.0;
        }
        let pos = |p: usize| self.pair.position(p).expect("anchor in subset");
        let ax = self.embedding.points[x].tail.anchor;
        let ay = self.embedding.points[y].tail.anchor;
        let transport = d.get(pos(ax), pos(ay));
        if self.pair.in_subset(x) && self.pair.in_subset(y) {
            transport
        } else {
            transport + 1.0
        }
    }

    fn exact_entry(&self, d: &DistMatrix, x: usize, y: usize) -> Result<f64> {
        let s_star = self.s_star();
        // smallest weights first, so equal terms sum back to the term exactly
        let mut acc = embedding::level_weight(s_star) * self.tail_term(d, x, y);
        for s in (0..=s_star).rev() {
            acc += embedding::level_weight(s) * self.level_term(d, x, y, s)?;
        }
        Ok(acc)
    }

    fn truncated_entry(&self, d: &DistMatrix, x: usize, y: usize, level: u32) -> Result<f64> {
        let mut acc = 0.0;
        for s in (0..=level).rev() {
            acc += embedding::level_weight(s) * self.level_term(d, x, y, s)?;
        }
        Ok(acc)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResultMode {
    Exact,
    Truncated,
}

#[derive(Clone, Debug)]
pub struct ExtensionResult {
    pub matrix: DistMatrix,
    pub mode: ResultMode,
    pub metric_mode: MetricMode,
    pub s_star: u32,
    /// Highest level summed explicitly.
    pub level: u32,
    pub error_bound: f64,
    pub metric_name: Option<String>,
    /// `sup |d - w|A|`.
    pub base_gap: f64,
    pub elapsed: Duration,
}

/// On-disk form of an [`ExtensionResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionFile {
    pub metric: String,
    pub mode: ResultMode,
    #[serde(rename = "S_star")]
    pub s_star: u32,
    pub error_bound: f64,
    #[serde(rename = "E")]
    pub matrix: DistMatrix,
}

impl ExtensionResult {
    pub fn to_file(&self) -> ExtensionFile {
        ExtensionFile {
            metric: self.metric_name.clone().unwrap_or_default(),
            mode: self.mode,
            s_star: self.s_star,
            error_bound: self.error_bound,
            matrix: self.matrix.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("extension result serializes")
    }
}

fn extend_in_mode(
    pre: &Precomputation,
    d: &DistMatrix,
    metric_mode: MetricMode,
    mode: Mode,
) -> Result<ExtensionResult> {
    let start = Instant::now();
    pre.check_dims(d)?;
    let report = d.validate(metric_mode);
    if !report.is_valid() {
        return Err(Error::InvalidMetric {
            name: "d".to_owned(),
            report,
        });
    }
    let base_gap = sup_distance(d, pre.pair.restricted())?;

    let (result_mode, level, error_bound) = match mode {
        Mode::Exact => (ResultMode::Exact, pre.s_star(), 0.0),
        Mode::Truncated(Truncation::Level(s)) => {
            (ResultMode::Truncated, s, pre.tail_bound(s, base_gap))
        }
        Mode::Truncated(Truncation::Bound(target)) => {
            let s = (0..=MAX_TRUNCATION_LEVEL)
                .find(|&s| pre.tail_bound(s, base_gap) <= target)
                .ok_or(Error::CertificationFailed {
                    requested: target,
                    best: pre.tail_bound(MAX_TRUNCATION_LEVEL, base_gap),
                    max_level: MAX_TRUNCATION_LEVEL,
                })?;
            (ResultMode::Truncated, s, pre.tail_bound(s, base_gap))
        }
    };

    let n = pre.pair.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|x| ((x + 1)..n).map(move |y| (x, y)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(x, y)| match result_mode {
            ResultMode::Exact => pre.exact_entry(d, x, y),
            ResultMode::Truncated => pre.truncated_entry(d, x, y, level),
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut matrix = DistMatrix::zeros(n);
    for (&(x, y), &v) in pairs.iter().zip(&values) {
        matrix.set(x, y, v);
        matrix.set(y, x, v);
    }
    Ok(ExtensionResult {
        matrix,
        mode: result_mode,
        metric_mode,
        s_star: pre.s_star(),
        level,
        error_bound,
        metric_name: None,
        base_gap,
        elapsed: start.elapsed(),
    })
}

/// Extends a metric on `A` to a metric on `X`.
pub fn extend(pre: &Precomputation, d: &DistMatrix, mode: Mode) -> Result<ExtensionResult> {
    extend_in_mode(pre, d, MetricMode::Metric, mode)
}

/// Extends a pseudometric on `A` to a pseudometric on `X` by the same formula.
pub fn extend_pseudometric(pre: &Precomputation, d: &DistMatrix) -> Result<ExtensionResult> {
    extend_in_mode(pre, d, MetricMode::Pseudometric, Mode::Exact)
}

/// Extends `d` as a metric when it is one and as a pseudometric otherwise.
pub fn extend_auto(pre: &Precomputation, d: &DistMatrix, mode: Mode) -> Result<ExtensionResult> {
    pre.check_dims(d)?;
    extend_in_mode(pre, d, infer_mode(d), mode)
}

/// Extends every member of a family, reusing the precomputation.
pub fn extend_batch(
    pre: &Precomputation,
    family: &MetricFamily,
    mode: Mode,
) -> BTreeMap<String, Result<ExtensionResult>> {
    family
        .iter()
        .map(|(name, d)| {
            let result = extend_auto(pre, d, mode).map(|mut r| {
                r.metric_name = Some(name.clone());
                r
            });
            (name.clone(), result)
        })
        .collect()
}

/// Comparison baseline: shortest paths in the complete graph on `X` whose
/// edges inside `A` cost `d` and whose other edges cost `w + diam_d(A) / 2`.
/// Restricts to `d` but is not isometric in `d`.
pub fn baseline_extend(pair: &SubsetPair, d: &DistMatrix) -> DistMatrix {
    let all: Vec<usize> = (0..d.len()).collect();
    let offset = d.diameter_of(&all) / 2.0;
    let w = pair.w();
    let graph = DistMatrix::from_fn(pair.len(), |x, y| {
        if x == y {
            return 0.0;
        }
        match (pair.position(x), pair.position(y)) {
            (Some(px), Some(py)) => d.get(px, py),
            _ => w.get(x, y) + offset,
        }
    });
    graph.shortest_path_closure()
}
