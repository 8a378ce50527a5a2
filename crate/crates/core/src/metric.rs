//! Finite metric and pseudometric spaces.
//!
//! Distances are stored as dense row-major matrices. Structural problems
//! (ragged rows, negative or non-finite entries) are reported as [`Error`]s
//! when a [`DistMatrix`] is built; axiom violations are reported separately by
//! [`DistMatrix::validate`] so that callers can inspect them.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used for every axiom comparison, scaled by the largest
/// entry of the matrix under test.
pub const AXIOM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricMode {
    Metric,
    Pseudometric,
}

impl fmt::Display for MetricMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricMode::Metric => f.write_str("metric"),
            MetricMode::Pseudometric => f.write_str("pseudometric"),
        }
    }
}

/// Square matrix of finite non-negative reals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DistMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NotSquare {
                    row: i,
                    len: row.len(),
                    expected: n,
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite { i, j });
                }
                if v < 0.0 {
                    return Err(Error::NegativeEntry { i, j, value: v });
                }
                data.push(v);
            }
        }
        Ok(Self { n, data })
    }

    /// Builds a matrix from an entry function. Panics on a negative or
    /// non-finite value, so only use it with functions known to be valid.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let v = f(i, j);
                assert!(v.is_finite() && v >= 0.0, "invalid entry {v} at ({i}, {j})");
                data.push(v);
            }
        }
        Self { n, data }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Overwrites one entry. Panics on a negative or non-finite value.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(v.is_finite() && v >= 0.0, "invalid entry {v} at ({i}, {j})");
        self.data[i * self.n + j] = v;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.n.max(1))
            .take(self.n)
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Absolute tolerance for axiom checks on this matrix.
    pub fn tolerance(&self) -> f64 {
        AXIOM_TOLERANCE * self.max_entry()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_fn(self.n, |i, j| self.get(i, j) * factor)
    }

    /// Submatrix on the given indices, in the given order.
    pub fn restrict(&self, indices: &[usize]) -> Self {
        Self::from_fn(indices.len(), |i, j| self.get(indices[i], indices[j]))
    }

    /// Largest `get(i, j)` over all pairs of the given index set.
    pub fn diameter_of(&self, indices: &[usize]) -> f64 {
        let mut diam = 0.0_f64;
        for &i in indices {
            for &j in indices {
                diam = diam.max(self.get(i, j));
            }
        }
        diam
    }

    /// Smallest strictly positive off-diagonal entry, if any.
    pub fn min_positive(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let v = self.get(i, j);
                if v > 0.0 && best.is_none_or(|b| v < b) {
                    best = Some(v);
                }
            }
        }
        best
    }

    pub fn validate(&self, mode: MetricMode) -> ValidationReport {
        let n = self.n;
        let tol = self.tolerance();
        let mut violations = Vec::new();
        for i in 0..n {
            let v = self.get(i, i);
            if v > tol {
                violations.push(Violation::Diagonal { i, value: v });
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (self.get(i, j), self.get(j, i));
                if (a - b).abs() > tol {
                    violations.push(Violation::Symmetry {
                        i,
                        j,
                        upper: a,
                        lower: b,
                    });
                }
                if mode == MetricMode::Metric && (a <= 0.0 || b <= 0.0) {
                    violations.push(Violation::Positivity { i, j });
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let dij = self.get(i, j);
                for k in 0..n {
                    let excess = self.get(i, k) - (dij + self.get(j, k));
                    if excess > tol {
                        violations.push(Violation::Triangle { i, j, k, excess });
                    }
                }
            }
        }
        ValidationReport { violations }
    }

    /// Shortest-path closure (Floyd–Warshall) of this matrix read as a
    /// complete weighted graph.
    pub fn shortest_path_closure(&self) -> Self {
        let n = self.n;
        let mut out = self.clone();
        for k in 0..n {
            for i in 0..n {
                let dik = out.get(i, k);
                for j in 0..n {
                    let via = dik + out.get(k, j);
                    if via < out.get(i, j) {
                        out.data[i * n + j] = via;
                    }
                }
            }
        }
        out
    }
}

impl TryFrom<Vec<Vec<f64>>> for DistMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<DistMatrix> for Vec<Vec<f64>> {
    fn from(m: DistMatrix) -> Self {
        m.to_rows()
    }
}

/// One failed axiom. Triangle violations read `d(i, k) > d(i, j) + d(j, k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Diagonal {
        i: usize,
        value: f64,
    },
    Symmetry {
        i: usize,
        j: usize,
        upper: f64,
        lower: f64,
    },
    Positivity {
        i: usize,
        j: usize,
    },
    Triangle {
        i: usize,
        j: usize,
        k: usize,
        excess: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Diagonal { i, value } => write!(f, "diagonal ({i},{i}) = {value}"),
            Violation::Symmetry { i, j, upper, lower } => {
                write!(f, "symmetry at ({i},{j}): {upper} vs {lower}")
            }
            Violation::Positivity { i, j } => write!(f, "zero distance at ({i},{j})"),
            Violation::Triangle { i, j, k, excess } => {
                write!(f, "triangle ({i},{j},{k}) exceeded by {excess:e}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        write!(f, "{} violation(s)", self.violations.len())?;
        for v in self.violations.iter().take(3) {
            write!(f, "; {v}")?;
        }
        Ok(())
    }
}

/// Validates a raw row-major matrix. Structural defects are errors; axiom
/// failures are listed in the report.
pub fn validate_metric(rows: &[Vec<f64>], mode: MetricMode) -> Result<ValidationReport> {
    Ok(DistMatrix::from_rows(rows)?.validate(mode))
}

/// Largest absolute entrywise difference between two matrices on the same
/// point set.
pub fn sup_distance(d: &DistMatrix, e: &DistMatrix) -> Result<f64> {
    if d.len() != e.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            found: e.len(),
        });
    }
    Ok(d.data
        .iter()
        .zip(&e.data)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Mode implied by a matrix that already satisfies the pseudometric axioms.
pub fn infer_mode(d: &DistMatrix) -> MetricMode {
    if d.validate(MetricMode::Metric).is_valid() {
        MetricMode::Metric
    } else {
        MetricMode::Pseudometric
    }
}

/// Named points with a validated distance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMetricSpace {
    points: Vec<String>,
    dist: DistMatrix,
    mode: MetricMode,
}

impl FiniteMetricSpace {
    pub fn new(points: Vec<String>, dist: DistMatrix, mode: MetricMode) -> Result<Self> {
        if points.len() != dist.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: dist.len(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for p in &points {
            if !seen.insert(p.as_str()) {
                return Err(Error::DuplicatePoint(p.clone()));
            }
        }
        let report = dist.validate(mode);
        if !report.is_valid() {
            return Err(Error::InvalidMetric {
                name: "w".to_owned(),
                report,
            });
        }
        Ok(Self { points, dist, mode })
    }

    pub fn points(&self) -> &[String] {
        &self.points
    }

    pub fn dist(&self) -> &DistMatrix {
        &self.dist
    }

    pub fn mode(&self) -> MetricMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.points
            .iter()
            .position(|p| p == id)
            .ok_or_else(|| Error::UnknownPoint(id.to_owned()))
    }
}

/// An ambient space `(X, w)` together with a nonempty subset `A`.
///
/// Indices into `A` ("positions") follow the order in which the subset was
/// given; all matrices over `A` use that order.
#[derive(Clone, Debug)]
pub struct SubsetPair {
    ambient: FiniteMetricSpace,
    subset: Vec<usize>,
    position: Vec<Option<usize>>,
    restricted: DistMatrix,
    dist_to_subset: Vec<f64>,
    nearest: Vec<usize>,
}

impl SubsetPair {
    pub fn new(ambient: FiniteMetricSpace, subset: Vec<usize>) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        let n = ambient.len();
        let mut position = vec![None; n];
        for (pos, &idx) in subset.iter().enumerate() {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, len: n });
            }
            if position[idx].is_some() {
                return Err(Error::DuplicatePoint(ambient.points[idx].clone()));
            }
            position[idx] = Some(pos);
        }
        let restricted = ambient.dist.restrict(&subset);

        let mut by_index = subset.clone();
        by_index.sort_unstable();
        let w = &ambient.dist;
        let mut dist_to_subset = Vec::with_capacity(n);
        let mut nearest = Vec::with_capacity(n);
        for (x, pos) in position.iter().enumerate() {
            let mut best = by_index[0];
            for &a in &by_index[1..] {
                if w.get(x, a) < w.get(x, best) {
                    best = a;
                }
            }
            // x itself wins when x is in A, even in pseudometric mode
            if pos.is_some() {
                best = x;
            }
            nearest.push(best);
            dist_to_subset.push(w.get(x, best));
        }
        Ok(Self {
            ambient,
            subset,
            position,
            restricted,
            dist_to_subset,
            nearest,
        })
    }

    /// Builds the pair from point identifiers.
    pub fn from_ids(ambient: FiniteMetricSpace, subset_ids: &[String]) -> Result<Self> {
        let subset = subset_ids
            .iter()
            .map(|id| ambient.index_of(id))
            .collect::<Result<Vec<_>>>()?;
        Self::new(ambient, subset)
    }

    pub fn ambient(&self) -> &FiniteMetricSpace {
        &self.ambient
    }

    /// The ambient metric `w`.
    pub fn w(&self) -> &DistMatrix {
        &self.ambient.dist
    }

    /// Ambient indices of `A`, in subset order.
    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    /// `w` restricted to `A × A`.
    pub fn restricted(&self) -> &DistMatrix {
        &self.restricted
    }

    pub fn len(&self) -> usize {
        self.ambient.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ambient.is_empty()
    }

    pub fn subset_len(&self) -> usize {
        self.subset.len()
    }

    pub fn in_subset(&self, x: usize) -> bool {
        self.position[x].is_some()
    }

    /// Position of ambient point `x` inside `A`.
    pub fn position(&self, x: usize) -> Option<usize> {
        self.position[x]
    }

    /// Ambient indices of `X \ A`, ascending.
    pub fn outside(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&x| !self.in_subset(x))
    }

    pub fn outside_len(&self) -> usize {
        self.len() - self.subset.len()
    }

    /// `w(x, A)`.
    #[inline]
    pub fn dist_to_subset(&self, x: usize) -> f64 {
        self.dist_to_subset[x]
    }

    /// A point of `A` realizing `w(x, A)`; ties go to the lowest ambient index.
    #[inline]
    pub fn nearest_anchor(&self, x: usize) -> usize {
        self.nearest[x]
    }

    pub fn dist_to_subset_by_id(&self, id: &str) -> Result<f64> {
        Ok(self.dist_to_subset(self.ambient.index_of(id)?))
    }

    pub fn nearest_anchor_by_id(&self, id: &str) -> Result<&str> {
        let x = self.ambient.index_of(id)?;
        Ok(&self.ambient.points[self.nearest_anchor(x)])
    }
}

/// Named matrices over `A`, ordered by name.
pub type MetricFamily = BTreeMap<String, DistMatrix>;

/// Validates every member of a family in its inferred mode.
pub fn validate_family(family: &MetricFamily, subset_len: usize) -> Result<()> {
    for (name, d) in family {
        if d.len() != subset_len {
            return Err(Error::DimensionMismatch {
                expected: subset_len,
                found: d.len(),
            });
        }
        let report = d.validate(MetricMode::Pseudometric);
        if !report.is_valid() {
            return Err(Error::InvalidMetric {
                name: name.clone(),
                report,
            });
        }
    }
    Ok(())
}
