//! Whitney–Dugundji collections on the complement of `A`.
//!
//! A level-`k` collection covers `X \ A` by small balls taken inside the
//! dyadic shells `V_i = {x : 2^(i-1) < w(x, A) < 2^(i+1)}`. Each cell carries a
//! center outside `A`, an anchor in `A`, a bump `γ` (the cell's share of a
//! partition of unity) and a rescaled bump `σ` whose maximum over cells is 1
//! at every outside point.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::SubsetPair;

/// Absolute slack allowed in the exact checks, scaled by the largest entry of `w`.
pub const WD_TOLERANCE: f64 = 1e-12;

/// Cell index: center point, shell and level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub center: usize,
    pub shell: i32,
    pub level: u32,
}

/// Sparse non-negative function on the ambient points, sorted by point.
pub type PointWeights = Vec<(usize, f64)>;

fn lookup(weights: &PointWeights, x: usize) -> f64 {
    weights
        .binary_search_by_key(&x, |&(p, _)| p)
        .map_or(0.0, |i| weights[i].1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WdCell {
    pub id: CellId,
    /// Sorted ambient indices.
    pub members: Vec<usize>,
    pub center: usize,
    pub anchor: usize,
    pub shell: i32,
    pub radius: f64,
    pub gamma: PointWeights,
    pub sigma: PointWeights,
}

impl WdCell {
    pub fn gamma_at(&self, x: usize) -> f64 {
        lookup(&self.gamma, x)
    }

    pub fn sigma_at(&self, x: usize) -> f64 {
        lookup(&self.sigma, x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WdCollection {
    pub level: u32,
    pub cells: Vec<WdCell>,
}

impl WdCollection {
    /// Cells whose bump is positive at `x`, with the bump value.
    pub fn active_at(&self, x: usize) -> impl Iterator<Item = (&WdCell, f64)> {
        self.cells.iter().filter_map(move |c| {
            let g = c.gamma_at(x);
            (g > 0.0).then_some((c, g))
        })
    }
}

/// `4^(k+1)`.
pub fn ball_divisor(k: u32) -> f64 {
    2f64.powi(2 * (k as i32 + 1))
}

fn in_shell(t: f64, i: i32) -> bool {
    2f64.powi(i - 1) < t && t < 2f64.powi(i + 1)
}

/// Every `i` with `2^(i-1) < t < 2^(i+1)`, ascending. Requires `t > 0`.
pub fn shells_for_distance(t: f64) -> Vec<i32> {
    debug_assert!(t > 0.0);
    let base = t.log2().floor() as i32;
    ((base - 2)..=(base + 2))
        .filter(|&i| in_shell(t, i))
        .collect()
}

/// Shells containing the ambient point `x`.
pub fn shell_indices(x: usize, pair: &SubsetPair) -> Result<Vec<i32>> {
    if x >= pair.len() {
        return Err(Error::IndexOutOfRange {
            index: x,
            len: pair.len(),
        });
    }
    if pair.in_subset(x) {
        return Err(Error::Domain(format!(
            "point `{}` lies in the subset",
            pair.ambient().points()[x]
        )));
    }
    Ok(shells_for_distance(pair.dist_to_subset(x)))
}

/// Builds the strong level-`k` collection.
///
/// Candidate cells are `V_i ∩ U(x, w(x, A) / 4^(k+1))` for every outside `x`
/// and every shell `i` containing it. Candidates with identical member sets
/// are merged into the first one seen (lowest center, then lowest shell) and
/// their tent bumps `max(0, r - w(·, x))` are summed before normalizing.
pub fn build_wd(pair: &SubsetPair, k: u32) -> WdCollection {
    let w = pair.w();
    let div = ball_divisor(k);
    let outside: Vec<usize> = pair.outside().collect();

    let mut cells: Vec<WdCell> = Vec::new();
    let mut bumps: Vec<PointWeights> = Vec::new();
    let mut by_members: HashMap<Vec<usize>, usize> = HashMap::new();

    for &x in &outside {
        let radius = pair.dist_to_subset(x) / div;
        for shell in shells_for_distance(pair.dist_to_subset(x)) {
            let bump: PointWeights = outside
                .iter()
                .filter(|&&y| in_shell(pair.dist_to_subset(y), shell))
                .filter_map(|&y| {
                    let v = radius - w.get(y, x);
                    (v > 0.0).then_some((y, v))
                })
                .collect();
            let members: Vec<usize> = bump.iter().map(|&(y, _)| y).collect();
            match by_members.get(&members) {
                Some(&idx) => {
                    for (slot, (_, v)) in bumps[idx].iter_mut().zip(&bump) {
                        slot.1 += v;
                    }
                }
                None => {
                    by_members.insert(members.clone(), cells.len());
                    cells.push(WdCell {
                        id: CellId {
                            center: x,
                            shell,
                            level: k,
                        },
                        members,
                        center: x,
                        anchor: pair.nearest_anchor(x),
                        shell,
                        radius,
                        gamma: Vec::new(),
                        sigma: Vec::new(),
                    });
                    bumps.push(bump);
                }
            }
        }
    }

    let mut totals = vec![0.0; pair.len()];
    for bump in &bumps {
        for &(y, v) in bump {
            totals[y] += v;
        }
    }
    for (cell, bump) in cells.iter_mut().zip(bumps) {
        cell.gamma = bump.into_iter().map(|(y, v)| (y, v / totals[y])).collect();
    }

    let mut collection = WdCollection { level: k, cells };
    sup_partition(&mut collection, pair).expect("every outside point lies in its own cell");
    collection
}

/// Fills in `σ_O(x) = (2 / Φ(x)) · min(γ_O(x), Φ(x) / 2)` with
/// `Φ(x) = max_O γ_O(x)`.
pub fn sup_partition(collection: &mut WdCollection, pair: &SubsetPair) -> Result<()> {
    let mut peak = vec![0.0_f64; pair.len()];
    for cell in &collection.cells {
        for &(y, g) in &cell.gamma {
            peak[y] = peak[y].max(g);
        }
    }
    if let Some(x) = pair.outside().find(|&x| peak[x] <= 0.0) {
        return Err(Error::Domain(format!(
            "outside point `{}` is not covered",
            pair.ambient().points()[x]
        )));
    }
    for cell in &mut collection.cells {
        cell.sigma = cell
            .gamma
            .iter()
            .filter(|&&(y, g)| g > 0.0 && !pair.in_subset(y))
            .map(|&(y, g)| (y, sup_weight(g, peak[y])))
            .collect();
    }
    Ok(())
}

/// One value of the sup-partition; exactly 1 whenever `gamma >= peak / 2`.
pub fn sup_weight(gamma: f64, peak: f64) -> f64 {
    if gamma >= peak / 2.0 {
        1.0
    } else {
        2.0 * gamma / peak
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WdCondition {
    /// Centers outside `A`, anchors in `A`, members outside `A`, bumps in `[0, 1]`, cover.
    Basic,
    /// Members inside the center's ball and shell.
    Ball,
    /// Anchor within `(4^(k+1) + 1) / 4^(k+1) · w(p, A)` of the center.
    Anchor,
    /// Bump support inside the member set.
    Support,
    /// Bumps sum to 1 outside `A` and to 0 on `A`.
    Partition,
    /// Cell diameter at most `16 · w(x, A) / 4^(k+1)` wherever the bump is positive.
    Strong,
    /// `w(a, a_O) <= 4 w(a, x)` for all `a` in `A` and `x` with positive bump.
    AnchorFactor,
    /// Same supports for `σ` and `γ`, values in `[0, 1]`, maximum 1 outside `A`.
    SupPartition,
}

impl fmt::Display for WdCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WdCondition::Basic => "basic",
            WdCondition::Ball => "ball",
            WdCondition::Anchor => "anchor",
            WdCondition::Support => "support",
            WdCondition::Partition => "partition",
            WdCondition::Strong => "strong",
            WdCondition::AnchorFactor => "anchor_factor",
            WdCondition::SupPartition => "sup_partition",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WdViolation {
    pub condition: WdCondition,
    pub cell: Option<CellId>,
    pub point: Option<usize>,
    /// Amount by which the inequality fails (positive).
    pub excess: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WdReport {
    pub violations: Vec<WdViolation>,
}

impl WdReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violations_of(&self, condition: WdCondition) -> impl Iterator<Item = &WdViolation> {
        self.violations
            .iter()
            .filter(move |v| v.condition == condition)
    }

    fn push(
        &mut self,
        condition: WdCondition,
        cell: Option<CellId>,
        point: Option<usize>,
        excess: f64,
    ) {
        self.violations.push(WdViolation {
            condition,
            cell,
            point,
            excess,
        });
    }
}

/// Checks every defining condition of a strong collection, plus the anchor
/// factor-4 estimate and the sup-partition properties.
pub fn check_wd(collection: &WdCollection, pair: &SubsetPair) -> WdReport {
    let w = pair.w();
    let n = pair.len();
    let tol = WD_TOLERANCE * w.max_entry().max(1.0);
    let div = ball_divisor(collection.level);
    let mut report = WdReport::default();
    use WdCondition::*;

    let mut sums = vec![0.0; n];
    let mut peak = vec![0.0_f64; n];
    let mut covered = vec![false; n];

    for cell in &collection.cells {
        let id = Some(cell.id);
        let p = cell.center;
        if p >= n || pair.in_subset(p) {
            report.push(Basic, id, Some(p), 0.0);
            continue;
        }
        if cell.anchor >= n || !pair.in_subset(cell.anchor) {
            report.push(Basic, id, Some(cell.anchor), 0.0);
            continue;
        }
        let p_dist = pair.dist_to_subset(p);
        let radius = p_dist / div;

        for &y in &cell.members {
            if y >= n || pair.in_subset(y) {
                report.push(Basic, id, Some(y), 0.0);
                continue;
            }
            covered[y] = true;
            let excess = w.get(y, p) - radius;
            if excess >= 0.0 {
                report.push(Ball, id, Some(y), excess);
            }
            if !in_shell(pair.dist_to_subset(y), cell.shell) {
                report.push(Ball, id, Some(y), 0.0);
            }
        }

        let anchor_excess = w.get(p, cell.anchor) - (div + 1.0) / div * p_dist;
        if anchor_excess > tol {
            report.push(Anchor, id, Some(p), anchor_excess);
        }

        let diam = w.diameter_of(&cell.members);
        for &(x, g) in &cell.gamma {
            if x >= n {
                report.push(Basic, id, Some(x), 0.0);
                continue;
            }
            if !(0.0..=1.0).contains(&g) {
                report.push(Basic, id, Some(x), (g - 1.0).max(-g));
            }
            sums[x] += g;
            peak[x] = peak[x].max(g);
            if g <= 0.0 {
                continue;
            }
            if cell.members.binary_search(&x).is_err() {
                report.push(Support, id, Some(x), g);
            }
            if !pair.in_subset(x) {
                let excess = diam - 16.0 * pair.dist_to_subset(x) / div;
                if excess > tol {
                    report.push(Strong, id, Some(x), excess);
                }
            }
            for &a in pair.subset() {
                let excess = w.get(a, cell.anchor) - 4.0 * w.get(a, x);
                if excess > tol {
                    report.push(AnchorFactor, id, Some(x), excess);
                }
            }
        }

        let gamma_support: Vec<usize> = cell
            .gamma
            .iter()
            .filter(|e| e.1 > 0.0)
            .map(|e| e.0)
            .collect();
        let sigma_support: Vec<usize> = cell
            .sigma
            .iter()
            .filter(|e| e.1 > 0.0)
            .map(|e| e.0)
            .collect();
        if gamma_support != sigma_support {
            report.push(SupPartition, id, None, 0.0);
        }
        for &(x, s) in &cell.sigma {
            if !(0.0..=1.0).contains(&s) {
                report.push(SupPartition, id, Some(x), (s - 1.0).max(-s));
            }
        }
    }

    for x in 0..n {
        let target = if pair.in_subset(x) { 0.0 } else { 1.0 };
        let gap = (sums[x] - target).abs();
        if gap > WD_TOLERANCE {
            report.push(Partition, None, Some(x), gap);
        }
        if !pair.in_subset(x) && !covered[x] {
            report.push(Basic, None, Some(x), 0.0);
        }
    }

    for x in pair.outside() {
        let top = collection
            .cells
            .iter()
            .map(|c| c.sigma_at(x))
            .fold(0.0, f64::max);
        if top != 1.0 {
            report.push(SupPartition, None, Some(x), 1.0 - top);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{DistMatrix, FiniteMetricSpace, MetricMode};

    fn pair_from(rows: &[&[f64]], subset: Vec<usize>) -> SubsetPair {
        let n = rows.len();
        let dist =
            DistMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        let x = FiniteMetricSpace::new(
            (0..n).map(|i| format!("p{i}")).collect(),
            dist,
            MetricMode::Metric,
        )
        .unwrap();
        SubsetPair::new(x, subset).unwrap()
    }

    fn shells_by_enumeration(t: f64) -> Vec<i32> {
        (-60..60)
            .filter(|&i| 2f64.powi(i - 1) < t && t < 2f64.powi(i + 1))
            .collect()
    }

    #[test]
    fn shell_examples() {
        for (t, expected) in [(1.0, vec![0]), (1.5, vec![0, 1]), (0.125, vec![-3])] {
            assert_eq!(shells_by_enumeration(t), expected);
            assert_eq!(shells_for_distance(t), expected);
        }
        for t in [1e-7, 0.3, 0.75, 3.0, 17.0, 1024.0, 1000.5] {
            assert_eq!(shells_for_distance(t), shells_by_enumeration(t), "t = {t}");
        }
    }

    #[test]
    fn shell_indices_rejects_subset_points() {
        let pair = pair_from(&[&[0.0, 1.0], &[1.0, 0.0]], vec![0]);
        assert!(matches!(shell_indices(0, &pair), Err(Error::Domain(_))));
        assert_eq!(shell_indices(1, &pair).unwrap(), vec![0]);
    }

    #[test]
    fn empty_complement_gives_empty_collection() {
        let pair = pair_from(&[&[0.0, 1.0], &[1.0, 0.0]], vec![0, 1]);
        let wd = build_wd(&pair, 0);
        assert!(wd.cells.is_empty());
        assert!(check_wd(&wd, &pair).is_clean());
    }

    #[test]
    fn single_outside_point_hand_run() {
        // A = {p0, p1}, x = p2 with w(x, A) = 1
        let pair = pair_from(
            &[&[0.0, 2.0, 1.0], &[2.0, 0.0, 1.5], &[1.0, 1.5, 0.0]],
            vec![0, 1],
        );
        let wd = build_wd(&pair, 0);
        assert_eq!(wd.cells.len(), 1);
        let cell = &wd.cells[0];
        assert_eq!(cell.members, vec![2]);
        assert_eq!(cell.center, 2);
        assert_eq!(cell.radius, 0.25);
        assert_eq!(cell.anchor, 0);
        assert_eq!(cell.gamma, vec![(2, 1.0)]);
        assert_eq!(cell.sigma, vec![(2, 1.0)]);
        assert!(check_wd(&wd, &pair).is_clean());
    }

    #[test]
    fn sup_weight_examples() {
        assert_eq!(sup_weight(1.0, 1.0), 1.0);
        assert_eq!(
            (sup_weight(0.9, 0.9), sup_weight(0.1, 0.9)),
            (1.0, 2.0 * 0.1 / 0.9)
        );
        assert!((sup_weight(0.1, 0.9) - 2.0 / 9.0).abs() < 1e-15);
        assert_eq!((sup_weight(0.5, 0.5), sup_weight(0.5, 0.5)), (1.0, 1.0));
    }

    fn line_pair() -> SubsetPair {
        // points on a line: A = {0, 10}; outside points cluster near 4..6
        let xs: [f64; 8] = [0.0, 10.0, 4.0, 4.05, 4.1, 5.0, 6.0, 9.9];
        let n = xs.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| (xs[i] - xs[j]).abs()).collect())
            .collect();
        let rows_ref: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        pair_from(&rows_ref, vec![0, 1])
    }

    #[test]
    fn line_instance_is_clean_at_several_levels() {
        let pair = line_pair();
        for k in 0..4 {
            let wd = build_wd(&pair, k);
            let report = check_wd(&wd, &pair);
            assert!(report.is_clean(), "k = {k}: {report:?}");
        }
    }

    #[test]
    fn merging_identical_members_keeps_sums() {
        // w(x, A) = 1.5 puts x in two shells; both candidates are {x}
        let pair = pair_from(&[&[0.0, 1.5], &[1.5, 0.0]], vec![0]);
        let wd = build_wd(&pair, 0);
        assert_eq!(wd.cells.len(), 1);
        assert_eq!(
            wd.cells[0].id,
            CellId {
                center: 1,
                shell: 0,
                level: 0
            }
        );
        assert_eq!(wd.cells[0].gamma, vec![(1, 1.0)]);
    }

    #[test]
    fn farthest_anchor_breaks_anchor_condition() {
        let pair = line_pair();
        let mut wd = build_wd(&pair, 0);
        let w = pair.w();
        for cell in &mut wd.cells {
            cell.anchor = *pair
                .subset()
                .iter()
                .max_by(|&&a, &&b| w.get(cell.center, a).total_cmp(&w.get(cell.center, b)))
                .unwrap();
        }
        let report = check_wd(&wd, &pair);
        let witness = report
            .violations_of(WdCondition::Anchor)
            .next()
            .expect("anchor violation");
        let cell = wd
            .cells
            .iter()
            .find(|c| Some(c.id) == witness.cell)
            .unwrap();
        let p = cell.center;
        let recomputed = w.get(p, cell.anchor) - 1.25 * pair.dist_to_subset(p);
        assert!((recomputed - witness.excess).abs() < 1e-12);
    }

    #[test]
    fn halved_bumps_break_partition() {
        let pair = line_pair();
        let mut wd = build_wd(&pair, 1);
        for cell in &mut wd.cells {
            for g in &mut cell.gamma {
                g.1 *= 0.5;
            }
        }
        let report = check_wd(&wd, &pair);
        let hits: Vec<_> = report.violations_of(WdCondition::Partition).collect();
        assert_eq!(hits.len(), pair.outside_len());
        for v in hits {
            assert!((v.excess - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn build_is_deterministic() {
        let pair = line_pair();
        assert_eq!(build_wd(&pair, 2), build_wd(&pair, 2));
    }
}
