//! Level-by-level embedding of `X` into (measures on `A`) × (sparse profiles).
//!
//! At level `s` a point `x` outside `A` is sent to the measure
//! `Σ_O γ_O(x) δ_{a_O}` and to the profile `O ↦ λ_s(w(x, A)) σ_O(x)`; a point
//! of `A` is sent to `(δ_x, 0)`. The per-level distance is the transport cost
//! under `d` plus the sup-distance between profiles.
//!
//! On a finite instance the construction stops changing after a computable
//! level `S*`: from there on every cell is a singleton, and each outside point
//! maps to `(δ_{a(x)}, its own cell ↦ 1)` with `a(x)` its nearest anchor.

use std::borrow::Cow;
use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{DistMatrix, SubsetPair};
use crate::transport::{self, DiscreteMeasure};
use crate::wd::{self, CellId, WdCollection};

/// Stabilization levels above this are refused; the dyadic radii would underflow.
pub const MAX_STABILIZATION_LEVEL: u32 = 400;

/// Weight `2^-(s+1)` of level `s`; the weights sum to 1.
pub fn level_weight(s: u32) -> f64 {
    2f64.powi(-(s as i32) - 1)
}

/// Continuous ramp that is 0 on `[0, 2^-s]`, 1 on `[2^(1-s), ∞)` and linear
/// in between.
pub fn lambda(s: u32, t: f64) -> f64 {
    let lower = 2f64.powi(-(s as i32));
    let upper = 2.0 * lower;
    if t <= lower {
        0.0
    } else if t >= upper {
        1.0
    } else {
        (t - lower) / lower
    }
}

/// Finitely supported map from cells to reals, sorted by cell.
pub type Profile = Vec<(CellId, f64)>;

/// Sup-distance between two finitely supported profiles; absent entries are 0.
pub fn profile_distance(f: &Profile, g: &Profile) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut best = 0.0_f64;
    while i < f.len() || j < g.len() {
        let gap = match (f.get(i), g.get(j)) {
            (Some(a), Some(b)) => match a.0.cmp(&b.0) {
                Ordering::Less => {
                    i += 1;
                    a.1.abs()
                }
                Ordering::Greater => {
                    j += 1;
                    b.1.abs()
                }
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                    (a.1 - b.1).abs()
                }
            },
            (Some(a), None) => {
                i += 1;
                a.1.abs()
            }
            (None, Some(b)) => {
                j += 1;
                b.1.abs()
            }
            (None, None) => unreachable!(),
        };
        best = best.max(gap);
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSnapshot {
    pub level: u32,
    pub measure: DiscreteMeasure,
    pub profile: Profile,
}

/// Profile of `x` at the collection's level.
pub fn level_profile(x: usize, collection: &WdCollection, pair: &SubsetPair) -> Profile {
    if pair.in_subset(x) {
        return Vec::new();
    }
    let ramp = lambda(collection.level, pair.dist_to_subset(x));
    if ramp == 0.0 {
        return Vec::new();
    }
    let mut profile: Profile = collection
        .cells
        .iter()
        .filter_map(|c| {
            let v = ramp * c.sigma_at(x);
            (v > 0.0).then_some((c.id, v))
        })
        .collect();
    profile.sort_by_key(|e| e.0);
    profile
}

/// Measure on `A` (by subset position) attached to `x` at the collection's level.
pub fn level_measure(
    x: usize,
    collection: &WdCollection,
    pair: &SubsetPair,
) -> Result<DiscreteMeasure> {
    if let Some(pos) = pair.position(x) {
        return Ok(DiscreteMeasure::dirac(pos));
    }
    DiscreteMeasure::from_atoms(collection.active_at(x).map(|(cell, g)| {
        let pos = pair
            .position(cell.anchor)
            .expect("anchors lie in the subset");
        (pos, g)
    }))
}

pub fn snapshot(x: usize, collection: &WdCollection, pair: &SubsetPair) -> Result<LevelSnapshot> {
    Ok(LevelSnapshot {
        level: collection.level,
        measure: level_measure(x, collection, pair)?,
        profile: level_profile(x, collection, pair),
    })
}

/// Transport cost under `d` plus profile sup-distance.
pub fn hybrid_distance(d: &DistMatrix, p: &LevelSnapshot, q: &LevelSnapshot) -> Result<f64> {
    if p.level != q.level {
        return Err(Error::LevelMismatch(p.level, q.level));
    }
    Ok(transport::w1_value(d, &p.measure, &q.measure)? + profile_distance(&p.profile, &q.profile))
}

/// Smallest level from which the construction no longer changes: every
/// outside point has ramp value 1 and every cell is a singleton.
pub fn stabilization_level(pair: &SubsetPair) -> u32 {
    let dists: Vec<f64> = pair.outside().map(|x| pair.dist_to_subset(x)).collect();
    if dists.is_empty() {
        return 0;
    }
    let nearest = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let farthest = dists.iter().copied().fold(0.0, f64::max);
    let separation = pair.w().min_positive().unwrap_or(f64::INFINITY);
    let mut s = 0u32;
    loop {
        let ramp_saturated = 2f64.powi(1 - s as i32) <= nearest;
        let singletons = farthest / wd::ball_divisor(s) < separation;
        if ramp_saturated && singletons {
            return s;
        }
        s += 1;
    }
}

/// Closed-form description of a point's snapshots above `S*`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tail {
    pub in_subset: bool,
    /// Ambient index of the nearest anchor (the point itself inside `A`).
    pub anchor: usize,
    /// Lowest shell of the point; unused inside `A`.
    pub shell: i32,
}

impl Tail {
    fn of(x: usize, pair: &SubsetPair) -> Self {
        let in_subset = pair.in_subset(x);
        let shell = if in_subset {
            0
        } else {
            wd::shells_for_distance(pair.dist_to_subset(x))[0]
        };
        Self {
            in_subset,
            anchor: pair.nearest_anchor(x),
            shell,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedPoint {
    pub point: usize,
    /// Snapshots for levels `0..=S*`.
    pub snapshots: Vec<LevelSnapshot>,
    pub tail: Tail,
}

impl EmbeddedPoint {
    /// Snapshot at any level; levels above `S*` are synthesized from the tail.
    pub fn snapshot_at(&self, s: u32, pair: &SubsetPair) -> Cow<'_, LevelSnapshot> {
        if let Some(snap) = self.snapshots.get(s as usize) {
            return Cow::Borrowed(snap);
        }
        let pos = pair
            .position(self.tail.anchor)
            .expect("tail anchor lies in the subset");
        let profile = if self.tail.in_subset {
            Vec::new()
        } else {
            vec![(
                CellId {
                    center: self.point,
                    shell: self.tail.shell,
                    level: s,
                },
                1.0,
            )]
        };
        Cow::Owned(LevelSnapshot {
            level: s,
            measure: DiscreteMeasure::dirac(pos),
            profile,
        })
    }
}

/// Everything about `(X, A, w)` the extension needs; independent of any
/// metric on `A`.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub s_star: u32,
    pub levels: Vec<WdCollection>,
    pub points: Vec<EmbeddedPoint>,
}

pub fn embed(pair: &SubsetPair) -> Result<Embedding> {
    let s_star = stabilization_level(pair);
    if s_star > MAX_STABILIZATION_LEVEL {
        return Err(Error::Domain(format!(
            "stabilization level {s_star} exceeds {MAX_STABILIZATION_LEVEL}"
        )));
    }
    let levels: Vec<WdCollection> = (0..=s_star)
        .into_par_iter()
        .map(|s| wd::build_wd(pair, s))
        .collect();
    let points = (0..pair.len())
        .into_par_iter()
        .map(|x| {
            let snapshots = levels
                .iter()
                .map(|c| snapshot(x, c, pair))
                .collect::<Result<Vec<_>>>()?;
            Ok(EmbeddedPoint {
                point: x,
                snapshots,
                tail: Tail::of(x, pair),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Embedding {
        s_star,
        levels,
        points,
    })
}
