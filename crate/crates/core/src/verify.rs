//! Invariant suite over a loaded instance, producing a machine-readable report.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{self, lambda};
use crate::error::{Error, Result};
use crate::extensor::{self, Mode, Precomputation, Truncation};
use crate::gen;
use crate::instance::Instance;
use crate::metric::{infer_mode, sup_distance, DistMatrix, MetricMode, SubsetPair};
use crate::transport::{self, DiscreteMeasure};
use crate::wd::{self, CellId, WdCondition, WD_TOLERANCE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Identities forced by construction: partition sums, restrictions.
    pub exact: f64,
    /// Closed-form transport identities.
    pub closed_form: f64,
    /// Identities mediated by a linear program.
    pub lp: f64,
    /// Identities of the level series and its assembly.
    pub series: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            exact: 1e-12,
            closed_form: 1e-10,
            lp: 1e-7,
            series: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Random measures drawn per transport check.
    pub samples: usize,
    pub tolerances: Tolerances,
    /// Truncation levels compared against exact mode, as offsets from `S*`.
    pub truncation_offsets: Vec<u32>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 50,
            tolerances: Tolerances::default(),
            truncation_offsets: vec![0, 5, 20],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

/// Where the worst case of a check was found.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Witness {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell: Option<CellId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
    /// Measured quantity at the witness.
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub id: String,
    /// Property being checked.
    pub anchor: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    /// `tolerance - worst excess`; negative exactly when the check fails.
    pub slack: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub digest: String,
    #[serde(rename = "S_star")]
    pub s_star: u32,
    pub checks: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }

    pub fn check(&self, id: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.id == id)
    }

    /// 0 when every check passes or is skipped, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Maps a metric on `A` to a matrix on `X`.
pub type Extender<'a> = dyn Fn(&DistMatrix) -> Result<DistMatrix> + Sync + 'a;

/// `| sup |Ext(d) - Ext(e)| - sup |d - e| |`.
pub fn isometry_defect(d: &DistMatrix, e: &DistMatrix, extender: &Extender<'_>) -> Result<f64> {
    let outer = sup_distance(&extender(d)?, &extender(e)?)?;
    Ok((outer - sup_distance(d, e)?).abs())
}

/// Isometry defects of the extensor and the shortest-path baseline on one pair
/// of metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metrics: [String; 2],
    /// `sup |d - e|` on `A`.
    pub sup_distance: f64,
    pub extensor_sup_distance: f64,
    pub extensor_defect: f64,
    pub baseline_sup_distance: f64,
    pub baseline_defect: f64,
}

impl Comparison {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }
}

impl std::fmt::Display for Comparison {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "metrics {} vs {}: sup |d - e| = {:.12}",
            self.metrics[0], self.metrics[1], self.sup_distance
        )?;
        writeln!(
            f,
            "{:<10} {:>20} {:>20}",
            "extender", "sup |Ext d - Ext e|", "defect"
        )?;
        writeln!(
            f,
            "{:<10} {:>20.12} {:>20.3e}",
            "extensor", self.extensor_sup_distance, self.extensor_defect
        )?;
        write!(
            f,
            "{:<10} {:>20.12} {:>20.3e}",
            "baseline", self.baseline_sup_distance, self.baseline_defect
        )
    }
}

/// Compares the exact extensor with the shortest-path baseline on `(d, e)`.
pub fn compare(
    pre: &Precomputation,
    names: [&str; 2],
    d: &DistMatrix,
    e: &DistMatrix,
) -> Result<Comparison> {
    let inner = sup_distance(d, e)?;
    let ours = sup_distance(
        &extensor::extend_auto(pre, d, Mode::Exact)?.matrix,
        &extensor::extend_auto(pre, e, Mode::Exact)?.matrix,
    )?;
    let theirs = sup_distance(
        &extensor::baseline_extend(pre.pair(), d),
        &extensor::baseline_extend(pre.pair(), e),
    )?;
    Ok(Comparison {
        metrics: names.map(String::from),
        sup_distance: inner,
        extensor_sup_distance: ours,
        extensor_defect: (ours - inner).abs(),
        baseline_sup_distance: theirs,
        baseline_defect: (theirs - inner).abs(),
    })
}

/// Tracks the largest excess seen and where it occurred.
struct Worst {
    excess: f64,
    witness: Option<Witness>,
    seen: bool,
}

impl Worst {
    fn new() -> Self {
        Self {
            excess: f64::NEG_INFINITY,
            witness: None,
            seen: false,
        }
    }

    fn offer(&mut self, excess: f64, witness: impl FnOnce() -> Witness) {
        self.seen = true;
        if excess > self.excess || (excess.is_nan() && !self.excess.is_nan()) {
            self.excess = excess;
            self.witness = Some(witness());
        }
    }

    fn finish(self, id: &str, anchor: &str, tolerance: f64) -> CheckRecord {
        if !self.seen {
            return record(id, anchor, Status::Pass, None, tolerance, tolerance);
        }
        let pass = self.excess <= tolerance;
        let slack = if self.excess.is_nan() {
            f64::MIN
        } else {
            tolerance - self.excess
        };
        let status = if pass { Status::Pass } else { Status::Fail };
        record(id, anchor, status, self.witness, slack, tolerance)
    }
}

fn record(
    id: &str,
    anchor: &str,
    status: Status,
    witness: Option<Witness>,
    slack: f64,
    tolerance: f64,
) -> CheckRecord {
    CheckRecord {
        id: id.to_owned(),
        anchor: anchor.to_owned(),
        status,
        witness,
        slack,
        tolerance,
    }
}

fn skipped(id: &str, anchor: &str, tolerance: f64, why: &str) -> CheckRecord {
    let witness = Witness {
        detail: Some(why.to_owned()),
        ..Witness::default()
    };
    record(id, anchor, Status::Skipped, Some(witness), 0.0, tolerance)
}

fn errored(id: &str, anchor: &str, tolerance: f64, err: &Error) -> CheckRecord {
    let witness = Witness {
        detail: Some(format!("error: {err}")),
        ..Witness::default()
    };
    record(id, anchor, Status::Fail, Some(witness), f64::MIN, tolerance)
}

/// Largest `d(i,k) - d(i,j) - d(j,k)` and its indices.
fn worst_triangle(d: &DistMatrix) -> (f64, [usize; 3]) {
    let n = d.len();
    let mut best = (f64::NEG_INFINITY, [0; 3]);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let excess = d.get(i, k) - d.get(i, j) - d.get(j, k);
                if excess > best.0 {
                    best = (excess, [i, j, k]);
                }
            }
        }
    }
    best
}

/// A metric on `A` taking part in the suite.
#[derive(Clone, Debug)]
struct Member {
    name: String,
    d: DistMatrix,
    mode: MetricMode,
}

struct Context<'a> {
    pair: &'a SubsetPair,
    pre: &'a Precomputation,
    config: &'a SuiteConfig,
    /// Valid family members.
    members: Vec<Member>,
    /// Members plus seeded variants, used for isometry checks.
    probes: Vec<Member>,
    /// Index pairs into `probes` compared for isometry.
    probe_pairs: Vec<(usize, usize)>,
    invalid: Vec<(String, String)>,
}

impl Context<'_> {
    fn id(&self, x: usize) -> String {
        self.pair.ambient().points()[x].clone()
    }

    fn subset_id(&self, a: usize) -> String {
        self.id(self.pair.subset()[a])
    }

    fn ids(&self, xs: &[usize]) -> Vec<String> {
        xs.iter().map(|&x| self.id(x)).collect()
    }

    fn subset_ids(&self, xs: &[usize]) -> Vec<String> {
        xs.iter().map(|&a| self.subset_id(a)).collect()
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.pair.len();
        (0..n)
            .flat_map(|x| ((x + 1)..n).map(move |y| (x, y)))
            .collect()
    }

    fn wd_levels(&self) -> u32 {
        self.pre.s_star().max(2)
    }
}

fn build_probes(members: &[Member], seed: u64) -> (Vec<Member>, Vec<(usize, usize)>) {
    let mut probes = members.to_vec();
    let mut pairs = Vec::new();
    for i in 0..members.len() {
        for j in (i + 1)..members.len() {
            pairs.push((i, j));
        }
    }
    for (i, m) in members.iter().enumerate() {
        let mut rng = gen::rng(seed.wrapping_add(i as u64));
        let perturbed = if m.mode == MetricMode::Metric {
            gen::perturbed_metric(&m.d, &mut rng)
        } else {
            m.d.scaled(rng.gen_range(0.5..2.0))
        };
        for (suffix, d) in [("perturbed", perturbed), ("tripled", m.d.scaled(3.0))] {
            probes.push(Member {
                name: format!("{}~{suffix}", m.name),
                d,
                mode: m.mode,
            });
            pairs.push((i, probes.len() - 1));
        }
    }
    (probes, pairs)
}

/// Runs every check with the extensor under test.
pub fn run_suite(instance: &Instance, config: &SuiteConfig) -> Result<VerificationReport> {
    let pre = Precomputation::new(instance.pair.clone())?;
    let extender = |d: &DistMatrix| -> Result<DistMatrix> {
        Ok(extensor::extend_auto(&pre, d, Mode::Exact)?.matrix)
    };
    run_suite_with(instance, &pre, config, &extender)
}

/// Runs every check, taking exact extensions from `extender`.
pub fn run_suite_with(
    instance: &Instance,
    pre: &Precomputation,
    config: &SuiteConfig,
    extender: &Extender<'_>,
) -> Result<VerificationReport> {
    let pair = &instance.pair;
    let mut members = Vec::new();
    let mut invalid = Vec::new();
    for (name, d) in &instance.family {
        if d.len() != pair.subset_len() {
            return Err(Error::DimensionMismatch {
                expected: pair.subset_len(),
                found: d.len(),
            });
        }
        let report = d.validate(MetricMode::Pseudometric);
        if report.is_valid() {
            members.push(Member {
                name: name.clone(),
                d: d.clone(),
                mode: infer_mode(d),
            });
        } else {
            invalid.push((name.clone(), report.to_string()));
        }
    }
    let (probes, probe_pairs) = build_probes(&members, config.seed);
    let ctx = Context {
        pair,
        pre,
        config,
        members,
        probes,
        probe_pairs,
        invalid,
    };

    // extensions of every probe, shared by the extension checks
    let extensions: Vec<Result<DistMatrix>> =
        ctx.probes.par_iter().map(|m| extender(&m.d)).collect();

    type Check<'c> = Box<dyn Fn() -> Vec<CheckRecord> + Sync + Send + 'c>;
    let ctx = &ctx;
    let ext = &extensions;
    let checks: Vec<Check<'_>> = vec![
        Box::new(move || vec![input_w(ctx), input_family(ctx)]),
        Box::new(move || wd_checks(ctx)),
        Box::new(move || {
            vec![
                level_radius(ctx),
                level_proximity(ctx),
                stabilized_tail(ctx),
            ]
        }),
        Box::new(move || level_term_checks(ctx)),
        Box::new(move || vec![dirac_mixture(ctx), same_support(ctx)]),
        Box::new(move || duality_checks(ctx)),
        Box::new(move || extension_checks(ctx, ext)),
        Box::new(move || vec![bounded(ctx, extender)]),
        Box::new(move || vec![mode_agreement(ctx, ext)]),
        Box::new(move || vec![baseline(ctx, ext)]),
    ];
    let mut records: Vec<CheckRecord> = checks.par_iter().flat_map(|c| c()).collect();
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(VerificationReport {
        digest: instance.digest.clone(),
        s_star: pre.s_star(),
        checks: records,
    })
}

fn input_w(ctx: &Context<'_>) -> CheckRecord {
    let tol = ctx.pair.w().tolerance();
    let (excess, [i, j, k]) = worst_triangle(ctx.pair.w());
    let mut worst = Worst::new();
    worst.offer(excess, || Witness {
        points: ctx.ids(&[i, j, k]),
        value: excess,
        ..Witness::default()
    });
    worst.finish(
        "input.w_metric",
        "ambient distance satisfies the metric axioms",
        tol,
    )
}

fn input_family(ctx: &Context<'_>) -> CheckRecord {
    let anchor = "every family member is a metric or pseudometric on A";
    match ctx.invalid.first() {
        None => record("input.family_metric", anchor, Status::Pass, None, 0.0, 0.0),
        Some((name, why)) => {
            let witness = Witness {
                metric: Some(name.clone()),
                value: ctx.invalid.len() as f64,
                detail: Some(why.clone()),
                ..Witness::default()
            };
            record(
                "input.family_metric",
                anchor,
                Status::Fail,
                Some(witness),
                -1.0,
                0.0,
            )
        }
    }
}

fn wd_checks(ctx: &Context<'_>) -> Vec<CheckRecord> {
    let pair = ctx.pair;
    let tol = WD_TOLERANCE * pair.w().max_entry().max(1.0);
    let levels = ctx.wd_levels();
    let reports: Vec<(u32, wd::WdReport)> = (0..=levels)
        .into_par_iter()
        .map(|k| {
            let collection = match ctx.pre.embedding().levels.get(k as usize) {
                Some(c) => c.clone(),
                None => wd::build_wd(pair, k),
            };
            (k, wd::check_wd(&collection, pair))
        })
        .collect();
    let conditions = [
        (
            WdCondition::Basic,
            "cover of X\\A by cells with centers outside A and anchors in A",
        ),
        (
            WdCondition::Ball,
            "cells lie in the center's ball and dyadic shell",
        ),
        (
            WdCondition::Anchor,
            "anchor is within (4^(k+1)+1)/4^(k+1) w(p,A) of the center",
        ),
        (WdCondition::Support, "bump support lies inside its cell"),
        (
            WdCondition::Partition,
            "bumps sum to 1 on X\\A and vanish on A",
        ),
        (
            WdCondition::Strong,
            "cell diameter at most 16 w(x,A)/4^(k+1) where the bump is positive",
        ),
        (
            WdCondition::AnchorFactor,
            "w(a, a_O) <= 4 w(a, x) where the bump at x is positive",
        ),
        (
            WdCondition::SupPartition,
            "sup-partition has the bump supports and attains 1 off A",
        ),
    ];
    conditions
        .iter()
        .map(|&(condition, anchor)| {
            let mut worst = Worst::new();
            for (k, report) in &reports {
                for v in report.violations_of(condition) {
                    worst.offer(v.excess, || Witness {
                        points: v.point.map(|p| vec![ctx.id(p)]).unwrap_or_default(),
                        cell: v.cell,
                        level: Some(*k),
                        value: v.excess,
                        ..Witness::default()
                    });
                }
            }
            worst.finish(&format!("wd.{condition}"), anchor, tol)
        })
        .collect()
}

fn level_radius(ctx: &Context<'_>) -> CheckRecord {
    let pair = ctx.pair;
    let tol = ctx.config.tolerances.exact;
    let mut worst = Worst::new();
    for (x, point) in ctx.pre.embedding().points.iter().enumerate() {
        for snap in &point.snapshots {
            let peak = snap.profile.iter().map(|e| e.1.abs()).fold(0.0, f64::max);
            if peak < 1.0 {
                let bound = 2f64.powi(1 - snap.level as i32);
                let excess = pair.dist_to_subset(x) - bound;
                worst.offer(excess, || Witness {
                    points: ctx.ids(&[x]),
                    level: Some(snap.level),
                    value: pair.dist_to_subset(x),
                    ..Witness::default()
                });
            }
        }
    }
    worst.finish(
        "level.radius",
        "a profile of sup-norm below 1 at level N forces w(x,A) <= 2^(1-N)",
        tol,
    )
}

fn level_proximity(ctx: &Context<'_>) -> CheckRecord {
    let pair = ctx.pair;
    let w = pair.w();
    let tol = ctx.config.tolerances.exact;
    let points = &ctx.pre.embedding().points;
    let mut worst = Worst::new();
    for s in 0..=ctx.pre.s_star() {
        let full: Vec<usize> = pair
            .outside()
            .filter(|&x| lambda(s, pair.dist_to_subset(x)) == 1.0)
            .collect();
        for &x in &full {
            for &y in &full {
                if x == y {
                    continue;
                }
                let gap = embedding::profile_distance(
                    &points[x].snapshots[s as usize].profile,
                    &points[y].snapshots[s as usize].profile,
                );
                if gap < 1.0 {
                    let bound = 16.0 * pair.dist_to_subset(x) / wd::ball_divisor(s);
                    let excess = w.get(x, y) - bound;
                    worst.offer(excess, || Witness {
                        points: ctx.ids(&[x, y]),
                        level: Some(s),
                        value: w.get(x, y),
                        ..Witness::default()
                    });
                }
            }
        }
    }
    worst.finish(
        "level.proximity",
        "saturated points with profiles closer than 1 at level N lie within 16 w(x,A)/4^(N+1)",
        tol,
    )
}

/// Snapshots rebuilt from scratch just above `S*` match the closed-form tail.
fn stabilized_tail(ctx: &Context<'_>) -> CheckRecord {
    let pair = ctx.pair;
    let tol = ctx.config.tolerances.exact;
    let anchor = "snapshots above S* equal the closed-form tail";
    let mut worst = Worst::new();
    for s in [ctx.pre.s_star() + 1, ctx.pre.s_star() + 2] {
        let collection = wd::build_wd(pair, s);
        for (x, point) in ctx.pre.embedding().points.iter().enumerate() {
            let built = match embedding::snapshot(x, &collection, pair) {
                Ok(b) => b,
                Err(e) => return errored("level.tail", anchor, tol, &e),
            };
            let tail = point.snapshot_at(s, pair);
            let same_ids = built.profile.len() == tail.profile.len()
                && built
                    .profile
                    .iter()
                    .zip(&tail.profile)
                    .all(|(a, b)| a.0 == b.0)
                && built.measure.support() == tail.measure.support();
            let excess = if same_ids {
                let p = embedding::profile_distance(&built.profile, &tail.profile);
                let m = built
                    .measure
                    .weights()
                    .iter()
                    .zip(tail.measure.weights())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                p.max(m)
            } else {
                1.0
            };
            worst.offer(excess, || Witness {
                points: ctx.ids(&[x]),
                level: Some(s),
                value: excess,
                ..Witness::default()
            });
        }
    }
    worst.finish("level.tail", anchor, tol)
}

/// Per-pair level terms for levels `0..=S*+1`, indexed `[level][pair]`.
fn term_table(
    ctx: &Context<'_>,
    d: &DistMatrix,
    pairs: &[(usize, usize)],
) -> Result<Vec<Vec<f64>>> {
    (0..=ctx.pre.s_star() + 1)
        .map(|s| {
            pairs
                .iter()
                .map(|&(x, y)| ctx.pre.level_term(d, x, y, s))
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

fn level_term_checks(ctx: &Context<'_>) -> Vec<CheckRecord> {
    let tol = ctx.config.tolerances;
    let restriction_anchor = "level distance between points of A equals d";
    let isometry_anchor = "sup over levels and pairs of |level_d - level_e| equals sup |d - e|";
    let pairs = ctx.pairs();
    let tables: Vec<Result<Vec<Vec<f64>>>> = ctx
        .probes
        .par_iter()
        .map(|m| term_table(ctx, &m.d, &pairs))
        .collect();
    if ctx.members.is_empty() {
        return vec![
            skipped(
                "level.term_isometry",
                isometry_anchor,
                tol.lp,
                "empty family",
            ),
            skipped(
                "level.term_restriction",
                restriction_anchor,
                tol.exact,
                "empty family",
            ),
        ];
    }

    let mut restriction = Worst::new();
    for (m, table) in ctx.members.iter().zip(&tables) {
        let table = match table {
            Ok(t) => t,
            Err(e) => {
                return vec![errored(
                    "level.term_restriction",
                    restriction_anchor,
                    tol.exact,
                    e,
                )]
            }
        };
        for (s, row) in table.iter().enumerate() {
            for (&(x, y), &v) in pairs.iter().zip(row) {
                if let (Some(a), Some(b)) = (ctx.pair.position(x), ctx.pair.position(y)) {
                    let excess = (v - m.d.get(a, b)).abs();
                    restriction.offer(excess, || Witness {
                        metric: Some(m.name.clone()),
                        points: ctx.ids(&[x, y]),
                        level: Some(s as u32),
                        value: v,
                        ..Witness::default()
                    });
                }
            }
        }
    }

    let mut isometry = Worst::new();
    for &(i, j) in &ctx.probe_pairs {
        let (ti, tj) = match (&tables[i], &tables[j]) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                return vec![errored("level.term_isometry", isometry_anchor, tol.lp, e)]
            }
        };
        let mut best = (0.0_f64, None);
        for (s, (ri, rj)) in ti.iter().zip(tj).enumerate() {
            for (k, (a, b)) in ri.iter().zip(rj).enumerate() {
                let gap = (a - b).abs();
                if gap > best.0 || best.1.is_none() {
                    best = (gap.max(best.0), Some((s, k)));
                }
            }
        }
        let inner = sup_distance(&ctx.probes[i].d, &ctx.probes[j].d).unwrap_or(f64::NAN);
        let excess = (best.0 - inner).abs();
        isometry.offer(excess, || {
            let (s, k) = best.1.unwrap_or((0, 0));
            let pts = pairs
                .get(k)
                .map(|&(x, y)| ctx.ids(&[x, y]))
                .unwrap_or_default();
            Witness {
                metric: Some(format!("{} vs {}", ctx.probes[i].name, ctx.probes[j].name)),
                points: pts,
                level: Some(s as u32),
                value: best.0,
                ..Witness::default()
            }
        });
    }
    vec![
        isometry.finish("level.term_isometry", isometry_anchor, tol.lp),
        restriction.finish("level.term_restriction", restriction_anchor, tol.exact),
    ]
}

/// Random probability vector of length `len`.
fn random_weights<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

/// Random distinct support of size `1..=max` inside `0..k`, sorted.
fn random_support<R: Rng>(k: usize, max: usize, rng: &mut R) -> Vec<usize> {
    let size = rng.gen_range(1..=max.min(k));
    let mut s = rand::seq::index::sample(rng, k, size).into_vec();
    s.sort_unstable();
    s
}

fn measure(points: &[usize], weights: &[f64]) -> Result<DiscreteMeasure> {
    DiscreteMeasure::from_atoms(points.iter().copied().zip(weights.iter().copied()))
}

fn metric_members<'c>(ctx: &'c Context<'_>) -> Vec<&'c Member> {
    ctx.members
        .iter()
        .filter(|m| m.mode == MetricMode::Metric)
        .collect()
}

fn dirac_mixture(ctx: &Context<'_>) -> CheckRecord {
    let id = "transport.dirac_mixture";
    let anchor = "W1(sum c_i delta_x_i, delta_p) = sum c_i d(x_i, p)";
    let tol = ctx.config.tolerances.closed_form;
    let members = metric_members(ctx);
    if members.is_empty() {
        return skipped(id, anchor, tol, "no metric family member");
    }
    let k = ctx.pair.subset_len();
    let mut rng = gen::rng(ctx.config.seed ^ 0x11);
    let mut worst = Worst::new();
    for t in 0..ctx.config.samples {
        let m = members[t % members.len()];
        let points = random_support(k, 6, &mut rng);
        let weights = random_weights(points.len(), &mut rng);
        let p = rng.gen_range(0..k);
        let lp = match measure(&points, &weights)
            .and_then(|a| transport::w1_value(&m.d, &a, &DiscreteMeasure::dirac(p)))
        {
            Ok(v) => v,
            Err(e) => return errored(id, anchor, tol, &e),
        };
        let closed = transport::dirac_mix_distance(&m.d, &weights, &points, p);
        let excess = (lp - closed).abs();
        worst.offer(excess, || Witness {
            metric: Some(m.name.clone()),
            points: ctx.subset_ids(&points),
            value: lp,
            detail: Some(format!("target {}", ctx.subset_id(p))),
            ..Witness::default()
        });
    }
    worst.finish(id, anchor, tol)
}

fn same_support(ctx: &Context<'_>) -> CheckRecord {
    let id = "transport.same_support";
    let anchor =
        "W1(sum s_i delta_x_i, sum t_i delta_x_i) <= sum |s_i - t_i| d(x_i, b) for every b";
    let tol = ctx.config.tolerances.closed_form;
    let members = metric_members(ctx);
    if members.is_empty() {
        return skipped(id, anchor, tol, "no metric family member");
    }
    let k = ctx.pair.subset_len();
    let mut rng = gen::rng(ctx.config.seed ^ 0x22);
    let mut worst = Worst::new();
    for t in 0..ctx.config.samples {
        let m = members[t % members.len()];
        let points = random_support(k, 6, &mut rng);
        let s = random_weights(points.len(), &mut rng);
        let u = random_weights(points.len(), &mut rng);
        let lp = match measure(&points, &s)
            .and_then(|a| transport::w1_value(&m.d, &a, &measure(&points, &u)?))
        {
            Ok(v) => v,
            Err(e) => return errored(id, anchor, tol, &e),
        };
        for b in 0..k {
            let bound = transport::same_support_bound(&m.d, &s, &u, &points, b);
            worst.offer(lp - bound, || Witness {
                metric: Some(m.name.clone()),
                points: ctx.subset_ids(&points),
                value: lp,
                detail: Some(format!("anchor {}", ctx.subset_id(b))),
                ..Witness::default()
            });
        }
    }
    worst.finish(id, anchor, tol)
}

/// Measure pairs fed to the duality checks: the level measures of point
/// pairs, plus random pairs with supports of size at most 6.
fn duality_inputs(ctx: &Context<'_>) -> Vec<(DiscreteMeasure, DiscreteMeasure, String)> {
    let mut out = Vec::new();
    let points = &ctx.pre.embedding().points;
    for (x, y) in ctx.pairs() {
        for s in 0..=ctx.pre.s_star() {
            let p = &points[x].snapshots[s as usize].measure;
            let q = &points[y].snapshots[s as usize].measure;
            if p.support().len() > 1 || q.support().len() > 1 {
                out.push((
                    p.clone(),
                    q.clone(),
                    format!("level {s} measures of {} and {}", ctx.id(x), ctx.id(y)),
                ));
            }
        }
    }
    let k = ctx.pair.subset_len();
    let mut rng = gen::rng(ctx.config.seed ^ 0x33);
    for t in 0..ctx.config.samples {
        let (pa, pb) = (
            random_support(k, 6, &mut rng),
            random_support(k, 6, &mut rng),
        );
        let (wa, wb) = (
            random_weights(pa.len(), &mut rng),
            random_weights(pb.len(), &mut rng),
        );
        if let (Ok(a), Ok(b)) = (measure(&pa, &wa), measure(&pb, &wb)) {
            out.push((a, b, format!("random pair {t}")));
        }
    }
    out
}

fn duality_checks(ctx: &Context<'_>) -> Vec<CheckRecord> {
    let tol = ctx.config.tolerances.lp;
    let ids = [
        ("transport.kr_gap", "primal and dual optimal values agree"),
        ("transport.dual_feasible", "dual potential is 1-Lipschitz"),
        (
            "transport.marginals",
            "primal coupling has the prescribed marginals",
        ),
        (
            "transport.slackness",
            "f(p) - f(q) = d(p, q) wherever the coupling is positive",
        ),
    ];
    let members = metric_members(ctx);
    if members.is_empty() {
        return ids
            .iter()
            .map(|(id, a)| skipped(id, a, tol, "no metric family member"))
            .collect();
    }
    let inputs = duality_inputs(ctx);
    let mut worst: Vec<Worst> = ids.iter().map(|_| Worst::new()).collect();
    for m in members {
        let outcomes: Vec<Result<[f64; 4]>> = inputs
            .par_iter()
            .map(|(a, b, _)| {
                let primal = transport::w1(&m.d, a, b)?;
                let dual = transport::kr_dual(&m.d, a, b)?;
                let f = &dual.potential;
                let plan = &primal.plan;
                let mut slack = 0.0_f64;
                for (r, &p) in plan.rows.iter().enumerate() {
                    for (c, &q) in plan.cols.iter().enumerate() {
                        if plan.mass(r, c) > transport::DEGENERATE_WEIGHT {
                            let fp = f.value_at(p).unwrap_or(0.0);
                            let fq = f.value_at(q).unwrap_or(0.0);
                            slack = slack.max((fp - fq - m.d.get(p, q)).abs());
                        }
                    }
                }
                Ok([
                    (primal.value - dual.value).abs(),
                    f.lipschitz_excess(&m.d),
                    plan.marginal_error(a, b),
                    slack,
                ])
            })
            .collect();
        for ((_, _, label), outcome) in inputs.iter().zip(outcomes) {
            match outcome {
                Ok(values) => {
                    for (w, v) in worst.iter_mut().zip(values) {
                        w.offer(v, || Witness {
                            metric: Some(m.name.clone()),
                            value: v,
                            detail: Some(label.clone()),
                            ..Witness::default()
                        });
                    }
                }
                Err(e) => {
                    return ids.iter().map(|(id, a)| errored(id, a, tol, &e)).collect();
                }
            }
        }
    }
    worst
        .into_iter()
        .zip(ids)
        .map(|(w, (id, a))| w.finish(id, a, tol))
        .collect()
}

fn extension_checks(ctx: &Context<'_>, extensions: &[Result<DistMatrix>]) -> Vec<CheckRecord> {
    let tol = ctx.config.tolerances;
    let pair = ctx.pair;
    let anchors = [
        (
            "extension.isometry",
            "sup |E(d) - E(e)| = sup |d - e|",
            tol.series,
        ),
        (
            "extension.metric",
            "E(d) has zero diagonal and satisfies the triangle inequality",
            tol.series,
        ),
        (
            "extension.positivity",
            "E(d)(x,y) >= 2^-(S*+1) when x, y are not both in A",
            tol.exact,
        ),
        (
            "extension.restriction",
            "E(d) restricts to d on A",
            tol.series,
        ),
    ];
    if ctx.members.is_empty() {
        return anchors
            .iter()
            .map(|(id, a, t)| skipped(id, a, *t, "empty family"))
            .collect();
    }
    for (i, e) in extensions.iter().enumerate() {
        if let Err(err) = e {
            let name = &ctx.probes[i].name;
            let err = Error::Domain(format!("extending {name}: {err}"));
            return anchors
                .iter()
                .map(|(id, a, t)| errored(id, a, *t, &err))
                .collect();
        }
    }
    let ext = |i: usize| extensions[i].as_ref().expect("checked above");
    let n = pair.len();
    let mut worst: Vec<Worst> = anchors.iter().map(|_| Worst::new()).collect();

    for &(i, j) in &ctx.probe_pairs {
        let (ei, ej) = (ext(i), ext(j));
        if ei.len() != n || ej.len() != n {
            worst[0].offer(f64::INFINITY, || Witness {
                metric: Some(ctx.probes[i].name.clone()),
                value: ei.len() as f64,
                detail: Some("extension has the wrong size".into()),
                ..Witness::default()
            });
            continue;
        }
        let outer = sup_distance(ei, ej).unwrap_or(f64::NAN);
        let inner = sup_distance(&ctx.probes[i].d, &ctx.probes[j].d).unwrap_or(f64::NAN);
        let excess = (outer - inner).abs();
        worst[0].offer(excess, || Witness {
            metric: Some(format!("{} vs {}", ctx.probes[i].name, ctx.probes[j].name)),
            value: outer,
            detail: Some(format!("sup |d - e| = {inner}")),
            ..Witness::default()
        });
    }

    let floor = embedding::level_weight(ctx.pre.s_star());
    for (i, m) in ctx.members.iter().enumerate() {
        let e = ext(i);
        if e.len() != n {
            continue;
        }
        let (excess, [a, b, c]) = worst_triangle(e);
        worst[1].offer(excess, || Witness {
            metric: Some(m.name.clone()),
            points: ctx.ids(&[a, b, c]),
            value: excess,
            ..Witness::default()
        });
        for x in 0..n {
            for y in 0..n {
                let value = e.get(x, y);
                match (pair.position(x), pair.position(y)) {
                    (Some(a), Some(b)) => {
                        worst[3].offer((value - m.d.get(a, b)).abs(), || Witness {
                            metric: Some(m.name.clone()),
                            points: ctx.ids(&[x, y]),
                            value,
                            ..Witness::default()
                        });
                    }
                    _ if x != y => {
                        worst[2].offer(floor - value, || Witness {
                            metric: Some(m.name.clone()),
                            points: ctx.ids(&[x, y]),
                            value,
                            ..Witness::default()
                        });
                    }
                    _ => {
                        worst[1].offer(value.abs(), || Witness {
                            metric: Some(m.name.clone()),
                            points: ctx.ids(&[x]),
                            value,
                            detail: Some("diagonal".into()),
                            ..Witness::default()
                        });
                    }
                }
            }
        }
    }
    worst
        .into_iter()
        .zip(anchors)
        .map(|(w, (id, a, t))| w.finish(id, a, t))
        .collect()
}

fn bounded(ctx: &Context<'_>, extender: &Extender<'_>) -> CheckRecord {
    let id = "extension.bounded";
    let anchor = "E(w|A)(x, a) <= 4 w(x, a) + 1 for x in X, a in A";
    let tol = ctx.config.tolerances.series;
    let pair = ctx.pair;
    let e = match extender(pair.restricted()) {
        Ok(e) => e,
        Err(err) => return errored(id, anchor, tol, &err),
    };
    let mut worst = Worst::new();
    for x in 0..pair.len() {
        for &a in pair.subset() {
            let value = e.get(x, a);
            let excess = value - (4.0 * pair.w().get(x, a) + 1.0);
            worst.offer(excess, || Witness {
                points: ctx.ids(&[x, a]),
                value,
                ..Witness::default()
            });
        }
    }
    worst.finish(id, anchor, tol)
}

fn mode_agreement(ctx: &Context<'_>, extensions: &[Result<DistMatrix>]) -> CheckRecord {
    let id = "extension.mode_agreement";
    let anchor = "|exact - truncated(S)| <= certified bound(S)";
    let tol = ctx.config.tolerances.exact;
    if ctx.members.is_empty() {
        return skipped(id, anchor, tol, "empty family");
    }
    let mut worst = Worst::new();
    for (i, m) in ctx.members.iter().enumerate() {
        let exact = match &extensions[i] {
            Ok(e) => e,
            Err(err) => return errored(id, anchor, tol, err),
        };
        for &offset in &ctx.config.truncation_offsets {
            let level = ctx.pre.s_star() + offset;
            let truncated = match extensor::extend_auto(
                ctx.pre,
                &m.d,
                Mode::Truncated(Truncation::Level(level)),
            ) {
                Ok(t) => t,
                Err(err) => return errored(id, anchor, tol, &err),
            };
            let gap = match sup_distance(exact, &truncated.matrix) {
                Ok(g) => g,
                Err(err) => return errored(id, anchor, tol, &err),
            };
            worst.offer(gap - truncated.error_bound, || Witness {
                metric: Some(m.name.clone()),
                level: Some(level),
                value: gap,
                detail: Some(format!("bound {}", truncated.error_bound)),
                ..Witness::default()
            });
        }
    }
    worst.finish(id, anchor, tol)
}

/// The extensor's isometry defect never exceeds the shortest-path baseline's.
fn baseline(ctx: &Context<'_>, extensions: &[Result<DistMatrix>]) -> CheckRecord {
    let id = "baseline.comparison";
    let anchor = "extensor isometry defect is at most the shortest-path baseline's";
    let tol = ctx.config.tolerances.series;
    if ctx.members.is_empty() {
        return skipped(id, anchor, tol, "empty family");
    }
    let baselines: Vec<DistMatrix> = ctx
        .probes
        .iter()
        .map(|m| extensor::baseline_extend(ctx.pair, &m.d))
        .collect();
    let mut worst = Worst::new();
    for &(i, j) in &ctx.probe_pairs {
        let (ei, ej) = match (&extensions[i], &extensions[j]) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return errored(id, anchor, tol, e),
        };
        let inner = sup_distance(&ctx.probes[i].d, &ctx.probes[j].d).unwrap_or(f64::NAN);
        let ours = (sup_distance(ei, ej).unwrap_or(f64::NAN) - inner).abs();
        let theirs = (sup_distance(&baselines[i], &baselines[j]).unwrap_or(f64::NAN) - inner).abs();
        worst.offer(ours - theirs, || Witness {
            metric: Some(format!("{} vs {}", ctx.probes[i].name, ctx.probes[j].name)),
            value: theirs,
            detail: Some(format!(
                "extensor defect {ours:e}, baseline defect {theirs:e}"
            )),
            ..Witness::default()
        });
    }
    worst.finish(id, anchor, tol)
}
