//! 1-Wasserstein distances between finitely supported probability measures.
//!
//! The primal problem is solved by a transportation simplex; the dual
//! (Kantorovich–Rubinstein) problem is solved separately as a linear program
//! over potential values with pairwise Lipschitz constraints, so the two
//! values certify each other.

mod simplex;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::DistMatrix;

/// Atoms lighter than this are dropped when a measure is built.
pub const DEGENERATE_WEIGHT: f64 = 1e-15;

/// Allowed deviation of the total mass from 1 before renormalizing.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Probability measure on finitely many points, identified by their position
/// in the underlying index set. Support is sorted and duplicate-free.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    support: Vec<usize>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn dirac(p: usize) -> Self {
        Self {
            support: vec![p],
            weights: vec![1.0],
        }
    }

    /// Merges repeated points, drops degenerate atoms and renormalizes.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut atoms: Vec<(usize, f64)> = atoms.into_iter().collect();
        if let Some(&(_, w)) = atoms.iter().find(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "weight {w} is not a non-negative real"
            )));
        }
        atoms.sort_by_key(|&(p, _)| p);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(atoms.len());
        for (p, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == p => last.1 += w,
                _ => merged.push((p, w)),
            }
        }
        merged.retain(|&(_, w)| w >= DEGENERATE_WEIGHT);
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMeasure(format!(
                "total mass {total} is not 1"
            )));
        }
        let (support, weights) = merged.into_iter().map(|(p, w)| (p, w / total)).unzip();
        Ok(Self { support, weights })
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.support
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }

    pub fn weight_of(&self, p: usize) -> f64 {
        self.support
            .binary_search(&p)
            .map_or(0.0, |i| self.weights[i])
    }

    pub fn is_dirac(&self) -> bool {
        self.support.len() == 1
    }

    fn check_support(&self, n: usize) -> Result<()> {
        match self.support.last() {
            Some(&p) if p >= n => Err(Error::Domain(format!(
                "support point {p} outside a space of {n} points"
            ))),
            _ => Ok(()),
        }
    }
}

/// Coupling between two measures, indexed by their supports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    /// Row-major `rows.len() × cols.len()` masses.
    pub coupling: Vec<f64>,
}

impl TransportPlan {
    pub fn mass(&self, r: usize, c: usize) -> f64 {
        self.coupling[r * self.cols.len() + c]
    }

    /// Largest deviation of the plan's marginals from the given measures.
    pub fn marginal_error(&self, alpha: &DiscreteMeasure, beta: &DiscreteMeasure) -> f64 {
        let nc = self.cols.len();
        let mut err = 0.0_f64;
        for (r, &p) in self.rows.iter().enumerate() {
            let s: f64 = (0..nc).map(|c| self.mass(r, c)).sum();
            err = err.max((s - alpha.weight_of(p)).abs());
        }
        for (c, &q) in self.cols.iter().enumerate() {
            let s: f64 = (0..self.rows.len()).map(|r| self.mass(r, c)).sum();
            err = err.max((s - beta.weight_of(q)).abs());
        }
        err
    }

    pub fn cost(&self, d: &DistMatrix) -> f64 {
        let mut total = 0.0;
        for (r, &p) in self.rows.iter().enumerate() {
            for (c, &q) in self.cols.iter().enumerate() {
                total += self.mass(r, c) * d.get(p, q);
            }
        }
        total
    }
}

/// Potential values on a finite point set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualPotential {
    pub points: Vec<usize>,
    pub values: Vec<f64>,
}

impl DualPotential {
    pub fn value_at(&self, p: usize) -> Option<f64> {
        self.points.binary_search(&p).ok().map(|i| self.values[i])
    }

    /// Largest excess of `|f(p) - f(q)|` over `d(p, q)`; zero or negative means 1-Lipschitz.
    pub fn lipschitz_excess(&self, d: &DistMatrix) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (a, &p) in self.points.iter().enumerate() {
            for (b, &q) in self.points.iter().enumerate() {
                if a != b {
                    worst = worst.max((self.values[a] - self.values[b]).abs() - d.get(p, q));
                }
            }
        }
        worst.max(0.0)
    }

    /// `∫ f d(α - β)`.
    pub fn integrate(&self, alpha: &DiscreteMeasure, beta: &DiscreteMeasure) -> f64 {
        let f = |p| self.value_at(p).unwrap_or(0.0);
        alpha.atoms().map(|(p, w)| w * f(p)).sum::<f64>()
            - beta.atoms().map(|(p, w)| w * f(p)).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transport {
    pub value: f64,
    pub plan: TransportPlan,
}

/// Optimal transport cost between `alpha` and `beta` under `d`, with a plan
/// attaining it.
pub fn w1(d: &DistMatrix, alpha: &DiscreteMeasure, beta: &DiscreteMeasure) -> Result<Transport> {
    alpha.check_support(d.len())?;
    beta.check_support(d.len())?;
    let rows = alpha.support.clone();
    let cols = beta.support.clone();
    let cost: Vec<f64> = rows
        .iter()
        .flat_map(|&p| cols.iter().map(move |&q| d.get(p, q)))
        .collect();
    let sol = simplex::solve(&alpha.weights, &beta.weights, &cost)?;
    Ok(Transport {
        value: sol.cost,
        plan: TransportPlan {
            rows,
            cols,
            coupling: sol.flow,
        },
    })
}

/// Just the value of [`w1`].
pub fn w1_value(d: &DistMatrix, alpha: &DiscreteMeasure, beta: &DiscreteMeasure) -> Result<f64> {
    if alpha == beta {
        return Ok(0.0);
    }
    Ok(w1(d, alpha, beta)?.value)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualCertificate {
    pub value: f64,
    pub potential: DualPotential,
}

/// Maximizes `∫ f d(α - β)` over 1-Lipschitz `f` on the union of supports.
pub fn kr_dual(
    d: &DistMatrix,
    alpha: &DiscreteMeasure,
    beta: &DiscreteMeasure,
) -> Result<DualCertificate> {
    alpha.check_support(d.len())?;
    beta.check_support(d.len())?;
    let mut points: Vec<usize> = alpha.support.iter().chain(&beta.support).copied().collect();
    points.sort_unstable();
    points.dedup();

    if alpha == beta {
        let values = vec![0.0; points.len()];
        return Ok(DualCertificate {
            value: 0.0,
            potential: DualPotential { points, values },
        });
    }

    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = points
        .iter()
        .enumerate()
        .map(|(idx, &p)| {
            let coeff = alpha.weight_of(p) - beta.weight_of(p);
            // potentials are translation invariant; pin the first one
            let bounds = if idx == 0 {
                (0.0, 0.0)
            } else {
                (f64::NEG_INFINITY, f64::INFINITY)
            };
            problem.add_var(coeff, bounds)
        })
        .collect();
    for (a, &p) in points.iter().enumerate() {
        for (b, &q) in points.iter().enumerate() {
            if a != b {
                problem.add_constraint(
                    [(vars[a], 1.0), (vars[b], -1.0)],
                    ComparisonOp::Le,
                    d.get(p, q),
                );
            }
        }
    }
    let solution = problem
        .solve()
        .map_err(|e| Error::Solver(format!("dual program: {e}")))?;
    let values: Vec<f64> = vars.iter().map(|&v| solution[v]).collect();
    let potential = DualPotential { points, values };
    Ok(DualCertificate {
        value: potential.integrate(alpha, beta),
        potential,
    })
}

/// `Σ c_i d(x_i, p)`: the transport cost from a mixture of point masses to
/// the point mass at `p`.
pub fn dirac_mix_distance(d: &DistMatrix, weights: &[f64], points: &[usize], p: usize) -> f64 {
    weights
        .iter()
        .zip(points)
        .map(|(&c, &x)| c * d.get(x, p))
        .sum()
}

/// `Σ |s_i - t_i| d(x_i, b)`: an upper bound on the transport cost between two
/// mixtures over the same points, valid for every `b`.
pub fn same_support_bound(d: &DistMatrix, s: &[f64], t: &[f64], points: &[usize], b: usize) -> f64 {
    s.iter()
        .zip(t)
        .zip(points)
        .map(|((&si, &ti), &x)| (si - ti).abs() * d.get(x, b))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> DistMatrix {
        DistMatrix::from_fn(xs.len(), |i, j| (xs[i] - xs[j]).abs())
    }

    #[test]
    fn measure_normalization() {
        let m = DiscreteMeasure::from_atoms([(3, 0.5), (1, 0.25), (3, 0.25), (2, 1e-17)]).unwrap();
        assert_eq!(m.support(), &[1, 3]);
        assert_eq!(m.weights(), &[0.25, 0.75]);
        assert!(DiscreteMeasure::from_atoms([(0, 0.5)]).is_err());
        assert!(DiscreteMeasure::from_atoms([(0, -0.5), (1, 1.5)]).is_err());
    }

    #[test]
    fn dirac_examples() {
        let d = line(&[0.0, 1.0, 3.5]);
        let x = DiscreteMeasure::dirac(0);
        let y = DiscreteMeasure::dirac(2);
        assert_eq!(w1(&d, &x, &x).unwrap().value, 0.0);
        assert_eq!(w1(&d, &x, &y).unwrap().value, 3.5);
        let dual = kr_dual(&d, &x, &y).unwrap();
        assert!((dual.value - 3.5).abs() < 1e-9);
    }

    #[test]
    fn half_half_mixture_to_dirac() {
        let d = line(&[0.0, 2.0, 5.0]);
        let mix = DiscreteMeasure::from_atoms([(0, 0.5), (1, 0.5)]).unwrap();
        let target = DiscreteMeasure::dirac(2);
        let value = w1(&d, &mix, &target).unwrap().value;
        assert_eq!(value, 0.5 * 5.0 + 0.5 * 3.0);
    }

    #[test]
    fn equal_measures_have_constant_potential() {
        let d = line(&[0.0, 1.0, 2.0]);
        let m = DiscreteMeasure::from_atoms([(0, 0.2), (2, 0.8)]).unwrap();
        let dual = kr_dual(&d, &m, &m).unwrap();
        assert_eq!(dual.value, 0.0);
        assert!(dual.potential.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_range_support_is_domain_error() {
        let d = line(&[0.0, 1.0]);
        let bad = DiscreteMeasure::dirac(5);
        assert!(matches!(
            w1(&d, &bad, &DiscreteMeasure::dirac(0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            kr_dual(&d, &bad, &DiscreteMeasure::dirac(0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn dirac_mix_examples() {
        let d = line(&[0.0, 1.0, 3.0]);
        assert_eq!(dirac_mix_distance(&d, &[1.0], &[0], 2), 3.0);
        // d(x1, p) = 1, d(x2, p) = 2
        let d2 = line(&[2.0, 1.0, 3.0]);
        let v = dirac_mix_distance(&d2, &[0.3, 0.7], &[1, 0], 2);
        assert!((v - (0.3 * 2.0 + 0.7 * 1.0)).abs() < 1e-15);
        let v = dirac_mix_distance(&line(&[0.0, 1.0, 2.0]), &[0.3, 0.7], &[1, 0], 2);
        assert!((v - 1.7).abs() < 1e-15);
    }

    #[test]
    fn same_support_two_atom_case() {
        let d = line(&[0.0, 4.0]);
        assert_eq!(
            same_support_bound(&d, &[0.5, 0.5], &[0.5, 0.5], &[0, 1], 0),
            0.0
        );
        let bound = same_support_bound(&d, &[1.0, 0.0], &[0.0, 1.0], &[0, 1], 0);
        assert_eq!(bound, 4.0);
        let value = w1(&d, &DiscreteMeasure::dirac(0), &DiscreteMeasure::dirac(1))
            .unwrap()
            .value;
        assert!(value <= bound);
    }

    #[test]
    fn primal_dual_agree_on_small_instance() {
        let d = line(&[0.0, 1.0, 2.5, 4.0, 7.0]);
        let a = DiscreteMeasure::from_atoms([(0, 0.2), (2, 0.5), (4, 0.3)]).unwrap();
        let b = DiscreteMeasure::from_atoms([(1, 0.6), (3, 0.4)]).unwrap();
        let primal = w1(&d, &a, &b).unwrap();
        let dual = kr_dual(&d, &a, &b).unwrap();
        assert!(primal.plan.marginal_error(&a, &b) < 1e-12);
        assert!((primal.value - dual.value).abs() < 1e-7);
        assert!(dual.potential.lipschitz_excess(&d) < 1e-9);
        // on a line W1 is the L1 distance between CDFs
        let pts = [0.0, 1.0, 2.5, 4.0, 7.0];
        let mut cdf_gap = 0.0;
        let (mut fa, mut fb) = (0.0, 0.0);
        for k in 0..4 {
            fa += a.weight_of(k);
            fb += b.weight_of(k);
            cdf_gap += (fa - fb).abs() * (pts[k + 1] - pts[k]);
        }
        assert!((primal.value - cdf_gap).abs() < 1e-12);
    }
}
