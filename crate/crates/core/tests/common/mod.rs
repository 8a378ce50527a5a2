#![allow(dead_code)]

use metric_extensor::gen;
use metric_extensor::instance::{Instance, InstanceFile};
use metric_extensor::metric::DistMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Seeded instance with `5 <= |X| <= 25` and `1 <= |A| <= min(10, |X|)`.
pub fn sized_instance(seed: u64) -> InstanceFile {
    let mut rng = gen::rng(seed ^ 0xA5A5);
    let n = rng.gen_range(5..=25);
    let k = rng.gen_range(1..=n.min(10));
    gen::random_instance(n, k, seed).expect("valid sizes")
}

/// Subset near the origin and a tight cluster of outside points far away, so
/// that cells have many members and merging occurs.
pub fn clustered_instance(seed: u64) -> InstanceFile {
    let mut r = gen::rng(seed ^ 0x5A5A);
    let k = r.gen_range(1..=6);
    let outside = r.gen_range(3..=15);
    let mut pts: Vec<(f64, f64)> = (0..k)
        .map(|_| (r.gen_range(0.0..0.5), r.gen_range(0.0..0.5)))
        .collect();
    pts.extend((0..outside).map(|_| (5.0 + r.gen_range(-0.6..0.6), 5.0 + r.gen_range(-0.6..0.6))));
    let n = pts.len();
    let w = DistMatrix::from_fn(n, |i, j| {
        let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
        (dx * dx + dy * dy).sqrt()
    });
    let subset: Vec<usize> = (0..k).collect();
    let name = |i: usize| format!("q{i}");
    let mut metrics = std::collections::BTreeMap::new();
    metrics.insert("m".to_owned(), w.restrict(&subset));
    metrics.insert("random".to_owned(), gen::random_metric(k, &mut r));
    InstanceFile {
        points: (0..n).map(name).collect(),
        subset: subset.into_iter().map(name).collect(),
        w,
        metrics,
    }
}

pub fn load(file: InstanceFile) -> Instance {
    Instance::from_file(file).expect("generated instances load")
}

pub fn random_probability<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

pub fn random_support<R: Rng>(k: usize, size: usize, rng: &mut R) -> Vec<usize> {
    let mut s = rand::seq::index::sample(rng, k, size.min(k)).into_vec();
    s.sort_unstable();
    s
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    gen::rng(seed)
}

/// Largest `d(i,k) - d(i,j) - d(j,k)`.
pub fn triangle_excess(d: &DistMatrix) -> f64 {
    let n = d.len();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                worst = worst.max(d.get(i, k) - d.get(i, j) - d.get(j, k));
            }
        }
    }
    worst
}

/// Optimal transport cost by enumerating every basic feasible solution of
/// the transportation polytope. Exponential; meant for supports of size <= 4.
pub fn vertex_enumeration(cost: &[Vec<f64>], supply: &[f64], demand: &[f64]) -> f64 {
    let (m, n) = (supply.len(), demand.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let rank = m + n - 1;
    // constraint rows: m supply rows, then the first n - 1 demand rows
    let rhs: Vec<f64> = supply.iter().chain(&demand[..n - 1]).copied().collect();
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(rank);
    enumerate(&cells, rank, 0, &mut chosen, &mut |basis| {
        let mut a = vec![vec![0.0; rank + 1]; rank];
        for (col, &c) in basis.iter().enumerate() {
            let (i, j) = cells[c];
            a[i][col] = 1.0;
            if j < n - 1 {
                a[m + j][col] = 1.0;
            }
        }
        for (row, &b) in rhs.iter().enumerate() {
            a[row][rank] = b;
        }
        if let Some(x) = solve(a) {
            if x.iter().all(|&v| v >= -1e-12) {
                let total: f64 = basis
                    .iter()
                    .zip(&x)
                    .map(|(&c, &v)| v.max(0.0) * cost[cells[c].0][cells[c].1])
                    .sum();
                best = best.min(total);
            }
        }
    });
    best
}

fn enumerate(
    cells: &[(usize, usize)],
    size: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    if chosen.len() == size {
        f(chosen);
        return;
    }
    for c in start..cells.len() {
        if cells.len() - c < size - chosen.len() {
            break;
        }
        chosen.push(c);
        enumerate(cells, size, c + 1, chosen, f);
        chosen.pop();
    }
}

/// Gaussian elimination with partial pivoting on an augmented square system.
fn solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        let pivot_row = a[col].clone();
        for (row, r) in a.iter_mut().enumerate() {
            let factor = r[col] / pivot_row[col];
            if row != col && factor != 0.0 {
                for (v, p) in r[col..].iter_mut().zip(&pivot_row[col..]) {
                    *v -= factor * p;
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}
