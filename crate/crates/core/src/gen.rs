//! Seeded instance and metric generators.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::instance::InstanceFile;
use crate::metric::DistMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Euclidean distances between points drawn uniformly from the unit square.
pub fn unit_square_metric<R: Rng>(n: usize, rng: &mut R) -> DistMatrix {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
    DistMatrix::from_fn(n, |i, j| {
        let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
        (dx * dx + dy * dy).sqrt()
    })
}

/// Multiplies each off-diagonal entry of `base` by a factor in `[0.5, 2)`,
/// symmetrically, then takes the shortest-path closure.
pub fn perturbed_metric<R: Rng>(base: &DistMatrix, rng: &mut R) -> DistMatrix {
    let n = base.len();
    let mut m = base.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = base.get(i, j) * rng.gen_range(0.5..2.0);
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m.shortest_path_closure()
}

/// Shortest-path closure of a random symmetric matrix with entries in `[0.1, 1)`.
pub fn random_metric<R: Rng>(n: usize, rng: &mut R) -> DistMatrix {
    let mut m = DistMatrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.gen_range(0.1..1.0);
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m.shortest_path_closure()
}

/// `n` points in the unit square, a random `k`-subset as `A`, and three
/// metrics on `A`: the restriction `m` of `w`, a perturbation of `m`, and an
/// unrelated random metric.
pub fn random_instance(n: usize, k: usize, seed: u64) -> Result<InstanceFile> {
    if k == 0 || k > n {
        return Err(Error::Domain(format!(
            "subset size {k} must lie in 1..={n}"
        )));
    }
    let mut rng = rng(seed);
    let w = unit_square_metric(n, &mut rng);
    let mut subset = sample(&mut rng, n, k).into_vec();
    subset.sort_unstable();
    let m = w.restrict(&subset);
    let mut metrics = BTreeMap::new();
    metrics.insert("perturbed".to_owned(), perturbed_metric(&m, &mut rng));
    metrics.insert("random".to_owned(), random_metric(k, &mut rng));
    metrics.insert("m".to_owned(), m);
    let name = |i: usize| format!("p{i}");
    Ok(InstanceFile {
        points: (0..n).map(name).collect(),
        subset: subset.into_iter().map(name).collect(),
        w,
        metrics,
    })
}

/// Small hand-built instance on which the shortest-path baseline visibly
/// fails to be isometric for the pair `d`, `d3 = 3d`.
pub fn demo_instance() -> InstanceFile {
    let points = ["a", "b", "x", "y"].map(String::from).to_vec();
    let w = DistMatrix::from_rows(&[
        vec![0.0, 10.0, 9.0, 5.0],
        vec![10.0, 0.0, 1.0, 5.0],
        vec![9.0, 1.0, 0.0, 4.5],
        vec![5.0, 5.0, 4.5, 0.0],
    ])
    .expect("demo matrix is well formed");
    let d = DistMatrix::from_rows(&[vec![0.0, 2.0], vec![2.0, 0.0]]).expect("2x2");
    let mut metrics = BTreeMap::new();
    metrics.insert("d3".to_owned(), d.scaled(3.0));
    metrics.insert("d".to_owned(), d);
    metrics.insert("m".to_owned(), w.restrict(&[0, 1]));
    InstanceFile {
        points,
        subset: vec!["a".into(), "b".into()],
        w,
        metrics,
    }
}
