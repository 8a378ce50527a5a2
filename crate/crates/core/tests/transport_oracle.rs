mod common;

use common::{random_probability, random_support, rng, vertex_enumeration};
use metric_extensor::gen;
use metric_extensor::metric::DistMatrix;
use metric_extensor::transport::{kr_dual, w1, DiscreteMeasure};
use rand::Rng;

fn cost_table(d: &DistMatrix, rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|&p| cols.iter().map(|&q| d.get(p, q)).collect())
        .collect()
}

#[test]
fn oracle_solves_a_hand_instance() {
    // two sources, two sinks on a line at 0, 1 | 2, 3
    let cost = vec![vec![2.0, 3.0], vec![1.0, 2.0]];
    assert!((vertex_enumeration(&cost, &[0.5, 0.5], &[0.5, 0.5]) - 2.0).abs() < 1e-12);
    let cost = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    assert!((vertex_enumeration(&cost, &[0.7, 0.3], &[0.2, 0.8]) - 0.5).abs() < 1e-12);
}

#[test]
fn primal_and_dual_match_vertex_enumeration() {
    let mut r = rng(99);
    for t in 0..150 {
        let k = r.gen_range(2..=8);
        let d = if t % 2 == 0 {
            gen::random_metric(k, &mut r)
        } else {
            gen::unit_square_metric(k, &mut r)
        };
        let (sa, sb) = (r.gen_range(1..=4), r.gen_range(1..=4));
        let pa = random_support(k, sa, &mut r);
        let pb = random_support(k, sb, &mut r);
        let (wa, wb) = (
            random_probability(pa.len(), &mut r),
            random_probability(pb.len(), &mut r),
        );
        let alpha =
            DiscreteMeasure::from_atoms(pa.iter().copied().zip(wa.iter().copied())).unwrap();
        let beta = DiscreteMeasure::from_atoms(pb.iter().copied().zip(wb.iter().copied())).unwrap();
        let oracle = vertex_enumeration(
            &cost_table(&d, alpha.support(), beta.support()),
            alpha.weights(),
            beta.weights(),
        );
        let primal = w1(&d, &alpha, &beta).unwrap();
        let dual = kr_dual(&d, &alpha, &beta).unwrap();
        assert!(
            (primal.value - oracle).abs() < 1e-9,
            "primal {} vs {oracle}",
            primal.value
        );
        assert!(
            (dual.value - oracle).abs() < 1e-7,
            "dual {} vs {oracle}",
            dual.value
        );
        assert!(primal.plan.marginal_error(&alpha, &beta) < 1e-9);
        assert!(dual.potential.lipschitz_excess(&d) < 1e-7);
    }
}
