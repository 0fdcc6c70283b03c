use achlab::cluster::{self, Cluster};
use achlab::field::{ConformalMetric, TorusGrid};
use achlab::io;
use achlab::tension::TensionMatrix;
use proptest::prelude::*;

fn labels(n: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..n, 100)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn float_text_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let back: f64 = io::fmt_f64(x).parse().unwrap();
        prop_assert_eq!(back.to_bits(), x.to_bits());
    }

    #[test]
    fn multi_perimeter_is_translation_invariant(l in labels(3), dx in -9isize..10, dy in -9isize..10) {
        let grid = TorusGrid::unit(&[10, 10]).unwrap();
        let g = ConformalMetric::flat(&grid);
        let c = Cluster::new(&grid, 3, l).unwrap();
        let t = TensionMatrix::unit(3);
        let a = cluster::multi_perimeter(&c, &t, &g).unwrap();
        let b = cluster::multi_perimeter(&c.translated(&[dx, dy]), &t, &g).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn interfaces_are_symmetric_and_sum_to_perimeters(l in labels(4)) {
        let grid = TorusGrid::unit(&[10, 10]).unwrap();
        let g = ConformalMetric::parse("prod:0.3", &grid).unwrap();
        let c = Cluster::new(&grid, 4, l).unwrap();
        let h = cluster::interface_measure(&c, &g).unwrap();
        prop_assert!((&h - h.transpose()).abs().max() < 1e-14);
        prop_assert_eq!(h.diagonal().abs().max(), 0.0);
        let t = TensionMatrix::unit(4);
        let total: f64 = h.iter().sum();
        prop_assert!((total - cluster::multi_perimeter(&c, &t, &g).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn flat_distance_is_a_metric(a in labels(3), b in labels(3), c in labels(3)) {
        let grid = TorusGrid::unit(&[10, 10]).unwrap();
        let g = ConformalMetric::flat(&grid);
        let [a, b, c] = [a, b, c].map(|l| Cluster::new(&grid, 3, l).unwrap());
        let d = |x: &Cluster, y: &Cluster| cluster::flat_distance(x, y, &g).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-15);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-14);
    }

    #[test]
    fn cluster_snapshots_round_trip(l in labels(5)) {
        let grid = TorusGrid::new(&[10, 10], &[2.0, 1.0]).unwrap();
        let c = Cluster::new(&grid, 5, l).unwrap();
        let back = io::read_cluster(&io::write_cluster(&c)).unwrap();
        prop_assert_eq!(back.labels(), c.labels());
    }
}
