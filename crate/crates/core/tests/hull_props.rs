use nalgebra::DVector;
use proptest::prelude::*;
use steklov_core::directions::sphere_net;
use steklov_core::hull::{hull_of, wolfe_min_norm, ConvexSetApprox, DEFAULT_TOLERANCE};

fn cloud(max_dim: usize) -> impl Strategy<Value = Vec<DVector<f64>>> {
    (1usize..=max_dim).prop_flat_map(|n| {
        prop::collection::vec(prop::collection::vec(-2.0f64..2.0, n), 1..20)
            .prop_map(|pts| pts.into_iter().map(DVector::from_vec).collect())
    })
}

fn direction(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-1.0f64..1.0, n).prop_map(DVector::from_vec)
}

fn brute_support(points: &[DVector<f64>], g: &DVector<f64>) -> f64 {
    points.iter().map(|p| p.dot(g)).fold(f64::NEG_INFINITY, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hull_is_idempotent(points in cloud(3)) {
        let a = hull_of(&points, DEFAULT_TOLERANCE).unwrap();
        let b = hull_of(a.vertices(), DEFAULT_TOLERANCE).unwrap();
        prop_assert_eq!(a.vertices().len(), b.vertices().len());
        for v in b.vertices() {
            prop_assert!(a.vertices().iter().any(|w| (v - w).norm() <= 1e-12));
        }
    }

    #[test]
    fn support_matches_raw_points(points in cloud(4), seed in any::<u64>()) {
        let n = points[0].len();
        let s = hull_of(&points, DEFAULT_TOLERANCE).unwrap();
        for g in sphere_net(n, 16, seed) {
            prop_assert!((s.support_value(&g) - brute_support(&points, &g)).abs() <= 1e-8);
        }
    }

    #[test]
    fn tiny_clouds_keep_their_extreme_points(points in cloud(2), seed in any::<u64>()) {
        let n = points[0].len();
        let tiny: Vec<DVector<f64>> = points.iter().map(|p| p * 1e-6).collect();
        let s = hull_of(&tiny, DEFAULT_TOLERANCE).unwrap();
        for g in sphere_net(n, 16, seed) {
            prop_assert!((s.support_value(&g) - brute_support(&tiny, &g)).abs() <= 2.0 * DEFAULT_TOLERANCE);
        }
    }

    #[test]
    fn support_is_sublinear((points, g1, g2) in cloud(4).prop_flat_map(|p| {
        let n = p[0].len();
        (Just(p), direction(n), direction(n))
    })) {
        let s = hull_of(&points, DEFAULT_TOLERANCE).unwrap();
        let lhs = s.support_value(&(&g1 + &g2));
        prop_assert!(lhs <= s.support_value(&g1) + s.support_value(&g2) + 1e-12);
    }

    #[test]
    fn min_norm_distance_has_a_certificate(points in cloud(4)) {
        let n = points[0].len();
        let p = wolfe_min_norm(&points).unwrap();
        let d = p.norm();
        if d > 1e-9 {
            // p separates: every point has (v, p) ≥ ‖p‖² up to rounding.
            for v in &points {
                prop_assert!(v.dot(&p) >= d * d - 1e-9 * (1.0 + v.norm() * d));
            }
        } else {
            // 0 ∈ hull: no sampled direction separates it.
            for g in sphere_net(n, 256, 7) {
                prop_assert!(brute_support(&points, &g) >= -1e-8);
            }
        }
    }

    #[test]
    fn minkowski_support_adds((a, b) in (1usize..=3).prop_flat_map(|n| (
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n), 1..8),
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n), 1..8),
    ))) {
        let a: Vec<DVector<f64>> = a.into_iter().map(DVector::from_vec).collect();
        let b: Vec<DVector<f64>> = b.into_iter().map(DVector::from_vec).collect();
        let n = a[0].len();
        let (sa, sb) = (hull_of(&a, DEFAULT_TOLERANCE).unwrap(), hull_of(&b, DEFAULT_TOLERANCE).unwrap());
        let sum = sa.minkowski_sum(&sb).unwrap();
        for g in sphere_net(n, 16, 1) {
            prop_assert!((sum.support_value(&g) - brute_support(&a, &g) - brute_support(&b, &g)).abs() < 1e-9);
        }
    }
}

#[test]
fn square_membership() {
    let sq: Vec<DVector<f64>> = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]
        .iter()
        .map(|p| DVector::from_column_slice(p))
        .collect();
    let s = ConvexSetApprox::from_vertices(sq, DEFAULT_TOLERANCE).unwrap();
    assert!(s.contains(&DVector::from_column_slice(&[0.5, -0.99])).unwrap());
    let d = s.distance_to(&DVector::from_column_slice(&[2.0, 3.0])).unwrap();
    assert!((d - 5f64.sqrt()).abs() < 1e-12);
}
