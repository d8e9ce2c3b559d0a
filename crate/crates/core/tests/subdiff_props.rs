use nalgebra::{DMatrix, DVector};
use steklov_core::corpus::{corpus_lookup, corpus_names};
use steklov_core::hull::{hausdorff, hull_of, DEFAULT_TOLERANCE};
use steklov_core::mapping::make_schedule;
use steklov_core::subdiff::{
    big_phi, default_probes, extended_battery, phi_subdiff, psi2_subdiff, psi_prime_limits, standard_battery,
    traces_to_csv, CSV_HEADER, DEFAULT_EPS0,
};
use steklov_core::{QuadratureSpec, Shape};

fn spec() -> QuadratureSpec {
    QuadratureSpec::monte_carlo(5_000, 21)
}

#[test]
fn big_phi_stays_in_lipschitz_ball_and_contains_each_schedule() {
    for name in corpus_names() {
        let (f, o) = corpus_lookup(name).unwrap();
        let x0 = o.reference_point.clone();
        let bp = big_phi(&f, &x0, &extended_battery(&x0, DEFAULT_EPS0).unwrap(), &default_probes(f.dim()), &spec()).unwrap();
        let l = f.lipschitz_const();
        for v in bp.set.vertices() {
            assert!(v.norm() <= l * (1.0 + 1e-3), "{name}: {v}");
        }
        for per in &bp.per_schedule {
            for v in per.set.vertices() {
                let d = bp.set.distance_to(v).unwrap();
                assert!(d <= 1e-9, "{name}: {d:e} {v} {:?}", bp.set.vertices().iter().map(|w| w.as_slice().to_vec()).collect::<Vec<_>>());
            }
        }
    }
}

#[test]
fn smooth_entries_collapse_to_the_gradient() {
    for name in ["quad_posdef", "quad_indef", "smooth_quartic"] {
        let (f, o) = corpus_lookup(name).unwrap();
        let x0 = o.reference_point.clone();
        let bp = big_phi(&f, &x0, &standard_battery(&x0, DEFAULT_EPS0).unwrap(), &default_probes(2), &spec()).unwrap();
        let g = f.grad_at(&x0).unwrap();
        assert!(bp.set.diameter() <= 1e-3 * g.norm().max(1.0), "{name}: {}", bp.set.diameter());
        assert!((bp.set.centroid() - g).norm() <= 1e-3, "{name}");
    }
}

#[test]
fn minimizers_have_zero_in_phi() {
    for name in corpus_names() {
        let (f, o) = corpus_lookup(name).unwrap();
        for m in &o.minimizers {
            let bp = big_phi(&f, m, &standard_battery(m, DEFAULT_EPS0).unwrap(), &default_probes(f.dim()), &spec()).unwrap();
            let d = bp.set.min_norm_point().unwrap().1;
            assert!(d <= 1e-2, "{name} at {m}: {d}");
        }
    }
}

#[test]
fn smooth_minimizer_set_shrinks_to_zero() {
    let (f, o) = corpus_lookup("quad_posdef").unwrap();
    let m = &o.minimizers[0];
    let bp = big_phi(&f, m, &standard_battery(m, DEFAULT_EPS0).unwrap(), &default_probes(2), &spec()).unwrap();
    assert!(bp.set.diameter() <= 1e-2);
}

#[test]
fn kink_set_does_not_grow_with_depth() {
    let (f, _) = corpus_lookup("abs1d").unwrap();
    let x0 = DVector::zeros(1);
    let mut last = f64::INFINITY;
    for depth in [6, 8, 10, 12] {
        let s = make_schedule(x0.clone(), Shape::Ball, DEFAULT_EPS0, 0.5, depth, 3.0).unwrap();
        let d = phi_subdiff(&f, &x0, &s, &default_probes(1), &spec()).unwrap().set.diameter();
        assert!(d <= last + 1e-2, "depth {depth}: {d} > {last}");
        last = d;
    }
}

#[test]
fn double_average_gradients_match_single_average_limits() {
    for name in corpus_names() {
        let (f, o) = corpus_lookup(name).unwrap();
        let x0 = o.reference_point.clone();
        let s = &standard_battery(&x0, DEFAULT_EPS0).unwrap()[0];
        let psi: Vec<DVector<f64>> = psi_prime_limits(&f, &x0, s, &default_probes(f.dim()), &spec())
            .unwrap()
            .into_iter()
            .flat_map(|p| p.trace.limits)
            .collect();
        let psi = hull_of(&psi, DEFAULT_TOLERANCE).unwrap();
        let (oracle, _) = corpus_lookup(name).map(|(_, o)| (o.analytic_subdiff_at.unwrap()(&x0), ())).unwrap();
        // Both first-order sets lie inside the Clarke set.
        let gap = steklov_core::hull::inclusion_gap(&psi, &oracle, 64).unwrap();
        assert!(gap <= 2e-2 * f.lipschitz_const().max(1.0), "{name}: {gap}");
    }
}

#[test]
fn twice_differentiable_entries_recover_the_hessian() {
    for name in corpus_names() {
        let (f, o) = corpus_lookup(name).unwrap();
        if !o.twice_differentiable {
            continue;
        }
        let x0 = o.reference_point.clone();
        let m = psi2_subdiff(&f, &x0, &standard_battery(&x0, DEFAULT_EPS0).unwrap()[..2], &default_probes(2), &spec()).unwrap();
        let h: DMatrix<f64> = o.analytic_hessian_at.as_ref().unwrap()(&x0);
        assert!(!m.unbounded, "{name}");
        for a in m.matrices() {
            assert!((a - &h).norm() <= 1e-2, "{name}");
        }
    }
}

#[test]
fn csv_export_has_fixed_columns() {
    let (f, _) = corpus_lookup("abs1d").unwrap();
    let x0 = DVector::zeros(1);
    let s = &standard_battery(&x0, DEFAULT_EPS0).unwrap()[0];
    let p = phi_subdiff(&f, &x0, s, &default_probes(1), &spec()).unwrap();
    let csv = traces_to_csv(p.traces.iter().map(|t| (t.probe_id, &t.trace)));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), p.traces.iter().map(|t| t.trace.entries.len()).sum::<usize>());
    assert!(rows.iter().all(|r| r.split(',').count() == 5));
}

#[test]
fn phi_and_extended_battery_agree_on_smooth_points() {
    let (f, o) = corpus_lookup("smooth_quartic").unwrap();
    let x0 = o.reference_point.clone();
    let a = big_phi(&f, &x0, &standard_battery(&x0, DEFAULT_EPS0).unwrap(), &default_probes(2), &spec()).unwrap();
    let b = big_phi(&f, &x0, &extended_battery(&x0, DEFAULT_EPS0).unwrap(), &default_probes(2), &spec()).unwrap();
    assert!(hausdorff(&a.set, &b.set, 64).unwrap() <= 1e-3);
}
