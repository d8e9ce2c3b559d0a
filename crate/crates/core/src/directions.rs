//! Deterministic direction nets on the unit sphere.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// `count` unit vectors spread over S^{n-1}.
///
/// n = 1 gives {+1, -1}; n = 2 gives equally spaced angles starting at e1
/// (so axes are included when `count` is a multiple of 4 and diagonals when
/// it is a multiple of 8); n = 3 uses a Fibonacci spiral; higher dimensions
/// draw seeded Gaussian directions.
pub fn sphere_net(dim: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    assert!(dim > 0, "dimension must be positive");
    match dim {
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => (0..count)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / count as f64;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let t = golden * k as f64;
                    DVector::from_vec(vec![r * t.cos(), r * t.sin(), z])
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let v: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
                let norm = v.norm();
                if norm > 1e-8 {
                    out.push(v / norm);
                }
            }
            out
        }
    }
}

/// ±e_j for every coordinate axis.
pub fn signed_axes(dim: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(2 * dim);
    for j in 0..dim {
        for s in [1.0, -1.0] {
            let mut v = DVector::zeros(dim);
            v[j] = s;
            out.push(v);
        }
    }
    out
}

/// Removes directions within `tol` of an earlier one, keeping first occurrences.
pub fn dedup_directions(dirs: Vec<DVector<f64>>, tol: f64) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(dirs.len());
    for d in dirs {
        if !out.iter().any(|e| (e - &d).norm() <= tol) {
            out.push(d);
        }
    }
    out
}

/// A unit vector orthogonal to `g` (None in one dimension).
pub fn orthogonal_unit(g: &DVector<f64>) -> Option<DVector<f64>> {
    let n = g.len();
    if n < 2 {
        return None;
    }
    // Gram-Schmidt on the axis least aligned with g.
    let j = (0..n)
        .min_by(|&a, &b| g[a].abs().total_cmp(&g[b].abs()))
        .unwrap_or(0);
    let mut e = DVector::zeros(n);
    e[j] = 1.0;
    let v = &e - g * (g.dot(&e) / g.norm_squared());
    let norm = v.norm();
    (norm > 1e-12).then(|| v / norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nets_are_unit_length() {
        for dim in 1..=5 {
            for d in sphere_net(dim, 40, 3) {
                assert!((d.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn planar_net_contains_axes_and_diagonals() {
        let net = sphere_net(2, 16, 0);
        let diag = DVector::from_vec(vec![1.0, -1.0]) / 2f64.sqrt();
        assert!(net.iter().any(|d| (d - &diag).norm() < 1e-12));
        for axis in signed_axes(2) {
            assert!(net.iter().any(|d| (d - &axis).norm() < 1e-12));
        }
    }

    #[test]
    fn orthogonal_unit_is_orthogonal() {
        let g = DVector::from_vec(vec![0.3, -0.4, 0.866]);
        let w = orthogonal_unit(&g).unwrap();
        assert!(w.dot(&g).abs() < 1e-12);
        assert!(orthogonal_unit(&DVector::from_element(1, 1.0)).is_none());
    }
}
