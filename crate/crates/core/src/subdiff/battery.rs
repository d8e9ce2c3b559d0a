//! Finite stand-ins for "all admissible mappings" and "all approach directions".

use nalgebra::DVector;

use crate::directions::{dedup_directions, signed_axes, sphere_net};
use crate::error::Result;
use crate::mapping::{depth_for, make_leaned_schedule, make_schedule, tight_diam_ratio, Lean, MappingSchedule, Shape};

/// Default outermost radius.
pub const DEFAULT_EPS0: f64 = 0.05;
/// Innermost radius of a battery schedule, relative to eps0.
pub const INNER_RATIO: f64 = 1e-3;
/// (q, diam_ratio) pairs of the standard battery, each used with both shapes.
pub const STANDARD_PARAMS: [(f64, f64); 3] = [(0.5, 3.0), (0.7, 3.0), (0.7, 5.0)];
/// Lean size of the leaned schedules, in units of the annulus radius.
pub const LEAN_SIGMA: f64 = 20.0;
/// Relative slack of condition 1 used by tight schedules.
pub const TIGHT_MARGIN: f64 = 1e-3;
/// Relative radial positions of probes inside an annulus (0 = inner edge).
pub const PROBE_POSITIONS: [f64; 2] = [0.5, 0.999];
/// Seed of the random part of the probe net.
pub const PROBE_SEED: u64 = 0x9e0b;

/// {ball, cube} × {(0.5, 3), (0.7, 3), (0.7, 5)}, innermost radius eps0·10⁻³.
pub fn standard_battery(anchor: &DVector<f64>, eps0: f64) -> Result<Vec<MappingSchedule>> {
    let mut out = Vec::new();
    for shape in [Shape::Ball, Shape::Cube] {
        for (q, rho) in STANDARD_PARAMS {
            let depth = depth_for(eps0, q, eps0 * INNER_RATIO);
            out.push(make_schedule(anchor.clone(), shape, eps0, q, depth, rho)?);
        }
    }
    Ok(out)
}

/// Lean directions: ±axes plus the sign diagonals (2D and 3D).
pub fn lean_directions(dim: usize) -> Vec<DVector<f64>> {
    let mut dirs = signed_axes(dim);
    if (2..=3).contains(&dim) {
        for mask in 0..(1usize << dim) {
            dirs.push(DVector::from_fn(dim, |j, _| if mask >> j & 1 == 1 { -1.0 } else { 1.0 }));
        }
    }
    dirs
}

/// Standard battery plus schedules whose images barely contain the anchor:
/// tight centred {ball, cube} and leaned {ball, cube} × [`lean_directions`].
/// Tight images are what let smoothed gradients approach extreme points of
/// the subdifferential.
pub fn extended_battery(anchor: &DVector<f64>, eps0: f64) -> Result<Vec<MappingSchedule>> {
    let mut out = standard_battery(anchor, eps0)?;
    let q = 0.5;
    let inner = eps0 * INNER_RATIO;
    for shape in [Shape::Ball, Shape::Cube] {
        let rho = tight_diam_ratio(q, 0.0, TIGHT_MARGIN);
        out.push(make_schedule(anchor.clone(), shape, eps0, q, depth_for(eps0, q, inner), rho)?);
    }
    let leaned_eps0 = eps0 / (1.0 + LEAN_SIGMA);
    let rho = tight_diam_ratio(q, LEAN_SIGMA, TIGHT_MARGIN);
    for shape in [Shape::Ball, Shape::Cube] {
        for direction in lean_directions(anchor.len()) {
            let lean = Lean {
                direction,
                sigma: LEAN_SIGMA,
            };
            let depth = depth_for(leaned_eps0, q, leaned_eps0 * INNER_RATIO);
            out.push(make_leaned_schedule(anchor.clone(), shape, leaned_eps0, q, depth, rho, lean)?);
        }
    }
    Ok(out)
}

/// ±axes plus a sphere net (16 directions in 2D, 2n otherwise), deduplicated.
pub fn default_probes(dim: usize) -> Vec<DVector<f64>> {
    let count = if dim == 2 { 16 } else { 2 * dim };
    let mut dirs = signed_axes(dim);
    dirs.extend(sphere_net(dim, count, PROBE_SEED));
    dedup_directions(dirs, 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_sizes() {
        let a = DVector::zeros(2);
        assert_eq!(standard_battery(&a, DEFAULT_EPS0).unwrap().len(), 6);
        assert_eq!(extended_battery(&a, DEFAULT_EPS0).unwrap().len(), 6 + 2 + 2 * 8);
        let one = DVector::zeros(1);
        assert_eq!(extended_battery(&one, DEFAULT_EPS0).unwrap().len(), 6 + 2 + 2 * 2);
    }

    #[test]
    fn probe_counts() {
        assert_eq!(default_probes(1).len(), 2);
        assert_eq!(default_probes(2).len(), 16);
        assert_eq!(default_probes(3).len(), 12);
    }

    #[test]
    fn innermost_radius() {
        for s in standard_battery(&DVector::zeros(1), DEFAULT_EPS0).unwrap() {
            let inner = s.eps(s.depth());
            assert!(inner <= DEFAULT_EPS0 * INNER_RATIO && inner > DEFAULT_EPS0 * INNER_RATIO * 0.25);
        }
    }
}
