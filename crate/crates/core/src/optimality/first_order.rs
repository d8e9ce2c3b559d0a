//! First-order necessary conditions and the Hadamard lower derivative.

use nalgebra::DVector;

use super::cones::{polar_cone, ConeApprox};
use crate::corpus::LipschitzFunction;
use crate::directions::sphere_net;
use crate::error::{Error, Result};
use crate::hull::{wolfe_min_norm, ConvexSetApprox};

/// Directions sampled from K ∩ S^{n-1} by the directional test.
pub const NECESSARY_DIRECTIONS: usize = 256;
/// Jitter directions of the Hadamard liminf.
pub const HADAMARD_JITTERS: usize = 8;
/// Jitter radius at the largest curve parameter.
pub const HADAMARD_JITTER_RADIUS: f64 = 0.05;
const NET_SEED: u64 = 0xd1ec;

#[derive(Debug, Clone, PartialEq)]
pub struct NecessaryTest {
    /// min over sampled g ∈ K of support(Df, g).
    pub directional_margin: f64,
    pub directional: bool,
    /// Distance from Df to K⁺.
    pub distance: f64,
    pub intersection: bool,
    pub tolerance: f64,
}

impl NecessaryTest {
    pub fn pass(&self) -> bool {
        self.directional && self.intersection
    }
}

/// Distance between a polytope and a polyhedral cone given by generators.
fn distance_to_cone(df: &ConvexSetApprox, k_plus: &ConeApprox) -> Result<f64> {
    if k_plus.is_full_space() {
        return Ok(0.0);
    }
    if k_plus.is_zero() {
        return Ok(df.min_norm_point()?.1);
    }
    // Truncate the cone at a radius no nearest point can exceed; the
    // nearest point of Df − cone is then a point of this polytope.
    let reach = df.vertices().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let m = 10.0 * (reach + 1.0) * df.dim() as f64;
    let mut pts: Vec<DVector<f64>> = df.vertices().to_vec();
    for v in df.vertices() {
        for r in k_plus.generators() {
            pts.push(v - r * m);
        }
    }
    Ok(wolfe_min_norm(&pts)?.norm())
}

/// Directional test min_{g ∈ K} max_{v ∈ Df} (v, g) ≥ −tol and intersection
/// test dist(Df, K⁺) ≤ tol. With K = ℝⁿ both reduce to 0 ∈ Df.
pub fn necessary_first_order(df: &ConvexSetApprox, k: &ConeApprox, tol: f64) -> Result<NecessaryTest> {
    if df.vertices().is_empty() {
        return Err(Error::EmptySet);
    }
    if df.dim() != k.dim() {
        return Err(Error::DimensionMismatch {
            expected: k.dim(),
            found: df.dim(),
        });
    }
    let net = sphere_net(k.dim(), NECESSARY_DIRECTIONS, NET_SEED);
    let dirs = k.directions(&net);
    let directional_margin = dirs.iter().map(|g| df.support_value(g)).fold(f64::INFINITY, f64::min);
    // K = {0} leaves nothing to test.
    let directional_margin = if directional_margin.is_finite() { directional_margin } else { 0.0 };
    let distance = distance_to_cone(df, &polar_cone(k)?)?;
    Ok(NecessaryTest {
        directional: directional_margin >= -tol,
        directional_margin,
        intersection: distance <= tol,
        distance,
        tolerance: tol,
    })
}

/// Lower Hadamard derivative of f̃ = f + L‖x − x₀‖ at x₀ along unit g:
/// min of the difference quotient over the two smallest scales and a
/// jitter net g′ = g + ρ·d around g. The jitter radius shrinks with the
/// scale (ρ = 0.05·α/α_max) so that g′ → g as α → 0.
pub fn hadamard_lower(f: &LipschitzFunction, x0: &DVector<f64>, g: &DVector<f64>, scales: &[f64]) -> Result<f64> {
    if g.len() != f.dim() || x0.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: g.len(),
        });
    }
    if !((g.norm() - 1.0).abs() < 1e-9) {
        return Err(Error::InvalidArgument("direction must be a unit vector".into()));
    }
    let mut sorted: Vec<f64> = scales.iter().copied().filter(|a| *a > 0.0 && a.is_finite()).collect();
    if sorted.is_empty() {
        return Err(Error::InvalidArgument("no positive scales".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let a_max = sorted[sorted.len() - 1];
    let l = f.lipschitz_const();
    let f_tilde = f.with_cone_penalty(x0, l);
    let base = f_tilde.eval_at(x0);
    let jitters = sphere_net(f.dim(), HADAMARD_JITTERS, NET_SEED);
    let mut best = f64::INFINITY;
    for &alpha in sorted.iter().take(2) {
        let radius = HADAMARD_JITTER_RADIUS * alpha / a_max;
        let candidates = std::iter::once(g.clone()).chain(jitters.iter().map(|d| g + d * radius));
        for gp in candidates {
            let q = (f_tilde.eval_at(&(x0 + &gp * alpha)) - base) / alpha;
            if q.is_finite() {
                best = best.min(q);
            }
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::NoFiniteEstimates("hadamard quotient".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::corpus_lookup;
    use crate::optimality::cones::{tangent_cone, Constraint};
    use crate::subdiff::ALPHA0;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn scales() -> Vec<f64> {
        (0..8).map(|k| ALPHA0 * 0.5f64.powi(k)).collect()
    }

    #[test]
    fn linear_on_unit_interval() {
        let df = ConvexSetApprox::singleton(v(&[1.0]));
        let omega = Constraint::Box {
            lower: v(&[0.0]),
            upper: v(&[1.0]),
        };
        let at0 = necessary_first_order(&df, &tangent_cone(&omega, &v(&[0.0])).unwrap(), 1e-2).unwrap();
        assert!(at0.pass());
        assert_eq!(at0.distance, 0.0);
        let at1 = necessary_first_order(&df, &tangent_cone(&omega, &v(&[1.0])).unwrap(), 1e-2).unwrap();
        assert!(!at1.directional && !at1.intersection);
        assert!((at1.directional_margin + 1.0).abs() < 1e-12);
        assert!((at1.distance - 1.0).abs() < 1e-9);
    }

    #[test]
    fn abs_unconstrained() {
        let df = ConvexSetApprox::from_vertices(vec![v(&[-1.0]), v(&[1.0])], 1e-9).unwrap();
        let t = necessary_first_order(&df, &ConeApprox::full_space(1), 1e-2).unwrap();
        assert!(t.pass());
        assert!(t.distance < 1e-12);
    }

    #[test]
    fn hadamard_examples() {
        let (abs, _) = corpus_lookup("abs1d").unwrap();
        let x0 = v(&[0.0]);
        let f = hadamard_lower(&abs, &x0, &v(&[1.0]), &scales()).unwrap();
        // f̃ = 2|x|, jitter shrinks g′ to within 0.05·α_min/α_max of g
        assert!((f - 2.0).abs() < 2.0 * 0.05 * 0.5, "{f}");

        let zero = LipschitzFunction::constant(2, 0.0).with_lipschitz(crate::corpus::LipschitzConstant {
            value: 1.0,
            certified: true,
        });
        let g = v(&[0.6, 0.8]);
        let f = hadamard_lower(&zero, &v(&[0.0, 0.0]), &g, &scales()).unwrap();
        assert!((f - 1.0).abs() < 0.01, "{f}");

        let (quad, _) = corpus_lookup("quad_posdef").unwrap();
        let x0 = v(&[1.0, 1.0]);
        let f = hadamard_lower(&quad, &x0, &g, &scales()).unwrap();
        let expected = quad.grad_at(&x0).unwrap().dot(&g) + quad.lipschitz_const();
        assert!((f - expected).abs() < 0.05 * quad.lipschitz_const(), "{f} vs {expected}");
    }

    #[test]
    fn hadamard_rejects_non_unit() {
        let (abs, _) = corpus_lookup("abs1d").unwrap();
        assert!(hadamard_lower(&abs, &v(&[0.0]), &v(&[2.0]), &scales()).is_err());
    }
}
