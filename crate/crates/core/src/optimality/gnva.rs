//! Principal lower convex approximation h(x₀, ·) of the Hadamard derivative
//! and the minimality test L·B₁ⁿ(0) ⊆ ∂h(x₀, 0).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::cones::ConeApprox;
use crate::corpus::LipschitzFunction;
use crate::directions::{dedup_directions, signed_axes, sphere_net};
use crate::error::{Error, Result};
use crate::hull::{hull_of, ConvexSetApprox, DEFAULT_TOLERANCE};
use crate::subdiff::{curve_trace, CurveProbe};

/// Largest dimension in which B is converted to vertices.
pub const VERTEX_MAX_DIM: usize = 3;
/// Allowed fraction of directions with no finite v(g).
pub const MAX_NONFINITE_FRACTION: f64 = 0.1;
/// Margins within this multiple of max(1, L) are rounded to 0.
pub const MARGIN_SNAP: f64 = 1e-6;
const NET_SEED: u64 = 0x9a7a;
const FEAS_TOL: f64 = 1e-9;

/// ±axes plus a sphere net: 64 directions in 2D, 2n + 32 otherwise, ±1 in 1D.
pub fn gnva_directions(dim: usize) -> Vec<DVector<f64>> {
    let count = match dim {
        1 => 2,
        2 => 64,
        n => 2 * n + 32,
    };
    let mut dirs = signed_axes(dim);
    dirs.extend(sphere_net(dim, count, NET_SEED));
    let mut dirs = dedup_directions(dirs, 1e-9);
    if dim == 2 {
        dirs.truncate(64);
    }
    dirs
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSample {
    pub direction: DVector<f64>,
    /// Curve-averaged gradient limit of f̃ along the ray; None when non-finite.
    pub v: Option<DVector<f64>>,
    /// Right-hand side (v(g), g) of the half-space, clamped at 0.
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnvaResult {
    /// ∂h(x₀, 0) as vertices (n ≤ 3); None in higher dimensions, where only
    /// the support data in `samples` is kept.
    pub set: Option<ConvexSetApprox>,
    pub samples: Vec<DirectionSample>,
    /// Directions used by the inclusion test (restricted to K when given).
    pub test_directions: Vec<DVector<f64>>,
    pub lipschitz: f64,
    pub margin: f64,
    pub min_test: bool,
}

impl GnvaResult {
    /// support(B, g) for g among the test directions; the half-space level
    /// when no vertex description exists.
    pub fn support(&self, g: &DVector<f64>) -> f64 {
        match &self.set {
            Some(b) => b.support_value(g),
            None => self
                .samples
                .iter()
                .find(|s| (&s.direction - g).norm() < 1e-12)
                .map_or(f64::INFINITY, |s| s.level),
        }
    }

    /// Per-direction slack support(B, g) − L over the test directions.
    pub fn slacks(&self) -> Vec<(DVector<f64>, f64)> {
        self.test_directions
            .iter()
            .map(|g| (g.clone(), self.support(g) - self.lipschitz))
            .collect()
    }
}

/// Vertices of {w | (w, gᵢ) ≤ cᵢ}, assumed bounded.
fn halfspace_vertices(dim: usize, rows: &[(DVector<f64>, f64)]) -> Result<ConvexSetApprox> {
    if dim == 1 {
        let hi = rows.iter().filter(|r| r.0[0] > 0.0).map(|r| r.1 / r.0[0]).fold(f64::INFINITY, f64::min);
        let lo = rows.iter().filter(|r| r.0[0] < 0.0).map(|r| r.1 / r.0[0]).fold(f64::NEG_INFINITY, f64::max);
        if !(hi.is_finite() && lo.is_finite()) {
            return Err(Error::Unbounded("GNVA set needs directions on both sides".into()));
        }
        return hull_of(&[DVector::from_element(1, lo), DVector::from_element(1, hi)], DEFAULT_TOLERANCE);
    }
    let scale = rows.iter().map(|r| r.1.abs()).fold(1.0, f64::max);
    let feasible = |w: &DVector<f64>| rows.iter().all(|(g, c)| g.dot(w) <= c + FEAS_TOL * scale);
    let mut pts = Vec::new();
    let mut idx = vec![0usize; dim];
    fn next(idx: &mut [usize], m: usize) -> bool {
        let k = idx.len();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if idx[i] < m - (k - i) {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                return true;
            }
        }
        false
    }
    for (i, v) in idx.iter_mut().enumerate() {
        *v = i;
    }
    if rows.len() < dim {
        return Err(Error::Unbounded("GNVA set needs at least n directions".into()));
    }
    loop {
        let a = DMatrix::from_fn(dim, dim, |r, c| rows[idx[r]].0[c]);
        let b = DVector::from_fn(dim, |r, _| rows[idx[r]].1);
        if let Some(w) = a.clone().lu().solve(&b) {
            if w.iter().all(|x| x.is_finite()) && (&a * &w - &b).norm() <= 1e-9 * scale && feasible(&w) {
                pts.push(w);
            }
        }
        if !next(&mut idx, rows.len()) {
            break;
        }
    }
    if pts.is_empty() {
        return Err(Error::EmptySet);
    }
    hull_of(&pts, DEFAULT_TOLERANCE)
}

/// Builds B = ∂h(x₀, 0) = {w | (w, g) ≤ (v(g), g)} where v(g) is the
/// curve-averaged gradient limit of f̃ = f + L‖x − x₀‖ along the ray x₀ + αg,
/// then tests L·B₁ⁿ(0) ⊆ B over `directions` (only those in `cone`, if
/// given). The margin is min over test directions of support(B, g) − L.
pub fn build_gnva(
    f: &LipschitzFunction,
    x0: &DVector<f64>,
    directions: &[DVector<f64>],
    cone: Option<&ConeApprox>,
    seed: u64,
) -> Result<GnvaResult> {
    let n = f.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: x0.len() });
    }
    if directions.len() < 2 * n {
        return Err(Error::InvalidArgument(format!("need at least {} directions", 2 * n)));
    }
    let l = f.lipschitz_const();
    let f_tilde = f.with_cone_penalty(x0, l);
    let samples: Vec<DirectionSample> = directions
        .par_iter()
        .map(|g| {
            let g = g / g.norm();
            let v = match curve_trace(&f_tilde, x0, &CurveProbe::straight(g.clone()), seed) {
                Ok(t) => t.extrapolated.filter(|v| v.iter().all(|x| x.is_finite())),
                Err(Error::UndefinedGradient { .. }) => None,
                Err(e) => return Err(e),
            };
            let level = v.as_ref().map_or(f64::NAN, |v| v.dot(&g).max(0.0));
            Ok(DirectionSample { direction: g, v, level })
        })
        .collect::<Result<_>>()?;
    let missing = samples.iter().filter(|s| s.v.is_none()).count();
    if missing as f64 > MAX_NONFINITE_FRACTION * samples.len() as f64 {
        return Err(Error::NoFiniteEstimates(format!("v(g) undefined on {missing} of {} directions", samples.len())));
    }
    let rows: Vec<(DVector<f64>, f64)> = samples
        .iter()
        .filter(|s| s.v.is_some())
        .map(|s| (s.direction.clone(), s.level))
        .collect();
    let set = if n <= VERTEX_MAX_DIM { Some(halfspace_vertices(n, &rows)?) } else { None };
    let test_directions: Vec<DVector<f64>> = samples
        .iter()
        .filter(|s| s.v.is_some() && cone.is_none_or(|k| k.contains(&s.direction, 1e-9)))
        .map(|s| s.direction.clone())
        .collect();
    let mut result = GnvaResult {
        set,
        samples,
        test_directions,
        lipschitz: l,
        margin: f64::INFINITY,
        min_test: true,
    };
    let margin = result.slacks().iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let margin = if !margin.is_finite() || margin.abs() <= MARGIN_SNAP * l.max(1.0) {
        0.0
    } else {
        margin
    };
    result.margin = margin;
    result.min_test = margin >= 0.0;
    Ok(result)
}

/// Test directions where support(B, g) − L ≤ tol.
pub fn suspicious_directions(gnva: &GnvaResult, tol: f64) -> Vec<DVector<f64>> {
    gnva.slacks().into_iter().filter(|s| s.1 <= tol).map(|s| s.0).collect()
}
