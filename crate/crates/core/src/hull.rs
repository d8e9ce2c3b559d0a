//! Convex-geometry kernel for low-dimensional vertex clouds.
//!
//! Every set is carried in V-representation. Hulls are reduced to a minimal
//! vertex list for n ≤ 3; higher-dimensional clouds are only deduplicated and
//! answered through their support function.

use nalgebra::{DMatrix, DVector};

use crate::directions::sphere_net;
use crate::error::{Error, Result};

/// Default absolute tolerance for vertex reduction.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

const MIN_NORM_MAX_ITER: usize = 10_000;
/// Major iterations without decrease of ‖x‖ before giving up on progress.
const STALL_LIMIT: usize = 20;
/// Relative optimality gap accepted from a stalled iteration.
const STALL_GAP: f64 = 1e-9;

/// Finite vertex cloud standing for the convex hull of its points.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSetApprox {
    dim: usize,
    vertices: Vec<DVector<f64>>,
    tolerance: f64,
}

impl ConvexSetApprox {
    pub fn singleton(point: DVector<f64>) -> Self {
        Self {
            dim: point.len(),
            vertices: vec![point],
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    /// Wraps a vertex list as-is, without reduction.
    pub fn from_vertices(vertices: Vec<DVector<f64>>, tolerance: f64) -> Result<Self> {
        let dim = vertices.first().ok_or(Error::EmptySet)?.len();
        check_points(&vertices, dim)?;
        Ok(Self {
            dim,
            vertices,
            tolerance,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Support function value and the first vertex attaining it.
    pub fn support(&self, g: &DVector<f64>) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, v) in self.vertices.iter().enumerate() {
            let s = v.dot(g);
            if s > best.0 {
                best = (s, i);
            }
        }
        best
    }

    pub fn support_value(&self, g: &DVector<f64>) -> f64 {
        self.support(g).0
    }

    /// Nearest point of the hull to the origin and its norm.
    pub fn min_norm_point(&self) -> Result<(DVector<f64>, f64)> {
        let p = wolfe_min_norm(&self.vertices)?;
        let d = p.norm();
        Ok((p, d))
    }

    /// Euclidean distance from `x` to the hull.
    pub fn distance_to(&self, x: &DVector<f64>) -> Result<f64> {
        let shifted: Vec<_> = self.vertices.iter().map(|v| v - x).collect();
        Ok(wolfe_min_norm(&shifted)?.norm())
    }

    pub fn contains(&self, x: &DVector<f64>) -> Result<bool> {
        Ok(self.distance_to(x)? <= self.tolerance.max(DEFAULT_TOLERANCE))
    }

    /// Largest pairwise vertex distance.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max((a - b).norm());
            }
        }
        d
    }

    /// Mean of the vertices.
    pub fn centroid(&self) -> DVector<f64> {
        let mut c = DVector::zeros(self.dim);
        for v in &self.vertices {
            c += v;
        }
        c / self.vertices.len() as f64
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            dim: self.dim,
            vertices: self.vertices.iter().map(|v| v * k).collect(),
            tolerance: self.tolerance,
        }
    }

    pub fn translated(&self, t: &DVector<f64>) -> Self {
        Self {
            dim: self.dim,
            vertices: self.vertices.iter().map(|v| v + t).collect(),
            tolerance: self.tolerance,
        }
    }

    /// Minkowski sum as the hull of pairwise vertex sums.
    pub fn minkowski_sum(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut pts = Vec::with_capacity(self.vertices.len() * other.vertices.len());
        for a in &self.vertices {
            for b in &other.vertices {
                pts.push(a + b);
            }
        }
        hull_of(&pts, self.tolerance.max(other.tolerance))
    }

    /// Hull of the union of both vertex sets.
    pub fn union(&self, other: &Self) -> Result<Self> {
        let mut pts = self.vertices.clone();
        pts.extend(other.vertices.iter().cloned());
        hull_of(&pts, self.tolerance.max(other.tolerance))
    }
}

fn check_points(points: &[DVector<f64>], dim: usize) -> Result<()> {
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        if p.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite coordinate in {:?}",
                p.as_slice()
            )));
        }
    }
    Ok(())
}

/// Minimal vertex set whose hull contains every input point within `tol`.
pub fn hull_of(points: &[DVector<f64>], tol: f64) -> Result<ConvexSetApprox> {
    let dim = points.first().ok_or(Error::EmptySet)?.len();
    check_points(points, dim)?;
    let unique = dedup_points(points, tol);
    let vertices = match dim {
        1 => hull_1d(&unique),
        2 => hull_2d(&unique, tol),
        3 => prune_redundant(unique, tol)?,
        _ => unique,
    };
    Ok(ConvexSetApprox {
        dim,
        vertices,
        tolerance: tol,
    })
}

fn dedup_points(points: &[DVector<f64>], tol: f64) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(points.len());
    for p in points {
        if !out.iter().any(|q| (q - p).norm() <= tol) {
            out.push(p.clone());
        }
    }
    out
}

fn hull_1d(points: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    if points.len() == 1 || lo == hi {
        vec![DVector::from_element(1, lo)]
    } else {
        vec![DVector::from_element(1, lo), DVector::from_element(1, hi)]
    }
}

fn cross(o: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain, counter-clockwise from the lowest-x point.
fn hull_2d(points: &[DVector<f64>], tol: f64) -> Vec<DVector<f64>> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    // Pop the middle point when it lies within tol of the chord o→p.
    let flat = |o: &DVector<f64>, a: &DVector<f64>, p: &DVector<f64>| cross(o, a, p) <= tol * (p - o).norm();
    let mut lower: Vec<DVector<f64>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && flat(&lower[lower.len() - 2], &lower[lower.len() - 1], p) {
            lower.pop();
        }
        lower.push(p.clone());
    }
    let mut upper: Vec<DVector<f64>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && flat(&upper[upper.len() - 2], &upper[upper.len() - 1], p) {
            upper.pop();
        }
        upper.push(p.clone());
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() == 2 && (&lower[0] - &lower[1]).norm() <= tol {
        lower.truncate(1);
    }
    lower
}

/// Drops every point lying within `tol` of the hull of the remaining ones.
fn prune_redundant(mut points: Vec<DVector<f64>>, tol: f64) -> Result<Vec<DVector<f64>>> {
    let mut i = 0;
    while i < points.len() {
        if points.len() <= 1 {
            break;
        }
        let p = points[i].clone();
        let others: Vec<_> = points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, q)| q - &p)
            .collect();
        if wolfe_min_norm(&others)?.norm() <= tol {
            points.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(points)
}

/// Wolfe's nearest-point-in-polytope method.
pub fn wolfe_min_norm(points: &[DVector<f64>]) -> Result<DVector<f64>> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    let scale = points.iter().map(|p| p.norm_squared()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(points[0].clone());
    }
    let eps_opt = 1e-13 * scale;
    let eps_weight = 1e-12;

    let start = (0..points.len())
        .min_by(|&a, &b| points[a].norm_squared().total_cmp(&points[b].norm_squared()))
        .unwrap_or(0);
    let mut active = vec![start];
    let mut weights = vec![1.0];
    let mut x = points[start].clone();
    let mut best = (f64::INFINITY, x.clone());
    let mut stalled = 0;

    for _ in 0..MIN_NORM_MAX_ITER {
        let xx = x.norm_squared();
        let (j, xj) = points
            .iter()
            .enumerate()
            .map(|(j, p)| (j, x.dot(p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0, xx));
        // ‖x‖ at roundoff level relative to the points is the origin.
        if xj >= xx - eps_opt || active.contains(&j) || xx <= 1e-24 * scale {
            return Ok(x);
        }
        // Degenerate affine hulls can make the iterates cycle without progress.
        if xx < best.0 * (1.0 - 1e-12) {
            best = (xx, x.clone());
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= STALL_LIMIT {
                break;
            }
        }
        active.push(j);
        weights.push(0.0);

        // minor cycles
        loop {
            let mu = affine_minimizer(points, &active);
            if mu.iter().all(|&m| m > eps_weight) {
                weights = mu;
                x = combine(points, &active, &weights);
                break;
            }
            let mut theta: f64 = 1.0;
            for (w, m) in weights.iter().zip(&mu) {
                if *m <= eps_weight && w - m > 0.0 {
                    theta = theta.min(w / (w - m));
                }
            }
            for (w, m) in weights.iter_mut().zip(&mu) {
                *w = theta * m + (1.0 - theta) * *w;
            }
            let mut k = 0;
            while k < active.len() {
                if weights[k] <= eps_weight {
                    active.remove(k);
                    weights.remove(k);
                } else {
                    k += 1;
                }
            }
            if active.is_empty() {
                active.push(j);
                weights = vec![1.0];
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            x = combine(points, &active, &weights);
            if active.len() == 1 {
                break;
            }
        }
    }
    let x = if best.0 < x.norm_squared() { best.1 } else { x };
    let xx = x.norm_squared();
    let xj = points.iter().map(|p| x.dot(p)).fold(f64::INFINITY, f64::min);
    if xx - xj <= STALL_GAP * scale {
        return Ok(x);
    }
    Err(Error::NonConvergence {
        iterations: MIN_NORM_MAX_ITER,
        residual: xx - xj,
    })
}

fn combine(points: &[DVector<f64>], active: &[usize], weights: &[f64]) -> DVector<f64> {
    let mut x = DVector::zeros(points[0].len());
    for (&i, &w) in active.iter().zip(weights) {
        x.axpy(w, &points[i], 1.0);
    }
    x
}

/// Weights of the minimum-norm point of the affine hull of the active points.
fn affine_minimizer(points: &[DVector<f64>], active: &[usize]) -> Vec<f64> {
    let k = active.len();
    let mut m = DMatrix::zeros(k + 1, k + 1);
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            m[(a, b)] = points[i].dot(&points[j]);
        }
        m[(a, k)] = 1.0;
        m[(k, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = m
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|c| c.is_finite()))
        .unwrap_or_else(|| {
            m.pseudo_inverse(1e-14)
                .map(|p| p * &rhs)
                .unwrap_or_else(|_| DVector::from_element(k + 1, 1.0 / k as f64))
        });
    sol.rows(0, k).iter().copied().collect()
}

/// Support-function sup-metric over `directions` spread unit vectors.
pub fn hausdorff(a: &ConvexSetApprox, b: &ConvexSetApprox, directions: usize) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            found: b.dim,
        });
    }
    Ok(sphere_net(a.dim, directions, 0x5eed)
        .iter()
        .map(|g| (a.support_value(g) - b.support_value(g)).abs())
        .fold(0.0, f64::max))
}

/// Largest positive support excess of `a` over `b`: 0 when a ⊆ b.
pub fn inclusion_gap(a: &ConvexSetApprox, b: &ConvexSetApprox, directions: usize) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            found: b.dim,
        });
    }
    Ok(sphere_net(a.dim, directions, 0x5eed)
        .iter()
        .map(|g| (a.support_value(g) - b.support_value(g)).max(0.0))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(c)
    }

    #[test]
    fn near_origin_vertex_with_arc_terminates() {
        // Curve estimates of a smooth stationary point: one roundoff-sized
        // vector plus an arc of radius 7e-7 used to cycle forever.
        let (a, b, c) = (4.847479910909721e-7, 6.333537724570676e-7, 2.623437223314186e-7);
        let r = 6.85537183333351e-7;
        let pts = vec![
            v(&[-a, a]),
            v(&[2.168404344971009e-19, 0.0]),
            v(&[b, -c]),
            v(&[r, 2.168404344971009e-19]),
            v(&[b, c]),
            v(&[a, a]),
            v(&[c, b]),
            v(&[2.168404344971009e-19, r]),
            v(&[-c, b]),
        ];
        let x = wolfe_min_norm(&pts).unwrap();
        assert!(x.norm() < 1e-18);
    }

    #[test]
    fn interior_point_dropped_1d() {
        let h = hull_of(&[v(&[0.0]), v(&[1.0]), v(&[0.5])], DEFAULT_TOLERANCE).unwrap();
        assert_eq!(h.vertices(), &[v(&[0.0]), v(&[1.0])]);
    }

    #[test]
    fn segment_midpoint_dropped() {
        let h = hull_of(&[v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[0.5, 0.5])], DEFAULT_TOLERANCE).unwrap();
        assert_eq!(h.vertices().len(), 2);
        assert!(h.vertices().contains(&v(&[1.0, 0.0])));
        assert!(h.vertices().contains(&v(&[0.0, 1.0])));
    }

    #[test]
    fn extreme_point_survives_in_disk_cloud() {
        let mut pts: Vec<_> = sphere_net(2, 100, 0)
            .into_iter()
            .enumerate()
            .map(|(k, d)| d * (0.3 + 0.6 * ((k * 37 % 100) as f64 / 100.0)))
            .collect();
        pts.push(v(&[2.0, 0.0]));
        let h = hull_of(&pts, DEFAULT_TOLERANCE).unwrap();
        assert!(h.vertices().contains(&v(&[2.0, 0.0])));
    }

    #[test]
    fn empty_input_rejected() {
        assert_eq!(hull_of(&[], DEFAULT_TOLERANCE), Err(Error::EmptySet));
    }

    #[test]
    fn support_examples() {
        let seg = hull_of(&[v(&[-1.0]), v(&[1.0])], DEFAULT_TOLERANCE).unwrap();
        let (val, idx) = seg.support(&v(&[1.0]));
        assert_eq!(val, 1.0);
        assert_eq!(seg.vertices()[idx], v(&[1.0]));

        let s = ConvexSetApprox::from_vertices(vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])], 0.0).unwrap();
        assert_eq!(s.support(&v(&[1.0, 1.0])), (1.0, 0));

        let a = v(&[2.0, -3.0]);
        let single = ConvexSetApprox::singleton(a.clone());
        let g = v(&[0.4, 0.7]);
        assert_eq!(single.support(&g), (a.dot(&g), 0));
    }

    #[test]
    fn min_norm_examples() {
        let seg = hull_of(&[v(&[-1.0]), v(&[1.0])], DEFAULT_TOLERANCE).unwrap();
        let (_, d) = seg.min_norm_point().unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-12);

        let single = ConvexSetApprox::singleton(v(&[3.0, 4.0]));
        let (p, d) = single.min_norm_point().unwrap();
        assert_eq!(p, v(&[3.0, 4.0]));
        assert_abs_diff_eq!(d, 5.0, epsilon = 1e-12);

        let s = hull_of(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])], DEFAULT_TOLERANCE).unwrap();
        let (p, d) = s.min_norm_point().unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d, 0.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn hausdorff_examples() {
        let a = hull_of(&[v(&[-1.0]), v(&[1.0])], DEFAULT_TOLERANCE).unwrap();
        let b = hull_of(&[v(&[-1.0]), v(&[2.0])], DEFAULT_TOLERANCE).unwrap();
        assert_eq!(hausdorff(&a, &a, 2).unwrap(), 0.0);
        assert_abs_diff_eq!(hausdorff(&a, &b, 2).unwrap(), 1.0, epsilon = 1e-15);

        let gon = hull_of(&sphere_net(2, 64, 0), DEFAULT_TOLERANCE).unwrap();
        let eps = 0.01;
        let shifted = gon.translated(&v(&[eps, 0.0]));
        let h = hausdorff(&gon, &shifted, 64).unwrap();
        let slack = 2.0 * (std::f64::consts::PI / 64.0).sin();
        assert!((h - eps).abs() <= slack * eps, "h = {h}");

        let c = hull_of(&[v(&[0.0, 0.0])], DEFAULT_TOLERANCE).unwrap();
        assert!(matches!(hausdorff(&a, &c, 4), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn minkowski_of_segments_is_square() {
        let a = hull_of(&[v(&[-1.0, 0.0]), v(&[1.0, 0.0])], DEFAULT_TOLERANCE).unwrap();
        let b = hull_of(&[v(&[0.0, -1.0]), v(&[0.0, 1.0])], DEFAULT_TOLERANCE).unwrap();
        let s = a.minkowski_sum(&b).unwrap();
        assert_eq!(s.vertices().len(), 4);
        assert_abs_diff_eq!(s.support_value(&v(&[1.0, 1.0])), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn hull_3d_keeps_cube_corners_only() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(v(&[(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]));
        }
        pts.push(v(&[0.5, 0.5, 0.5]));
        pts.push(v(&[0.5, 0.5, 1.0]));
        let h = hull_of(&pts, DEFAULT_TOLERANCE).unwrap();
        assert_eq!(h.vertices().len(), 8);
    }
}

