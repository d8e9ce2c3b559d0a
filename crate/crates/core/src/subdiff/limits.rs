//! Per-probe convergence traces and limit extraction.

use nalgebra::{DMatrix, DVector};

use crate::mapping::ls_slope;

/// Entries used for clustering and extrapolation.
pub const LIMIT_WINDOW: usize = 4;
/// Cluster and convergence tolerance, relative to max(1, L).
pub const CLUSTER_REL_TOL: f64 = 1e-2;
/// Growth exponent above which a trace counts as unbounded.
pub const UNBOUNDED_GROWTH: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub annulus: usize,
    /// Distance from the anchor (or curve length α) at which the estimate was taken.
    pub scale: f64,
    pub estimate: DVector<f64>,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitTrace {
    /// Ordered by decreasing scale.
    pub entries: Vec<TraceEntry>,
    /// One extrapolated value per cluster of the last window.
    pub limits: Vec<DVector<f64>>,
    /// First cluster's limit (the one holding the smallest-scale entry).
    pub extrapolated: Option<DVector<f64>>,
    pub converged: bool,
    pub growth_exponent: f64,
}

impl LimitTrace {
    /// Raw estimates at the two smallest scales.
    pub fn tail(&self) -> Vec<&TraceEntry> {
        self.entries.iter().rev().take(2).collect()
    }

    pub fn is_unbounded(&self) -> bool {
        self.growth_exponent > UNBOUNDED_GROWTH
    }
}

fn components(entries: &[&TraceEntry]) -> usize {
    entries.first().map_or(0, |e| e.estimate.len())
}

/// Intercept of the least-squares line value = a + b·scale, per component.
fn extrapolate(cluster: &[&TraceEntry]) -> DVector<f64> {
    let scales: Vec<f64> = cluster.iter().map(|e| e.scale).collect();
    let distinct = scales.iter().any(|s| (s - scales[0]).abs() > 1e-15 * scales[0].abs());
    let n = components(cluster);
    DVector::from_fn(n, |j, _| {
        let ys: Vec<f64> = cluster.iter().map(|e| e.estimate[j]).collect();
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        if !distinct {
            return my;
        }
        let b = ls_slope(&scales, &ys);
        let ms = scales.iter().sum::<f64>() / scales.len() as f64;
        my - b * ms
    })
}

/// Largest distance between an entry and the affine fit through `intercept`.
fn affine_residual(window: &[&TraceEntry], intercept: &DVector<f64>) -> f64 {
    let n = components(window);
    let scales: Vec<f64> = window.iter().map(|e| e.scale).collect();
    let ms = scales.iter().sum::<f64>() / scales.len() as f64;
    let slope = DVector::from_fn(n, |j, _| {
        let ys: Vec<f64> = window.iter().map(|e| e.estimate[j]).collect();
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        if ms > 0.0 {
            (my - intercept[j]) / ms
        } else {
            0.0
        }
    });
    window
        .iter()
        .map(|e| (&e.estimate - intercept - &slope * e.scale).norm())
        .fold(0.0, f64::max)
}

/// Single-linkage clusters (indices into `items`), ordered by first member.
fn clusters(items: &[&TraceEntry], tol: f64) -> Vec<Vec<usize>> {
    let mut label: Vec<usize> = (0..items.len()).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..items.len() {
        for j in 0..i {
            if (&items[i].estimate - &items[j].estimate).norm() < tol {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                label[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..items.len() {
        let r = find(&mut label, i);
        match groups.iter_mut().find(|g| g.0 == r) {
            Some(g) => g.1.push(i),
            None => groups.push((r, vec![i])),
        }
    }
    groups.into_iter().map(|g| g.1).collect()
}

/// Clusters the last [`LIMIT_WINDOW`] entries at tolerance `tol` and
/// extrapolates each cluster to scale 0. `floor` keeps the log of a zero
/// estimate finite when fitting the growth exponent.
pub fn extract_limits(entries: Vec<TraceEntry>, tol: f64, floor: f64) -> LimitTrace {
    let growth_exponent = if entries.len() >= 2 {
        let xs: Vec<f64> = entries.iter().map(|e| (1.0 / e.scale).ln()).collect();
        let ys: Vec<f64> = entries.iter().map(|e| (e.estimate.norm() + floor).ln()).collect();
        ls_slope(&xs, &ys)
    } else {
        0.0
    };
    let window: Vec<&TraceEntry> = entries.iter().skip(entries.len().saturating_sub(LIMIT_WINDOW)).collect();
    // A window that is affine in the scale up to tol/2 is one converging branch.
    if window.len() >= 3 {
        let limit = extrapolate(&window);
        let slope_fit = affine_residual(&window, &limit);
        if slope_fit < 0.5 * tol {
            return LimitTrace {
                extrapolated: Some(limit.clone()),
                entries,
                limits: vec![limit],
                converged: true,
                growth_exponent,
            };
        }
    }
    let mut groups = clusters(&window, tol);
    // Put the cluster holding the smallest-scale entry first.
    if let Some(pos) = groups.iter().position(|g| g.contains(&(window.len().saturating_sub(1)))) {
        let g = groups.remove(pos);
        groups.insert(0, g);
    }
    let limits: Vec<DVector<f64>> = groups
        .iter()
        .map(|g| extrapolate(&g.iter().map(|&i| window[i]).collect::<Vec<_>>()))
        .collect();
    let last3: Vec<&TraceEntry> = entries.iter().skip(entries.len().saturating_sub(3)).collect();
    let converged = last3.len() == 3
        && (0..3).all(|i| (0..i).all(|j| (&last3[i].estimate - &last3[j].estimate).norm() < tol));
    LimitTrace {
        extrapolated: limits.first().cloned(),
        entries,
        limits,
        converged,
        growth_exponent,
    }
}

/// Coordinates of a symmetric matrix in which the Euclidean norm equals the
/// Frobenius norm: diagonal entries, then √2·A_ij for i < j.
pub fn sym_coords(a: &DMatrix<f64>) -> DVector<f64> {
    let n = a.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    out.extend((0..n).map(|i| a[(i, i)]));
    for i in 0..n {
        for j in i + 1..n {
            out.push(std::f64::consts::SQRT_2 * a[(i, j)]);
        }
    }
    DVector::from_vec(out)
}

/// Inverse of [`sym_coords`].
pub fn from_sym_coords(n: usize, c: &DVector<f64>) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = c[i];
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            let v = c[k] / std::f64::consts::SQRT_2;
            a[(i, j)] = v;
            a[(j, i)] = v;
            k += 1;
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(scale: f64, v: &[f64]) -> TraceEntry {
        TraceEntry {
            annulus: 0,
            scale,
            estimate: DVector::from_column_slice(v),
            stderr: 0.0,
        }
    }

    #[test]
    fn linear_trace_extrapolates_exactly() {
        let entries: Vec<_> = (0..6)
            .map(|k| {
                let s = 0.1 * 0.5f64.powi(k);
                entry(s, &[2.0 + 3.0 * s])
            })
            .collect();
        let t = extract_limits(entries, 1e-2, 1e-6);
        assert!(t.converged);
        assert_eq!(t.limits.len(), 1);
        assert!((t.limits[0][0] - 2.0).abs() < 1e-12);
        assert!(t.growth_exponent.abs() < 0.05);
    }

    #[test]
    fn oscillating_trace_yields_two_clusters() {
        let entries: Vec<_> = (0..8)
            .map(|k| entry(0.5f64.powi(k), &[if k % 2 == 0 { 1.0 } else { -1.0 }]))
            .collect();
        let t = extract_limits(entries, 1e-2, 1e-6);
        assert!(!t.converged);
        assert_eq!(t.limits.len(), 2);
        assert_eq!(t.tail().len(), 2);
        // smallest-scale entry (k = 7) is -1
        assert_eq!(t.extrapolated.unwrap()[0], -1.0);
    }

    #[test]
    fn steep_affine_trace_is_one_branch() {
        let entries: Vec<_> = (0..3)
            .map(|k| {
                let s = 2e-3 * 0.25f64.powi(k);
                entry(s, &[1.0, 2.0 + 50.0 * s])
            })
            .collect();
        let t = extract_limits(entries, 1e-2, 1e-6);
        assert!(t.converged);
        assert_eq!(t.limits.len(), 1);
        assert!((t.limits[0][1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_scale_growth() {
        let entries: Vec<_> = (0..6)
            .map(|k| {
                let s = 0.5f64.powi(k);
                entry(s, &[1.0 / s])
            })
            .collect();
        let t = extract_limits(entries, 1e-2, 1e-6);
        assert!((t.growth_exponent - 1.0).abs() < 1e-6);
        assert!(t.is_unbounded());
    }

    #[test]
    fn sym_coords_round_trip_and_norm() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let c = sym_coords(&a);
        assert!((c.norm() - a.norm()).abs() < 1e-12);
        assert!((from_sym_coords(3, &c) - a).norm() < 1e-14);
    }
}
