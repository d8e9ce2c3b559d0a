//! Subdifferentials from smoothed gradients and smoothed Hessians.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::battery::PROBE_POSITIONS;
use super::limits::{extract_limits, from_sym_coords, sym_coords, LimitTrace, TraceEntry, CLUSTER_REL_TOL};
use crate::corpus::LipschitzFunction;
use crate::error::{Error, Result, StageExt};
use crate::hull::{hull_of, ConvexSetApprox, DEFAULT_TOLERANCE};
use crate::mapping::{ImageField, MappingSchedule, Shape};
use crate::smoothing::{double_average_gradient, smoothed_hessian, steklov_gradient, QuadratureSpec, SmoothedValue};

/// Smallest schedule depth the estimators accept.
pub const MIN_DEPTH: usize = 4;

/// Trace of one approach ray (direction × radial position).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTrace {
    pub probe_id: usize,
    pub direction: DVector<f64>,
    pub position: f64,
    pub trace: LimitTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiSubdiff {
    pub set: ConvexSetApprox,
    pub traces: Vec<ProbeTrace>,
    /// True when some probe did not converge and contributed raw estimates.
    pub inflated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BigPhi {
    pub set: ConvexSetApprox,
    pub per_schedule: Vec<PhiSubdiff>,
    pub inflated: bool,
}

pub(crate) fn tolerance(f: &LipschitzFunction) -> f64 {
    CLUSTER_REL_TOL * f.lipschitz_const().max(1.0)
}

fn floor(f: &LipschitzFunction) -> f64 {
    1e-6 * f.lipschitz_const().max(1.0)
}

fn check_schedule(f: &LipschitzFunction, x0: &DVector<f64>, s: &MappingSchedule) -> Result<()> {
    if x0.len() != f.dim() || s.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: if x0.len() != f.dim() { x0.len() } else { s.dim() },
        });
    }
    if (s.anchor() - x0).norm() > 0.0 {
        return Err(Error::InvalidArgument("schedule is not anchored at x0".into()));
    }
    if s.depth() < MIN_DEPTH {
        return Err(Error::ShallowSchedule {
            depth: s.depth(),
            required: MIN_DEPTH,
        });
    }
    Ok(())
}

/// Evaluation points x₀ + r·u on every even annulus, outermost first.
fn ray_points(s: &MappingSchedule, u: &DVector<f64>, position: f64) -> Vec<(usize, f64, DVector<f64>)> {
    let unit = u / u.norm();
    s.constancy_annuli()
        .into_iter()
        .map(|i| {
            let r = s.radius_at(i, position);
            (i, r, s.anchor() + &unit * r)
        })
        .collect()
}

/// Runs `probe` for every (direction, position) pair in parallel, keeping
/// the (direction, position) order in the output.
fn for_each_probe<T, F>(probes: &[DVector<f64>], probe: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &DVector<f64>, f64) -> Result<T> + Sync,
{
    let jobs: Vec<(usize, f64)> = (0..probes.len())
        .flat_map(|p| PROBE_POSITIONS.iter().map(move |&t| (p, t)))
        .collect();
    jobs.par_iter()
        .enumerate()
        .map(|(id, &(p, t))| probe(id, &probes[p], t))
        .collect()
}

fn project_to_ball(v: DVector<f64>, radius: f64) -> DVector<f64> {
    let n = v.norm();
    if n > radius {
        v * (radius / n)
    } else {
        v
    }
}

/// ∂φ_D(x₀) for one schedule: smoothed gradients along each probe ray at
/// constancy-region points, extrapolated to the anchor.
pub fn phi_subdiff(
    f: &LipschitzFunction,
    x0: &DVector<f64>,
    schedule: &MappingSchedule,
    probes: &[DVector<f64>],
    spec: &QuadratureSpec,
) -> Result<PhiSubdiff> {
    check_schedule(f, x0, schedule)?;
    if probes.is_empty() {
        return Err(Error::InvalidArgument("no probe directions".into()));
    }
    let (tol, fl, l) = (tolerance(f), floor(f), f.lipschitz_const());
    let traces: Vec<Option<ProbeTrace>> = for_each_probe(probes, |id, u, t| {
        let mut entries = Vec::new();
        for (i, r, x) in ray_points(schedule, u, t) {
            let img = schedule.image_at(&x)?;
            debug_assert!(img.in_constancy_region);
            let g = steklov_gradient(f, &x, &img, spec)?;
            if g.value.iter().all(|v| v.is_finite()) {
                entries.push(TraceEntry {
                    annulus: i,
                    scale: r,
                    estimate: g.value,
                    stderr: g.stderr,
                });
            }
        }
        if entries.is_empty() {
            return Ok(None);
        }
        Ok(Some(ProbeTrace {
            probe_id: id,
            direction: u.clone(),
            position: t,
            trace: extract_limits(entries, tol, fl),
        }))
    })?;
    let traces: Vec<ProbeTrace> = traces.into_iter().flatten().collect();
    if traces.is_empty() {
        return Err(Error::NoFiniteEstimates("every probe produced non-finite gradients".into()));
    }
    let mut points = Vec::new();
    let mut inflated = false;
    for p in &traces {
        // φ′ never exceeds L in norm, so extrapolation overshoot is clipped.
        points.extend(p.trace.limits.iter().map(|v| project_to_ball(v.clone(), l)));
        if !p.trace.converged {
            inflated = true;
            points.extend(p.trace.tail().into_iter().map(|e| e.estimate.clone()));
        }
    }
    Ok(PhiSubdiff {
        set: hull_of(&points, DEFAULT_TOLERANCE)?,
        traces,
        inflated,
    })
}

fn distinct_families(schedules: &[MappingSchedule]) -> usize {
    let mut seen: Vec<(Shape, u64, u64)> = Vec::new();
    for s in schedules {
        let key = (s.shape(), s.q().to_bits(), s.diam_ratio().to_bits());
        if !seen.contains(&key) {
            seen.push(key);
        }
    }
    seen.len()
}

/// Φf(x₀): hull of the union of ∂φ_D(x₀) over a schedule battery.
pub fn big_phi(
    f: &LipschitzFunction,
    x0: &DVector<f64>,
    schedules: &[MappingSchedule],
    probes: &[DVector<f64>],
    spec: &QuadratureSpec,
) -> Result<BigPhi> {
    if distinct_families(schedules) < 3 {
        return Err(Error::InvalidArgument(
            "need at least 3 schedules with distinct (shape, q, diam_ratio)".into(),
        ));
    }
    let mut per_schedule = Vec::with_capacity(schedules.len());
    for s in schedules {
        per_schedule.push(phi_subdiff(f, x0, s, probes, spec)?);
    }
    let points: Vec<DVector<f64>> = per_schedule.iter().flat_map(|p| p.set.vertices().to_vec()).collect();
    Ok(BigPhi {
        set: hull_of(&points, DEFAULT_TOLERANCE)?,
        inflated: per_schedule.iter().any(|p| p.inflated),
        per_schedule,
    })
}

/// Largest distance from the anchor reachable by an inner evaluation point
/// of the double average at x.
fn outer_reach(s: &MappingSchedule, x: &DVector<f64>) -> Result<f64> {
    let img = s.image_at(x)?;
    let spread = match img.shape {
        Shape::Ball => img.half_width,
        Shape::Cube => img.half_width * (x.len() as f64).sqrt(),
    };
    Ok((x - s.anchor()).norm() + img.offset.norm() + spread)
}

/// Constancy points whose double-average bodies stay inside the schedule domain.
fn nested_points(s: &MappingSchedule, u: &DVector<f64>, t: f64) -> Result<Vec<(usize, f64, DVector<f64>)>> {
    let mut out = Vec::new();
    for p in ray_points(s, u, t) {
        if outer_reach(s, &p.2)? < s.eps0() {
            out.push(p);
        }
    }
    Ok(out)
}

/// Finite set of symmetric matrices approximating Ψ²f(x₀).
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSetApprox {
    pub dim: usize,
    /// Extrapolated limits from probes with bounded traces.
    pub limits: Vec<DMatrix<f64>>,
    /// (scale, matrix) at the two smallest scales of every unbounded probe.
    pub snapshots: Vec<(f64, DMatrix<f64>)>,
    pub unbounded: bool,
    /// Largest growth exponent over all probes.
    pub growth_exponent: f64,
    pub traces: Vec<ProbeTrace>,
    pub inflated: bool,
}

impl MatrixSetApprox {
    /// Limits when present, otherwise the scale-tagged snapshots.
    pub fn matrices(&self) -> Vec<DMatrix<f64>> {
        if self.limits.is_empty() {
            self.snapshots.iter().map(|s| s.1.clone()).collect()
        } else {
            self.limits.clone()
        }
    }

    /// Snapshots at the smallest recorded scale of each unbounded probe.
    pub fn smallest_scale_snapshots(&self) -> Vec<DMatrix<f64>> {
        let mut out = Vec::new();
        for pair in self.snapshots.chunks(2) {
            if let Some(best) = pair.iter().min_by(|a, b| a.0.total_cmp(&b.0)) {
                out.push(best.1.clone());
            }
        }
        out
    }

    /// Hull of the limits in symmetric-matrix coordinates.
    pub fn limit_hull(&self) -> Result<ConvexSetApprox> {
        let pts: Vec<DVector<f64>> = self.limits.iter().map(sym_coords).collect();
        hull_of(&pts, DEFAULT_TOLERANCE)
    }

    /// Limit matrices that are vertices of the hull in matrix coordinates.
    pub fn vertex_matrices(&self) -> Result<Vec<DMatrix<f64>>> {
        Ok(self
            .limit_hull()?
            .vertices()
            .iter()
            .map(|c| from_sym_coords(self.dim, c))
            .collect())
    }
}

/// Assembles a matrix set from per-probe traces in symmetric coordinates.
pub(crate) fn matrix_set(dim: usize, traces: Vec<ProbeTrace>) -> MatrixSetApprox {
    let mut limits = Vec::new();
    let mut snapshots = Vec::new();
    let mut inflated = false;
    let mut growth = f64::NEG_INFINITY;
    for p in &traces {
        growth = growth.max(p.trace.growth_exponent);
        if p.trace.is_unbounded() {
            for e in p.trace.tail().into_iter().rev() {
                snapshots.push((e.scale, from_sym_coords(dim, &e.estimate)));
            }
        } else {
            limits.extend(p.trace.limits.iter().map(|c| from_sym_coords(dim, c)));
            if !p.trace.converged {
                inflated = true;
                limits.extend(p.trace.tail().into_iter().map(|e| from_sym_coords(dim, &e.estimate)));
            }
        }
    }
    MatrixSetApprox {
        dim,
        unbounded: !snapshots.is_empty(),
        growth_exponent: if growth.is_finite() { growth } else { 0.0 },
        limits,
        snapshots,
        traces,
        inflated,
    }
}

/// Shared driver for second-order traces: `estimate` maps a constancy
/// point to a symmetric matrix.
pub(crate) fn second_order_traces<F>(
    f: &LipschitzFunction,
    x0: &DVector<f64>,
    schedules: &[MappingSchedule],
    probes: &[DVector<f64>],
    estimate: F,
) -> Result<Vec<ProbeTrace>>
where
    F: Fn(&MappingSchedule, &DVector<f64>) -> Result<SmoothedValue<DMatrix<f64>>> + Sync,
{
    let (tol, fl) = (tolerance(f), floor(f));
    let mut traces = Vec::new();
    for s in schedules {
        check_schedule(f, x0, s)?;
        let per: Vec<Option<ProbeTrace>> = for_each_probe(probes, |id, u, t| {
            let mut entries = Vec::new();
            for (i, r, x) in nested_points(s, u, t)? {
                let h = estimate(s, &x)?;
                entries.push(TraceEntry {
                    annulus: i,
                    scale: r,
                    estimate: sym_coords(&h.value),
                    stderr: h.stderr,
                });
            }
            if entries.len() < 2 {
                return Ok(None);
            }
            Ok(Some(ProbeTrace {
                probe_id: id,
                direction: u.clone(),
                position: t,
                trace: extract_limits(entries, tol, fl),
            }))
        })?;
        let base = traces.len();
        traces.extend(per.into_iter().flatten().map(|mut p| {
            p.probe_id += base;
            p
        }));
    }
    if traces.is_empty() {
        return Err(Error::ShallowSchedule {
            depth: schedules.iter().map(|s| s.depth()).max().unwrap_or(0),
            required: MIN_DEPTH + 2,
        });
    }
    Ok(traces)
}

/// Ψ²f(x₀): limits of ψ″ along probe rays over a schedule battery. Only
/// annuli whose nested bodies stay inside the schedule domain are used.
pub fn psi2_subdiff(
    f: &LipschitzFunction,
    x0: &DVector<f64>,
    schedules: &[MappingSchedule],
    probes: &[DVector<f64>],
    spec: &QuadratureSpec,
) -> Result<MatrixSetApprox> {
    let traces = second_order_traces(f, x0, schedules, probes, |s, x| smoothed_hessian(f, x, s, spec))
        .stage("psi2")?;
    Ok(matrix_set(f.dim(), traces))
}

/// First-order limits from ψ′ instead of φ′, on one schedule.
pub fn psi_prime_limits(
    f: &LipschitzFunction,
    x0: &DVector<f64>,
    schedule: &MappingSchedule,
    probes: &[DVector<f64>],
    spec: &QuadratureSpec,
) -> Result<Vec<ProbeTrace>> {
    check_schedule(f, x0, schedule)?;
    let (tol, fl) = (tolerance(f), floor(f));
    let per: Vec<Option<ProbeTrace>> = for_each_probe(probes, |id, u, t| {
        let mut entries = Vec::new();
        for (i, r, x) in nested_points(schedule, u, t)? {
            let g = double_average_gradient(f, &x, schedule, spec)?;
            entries.push(TraceEntry {
                annulus: i,
                scale: r,
                estimate: g.value,
                stderr: g.stderr,
            });
        }
        Ok((!entries.is_empty()).then(|| ProbeTrace {
            probe_id: id,
            direction: u.clone(),
            position: t,
            trace: extract_limits(entries, tol, fl),
        }))
    })?;
    Ok(per.into_iter().flatten().collect())
}
