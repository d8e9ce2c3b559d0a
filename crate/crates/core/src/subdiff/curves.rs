//! Curve-averaged gradients α⁻¹∫₀^α f′(x₀ + τg + o(τ)) dτ and the set Df(x₀).

use nalgebra::DVector;
use rayon::prelude::*;

use super::limits::{extract_limits, LimitTrace, TraceEntry};
use super::phi::{big_phi, tolerance, BigPhi};
use crate::corpus::LipschitzFunction;
use crate::directions::orthogonal_unit;
use crate::error::{Error, Result, StageExt};
use crate::hull::{hausdorff, hull_of, ConvexSetApprox, DEFAULT_TOLERANCE};
use crate::mapping::MappingSchedule;
use crate::smoothing::{GradOracle, QuadratureSpec};

/// Largest curve parameter.
pub const ALPHA0: f64 = 0.05;
/// Number of halvings of α.
pub const ALPHA_COUNT: usize = 8;
/// Midpoint nodes per curve integral.
pub const CURVE_NODES: usize = 256;
/// Fraction of nodes allowed to have no usable gradient.
pub const MAX_UNDEFINED_FRACTION: f64 = 0.01;
/// Directions used by the support-function gap.
pub const EQUIVALENCE_DIRECTIONS: usize = 64;
/// Equivalence tolerance, relative to max(1, L).
pub const EQUIVALENCE_REL_TOL: f64 = 5e-2;

/// r(α) = x₀ + α·g + ½α²·bend.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveProbe {
    pub direction: DVector<f64>,
    pub bend: DVector<f64>,
    /// Bound on ‖o′(α)‖ over [0, α₀].
    pub derivative_bound: f64,
    pub alphas: Vec<f64>,
}

impl CurveProbe {
    pub fn straight(direction: DVector<f64>) -> Self {
        let n = direction.len();
        Self::bent(direction, DVector::zeros(n))
    }

    pub fn bent(direction: DVector<f64>, bend: DVector<f64>) -> Self {
        let direction = &direction / direction.norm();
        let alphas: Vec<f64> = (0..ALPHA_COUNT).map(|k| ALPHA0 * 0.5f64.powi(k as i32)).collect();
        Self {
            derivative_bound: bend.norm() * alphas[0],
            direction,
            bend,
            alphas,
        }
    }

    pub fn point(&self, x0: &DVector<f64>, tau: f64) -> DVector<f64> {
        x0 + &self.direction * tau + &self.bend * (0.5 * tau * tau)
    }

    /// ‖o(α)‖/α along the sampled alphas; decreasing to 0 for a valid curve.
    pub fn perturbation_ratios(&self) -> Vec<f64> {
        self.alphas.iter().map(|a| 0.5 * a * self.bend.norm()).collect()
    }
}

/// Straight and bent curves along each direction; the bend is a unit
/// vector orthogonal to the direction (none in 1D).
pub fn default_curves(directions: &[DVector<f64>]) -> Vec<CurveProbe> {
    let mut out = Vec::new();
    for g in directions {
        out.push(CurveProbe::straight(g.clone()));
        if let Some(w) = orthogonal_unit(&(g / g.norm())) {
            out.push(CurveProbe::bent(g.clone(), w));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveTrace {
    pub curve_id: usize,
    pub curve: CurveProbe,
    pub trace: LimitTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveDf {
    pub set: ConvexSetApprox,
    pub traces: Vec<CurveTrace>,
    pub inflated: bool,
}

/// α⁻¹∫₀^α f′(r(τ)) dτ by the composite midpoint rule.
fn curve_average(f: &LipschitzFunction, oracle: &GradOracle, x0: &DVector<f64>, c: &CurveProbe, alpha: f64) -> Result<DVector<f64>> {
    let n = f.dim();
    let h = alpha / CURVE_NODES as f64;
    let fd_step = 1e-3 * h;
    let mut sum = DVector::zeros(n);
    let mut g = vec![0.0; n];
    let mut undefined = 0usize;
    for j in 0..CURVE_NODES {
        let p = c.point(x0, (j as f64 + 0.5) * h);
        match oracle.grad(p.as_slice(), fd_step, &mut g) {
            Ok(()) => sum += DVector::from_column_slice(&g),
            Err(Error::UnresolvedTie { .. } | Error::Evaluation { .. }) => undefined += 1,
            Err(e) => return Err(e),
        }
    }
    let fraction = undefined as f64 / CURVE_NODES as f64;
    if fraction > MAX_UNDEFINED_FRACTION {
        return Err(Error::UndefinedGradient { fraction });
    }
    Ok(sum / (CURVE_NODES - undefined) as f64)
}

/// Limit trace of the curve average for one curve.
pub fn curve_trace(f: &LipschitzFunction, x0: &DVector<f64>, curve: &CurveProbe, seed: u64) -> Result<LimitTrace> {
    if x0.len() != f.dim() || curve.direction.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: curve.direction.len(),
        });
    }
    let oracle = GradOracle::new(f, seed);
    let mut entries = Vec::with_capacity(curve.alphas.len());
    for (k, &alpha) in curve.alphas.iter().enumerate() {
        entries.push(TraceEntry {
            annulus: k,
            scale: alpha,
            estimate: curve_average(f, &oracle, x0, curve, alpha)?,
            stderr: 0.0,
        });
    }
    Ok(extract_limits(entries, tolerance(f), 1e-6 * f.lipschitz_const().max(1.0)))
}

/// Df(x₀): hull of curve-average limits over the given curves.
pub fn curve_df(f: &LipschitzFunction, x0: &DVector<f64>, curves: &[CurveProbe], spec: &QuadratureSpec) -> Result<CurveDf> {
    if curves.is_empty() {
        return Err(Error::InvalidArgument("no curves".into()));
    }
    let traces: Vec<CurveTrace> = curves
        .par_iter()
        .enumerate()
        .map(|(id, c)| {
            Ok(CurveTrace {
                curve_id: id,
                curve: c.clone(),
                trace: curve_trace(f, x0, c, spec.seed)?,
            })
        })
        .collect::<Result<_>>()?;
    let mut points = Vec::new();
    let mut inflated = false;
    for t in &traces {
        points.extend(t.trace.limits.iter().cloned());
        if !t.trace.converged {
            inflated = true;
            points.extend(t.trace.tail().into_iter().map(|e| e.estimate.clone()));
        }
    }
    Ok(CurveDf {
        set: hull_of(&points, DEFAULT_TOLERANCE)?,
        traces,
        inflated,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equivalence {
    pub gap: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub phi: BigPhi,
    pub df: CurveDf,
}

/// Support-function gap between Φf(x₀) and Df(x₀).
pub fn equivalence_check(
    f: &LipschitzFunction,
    x0: &DVector<f64>,
    schedules: &[MappingSchedule],
    curves: &[CurveProbe],
    probes: &[DVector<f64>],
    spec: &QuadratureSpec,
) -> Result<Equivalence> {
    let phi = big_phi(f, x0, schedules, probes, spec).stage("big_phi")?;
    let df = curve_df(f, x0, curves, spec).stage("curve_df")?;
    let gap = hausdorff(&phi.set, &df.set, EQUIVALENCE_DIRECTIONS)?;
    let tolerance = EQUIVALENCE_REL_TOL * f.lipschitz_const().max(1.0);
    Ok(Equivalence {
        pass: gap <= tolerance,
        gap,
        tolerance,
        phi,
        df,
    })
}
