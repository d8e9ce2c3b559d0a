//! Built-in test functions with analytic oracles.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::function::{GradStatus, LipschitzConstant, LipschitzFunction};
use crate::error::{Error, Result};
use crate::hull::{hull_of, ConvexSetApprox, DEFAULT_TOLERANCE};

pub type SubdiffOracle = Arc<dyn Fn(&DVector<f64>) -> ConvexSetApprox + Send + Sync>;
pub type HessianOracle = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Exact answers for a corpus entry. Only tests read these.
#[derive(Clone)]
pub struct OracleAnnotation {
    pub analytic_subdiff_at: Option<SubdiffOracle>,
    pub analytic_hessian_at: Option<HessianOracle>,
    pub is_dc: bool,
    pub twice_differentiable: bool,
    pub reference_point: DVector<f64>,
    pub minimizers: Vec<DVector<f64>>,
}

impl std::fmt::Debug for OracleAnnotation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OracleAnnotation")
            .field("is_dc", &self.is_dc)
            .field("twice_differentiable", &self.twice_differentiable)
            .field("reference_point", &self.reference_point)
            .field("minimizers", &self.minimizers)
            .finish()
    }
}

pub const CORPUS_NAMES: [&str; 7] = [
    "abs1d",
    "maxlin2d",
    "quad_posdef",
    "quad_indef",
    "l1norm2d",
    "dc_example",
    "smooth_quartic",
];

pub fn corpus_names() -> &'static [&'static str] {
    &CORPUS_NAMES
}

/// Looks up a corpus entry by name.
pub fn corpus_lookup(name: &str) -> Result<(LipschitzFunction, OracleAnnotation)> {
    let entry = match name {
        "abs1d" => abs1d(),
        "maxlin2d" => maxlin2d(),
        "quad_posdef" => quad_posdef(),
        "quad_indef" => quad_indef(),
        "l1norm2d" => l1norm2d(),
        "dc_example" => dc_example(),
        "smooth_quartic" => smooth_quartic(),
        other => return Err(Error::UnknownCorpusEntry(other.to_string())),
    };
    Ok(entry)
}

fn exact(value: f64) -> LipschitzConstant {
    LipschitzConstant { value, certified: true }
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn hull(points: Vec<DVector<f64>>) -> ConvexSetApprox {
    hull_of(&points, DEFAULT_TOLERANCE).expect("nonempty oracle set")
}

/// Values a coordinate of the subdifferential of |·| can take at t.
fn abs_range(t: f64) -> Vec<f64> {
    if t == 0.0 {
        vec![-1.0, 1.0]
    } else {
        vec![t.signum()]
    }
}

fn abs1d() -> (LipschitzFunction, OracleAnnotation) {
    let f = LipschitzFunction::new(1, "abs1d", exact(1.0), |x| x[0].abs()).with_grad(|x, out| {
        if x[0] == 0.0 {
            return GradStatus::Tie;
        }
        out[0] = x[0].signum();
        GradStatus::Defined
    });
    let oracle = OracleAnnotation {
        analytic_subdiff_at: Some(Arc::new(|x| hull(abs_range(x[0]).into_iter().map(|s| v(&[s])).collect()))),
        analytic_hessian_at: None,
        is_dc: true,
        twice_differentiable: false,
        reference_point: v(&[0.0]),
        minimizers: vec![v(&[0.0])],
    };
    (f, oracle)
}

fn maxlin2d() -> (LipschitzFunction, OracleAnnotation) {
    let f = LipschitzFunction::new(2, "maxlin2d", exact(1.0), |x| x[0].max(x[1])).with_grad(|x, out| {
        if x[0] == x[1] {
            return GradStatus::Tie;
        }
        let first = x[0] > x[1];
        out[0] = if first { 1.0 } else { 0.0 };
        out[1] = if first { 0.0 } else { 1.0 };
        GradStatus::Defined
    });
    let oracle = OracleAnnotation {
        analytic_subdiff_at: Some(Arc::new(|x| {
            let mut pts = Vec::new();
            if x[0] >= x[1] {
                pts.push(v(&[1.0, 0.0]));
            }
            if x[1] >= x[0] {
                pts.push(v(&[0.0, 1.0]));
            }
            hull(pts)
        })),
        analytic_hessian_at: None,
        is_dc: true,
        twice_differentiable: false,
        reference_point: v(&[0.0, 0.0]),
        minimizers: Vec::new(),
    };
    (f, oracle)
}

/// max ‖∇f‖ over the unit circle around `center`, by a fine angle search
/// followed by golden-section refinement of the best bracket. The maximum
/// of a convex gradient norm over the disk is attained on the boundary.
fn max_on_circle(center: &DVector<f64>, grad_norm: impl Fn(&DVector<f64>) -> f64) -> f64 {
    let at = |t: f64| grad_norm(&(center + v(&[t.cos(), t.sin()])));
    let steps = 20_000;
    let h = std::f64::consts::TAU / steps as f64;
    let (mut best_t, mut best) = (0.0, f64::NEG_INFINITY);
    for k in 0..steps {
        let t = k as f64 * h;
        let val = at(t);
        if val > best {
            best = val;
            best_t = t;
        }
    }
    let (mut a, mut b) = (best_t - h, best_t + h);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let (c, d) = (b - r * (b - a), a + r * (b - a));
        if at(c) > at(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.max(at(0.5 * (a + b)))
}

fn quad_posdef() -> (LipschitzFunction, OracleAnnotation) {
    let reference = v(&[1.0, 1.0]);
    let l = max_on_circle(&reference, |x| (x[0] * x[0] + 4.0 * x[1] * x[1]).sqrt());
    let f = LipschitzFunction::new(2, "quad_posdef", exact(l), |x| 0.5 * x[0] * x[0] + x[1] * x[1]).with_grad(|x, out| {
        out[0] = x[0];
        out[1] = 2.0 * x[1];
        GradStatus::Defined
    });
    let q = DMatrix::from_diagonal(&v(&[1.0, 2.0]));
    let oracle = OracleAnnotation {
        analytic_subdiff_at: Some(Arc::new(|x| ConvexSetApprox::singleton(v(&[x[0], 2.0 * x[1]])))),
        analytic_hessian_at: Some(Arc::new(move |_| q.clone())),
        is_dc: true,
        twice_differentiable: true,
        reference_point: reference,
        minimizers: vec![v(&[0.0, 0.0])],
    };
    (f, oracle)
}

fn quad_indef() -> (LipschitzFunction, OracleAnnotation) {
    let f = LipschitzFunction::new(2, "quad_indef", exact(1.0), |x| 0.5 * (x[0] * x[0] - x[1] * x[1])).with_grad(|x, out| {
        out[0] = x[0];
        out[1] = -x[1];
        GradStatus::Defined
    });
    let q = DMatrix::from_diagonal(&v(&[1.0, -1.0]));
    let oracle = OracleAnnotation {
        analytic_subdiff_at: Some(Arc::new(|x| ConvexSetApprox::singleton(v(&[x[0], -x[1]])))),
        analytic_hessian_at: Some(Arc::new(move |_| q.clone())),
        is_dc: true,
        twice_differentiable: true,
        reference_point: v(&[0.0, 0.0]),
        minimizers: Vec::new(),
    };
    (f, oracle)
}

fn separable_abs(name: &str, sign2: f64) -> LipschitzFunction {
    LipschitzFunction::new(2, name, exact(2f64.sqrt()), move |x| x[0].abs() + sign2 * x[1].abs()).with_grad(
        move |x, out| {
            if x[0] == 0.0 || x[1] == 0.0 {
                return GradStatus::Tie;
            }
            out[0] = x[0].signum();
            out[1] = sign2 * x[1].signum();
            GradStatus::Defined
        },
    )
}

fn box_subdiff(sign2: f64) -> SubdiffOracle {
    Arc::new(move |x: &DVector<f64>| {
        let mut pts = Vec::new();
        for a in abs_range(x[0]) {
            for b in abs_range(x[1]) {
                pts.push(v(&[a, sign2 * b]));
            }
        }
        hull(pts)
    })
}

fn l1norm2d() -> (LipschitzFunction, OracleAnnotation) {
    let oracle = OracleAnnotation {
        analytic_subdiff_at: Some(box_subdiff(1.0)),
        analytic_hessian_at: None,
        is_dc: true,
        twice_differentiable: false,
        reference_point: v(&[0.0, 0.0]),
        minimizers: vec![v(&[0.0, 0.0])],
    };
    (separable_abs("l1norm2d", 1.0), oracle)
}

/// |x1| − |x2|: the Clarke subdifferential at the origin is the full square.
fn dc_example() -> (LipschitzFunction, OracleAnnotation) {
    let oracle = OracleAnnotation {
        analytic_subdiff_at: Some(box_subdiff(-1.0)),
        analytic_hessian_at: None,
        is_dc: true,
        twice_differentiable: false,
        reference_point: v(&[0.0, 0.0]),
        minimizers: Vec::new(),
    };
    (separable_abs("dc_example", -1.0), oracle)
}

fn quartic_grad(x: &[f64]) -> [f64; 2] {
    [
        x[0].powi(3) + x[0] - 0.5 * x[1],
        x[1].powi(3) + 2.0 * x[1] - 0.5 * x[0],
    ]
}

/// ¼(x1⁴ + x2⁴) + ½x1² + x2² − ½x1x2, strictly convex with minimum at 0.
fn smooth_quartic() -> (LipschitzFunction, OracleAnnotation) {
    let reference = v(&[0.3, -0.2]);
    let l = max_on_circle(&reference, |x| {
        let g = quartic_grad(x.as_slice());
        g[0].hypot(g[1])
    });
    let f = LipschitzFunction::new(2, "smooth_quartic", exact(l), |x| {
        0.25 * (x[0].powi(4) + x[1].powi(4)) + 0.5 * x[0] * x[0] + x[1] * x[1] - 0.5 * x[0] * x[1]
    })
    .with_grad(|x, out| {
        out.copy_from_slice(&quartic_grad(x));
        GradStatus::Defined
    });
    let oracle = OracleAnnotation {
        analytic_subdiff_at: Some(Arc::new(|x| ConvexSetApprox::singleton(v(&quartic_grad(x.as_slice()))))),
        analytic_hessian_at: Some(Arc::new(|x| {
            DMatrix::from_row_slice(2, 2, &[3.0 * x[0] * x[0] + 1.0, -0.5, -0.5, 3.0 * x[1] * x[1] + 2.0])
        })),
        is_dc: true,
        twice_differentiable: true,
        reference_point: reference,
        minimizers: vec![v(&[0.0, 0.0])],
    };
    (f, oracle)
}
