//! JSON documents and CSV traces. Core types carry no serde, so every
//! document is assembled here field by field; key order is sorted, which
//! keeps output byte-stable.

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};
use steklov_core::calculus::RuleVerdict;
use steklov_core::optimality::{ConeApprox, ConeKind, GnvaResult, NecessaryTest, OptimalityReport, SufficientTest};
use steklov_core::subdiff::{
    traces_to_csv, BigPhi, CurveDf, Equivalence, LimitTrace, MatrixSetApprox, PhiSubdiff, ProbeTrace,
};
use steklov_core::{ConvexSetApprox, LipschitzFunction, MappingSchedule, QuadratureMethod, QuadratureSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Finite numbers as numbers, everything else as null.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn vector(v: &DVector<f64>) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

pub fn matrix(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| num(m[(i, j)])).collect()))
            .collect(),
    )
}

fn vectors<'a>(vs: impl IntoIterator<Item = &'a DVector<f64>>) -> Value {
    Value::Array(vs.into_iter().map(vector).collect())
}

pub fn set(s: &ConvexSetApprox) -> Value {
    json!({
        "vertices": vectors(s.vertices()),
        "diameter": num(s.diameter()),
        "centroid": vector(&s.centroid()),
    })
}

pub fn function(f: &LipschitzFunction) -> Value {
    let l = f.lipschitz();
    json!({
        "label": f.label(),
        "dim": f.dim(),
        "lipschitz": num(l.value),
        "lipschitz_certified": l.certified,
    })
}

pub fn quadrature(q: &QuadratureSpec) -> Value {
    match q.method {
        QuadratureMethod::MonteCarlo => json!({
            "method": "monte_carlo",
            "samples": q.samples,
            "seed": q.seed,
            "antithetic": q.antithetic,
        }),
        QuadratureMethod::TensorGrid => json!({
            "method": "tensor_grid",
            "samples": q.samples,
        }),
    }
}

pub fn schedules(s: &[MappingSchedule]) -> Value {
    Value::Array(
        s.iter()
            .map(|s| {
                json!({
                    "id": s.describe(),
                    "shape": s.shape().name(),
                    "eps0": num(s.eps0()),
                    "q": num(s.q()),
                    "depth": s.depth(),
                    "diam_ratio": num(s.diam_ratio()),
                    "lean": s.lean().map(|l| json!({ "direction": vector(&l.direction), "sigma": num(l.sigma) })),
                })
            })
            .collect(),
    )
}

/// Traces flattened for CSV export, with a parallel index for the report.
#[derive(Debug, Default)]
pub struct TraceTable<'a> {
    rows: Vec<(usize, &'a LimitTrace)>,
    index: Vec<Value>,
}

impl<'a> TraceTable<'a> {
    fn push(&mut self, source: &str, schedule: Option<&str>, direction: &DVector<f64>, position: Option<f64>, t: &'a LimitTrace) {
        let id = self.rows.len();
        self.rows.push((id, t));
        self.index.push(json!({
            "probe_id": id,
            "source": source,
            "schedule": schedule,
            "direction": vector(direction),
            "position": position.map(num),
            "converged": t.converged,
            "growth_exponent": num(t.growth_exponent),
            "limits": vectors(&t.limits),
        }));
    }

    pub fn add_probes(&mut self, source: &str, schedule: Option<&str>, traces: &'a [ProbeTrace]) {
        for p in traces {
            self.push(source, schedule, &p.direction, Some(p.position), &p.trace);
        }
    }

    pub fn add_curves(&mut self, df: &'a CurveDf) {
        for c in &df.traces {
            self.push("df", None, &c.curve.direction, None, &c.trace);
        }
    }

    pub fn csv(&self) -> String {
        traces_to_csv(self.rows.iter().copied())
    }

    pub fn index(&self) -> Value {
        Value::Array(self.index.clone())
    }
}

pub fn phi_schedule(p: &PhiSubdiff, schedule: &MappingSchedule) -> Value {
    json!({
        "schedule": schedule.describe(),
        "set": set(&p.set),
        "inflated": p.inflated,
        "converged_probes": p.traces.iter().filter(|t| t.trace.converged).count(),
        "probes": p.traces.len(),
    })
}

pub fn big_phi(phi: &BigPhi, battery: &[MappingSchedule]) -> Value {
    json!({
        "set": set(&phi.set),
        "inflated": phi.inflated,
        "per_schedule": Value::Array(phi.per_schedule.iter().zip(battery).map(|(p, s)| phi_schedule(p, s)).collect()),
    })
}

pub fn df(d: &CurveDf) -> Value {
    json!({
        "set": set(&d.set),
        "inflated": d.inflated,
        "curves": d.traces.len(),
    })
}

pub fn equivalence(e: &Equivalence) -> Value {
    json!({
        "gap": num(e.gap),
        "tolerance": num(e.tolerance),
        "pass": e.pass,
        "df": df(&e.df),
    })
}

/// Hull vertices of the limit matrices; per-probe limits stay in the trace index.
pub fn psi2(m: &MatrixSetApprox) -> Result<Value, steklov_core::Error> {
    let vertices = if m.limits.is_empty() { Vec::new() } else { m.vertex_matrices()? };
    Ok(json!({
        "unbounded": m.unbounded,
        "growth_exponent": num(m.growth_exponent),
        "inflated": m.inflated,
        "limit_count": m.limits.len(),
        "vertices": Value::Array(vertices.iter().map(matrix).collect()),
        "snapshots": Value::Array(
            m.snapshots.iter().map(|(s, a)| json!({ "scale": num(*s), "matrix": matrix(a) })).collect()
        ),
    }))
}

fn cone(k: &ConeApprox) -> Value {
    json!({
        "kind": match k.kind() {
            ConeKind::FullSpace => "full_space",
            ConeKind::Polyhedral => "polyhedral",
            ConeKind::Sampled => "sampled",
        },
        "full_space": k.is_full_space(),
        "zero": k.is_zero(),
        "generators": vectors(k.generators()),
        "normals": vectors(k.normals()),
    })
}

fn necessary(t: &NecessaryTest) -> Value {
    json!({
        "pass": t.pass(),
        "directional": t.directional,
        "directional_margin": num(t.directional_margin),
        "intersection": t.intersection,
        "distance": num(t.distance),
        "tolerance": num(t.tolerance),
    })
}

fn gnva(g: &GnvaResult) -> Value {
    json!({
        "min_test": g.min_test,
        "margin": num(g.margin),
        "lipschitz": num(g.lipschitz),
        "set": g.set.as_ref().map(set),
        "test_directions": g.test_directions.len(),
        "samples": Value::Array(
            g.samples
                .iter()
                .map(|s| json!({
                    "direction": vector(&s.direction),
                    "v": s.v.as_ref().map(vector),
                    "level": num(s.level),
                }))
                .collect()
        ),
    })
}

fn sufficient(s: &SufficientTest) -> Value {
    json!({
        "pass": s.pass,
        "margin": num(s.margin),
        "beta_observed": num(s.beta_observed),
        "beta_floor": num(s.beta_floor),
        "used_snapshots": s.used_snapshots,
    })
}

pub fn optimality(r: &OptimalityReport) -> Result<Value, steklov_core::Error> {
    Ok(json!({
        "verdict": r.verdict.name(),
        "flags": r.flags,
        "lipschitz": num(r.lipschitz),
        "tolerance": num(r.tolerance),
        "cone": cone(&r.cone),
        "df": df(&r.df),
        "necessary": {
            "pass": r.necessary().pass(),
            "unconstrained": necessary(&r.necessary_unconstrained),
            "constrained": r.necessary_constrained.as_ref().map(necessary),
        },
        "gnva": r.gnva.as_ref().map(gnva),
        "suspicious": vectors(&r.suspicious),
        "psi2": r.psi2.as_ref().map(psi2).transpose()?,
        "sufficient": r.sufficient.as_ref().map(sufficient),
    }))
}

pub fn rule(v: &RuleVerdict) -> Value {
    json!({
        "rule": v.rule.name(),
        "outcome": v.outcome.name(),
        "pass": v.pass(),
        "lhs": v.lhs.as_ref().map(set),
        "rhs": v.rhs.as_ref().map(set),
        "inclusion_gap": num(v.inclusion_gap),
        "equality_gap": num(v.equality_gap),
        "tolerance": num(v.tolerance),
        "per_schedule": Value::Array(
            v.per_schedule
                .iter()
                .map(|g| json!({ "schedule": g.schedule, "equality_gap": num(g.equality_gap) }))
                .collect()
        ),
        "note": v.note,
    })
}

/// Pretty JSON with a trailing newline.
pub fn render(doc: &Value) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("json values always serialize");
    s.push('\n');
    s
}
