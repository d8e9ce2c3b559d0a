use serde_json::{json, Value};
use steklov_core::calculus::check_rule;
use steklov_core::corpus::{corpus_lookup, corpus_names};
use steklov_core::directions::sphere_net;
use steklov_core::optimality::{full_report, ReportConfig};
use steklov_core::subdiff::{default_curves, default_probes, equivalence_check, psi2_subdiff, EQUIVALENCE_DIRECTIONS};

use crate::config::Resolved;
use crate::error::CliError;
use crate::report::{self, TraceTable, SCHEMA_VERSION};

/// Seed of the curve direction net used by the equivalence check.
pub const CURVE_SEED: u64 = 0xc0;

/// Rendered outputs of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub json: Value,
    /// Trace CSV, for commands that produce traces.
    pub csv: Option<String>,
}

fn header(command: &str, r: &Resolved) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "seed": r.seed,
        "function": report::function(&r.function),
        "point": report::vector(&r.point),
        "quadrature": report::quadrature(&r.quadrature),
    })
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

pub fn subdiff(r: &Resolved) -> Result<Output, CliError> {
    let f = &r.function;
    let probes = default_probes(f.dim());
    if r.order == 2 {
        let battery = r.second_order_battery()?;
        let m = psi2_subdiff(f, &r.point, &battery, &probes, &r.quadrature)?;
        let mut table = TraceTable::default();
        table.add_probes("psi2", None, &m.traces);
        let body = json!({
            "order": 2,
            "psi2": report::psi2(&m)?,
            "schedules": report::schedules(&battery),
            "traces": table.index(),
        });
        return Ok(Output {
            json: merge(header("subdiff", r), body),
            csv: Some(table.csv()),
        });
    }
    let battery = r.first_order_battery()?;
    let curves = default_curves(&sphere_net(f.dim(), EQUIVALENCE_DIRECTIONS, CURVE_SEED));
    let eq = equivalence_check(f, &r.point, &battery, &curves, &probes, &r.quadrature)?;
    let ids: Vec<String> = battery.iter().map(|s| s.describe()).collect();
    let mut table = TraceTable::default();
    for (p, id) in eq.phi.per_schedule.iter().zip(&ids) {
        table.add_probes("phi", Some(id), &p.traces);
    }
    table.add_curves(&eq.df);
    let body = json!({
        "order": 1,
        "phi": report::big_phi(&eq.phi, &battery),
        "equivalence": report::equivalence(&eq),
        "schedules": report::schedules(&battery),
        "traces": table.index(),
    });
    Ok(Output {
        json: merge(header("subdiff", r), body),
        csv: Some(table.csv()),
    })
}

pub fn check(r: &Resolved) -> Result<Output, CliError> {
    let config = ReportConfig {
        quadrature: r.quadrature,
        eps0: r.eps0,
        tolerance: r.tolerance.first_order,
        beta_floor: r.tolerance.beta_floor,
    };
    let rep = full_report(&r.function, &r.point, &r.constraint, &config)?;
    let mut table = TraceTable::default();
    table.add_curves(&rep.df);
    if let Some(m) = &rep.psi2 {
        table.add_probes("psi2", None, &m.traces);
    }
    let body = json!({
        "report": report::optimality(&rep)?,
        "traces": table.index(),
    });
    Ok(Output {
        json: merge(header("check", r), body),
        csv: Some(table.csv()),
    })
}

pub fn calculus(r: &Resolved) -> Result<Output, CliError> {
    let c = r
        .calculus
        .as_ref()
        .ok_or_else(|| CliError::Config("calculus section required".into()))?;
    let battery = r.second_order_battery()?;
    let probes = default_probes(r.function.dim());
    let v = check_rule(c.rule, &r.function, &c.second, c.scalar, &r.point, &battery, &probes, &r.quadrature)?;
    let body = json!({
        "second": report::function(&c.second),
        "scalar": report::num(c.scalar),
        "schedules": report::schedules(&battery),
        "verdict": report::rule(&v),
    });
    Ok(Output {
        json: merge(header("calculus", r), body),
        csv: None,
    })
}

pub fn corpus_list() -> Result<Output, CliError> {
    let mut entries = Vec::new();
    let mut csv = String::from("name,dim,lipschitz_const,is_dc,twice_differentiable\n");
    for name in corpus_names() {
        let (f, o) = corpus_lookup(name)?;
        csv.push_str(&format!(
            "{name},{},{:e},{},{}\n",
            f.dim(),
            f.lipschitz_const(),
            o.is_dc,
            o.twice_differentiable
        ));
        entries.push(json!({
            "name": name,
            "expression": f.label(),
            "dim": f.dim(),
            "lipschitz_const": report::num(f.lipschitz_const()),
            "is_dc": o.is_dc,
            "twice_differentiable": o.twice_differentiable,
            "reference_point": report::vector(&o.reference_point),
        }));
    }
    Ok(Output {
        json: json!({ "schema_version": SCHEMA_VERSION, "command": "corpus-list", "entries": entries }),
        csv: Some(csv),
    })
}

pub fn validate(r: &Resolved) -> Result<Output, CliError> {
    let first = r.first_order_battery()?;
    let body = json!({
        "valid": true,
        "constraint": !r.constraint.is_none(),
        "order": r.order,
        "schedules": report::schedules(&first),
        "calculus": r.calculus.as_ref().map(|c| json!({
            "rule": c.rule.name(),
            "second": report::function(&c.second),
            "scalar": report::num(c.scalar),
        })),
    });
    Ok(Output {
        json: merge(header("validate-config", r), body),
        csv: None,
    })
}
