//! Sum, product and scalar rules for Φf and Ψ²f.
//!
//! Per-schedule equalities are checked along shared evaluation sequences:
//! every probe ray visits the same constancy points for each function, the
//! difference between the two sides is formed point by point, and its
//! trace is extrapolated to the anchor. Aggregate inclusions compare hulls
//! through their support functions.

use nalgebra::{DMatrix, DVector};

use crate::corpus::LipschitzFunction;
use crate::error::{Error, Result, StageExt};
use crate::hull::{hausdorff, hull_of, inclusion_gap, ConvexSetApprox, DEFAULT_TOLERANCE};
use crate::mapping::MappingSchedule;
use crate::smoothing::{cross_term, smoothed_hessian, QuadratureSpec, SmoothedValue};
use crate::subdiff::{
    extract_limits, matrix_set, phi_subdiff, second_order_traces, MatrixSetApprox, PhiSubdiff, ProbeTrace,
    TraceEntry, CLUSTER_REL_TOL,
};

/// Directions of the support-function comparisons.
pub const RULE_DIRECTIONS: usize = 64;
/// Equality gaps may reach this multiple of the rule tolerance.
pub const EQUALITY_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Sum1,
    Product1,
    Scalar1,
    Sum2,
    Product2,
}

impl Rule {
    pub const ALL: [Rule; 5] = [Rule::Sum1, Rule::Product1, Rule::Scalar1, Rule::Sum2, Rule::Product2];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Sum1 => "sum1",
            Rule::Product1 => "product1",
            Rule::Scalar1 => "scalar1",
            Rule::Sum2 => "sum2",
            Rule::Product2 => "product2",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown rule '{name}'")))
    }

    pub fn is_second_order(self) -> bool {
        matches!(self, Rule::Sum2 | Rule::Product2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    /// A boundedness hypothesis of the rule does not hold.
    NotApplicable,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::NotApplicable => "not_applicable",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleGap {
    pub schedule: String,
    pub equality_gap: f64,
}

/// Sides of a rule as convex sets; second-order sides live in symmetric
/// matrix coordinates (see [`crate::subdiff::sym_coords`]).
#[derive(Debug, Clone, PartialEq)]
pub struct RuleVerdict {
    pub rule: Rule,
    pub outcome: Outcome,
    pub lhs: Option<ConvexSetApprox>,
    pub rhs: Option<ConvexSetApprox>,
    /// max over directions of support(lhs) − support(rhs), clipped at 0.
    pub inclusion_gap: f64,
    /// Largest per-schedule equality gap (Hausdorff for scalar1).
    pub equality_gap: f64,
    pub tolerance: f64,
    pub per_schedule: Vec<ScheduleGap>,
    pub note: Option<String>,
}

impl RuleVerdict {
    pub fn pass(&self) -> bool {
        self.outcome == Outcome::Pass
    }

    fn decide(rule: Rule, lhs: ConvexSetApprox, rhs: ConvexSetApprox, per_schedule: Vec<ScheduleGap>, tol: f64) -> Result<Self> {
        let inclusion = inclusion_gap(&lhs, &rhs, RULE_DIRECTIONS)?;
        let equality = per_schedule.iter().map(|s| s.equality_gap).fold(0.0, f64::max);
        let pass = inclusion <= tol && equality <= EQUALITY_FACTOR * tol;
        Ok(Self {
            rule,
            outcome: if pass { Outcome::Pass } else { Outcome::Fail },
            lhs: Some(lhs),
            rhs: Some(rhs),
            inclusion_gap: inclusion,
            equality_gap: equality,
            tolerance: tol,
            per_schedule,
            note: None,
        })
    }

    fn not_applicable(rule: Rule, tol: f64, note: String) -> Self {
        Self {
            rule,
            outcome: Outcome::NotApplicable,
            lhs: None,
            rhs: None,
            inclusion_gap: 0.0,
            equality_gap: 0.0,
            tolerance: tol,
            per_schedule: Vec::new(),
            note: Some(note),
        }
    }
}

fn rule_tolerance(fs: &[&LipschitzFunction]) -> f64 {
    let l = fs.iter().map(|f| f.lipschitz_const()).fold(1.0, f64::max);
    CLUSTER_REL_TOL * l
}

/// sup |f| over the ball of radius `radius` around x₀, bounded through L.
fn local_bound(f: &LipschitzFunction, x0: &DVector<f64>, radius: f64) -> f64 {
    f.eval_at(x0).abs() + f.lipschitz_const() * radius
}

fn local_product(f1: &LipschitzFunction, f2: &LipschitzFunction, x0: &DVector<f64>, schedules: &[MappingSchedule]) -> Result<LipschitzFunction> {
    let radius = schedules.iter().map(|s| s.eps0()).fold(0.0, f64::max) * 2.0;
    f1.product(f2, (local_bound(f1, x0, radius), local_bound(f2, x0, radius)))
}

/// Limit of Σ cₖ·(trace k) along shared points; the largest limit norm over
/// clusters. Traces are matched by probe id and entries by annulus.
fn combined_gap(parts: &[(f64, &ProbeTrace)], tol: f64) -> f64 {
    let (_, first) = parts[0];
    let mut entries = Vec::new();
    'entry: for e in &first.trace.entries {
        let mut sum = &e.estimate * parts[0].0;
        for (c, t) in &parts[1..] {
            match t.trace.entries.iter().find(|o| o.annulus == e.annulus) {
                Some(o) => sum += &o.estimate * *c,
                None => continue 'entry,
            }
        }
        entries.push(TraceEntry {
            annulus: e.annulus,
            scale: e.scale,
            estimate: sum,
            stderr: 0.0,
        });
    }
    if entries.is_empty() {
        return f64::INFINITY;
    }
    let trace = extract_limits(entries, tol, 1e-6 * tol);
    trace.limits.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Largest combined gap over matching probes of several trace lists.
fn traces_gap(lists: &[(f64, &[ProbeTrace])], tol: f64) -> f64 {
    let mut gap: f64 = 0.0;
    for t in lists[0].1 {
        let mut parts = vec![(lists[0].0, t)];
        for (c, list) in &lists[1..] {
            match list.iter().find(|o| o.probe_id == t.probe_id) {
                Some(o) => parts.push((*c, o)),
                None => return f64::INFINITY,
            }
        }
        gap = gap.max(combined_gap(&parts, tol));
    }
    gap
}

fn union_hull(per: &[PhiSubdiff]) -> Result<ConvexSetApprox> {
    let pts: Vec<DVector<f64>> = per.iter().flat_map(|p| p.set.vertices().to_vec()).collect();
    hull_of(&pts, DEFAULT_TOLERANCE)
}

fn phi_all(f: &LipschitzFunction, x0: &DVector<f64>, schedules: &[MappingSchedule], probes: &[DVector<f64>], spec: &QuadratureSpec) -> Result<Vec<PhiSubdiff>> {
    if schedules.is_empty() {
        return Err(Error::InvalidArgument("no schedules".into()));
    }
    schedules.iter().map(|s| phi_subdiff(f, x0, s, probes, spec)).collect()
}

/// Shared first-order check: lhs = f, rhs = c₁·f₁ + c₂·f₂ pointwise.
#[allow(clippy::too_many_arguments)]
fn first_order_rule(
    rule: Rule,
    f: &LipschitzFunction,
    parts: [(f64, &LipschitzFunction); 2],
    x0: &DVector<f64>,
    schedules: &[MappingSchedule],
    probes: &[DVector<f64>],
    spec: &QuadratureSpec,
) -> Result<RuleVerdict> {
    let tol = rule_tolerance(&[f, parts[0].1, parts[1].1]);
    let lhs = phi_all(f, x0, schedules, probes, spec).stage("lhs")?;
    let p1 = phi_all(parts[0].1, x0, schedules, probes, spec).stage("f1")?;
    let p2 = phi_all(parts[1].1, x0, schedules, probes, spec).stage("f2")?;
    let mut per_schedule = Vec::with_capacity(schedules.len());
    for (k, s) in schedules.iter().enumerate() {
        let gap = traces_gap(
            &[(1.0, &lhs[k].traces), (-parts[0].0, &p1[k].traces), (-parts[1].0, &p2[k].traces)],
            tol,
        );
        per_schedule.push(ScheduleGap {
            schedule: s.describe(),
            equality_gap: gap,
        });
    }
    let rhs = union_hull(&p1)?
        .scaled(parts[0].0)
        .minkowski_sum(&union_hull(&p2)?.scaled(parts[1].0))?;
    RuleVerdict::decide(rule, union_hull(&lhs)?, rhs, per_schedule, tol)
}

/// Φ(f₁ + f₂) ⊆ Φf₁ + Φf₂, with ∂φ_D(f₁ + f₂) = ∂φ_{1D} + ∂φ_{2D} along shared sequences.
pub fn check_sum_first(
    f1: &LipschitzFunction,
    f2: &LipschitzFunction,
    x0: &DVector<f64>,
    schedules: &[MappingSchedule],
    probes: &[DVector<f64>],
    spec: &QuadratureSpec,
) -> Result<RuleVerdict> {
    let f = f1.sum(f2)?;
    first_order_rule(Rule::Sum1, &f, [(1.0, f1), (1.0, f2)], x0, schedules, probes, spec)
}

/// Φ(f₁f₂) ⊆ f₂(x₀)·Φf₁ + f₁(x₀)·Φf₂.
pub fn check_product_first(
    f1: &LipschitzFunction,
    f2: &LipschitzFunction,
    x0: &DVector<f64>,
    schedules: &[MappingSchedule],
    probes: &[DVector<f64>],
    spec: &QuadratureSpec,
) -> Result<RuleVerdict> {
    let f = local_product(f1, f2, x0, schedules)?;
    let (c1, c2) = (f1.eval_at(x0), f2.eval_at(x0));
    first_order_rule(Rule::Product1, &f, [(c2, f1), (c1, f2)], x0, schedules, probes, spec)
}

/// Φ(k·f₁) = k·Φf₁.
pub fn check_scalar_first(
    f1: &LipschitzFunction,
    k: f64,
    x0: &DVector<f64>,
    schedules: &[MappingSchedule],
    probes: &[DVector<f64>],
    spec: &QuadratureSpec,
) -> Result<RuleVerdict> {
    if !k.is_finite() {
        return Err(Error::InvalidArgument("scalar must be finite".into()));
    }
    let f = f1.scaled(k);
    let tol = rule_tolerance(&[f1, &f]);
    let lhs = phi_all(&f, x0, schedules, probes, spec).stage("lhs")?;
    let base = phi_all(f1, x0, schedules, probes, spec).stage("f1")?;
    let mut per_schedule = Vec::with_capacity(schedules.len());
    for (s, (a, b)) in schedules.iter().zip(lhs.iter().zip(&base)) {
        per_schedule.push(ScheduleGap {
            schedule: s.describe(),
            equality_gap: hausdorff(&a.set, &b.set.scaled(k), RULE_DIRECTIONS)?,
        });
    }
    let (l, r) = (union_hull(&lhs)?, union_hull(&base)?.scaled(k));
    let mut v = RuleVerdict::decide(Rule::Scalar1, l, r, per_schedule, tol)?;
    let whole = hausdorff(v.lhs.as_ref().unwrap(), v.rhs.as_ref().unwrap(), RULE_DIRECTIONS)?;
    v.equality_gap = v.equality_gap.max(whole);
    if v.equality_gap > EQUALITY_FACTOR * tol {
        v.outcome = Outcome::Fail;
    }
    Ok(v)
}

type MatrixEstimate<'a> = Box<dyn Fn(&MappingSchedule, &DVector<f64>) -> Result<SmoothedValue<DMatrix<f64>>> + Sync + 'a>;

fn hessian_of<'a>(f: &'a LipschitzFunction, spec: &'a QuadratureSpec) -> MatrixEstimate<'a> {
    Box::new(move |s, x| smoothed_hessian(f, x, s, spec))
}

/// Per-schedule second-order traces of every estimator, in schedule order.
fn second_order_all(
    f: &LipschitzFunction,
    x0: &DVector<f64>,
    schedules: &[MappingSchedule],
    probes: &[DVector<f64>],
    estimate: &MatrixEstimate<'_>,
) -> Result<Vec<Vec<ProbeTrace>>> {
    schedules
        .iter()
        .map(|s| second_order_traces(f, x0, std::slice::from_ref(s), probes, |s, x| estimate(s, x)))
        .collect()
}

fn matrix_hull(set: &MatrixSetApprox) -> Result<ConvexSetApprox> {
    set.limit_hull()
}

fn unbounded_note(names: &[(&str, &MatrixSetApprox)]) -> Option<String> {
    let bad: Vec<String> = names
        .iter()
        .filter(|(_, s)| s.unbounded)
        .map(|(n, s)| format!("{n} has unbounded second-order set (growth {:.2})", s.growth_exponent))
        .collect();
    (!bad.is_empty()).then(|| bad.join("; "))
}

/// Shared second-order check: lhs = f, rhs = Σ cₖ·(estimator k).
#[allow(clippy::too_many_arguments)]
fn second_order_rule(
    rule: Rule,
    f: &LipschitzFunction,
    f1: &LipschitzFunction,
    f2: &LipschitzFunction,
    x0: &DVector<f64>,
    schedules: &[MappingSchedule],
    probes: &[DVector<f64>],
    spec: &QuadratureSpec,
) -> Result<RuleVerdict> {
    let tol = rule_tolerance(&[f, f1, f2]);
    let n = f.dim();
    let t1 = second_order_all(f1, x0, schedules, probes, &hessian_of(f1, spec)).stage("f1")?;
    let t2 = second_order_all(f2, x0, schedules, probes, &hessian_of(f2, spec)).stage("f2")?;
    let s1 = matrix_set(n, t1.concat());
    let s2 = matrix_set(n, t2.concat());
    if let Some(note) = unbounded_note(&[("f1", &s1), ("f2", &s2)]) {
        return Ok(RuleVerdict::not_applicable(rule, tol, note));
    }
    let tl = second_order_all(f, x0, schedules, probes, &hessian_of(f, spec)).stage("lhs")?;
    let (c1, c2, cross) = match rule {
        Rule::Sum2 => (1.0, 1.0, None),
        _ => {
            let cross: MatrixEstimate<'_> = Box::new(|s, x| {
                let c = cross_term(f1, f2, x, s, spec)?;
                Ok(SmoothedValue {
                    value: &c.value + c.value.transpose(),
                    stderr: 2.0 * c.stderr,
                    n_evals: c.n_evals,
                })
            });
            let tc = second_order_all(f, x0, schedules, probes, &cross).stage("cross_term")?;
            (f2.eval_at(x0), f1.eval_at(x0), Some(tc))
        }
    };
    let mut per_schedule = Vec::with_capacity(schedules.len());
    for (k, s) in schedules.iter().enumerate() {
        let mut lists: Vec<(f64, &[ProbeTrace])> = vec![(1.0, &tl[k]), (-c1, &t1[k]), (-c2, &t2[k])];
        if let Some(tc) = &cross {
            lists.push((-1.0, &tc[k]));
        }
        per_schedule.push(ScheduleGap {
            schedule: s.describe(),
            equality_gap: traces_gap(&lists, tol),
        });
    }
    let lhs_set = matrix_set(n, tl.concat());
    if lhs_set.unbounded {
        let mut v = RuleVerdict::not_applicable(rule, tol, format!("lhs has unbounded second-order set (growth {:.2})", lhs_set.growth_exponent));
        v.per_schedule = per_schedule;
        return Ok(v);
    }
    let mut rhs = matrix_hull(&s1)?.scaled(c1).minkowski_sum(&matrix_hull(&s2)?.scaled(c2))?;
    if let Some(tc) = cross {
        rhs = rhs.minkowski_sum(&matrix_hull(&matrix_set(n, tc.concat()))?)?;
    }
    RuleVerdict::decide(rule, matrix_hull(&lhs_set)?, rhs, per_schedule, tol)
}

/// Ψ²(f₁ + f₂) ⊆ Ψ²f₁ + Ψ²f₂; not applicable when either input set is unbounded.
pub fn check_sum_second(
    f1: &LipschitzFunction,
    f2: &LipschitzFunction,
    x0: &DVector<f64>,
    schedules: &[MappingSchedule],
    probes: &[DVector<f64>],
    spec: &QuadratureSpec,
) -> Result<RuleVerdict> {
    let f = f1.sum(f2)?;
    second_order_rule(Rule::Sum2, &f, f1, f2, x0, schedules, probes, spec)
}

/// Ψ²(f₁f₂) ⊆ f₂(x₀)·Ψ²f₁ + f₁(x₀)·Ψ²f₂ + (Ψ²₁₂ + Ψ²₂₁), with the cross
/// terms from doubly averaged outer products f₁′f₂′ᵀ.
pub fn check_product_second(
    f1: &LipschitzFunction,
    f2: &LipschitzFunction,
    x0: &DVector<f64>,
    schedules: &[MappingSchedule],
    probes: &[DVector<f64>],
    spec: &QuadratureSpec,
) -> Result<RuleVerdict> {
    let f = local_product(f1, f2, x0, schedules)?;
    second_order_rule(Rule::Product2, &f, f1, f2, x0, schedules, probes, spec)
}

/// Runs one rule; `k` is only used by scalar1.
#[allow(clippy::too_many_arguments)]
pub fn check_rule(
    rule: Rule,
    f1: &LipschitzFunction,
    f2: &LipschitzFunction,
    k: f64,
    x0: &DVector<f64>,
    schedules: &[MappingSchedule],
    probes: &[DVector<f64>],
    spec: &QuadratureSpec,
) -> Result<RuleVerdict> {
    match rule {
        Rule::Sum1 => check_sum_first(f1, f2, x0, schedules, probes, spec),
        Rule::Product1 => check_product_first(f1, f2, x0, schedules, probes, spec),
        Rule::Scalar1 => check_scalar_first(f1, k, x0, schedules, probes, spec),
        Rule::Sum2 => check_sum_second(f1, f2, x0, schedules, probes, spec),
        Rule::Product2 => check_product_second(f1, f2, x0, schedules, probes, spec),
    }
    .stage(rule.name())
}

/// Relative asymmetry ‖A − Aᵀ‖ / max(1, ‖A‖).
pub fn symmetric_defect(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).norm() / a.norm().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{corpus_lookup, parse_function};
    use crate::subdiff::{default_probes, standard_battery, sym_coords, DEFAULT_EPS0};

    fn spec() -> QuadratureSpec {
        QuadratureSpec::monte_carlo(2_000, 3)
    }

    fn battery(x0: &DVector<f64>) -> Vec<MappingSchedule> {
        standard_battery(x0, DEFAULT_EPS0).unwrap()[..3].to_vec()
    }

    fn parse(src: &str, n: usize, l: f64) -> LipschitzFunction {
        parse_function(src, n, Some(l)).unwrap().function
    }

    #[test]
    fn rule_names_round_trip() {
        for r in Rule::ALL {
            assert_eq!(Rule::parse(r.name()).unwrap(), r);
        }
        assert!(Rule::parse("chain").is_err());
    }

    #[test]
    fn sum_of_abs_and_identity() {
        let (abs, _) = corpus_lookup("abs1d").unwrap();
        let id = parse("x1", 1, 1.0);
        let x0 = DVector::zeros(1);
        let v = check_sum_first(&abs, &id, &x0, &battery(&x0), &default_probes(1), &spec()).unwrap();
        assert!(v.pass(), "{v:?}");
        assert!(v.equality_gap < 1e-9);
    }

    #[test]
    fn cancelling_sum_is_strict_inclusion() {
        let (abs, _) = corpus_lookup("abs1d").unwrap();
        let x0 = DVector::zeros(1);
        let v = check_sum_first(&abs, &abs.negated(), &x0, &battery(&x0), &default_probes(1), &spec()).unwrap();
        assert!(v.pass());
        assert!(v.lhs.as_ref().unwrap().diameter() < 1e-9);
        assert!(v.rhs.as_ref().unwrap().diameter() > 0.5);
    }

    #[test]
    fn product_of_abs_is_smooth() {
        let (abs, _) = corpus_lookup("abs1d").unwrap();
        let x0 = DVector::zeros(1);
        let v = check_product_first(&abs, &abs, &x0, &battery(&x0), &default_probes(1), &spec()).unwrap();
        assert!(v.pass(), "{v:?}");
    }

    #[test]
    fn scalar_rule() {
        let (abs, _) = corpus_lookup("abs1d").unwrap();
        let x0 = DVector::zeros(1);
        for k in [0.0, -1.0, 3.0] {
            let v = check_scalar_first(&abs, k, &x0, &battery(&x0), &default_probes(1), &spec()).unwrap();
            assert!(v.pass(), "k={k}: {v:?}");
        }
    }

    #[test]
    fn second_order_sum_of_quadratics() {
        let f1 = parse("0.5*(x1*x1 + x2*x2)", 2, 2.0);
        let x0 = DVector::from_column_slice(&[0.2, -0.1]);
        let v = check_sum_second(&f1, &f1, &x0, &battery(&x0), &default_probes(2), &spec()).unwrap();
        assert!(v.pass(), "{v:?}");
        let lhs = v.lhs.unwrap();
        let expected = sym_coords(&(DMatrix::identity(2, 2) * 2.0));
        for p in lhs.vertices() {
            assert!((p - &expected).norm() < 1e-3);
        }
    }

    #[test]
    fn product_second_cross_terms() {
        let f1 = parse("x1", 2, 1.0);
        let f2 = parse("x2", 2, 1.0);
        let x0 = DVector::zeros(2);
        let v = check_product_second(&f1, &f2, &x0, &battery(&x0), &default_probes(2), &spec()).unwrap();
        assert!(v.pass(), "{v:?}");
        let expected = sym_coords(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        for p in v.rhs.unwrap().vertices() {
            assert!((p - &expected).norm() < 1e-6);
        }
    }

    #[test]
    fn product_second_of_kinks_is_not_applicable() {
        let (abs, _) = corpus_lookup("abs1d").unwrap();
        let x0 = DVector::zeros(1);
        let v = check_product_second(&abs, &abs, &x0, &battery(&x0), &default_probes(1), &spec()).unwrap();
        assert_eq!(v.outcome, Outcome::NotApplicable);
        assert!(v.note.unwrap().contains("unbounded"));
    }
}
