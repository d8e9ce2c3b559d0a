//! End-to-end optimality pipeline.

use nalgebra::DVector;

use super::cones::{tangent_cone, ConeApprox, Constraint};
use super::first_order::{necessary_first_order, NecessaryTest};
use super::gnva::{build_gnva, gnva_directions, suspicious_directions, GnvaResult};
use super::second_order::{sufficient_second_order, SufficientTest, BETA_FLOOR_REL};
use crate::corpus::LipschitzFunction;
use crate::error::{Result, StageExt};
use crate::smoothing::QuadratureSpec;
use crate::subdiff::{
    curve_df, default_curves, default_probes, psi2_subdiff, standard_battery, tolerance, CurveDf, CurveProbe,
    MatrixSetApprox, DEFAULT_EPS0,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportConfig {
    pub quadrature: QuadratureSpec,
    pub eps0: f64,
    /// First-order tolerance; defaults to 10⁻²·max(1, L).
    pub tolerance: Option<f64>,
    /// Defaults to 10⁻³·L.
    pub beta_floor: Option<f64>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            quadrature: QuadratureSpec::default(),
            eps0: DEFAULT_EPS0,
            tolerance: None,
            beta_floor: None,
        }
    }
}

/// Stage that settled the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// A first-order necessary condition fails: not a local minimum.
    NecessaryFailed,
    /// L·B₁ⁿ(0) ⊄ ∂h(x₀, 0): not a local minimum.
    GnvaFailed,
    /// Strict inclusion everywhere: strict local minimum at first order.
    FirstOrderSufficient,
    /// Second-order condition holds along every suspicious direction.
    SecondOrderSufficient,
    /// Necessary conditions hold but the second-order test fails.
    Inconclusive,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::NecessaryFailed => "necessary_failed",
            Verdict::GnvaFailed => "gnva_failed",
            Verdict::FirstOrderSufficient => "first_order_sufficient",
            Verdict::SecondOrderSufficient => "second_order_sufficient",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    pub point: DVector<f64>,
    pub lipschitz: f64,
    pub tolerance: f64,
    pub cone: ConeApprox,
    pub df: CurveDf,
    /// 0 ∈ Df, with the distance.
    pub necessary_unconstrained: NecessaryTest,
    /// Directional and K⁺ tests; present when Ω is given.
    pub necessary_constrained: Option<NecessaryTest>,
    pub gnva: Option<GnvaResult>,
    pub suspicious: Vec<DVector<f64>>,
    pub psi2: Option<MatrixSetApprox>,
    /// Only computed after the necessary tests pass and G is nonempty.
    pub sufficient: Option<SufficientTest>,
    pub verdict: Verdict,
    pub flags: Vec<String>,
}

impl OptimalityReport {
    /// The necessary test the rest of the pipeline depends on.
    pub fn necessary(&self) -> &NecessaryTest {
        self.necessary_constrained.as_ref().unwrap_or(&self.necessary_unconstrained)
    }
}

fn curves_in_cone(k: &ConeApprox, n: usize) -> Vec<CurveProbe> {
    let probes = default_probes(n);
    if k.is_full_space() {
        return default_curves(&probes);
    }
    let dirs = k.directions(&probes);
    if dirs.is_empty() {
        return default_curves(&probes);
    }
    dirs.into_iter().map(CurveProbe::straight).collect()
}

/// Df → necessary tests → GNVA → suspicious directions → Ψ² → sufficient
/// test, stopping at the first decisive stage.
pub fn full_report(f: &LipschitzFunction, x0: &DVector<f64>, omega: &Constraint, config: &ReportConfig) -> Result<OptimalityReport> {
    let n = f.dim();
    let l = f.lipschitz_const();
    let tol = config.tolerance.unwrap_or_else(|| tolerance(f));
    let cone = tangent_cone(omega, x0).stage("tangent_cone")?;
    let df = curve_df(f, x0, &curves_in_cone(&cone, n), &config.quadrature).stage("curve_df")?;
    let mut flags = Vec::new();
    if df.inflated {
        flags.push("df_inflated".to_string());
    }
    let necessary_unconstrained =
        necessary_first_order(&df.set, &ConeApprox::full_space(n), tol).stage("necessary_first_order")?;
    let necessary_constrained = if omega.is_none() {
        None
    } else {
        Some(necessary_first_order(&df.set, &cone, tol).stage("necessary_first_order")?)
    };
    let mut report = OptimalityReport {
        point: x0.clone(),
        lipschitz: l,
        tolerance: tol,
        cone,
        df,
        necessary_unconstrained,
        necessary_constrained,
        gnva: None,
        suspicious: Vec::new(),
        psi2: None,
        sufficient: None,
        verdict: Verdict::NecessaryFailed,
        flags,
    };
    if !report.necessary().pass() {
        report.flags.push("stopped_at_first_order".into());
        return Ok(report);
    }

    let restrict = (!omega.is_none()).then_some(&report.cone);
    let gnva = build_gnva(f, x0, &gnva_directions(n), restrict, config.quadrature.seed).stage("gnva")?;
    if gnva.set.is_none() {
        report.flags.push("gnva_support_data_only".into());
    }
    let min_test = gnva.min_test;
    if min_test && gnva.margin == 0.0 {
        report.flags.push("gnva_marginal".into());
    }
    report.suspicious = suspicious_directions(&gnva, tol);
    report.gnva = Some(gnva);
    if !min_test {
        report.verdict = Verdict::GnvaFailed;
        return Ok(report);
    }
    if report.suspicious.is_empty() {
        report.flags.push("first_order_decisive".into());
        report.verdict = Verdict::FirstOrderSufficient;
        return Ok(report);
    }

    let battery = standard_battery(x0, config.eps0).stage("battery")?;
    let psi2 = psi2_subdiff(f, x0, &battery, &default_probes(n), &config.quadrature)?;
    if psi2.unbounded {
        report.flags.push("psi2_unbounded".into());
    }
    let beta = config.beta_floor.unwrap_or(BETA_FLOOR_REL * l);
    let sufficient = sufficient_second_order(&psi2, &report.suspicious, beta).stage("sufficient_second_order")?;
    if sufficient.used_snapshots {
        report.flags.push("second_order_from_snapshots".into());
    }
    report.verdict = if sufficient.pass {
        Verdict::SecondOrderSufficient
    } else {
        Verdict::Inconclusive
    };
    report.psi2 = Some(psi2);
    report.sufficient = Some(sufficient);
    Ok(report)
}
