//! Run configuration: TOML document, validated before any computation.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use steklov_core::calculus::Rule;
use steklov_core::corpus::{corpus_lookup, parse_function_near};
use steklov_core::mapping::{make_leaned_schedule, Lean};
use steklov_core::optimality::Constraint;
use steklov_core::subdiff::{extended_battery, standard_battery, DEFAULT_EPS0};
use steklov_core::{make_schedule, LipschitzFunction, MappingSchedule, QuadratureSpec, Shape};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub function: FunctionConfig,
    /// Defaults to the corpus reference point; required for expressions.
    pub point: Option<Vec<f64>>,
    #[serde(default)]
    pub constraint: ConstraintConfig,
    #[serde(default)]
    pub schedules: ScheduleConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub tolerance: ToleranceConfig,
    #[serde(default)]
    pub subdiff: SubdiffConfig,
    pub calculus: Option<CalculusConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionConfig {
    pub corpus: Option<String>,
    pub expr: Option<String>,
    pub dim: Option<usize>,
    pub lipschitz_const: Option<f64>,
    #[serde(default)]
    pub estimated: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum ConstraintConfig {
    #[default]
    None,
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// Rows of A x ≤ b.
    Polyhedron {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatteryKind {
    Standard,
    #[default]
    Extended,
    Custom,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Preset battery; `custom` uses `list`. Second-order commands fall back
    /// to `standard` when `extended` is requested.
    #[serde(default)]
    pub battery: BatteryKind,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    #[serde(default)]
    pub list: Vec<ScheduleEntry>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            battery: BatteryKind::default(),
            eps0: DEFAULT_EPS0,
            list: Vec::new(),
        }
    }
}

fn default_eps0() -> f64 {
    DEFAULT_EPS0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub shape: String,
    pub eps0: f64,
    pub q: f64,
    pub depth: usize,
    pub diam_ratio: f64,
    pub lean_direction: Option<Vec<f64>>,
    pub lean_sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    MonteCarlo,
    TensorGrid,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "yes")]
    pub antithetic: bool,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            method: Method::MonteCarlo,
            samples: default_samples(),
            antithetic: true,
        }
    }
}

fn default_samples() -> usize {
    QuadratureSpec::default().samples
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    /// First-order tolerance of the optimality tests.
    pub first_order: Option<f64>,
    pub beta_floor: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubdiffConfig {
    #[serde(default = "one")]
    pub order: u8,
}

impl Default for SubdiffConfig {
    fn default() -> Self {
        Self { order: 1 }
    }
}

fn one() -> u8 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalculusConfig {
    pub rule: String,
    pub second: Option<FunctionConfig>,
    /// Multiplier of the scalar rule.
    pub scalar: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().trim().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

/// Fully built inputs of a run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub seed: u64,
    pub function: LipschitzFunction,
    pub point: DVector<f64>,
    pub constraint: Constraint,
    pub battery: BatteryKind,
    pub eps0: f64,
    pub custom: Vec<MappingSchedule>,
    pub quadrature: QuadratureSpec,
    pub tolerance: ToleranceConfig,
    pub order: u8,
    pub calculus: Option<ResolvedCalculus>,
}

#[derive(Debug, Clone)]
pub struct ResolvedCalculus {
    pub rule: Rule,
    pub second: LipschitzFunction,
    pub scalar: f64,
}

fn build_function(fc: &FunctionConfig, near: Option<&[f64]>) -> Result<(LipschitzFunction, Option<DVector<f64>>), CliError> {
    match (&fc.corpus, &fc.expr) {
        (Some(name), None) => {
            if fc.dim.is_some() || fc.lipschitz_const.is_some() || fc.estimated {
                return Err(CliError::Config(
                    "corpus functions take no dim, lipschitz_const or estimated".into(),
                ));
            }
            let (f, oracle) = corpus_lookup(name).map_err(|e| CliError::Config(e.to_string()))?;
            Ok((f, Some(oracle.reference_point)))
        }
        (None, Some(expr)) => {
            let dim = fc.dim.ok_or_else(|| CliError::Config("dim required for expressions".into()))?;
            if dim == 0 {
                return Err(CliError::Config("dim must be positive".into()));
            }
            if fc.lipschitz_const.is_none() && !fc.estimated {
                return Err(CliError::Config("lipschitz_const required or estimated=true".into()));
            }
            if fc.lipschitz_const.is_some() && fc.estimated {
                return Err(CliError::Config("give lipschitz_const or estimated=true, not both".into()));
            }
            let center = match near {
                Some(p) if p.len() == dim => DVector::from_column_slice(p),
                _ => DVector::zeros(dim),
            };
            let parsed = parse_function_near(expr, dim, fc.lipschitz_const, &center)
                .map_err(|e| CliError::Config(e.to_string()))?;
            Ok((parsed.function, None))
        }
        _ => Err(CliError::Config("function needs exactly one of corpus or expr".into())),
    }
}

fn shape(name: &str) -> Result<Shape, CliError> {
    match name {
        "ball" => Ok(Shape::Ball),
        "cube" => Ok(Shape::Cube),
        other => Err(CliError::Config(format!("unknown shape '{other}'"))),
    }
}

fn finite(v: &[f64], what: &str) -> Result<(), CliError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} must be finite")))
    }
}

fn constraint(c: &ConstraintConfig, dim: usize) -> Result<Constraint, CliError> {
    let check = |len: usize, what: &str| {
        if len == dim {
            Ok(())
        } else {
            Err(CliError::Config(format!("{what} has length {len}, expected {dim}")))
        }
    };
    match c {
        ConstraintConfig::None => Ok(Constraint::None),
        ConstraintConfig::Box { lower, upper } => {
            check(lower.len(), "constraint.lower")?;
            check(upper.len(), "constraint.upper")?;
            if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
                return Err(CliError::Config("constraint box needs lower <= upper".into()));
            }
            Ok(Constraint::Box {
                lower: DVector::from_column_slice(lower),
                upper: DVector::from_column_slice(upper),
            })
        }
        ConstraintConfig::Polyhedron { a, b } => {
            if a.is_empty() || a.len() != b.len() {
                return Err(CliError::Config("constraint needs one b entry per row of a".into()));
            }
            for row in a {
                check(row.len(), "constraint row")?;
                finite(row, "constraint.a")?;
            }
            finite(b, "constraint.b")?;
            Ok(Constraint::Polyhedron {
                a: DMatrix::from_fn(a.len(), dim, |i, j| a[i][j]),
                b: DVector::from_column_slice(b),
            })
        }
    }
}

impl RunConfig {
    /// Validates every field and builds the core inputs. `seed` overrides the
    /// document's seed.
    pub fn resolve(&self, seed: Option<u64>) -> Result<Resolved, CliError> {
        let (function, reference) = build_function(&self.function, self.point.as_deref())?;
        let n = function.dim();
        let point = match (&self.point, reference) {
            (Some(p), _) => {
                if p.len() != n {
                    return Err(CliError::Config(format!("point has length {}, expected {n}", p.len())));
                }
                finite(p, "point")?;
                DVector::from_column_slice(p)
            }
            (None, Some(r)) => r,
            (None, None) => return Err(CliError::Config("point required for expressions".into())),
        };
        let constraint = constraint(&self.constraint, n)?;
        let violation = constraint.violation(&point).map_err(|e| CliError::Config(e.to_string()))?;
        if violation > 1e-12 {
            return Err(CliError::Config(format!("point is infeasible (violation {violation:e})")));
        }

        let seed = seed.or(self.seed).unwrap_or(DEFAULT_SEED);
        let q = &self.quadrature;
        let quadrature = match q.method {
            Method::MonteCarlo => QuadratureSpec::monte_carlo(q.samples, seed).with_antithetic(q.antithetic),
            Method::TensorGrid => QuadratureSpec::tensor_grid(q.samples),
        };
        quadrature.validate(n).map_err(|e| CliError::Config(e.to_string()))?;

        let s = &self.schedules;
        if !(s.eps0 > 0.0 && s.eps0.is_finite()) {
            return Err(CliError::Config("schedules.eps0 must be positive".into()));
        }
        let custom = match s.battery {
            BatteryKind::Custom => {
                if s.list.is_empty() {
                    return Err(CliError::Config("custom battery needs schedules.list entries".into()));
                }
                s.list.iter().map(|e| schedule(e, &point)).collect::<Result<Vec<_>, _>>()?
            }
            _ if !s.list.is_empty() => {
                return Err(CliError::Config("schedules.list needs battery = \"custom\"".into()));
            }
            _ => Vec::new(),
        };

        let t = &self.tolerance;
        for v in [t.first_order, t.beta_floor].into_iter().flatten() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config("tolerances must be positive".into()));
            }
        }
        if !matches!(self.subdiff.order, 1 | 2) {
            return Err(CliError::Config(format!("subdiff.order must be 1 or 2, got {}", self.subdiff.order)));
        }

        let calculus = match &self.calculus {
            None => None,
            Some(c) => {
                let rule = Rule::parse(&c.rule).map_err(|e| CliError::Config(e.to_string()))?;
                let second = match &c.second {
                    Some(fc) => build_function(fc, Some(point.as_slice()))?.0,
                    None if rule == Rule::Scalar1 => function.clone(),
                    None => return Err(CliError::Config(format!("rule {} needs calculus.second", rule.name()))),
                };
                if second.dim() != n {
                    return Err(CliError::Config(format!(
                        "calculus.second has dimension {}, expected {n}",
                        second.dim()
                    )));
                }
                let scalar = c.scalar.unwrap_or(1.0);
                if !scalar.is_finite() {
                    return Err(CliError::Config("calculus.scalar must be finite".into()));
                }
                Some(ResolvedCalculus { rule, second, scalar })
            }
        };

        Ok(Resolved {
            seed,
            function,
            point,
            constraint,
            battery: s.battery,
            eps0: s.eps0,
            custom,
            quadrature,
            tolerance: t.clone(),
            order: self.subdiff.order,
            calculus,
        })
    }
}

fn schedule(e: &ScheduleEntry, anchor: &DVector<f64>) -> Result<MappingSchedule, CliError> {
    let shape = shape(&e.shape)?;
    let built = match (&e.lean_direction, e.lean_sigma) {
        (None, None) => make_schedule(anchor.clone(), shape, e.eps0, e.q, e.depth, e.diam_ratio),
        (Some(d), Some(sigma)) => {
            finite(d, "lean_direction")?;
            let lean = Lean {
                direction: DVector::from_column_slice(d),
                sigma,
            };
            make_leaned_schedule(anchor.clone(), shape, e.eps0, e.q, e.depth, e.diam_ratio, lean)
        }
        _ => return Err(CliError::Config("lean_direction and lean_sigma go together".into())),
    };
    built.map_err(|err| CliError::Config(format!("schedule {}: {err}", e.shape)))
}

impl Resolved {
    /// Battery for first-order estimates.
    pub fn first_order_battery(&self) -> Result<Vec<MappingSchedule>, CliError> {
        self.battery_of(self.battery)
    }

    /// Battery for second-order estimates; leaned schedules are first-order only.
    pub fn second_order_battery(&self) -> Result<Vec<MappingSchedule>, CliError> {
        match self.battery {
            BatteryKind::Extended => self.battery_of(BatteryKind::Standard),
            other => self.battery_of(other),
        }
    }

    fn battery_of(&self, kind: BatteryKind) -> Result<Vec<MappingSchedule>, CliError> {
        let built = match kind {
            BatteryKind::Standard => standard_battery(&self.point, self.eps0),
            BatteryKind::Extended => extended_battery(&self.point, self.eps0),
            BatteryKind::Custom => return Ok(self.custom.clone()),
        };
        built.map_err(|e| CliError::Config(e.to_string()))
    }
}
