//! Generalized gradients and second-order sets of Lipschitz functions,
//! computed from Steklov averages over shrinking set-valued mappings.

// `!(a <= b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod corpus;
pub mod directions;
pub mod error;
pub mod hull;
pub mod mapping;
pub mod optimality;
pub mod smoothing;
pub mod subdiff;

pub use calculus::{check_rule, Outcome, Rule, RuleVerdict};
pub use corpus::{corpus_lookup, parse_function, LipschitzConstant, LipschitzFunction, OracleAnnotation};
pub use error::{Error, Result};
pub use hull::{hausdorff, hull_of, ConvexSetApprox};
pub use optimality::{full_report, Constraint, OptimalityReport, ReportConfig, Verdict};
pub use mapping::{make_schedule, validate_equilipschitz, Image, ImageField, MappingSchedule, Shape};
pub use smoothing::{QuadratureMethod, QuadratureSpec, SmoothedValue};
