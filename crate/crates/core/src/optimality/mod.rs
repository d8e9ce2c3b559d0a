//! Optimality conditions: cones, first-order tests, GNVA, second-order test.

mod cones;
mod first_order;
mod gnva;
mod report;
mod second_order;

pub use cones::{polar_cone, tangent_cone, ConeApprox, ConeKind, Constraint, ACTIVE_TOL, ENUMERATION_MAX_DIM};
pub use first_order::{hadamard_lower, necessary_first_order, NecessaryTest, HADAMARD_JITTERS, NECESSARY_DIRECTIONS};
pub use gnva::{build_gnva, gnva_directions, suspicious_directions, DirectionSample, GnvaResult, MARGIN_SNAP};
pub use report::{full_report, OptimalityReport, ReportConfig, Verdict};
pub use second_order::{sufficient_second_order, SufficientTest, BETA_FLOOR_REL};
