//! First- and second-order subdifferential estimators with limit extraction.

mod battery;
mod curves;
mod limits;
mod phi;

pub use battery::{
    default_probes, extended_battery, lean_directions, standard_battery, DEFAULT_EPS0, INNER_RATIO, LEAN_SIGMA,
    PROBE_POSITIONS, PROBE_SEED, STANDARD_PARAMS, TIGHT_MARGIN,
};
pub use curves::{
    curve_df, curve_trace, default_curves, equivalence_check, CurveDf, CurveProbe, CurveTrace, Equivalence, ALPHA0,
    ALPHA_COUNT, CURVE_NODES, EQUIVALENCE_DIRECTIONS, EQUIVALENCE_REL_TOL,
};
pub use limits::{
    extract_limits, from_sym_coords, sym_coords, LimitTrace, TraceEntry, CLUSTER_REL_TOL, LIMIT_WINDOW,
    UNBOUNDED_GROWTH,
};
pub use phi::{big_phi, phi_subdiff, psi2_subdiff, psi_prime_limits, BigPhi, MatrixSetApprox, PhiSubdiff, ProbeTrace, MIN_DEPTH};

pub(crate) use phi::{matrix_set, second_order_traces, tolerance};

/// CSV header of exported traces.
pub const CSV_HEADER: &str = "scale,probe_id,component_index,value,stderr";

/// One row per (entry, component) of each trace, in trace order.
pub fn traces_to_csv<'a>(traces: impl IntoIterator<Item = (usize, &'a LimitTrace)>) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (id, trace) in traces {
        for e in &trace.entries {
            for (j, v) in e.estimate.iter().enumerate() {
                out.push_str(&format!("{:e},{id},{j},{:e},{:e}\n", e.scale, v, e.stderr));
            }
        }
    }
    out
}
