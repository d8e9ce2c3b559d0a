use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    // expression parsing / corpus
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown corpus entry `{0}`")]
    UnknownCorpusEntry(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // mapping schedules
    #[error("condition 1 violated at annulus {annulus}: image half-width {half_width} does not reach the anchor (needs > {required})")]
    AnchorNotCovered {
        annulus: usize,
        half_width: f64,
        required: f64,
    },
    #[error("condition 2 violated: {0}")]
    DiameterNotControlled(String),
    #[error("point coincides with the schedule anchor")]
    AtAnchor,
    #[error("point at distance {distance} lies outside the outermost annulus (eps0 = {eps0})")]
    OutOfRange { distance: f64, eps0: f64 },
    #[error("equi-Lipschitz ratio is unbounded (growth exponent {growth_exponent})")]
    UnboundedRatio { growth_exponent: f64 },

    // quadrature
    #[error("function evaluation failed at {point:?}: {message}")]
    Evaluation { point: Vec<f64>, message: String },
    #[error("gradient tie at {point:?} could not be resolved by jitter")]
    UnresolvedTie { point: Vec<f64> },
    #[error("finite-difference step {step} underflows at this scale")]
    StepUnderflow { step: f64 },
    #[error("invalid quadrature spec: {0}")]
    Quadrature(String),

    // convex geometry
    #[error("empty point set")]
    EmptySet,
    #[error("nearest-point iteration did not converge after {iterations} iterations (residual {residual})")]
    NonConvergence { iterations: usize, residual: f64 },

    // estimators
    #[error("no finite estimates: {0}")]
    NoFiniteEstimates(String),
    #[error("schedule depth {depth} too shallow (need at least {required})")]
    ShallowSchedule { depth: usize, required: usize },
    #[error("gradient undefined on {fraction:.3} of curve nodes")]
    UndefinedGradient { fraction: f64 },
    #[error("unbounded second-order set: {0}")]
    Unbounded(String),

    // optimality
    #[error("point is infeasible for the constraint set (violation {violation})")]
    Infeasible { violation: f64 },
    #[error("unsupported cone kind: {0}")]
    UnsupportedCone(&'static str),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at_stage(stage))
    }
}
