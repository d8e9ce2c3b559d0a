use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Numerical(#[from] steklov_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration and usage problems, 3 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Numerical(e) if rejects_input(e) => 2,
            CliError::Numerical(_) | CliError::Io { .. } => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
            CliError::Numerical(e) if rejects_input(e) => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Io { .. } => "io",
        }
    }

    /// One-line JSON object for the error stream.
    pub fn to_json(&self) -> String {
        let mut err = json!({
            "kind": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if let CliError::Numerical(e) = self {
            if let steklov_core::Error::Stage { stage, .. } = e {
                err["stage"] = json!(stage);
            }
            err["cause"] = json!(e.root().to_string());
        }
        json!({ "error": err }).to_string()
    }
}

/// Core errors caused by the inputs rather than by the computation.
fn rejects_input(e: &steklov_core::Error) -> bool {
    use steklov_core::Error::*;
    matches!(
        e.root(),
        Syntax { .. }
            | UnknownIdentifier(_)
            | DimensionMismatch { .. }
            | UnknownCorpusEntry(_)
            | InvalidArgument(_)
            | AnchorNotCovered { .. }
            | DiameterNotControlled(_)
            | Quadrature(_)
            | ShallowSchedule { .. }
            | Infeasible { .. }
    )
}
