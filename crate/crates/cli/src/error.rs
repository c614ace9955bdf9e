use thiserror::Error;

use kelly_core::Error as CoreError;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("data: {0}")]
    Data(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("numeric: {0}")]
    Numeric(String),

    /// Several independent failures, e.g. per-P sweep errors or unreadable
    /// report inputs. The exit code is that of the first one.
    #[error("{} failure(s):\n{}", .0.len(), list(.0))]
    Multiple(Vec<CliError>),
}

fn list(errors: &[CliError]) -> String {
    errors
        .iter()
        .map(|e| format!("  - {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Multiple(v) => v.first().map_or(EXIT_DATA, CliError::exit_code),
        }
    }

    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{what}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{what}: {m}")),
            CliError::Infeasible(m) => CliError::Infeasible(format!("{what}: {m}")),
            CliError::Numeric(m) => CliError::Numeric(format!("{what}: {m}")),
            multiple => multiple,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::InvalidConfig(_) => CliError::Usage(msg),
            CoreError::Infeasible { genome, .. } => {
                CliError::Infeasible(format!("{msg}; best genome {genome:?}"))
            }
            CoreError::RatioUndefined => CliError::Numeric(format!(
                "{msg}; every simulated return is identical, which happens when all \
                 held assets have zero volatility"
            )),
            CoreError::Domain(_) | CoreError::DegenerateMoment | CoreError::Initialization(_) => {
                CliError::Numeric(msg)
            }
            CoreError::Degenerate(_)
            | CoreError::Shape { .. }
            | CoreError::Asymmetric { .. }
            | CoreError::NotPositiveSemiDefinite { .. }
            | CoreError::Load { .. }
            | CoreError::Parse { .. }
            | CoreError::Io(_) => CliError::Data(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
