//! Subcommand implementations and the exit-code mapping.

pub mod bench;
pub mod compress;
pub mod eval;
pub mod inspect;

use std::fmt;
use std::path::Path;

use slimconv::microinfer::InferError;
use slimconv::pipeline::PipelineError;

/// Error carrying its exit code: 1 usage, 2 data, 3 numeric.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

/// Data error with a path for context.
pub fn data_err(context: &str, path: &Path, err: impl fmt::Display) -> CliError {
    CliError::Data(format!("{context} {}: {err}", path.display()))
}

/// Pipeline failures split into numeric (convergence) vs data errors.
pub fn classify_pipeline(err: PipelineError) -> CliError {
    if err.is_numeric() {
        CliError::Numeric(err.to_string())
    } else {
        CliError::Data(err.to_string())
    }
}

fn infer_is_numeric(err: &InferError) -> bool {
    match err {
        InferError::Pipeline(p) => p.is_numeric(),
        InferError::AtLayer { source, .. } => infer_is_numeric(source),
        _ => false,
    }
}

/// Inference failures: bad benchmark arguments are usage errors; numeric
/// failures bubble up from the pipeline layer; the rest is data.
pub fn classify_infer(err: InferError) -> CliError {
    match &err {
        InferError::BadBenchArgs { .. } => CliError::Usage(err.to_string()),
        e if infer_is_numeric(e) => CliError::Numeric(err.to_string()),
        _ => CliError::Data(err.to_string()),
    }
}
