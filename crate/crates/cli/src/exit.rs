//! Exit code contract.
//!
//! | code | meaning                                                  |
//! |------|----------------------------------------------------------|
//! | 0    | success                                                  |
//! | 1    | `--check` assertion failed, or an unclassified failure   |
//! | 2    | usage, configuration or invalid input                    |
//! | 3    | segmentation or inpainting backend failure               |
//! | 4    | target not found while failing closed                    |

use std::fmt;
use std::process::ExitCode;

use distill_core::Error as CoreError;
use distill_harness::HarnessError;

pub const OK: u8 = 0;
pub const FAILURE: u8 = 1;
pub const USAGE: u8 = 2;
pub const BACKEND: u8 = 3;
pub const NO_TARGET: u8 = 4;

/// An error that already knows its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: USAGE,
        message: message.into(),
    }
}

pub fn check_failed(message: impl Into<String>) -> CliError {
    CliError {
        code: FAILURE,
        message: message.into(),
    }
}

fn core_code(e: &CoreError) -> u8 {
    if e.is_backend() {
        return BACKEND;
    }
    match e {
        CoreError::NoTargetFound => NO_TARGET,
        CoreError::Segmentation(inner) => inner.iter().map(|(_, e)| core_code(e)).max().unwrap_or(FAILURE),
        CoreError::UnsupportedTemplate(..)
        | CoreError::EmptyPhrase(..)
        | CoreError::EmptyInstruction
        | CoreError::UnknownDomain(..)
        | CoreError::InvalidLexicon(..)
        | CoreError::DimensionMismatch { .. }
        | CoreError::InvalidRle(..)
        | CoreError::InvalidConfig(..)
        | CoreError::Image(..)
        | CoreError::Json(..) => USAGE,
        _ => FAILURE,
    }
}

fn harness_code(e: &HarnessError) -> u8 {
    match e {
        HarnessError::Pipeline(inner) => core_code(inner),
        HarnessError::PlacementInfeasible { .. }
        | HarnessError::InvalidScene(_)
        | HarnessError::InvalidSweep(_)
        | HarnessError::InvalidBundle { .. }
        | HarnessError::Json(_) => USAGE,
        _ => FAILURE,
    }
}

/// Walks the error chain and returns the first classified code.
pub fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return e.code;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return core_code(e);
        }
        if let Some(e) = cause.downcast_ref::<HarnessError>() {
            return harness_code(e);
        }
    }
    FAILURE
}

pub fn report(result: anyhow::Result<()>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::from(OK),
        Err(e) => {
            let code = classify(&e);
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
