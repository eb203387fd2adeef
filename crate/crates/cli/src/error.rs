//! Failures mapped to process exit codes.

use std::fmt;

use pppnav::field::FieldError;
use pppnav::planner::{PlanError, QpError, SearchError};
use pppnav::ppp::PppError;
use pppnav::purr::PurrError;
use pppnav::render::RenderError;
use pppnav::validate::ValidateError;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    /// Short machine-readable tag, e.g. `no_path`.
    pub reason: &'static str,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            reason: "config",
            message: message.into(),
        }
    }

    pub fn io(context: impl fmt::Display, e: impl fmt::Display) -> Self {
        Self {
            code: EXIT_IO,
            reason: "io",
            message: format!("{context}: {e}"),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "error": self.reason,
            "exit_code": self.code,
            "message": self.message,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.message, self.reason)
    }
}

fn io_or_config(is_io: bool, message: String) -> CliError {
    if is_io {
        CliError {
            code: EXIT_IO,
            reason: "io",
            message,
        }
    } else {
        CliError::config(message)
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        io_or_config(matches!(e, FieldError::Io(_)), e.to_string())
    }
}

impl From<PppError> for CliError {
    fn from(e: PppError) -> Self {
        match e {
            PppError::Field(f) => f.into(),
            e => io_or_config(matches!(e, PppError::Io(_)), e.to_string()),
        }
    }
}

impl From<PurrError> for CliError {
    fn from(e: PurrError) -> Self {
        match e {
            PurrError::Field(f) => f.into(),
            PurrError::Ppp(p) => p.into(),
            e => io_or_config(matches!(e, PurrError::Io(_)), e.to_string()),
        }
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::Field(f) => f.into(),
            e => CliError::config(e.to_string()),
        }
    }
}

impl From<ValidateError> for CliError {
    fn from(e: ValidateError) -> Self {
        match e {
            ValidateError::Field(f) => f.into(),
            ValidateError::Ppp(p) => p.into(),
            ValidateError::NoFreeCells => CliError {
                code: EXIT_INFEASIBLE,
                reason: "no_free_cells",
                message: e.to_string(),
            },
            e => io_or_config(matches!(e, ValidateError::Io(_)), e.to_string()),
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        let reason = match &e {
            PlanError::Params(_) => return CliError::config(e.to_string()),
            PlanError::Search(s) => match s {
                SearchError::StartOutside(_) => "start_outside",
                SearchError::GoalOutside(_) => "goal_outside",
                SearchError::StartUnsafe(_) => "start_unsafe",
                SearchError::GoalUnsafe(_) => "goal_unsafe",
                SearchError::NoPath { .. } => "no_path",
            },
            PlanError::Qp {
                source: QpError::Infeasible { .. },
                ..
            } => "qp_infeasible",
            PlanError::Qp { .. } | PlanError::Eval(_) => "qp_failed",
        };
        CliError {
            code: EXIT_INFEASIBLE,
            reason,
            message: e.to_string(),
        }
    }
}
