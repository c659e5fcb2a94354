//! The JSON report written for every run.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use conflap::geometry::ClassChecksum;

use crate::config::ExperimentConfig;

/// Exit code for runs that completed.
pub const EXIT_OK: i32 = 0;
/// Exit code for internal, numerical and input errors.
pub const EXIT_ERROR: i32 = 1;
/// Exit code when a mathematical hypothesis of the requested operation fails.
pub const EXIT_HYPOTHESIS: i32 = 2;

#[derive(Debug, Serialize)]
pub struct Toolkit {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Serialize)]
pub struct ErrorInfo {
    pub message: String,
    /// Stable tag of the violated hypothesis, when there is one.
    pub hypothesis: Option<&'static str>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub toolkit: Toolkit,
    pub config: ExperimentConfig,
    pub class: ClassChecksum,
    pub status: &'static str,
    pub exit_code: i32,
    pub result: Option<Value>,
    pub error: Option<ErrorInfo>,
}

impl Report {
    pub fn new(config: ExperimentConfig, class: ClassChecksum, outcome: Result<Value, conflap::Error>) -> Self {
        let toolkit = Toolkit { name: "conflap", version: conflap::VERSION };
        match outcome {
            Ok(result) => Self { toolkit, config, class, status: "ok", exit_code: EXIT_OK, result: Some(result), error: None },
            Err(e) => {
                let hypothesis = e.hypothesis();
                let (status, exit_code) =
                    if hypothesis.is_some() { ("hypothesis_violation", EXIT_HYPOTHESIS) } else { ("error", EXIT_ERROR) };
                Self { toolkit, config, class, status, exit_code, result: None, error: Some(ErrorInfo { message: e.to_string(), hypothesis }) }
            }
        }
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
