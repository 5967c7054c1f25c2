//! Command-line front end: config loading, the run loop and report writers.

pub mod config;
pub mod report;
pub mod runner;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or inconsistent input files.
    #[error("{0}")]
    Config(String),
    /// Failure while running or reporting.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Runtime(_) => "runtime",
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        let msg = self.to_string();
        let problems: Vec<&str> = msg.lines().collect();
        serde_json::json!({ "error": self.kind(), "message": problems.first().copied().unwrap_or(""), "problems": problems })
            .to_string()
    }
}
