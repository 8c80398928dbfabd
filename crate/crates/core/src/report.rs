//! Versioned JSON report envelope shared by the command-line tools.

use serde::Serialize;

use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

/// Envelope wrapping every machine-readable report.
#[derive(Debug, Clone, Serialize)]
pub struct Report<T: Serialize> {
    pub schema_version: u32,
    pub command: String,
    pub seed: Option<u64>,
    pub payload: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &str, seed: Option<u64>, payload: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            seed,
            payload,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
