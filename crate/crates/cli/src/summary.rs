use std::path::Path;

use aen_core::tensor_io::write_atomic;
use aen_core::Result;
use serde::Serialize;

use crate::config::RunConfig;

/// Process exit status of a batch command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Success,
    /// A validation or data error; nothing trustworthy was produced.
    Failed,
    /// Some videos failed under `--keep-going`; the rest were written.
    Partial,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Failed => 1,
            Status::Partial => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub video_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub status: Status,
    pub config: RunConfig,
    pub processed: Vec<String>,
    pub failed: Vec<Failure>,
    pub warnings: Vec<String>,
    /// Error that stopped the whole command, if any.
    pub error: Option<String>,
    pub wall_time_seconds: f64,
}

impl RunSummary {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        write_atomic(path, s.as_bytes())
    }
}
