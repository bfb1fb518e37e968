//! Experiment harness around the `zsmg` library: config plumbing, run
//! artifacts, the gen/train/eval commands, and the acceptance benchmark
//! suite. Everything the binary does lives here so tests can drive it
//! in-process.

use std::fmt;

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod suite;

/// Errors carrying their process exit code: 2 usage, 3 validation,
/// 4 runtime. Exit 0 is success; clap emits its own code-2 usage errors.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage: {msg}"),
            CliError::Validation(msg) => write!(f, "validation: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Library errors about malformed inputs become validation failures;
/// anything that broke mid-computation is a runtime failure.
impl From<zsmg::Error> for CliError {
    fn from(e: zsmg::Error) -> CliError {
        match &e {
            zsmg::Error::Contract(_)
            | zsmg::Error::InvalidGame { .. }
            | zsmg::Error::UnknownBuiltin(_)
            | zsmg::Error::Metrics(_)
            | zsmg::Error::MalformedLog(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Runtime(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> CliError {
        CliError::Validation(format!("json: {e}"))
    }
}

/// Honors the ZSMG_THREADS worker cap. Call once at startup; later calls
/// are no-ops because the global pool is already built.
pub fn init_thread_pool() -> CliResult<()> {
    if let Ok(raw) = std::env::var("ZSMG_THREADS") {
        let n: usize = raw
            .parse()
            .map_err(|_| CliError::Usage(format!("ZSMG_THREADS must be a positive integer, got {raw:?}")))?;
        if n == 0 {
            return Err(CliError::Usage("ZSMG_THREADS must be at least 1".into()));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}
