//! Command-line orchestration for sigma-core experiments: configuration,
//! run directories, checkpoints and reports.

pub mod checkpoint;
pub mod config;
pub mod experiments;
pub mod output;
pub mod report;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const IDENTITY_VIOLATION: i32 = 2;
    pub const RUNTIME: i32 = 3;
    pub const NO_DATA: i32 = 4;
}

/// Environment variable that overrides the output directory.
pub const OUT_DIR_ENV: &str = "SIGMA_OUT_DIR";
