//! Command-line front end for the `erlab` wave-packet library.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, CommandKind, ConfigError, Format, RunConfig};
pub use output::emit_plotdata;
pub use run::{run, RunError, RunSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_POINT_FAILURES: i32 = 2;
pub const EXIT_IO: i32 = 3;
