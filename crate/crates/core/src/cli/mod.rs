//! Report assembly, CSV/SVG emission and verification suites behind the
//! command-line tool.

pub mod config;
pub mod emit;
pub mod report;
pub mod verify;

pub use config::AnalysisConfig;
pub use emit::{compare_csv, line_chart, norm_scaling_csv, spectra_csv, sweep_csv, Series};
pub use report::{analyze_bytes, analyze_file, compare_points, AnalysisReport, CompareRow, SweepAxis};
pub use verify::{run_suite, Suite, SuiteReport};

/// Process exit status for success.
pub const EXIT_OK: i32 = 0;
/// A verified property was violated.
pub const EXIT_VIOLATION: i32 = 1;
/// Unreadable, unparsable or inconsistent input.
pub const EXIT_INPUT: i32 = 2;
/// Command-line usage error.
pub const EXIT_USAGE: i32 = 64;
