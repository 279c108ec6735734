//! Oracle, scenario generation and benchmark reports.

pub mod nested;
pub mod oracle;
pub mod report;

pub use nested::{generate_nested_scenarios, NestedLevel};
pub use oracle::{oracle_optimal, value_iteration, OracleSolution};
pub use report::{run_benchmark, BenchOptions, BenchmarkReport, Method, ReportRow};
