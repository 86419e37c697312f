//! Problem files, built-in examples and report emission for the `normform` binary.

pub mod builtins;
pub mod dispatch;
pub mod problem;
pub mod report;

pub use builtins::{builtin, BUILTIN_IDS};
pub use dispatch::{dispatch, CliError, Command, Flags, Format, Outcome};
pub use problem::{load_problem, parse_problem, resolve_problem, Problem, ProblemError, ProblemSpec};
pub use report::Report;
