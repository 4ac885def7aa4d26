//! Configuration, presets and scenario orchestration behind the `timolab` binary.

pub mod config;
pub mod presets;
pub mod scenario;

pub use config::{ConfigError, RunConfig};
pub use presets::list_presets;
pub use scenario::{run_scenario, simulate, write_error_report, Outcome, ScenarioResult, Status};
