//! Configuration, scenario execution and file output behind the `pnpch`
//! binary.

pub mod config;
pub mod error;
pub mod output;
pub mod scenario;
pub mod table;

pub use config::{load_config, parse_config, ConfigError, PnpchConfig};
pub use error::{exit, CliError};
pub use output::{read_series, SeriesWriter, Snapshot};
pub use scenario::{run_scenario, validate_scenario, ScenarioOutcome};
pub use table::{run_mms, write_table, MmsOptions};
