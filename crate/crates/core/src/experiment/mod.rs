//! Configuration, single points, sweeps and CSV output.

pub mod config;
pub mod sweep;

pub use config::{known_keys, load_config, parse_config, ConfigError, LinkConfig, McSettings, ScenarioConfig, PAPER_DEFAULTS};
pub use sweep::{
    emit_csv, figure_preset, run_point, run_point_mc, run_sweep, Axis, Figure, ResultRow, ResultTable, RowParams, SweepSpec,
    CSV_COLUMNS, PRESET_POINTS,
};
