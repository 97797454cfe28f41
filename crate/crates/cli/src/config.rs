//! Simulation config files.
//!
//! The format is JSON with nested sections. Required keys: `grid` (`n`,
//! `length`), `epsilon`, `t2_start`, `t2_end`, `dt2`, `forcing`. Optional
//! keys and their defaults: `initial` (`{"kind": "zero"}`),
//! `snapshot_every` (`0`), `toggles` (all physics on, `dress_forced_mode`
//! off, `splitting: "linear_outer"`). Unknown keys are rejected.

use std::path::Path;

use nlse_lab::nlse::SimulationConfig;

use crate::error::{CliError, CliResult};

pub fn parse_config_str(text: &str) -> CliResult<SimulationConfig> {
    let config: SimulationConfig =
        serde_json::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))?;
    config.validate()?;
    Ok(config)
}

/// Reads and validates a config file, filling defaults.
pub fn parse_config(path: &Path) -> CliResult<SimulationConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text).map_err(|e| match e {
        CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Canonical text of a config with every default spelled out.
pub fn emit_config(config: &SimulationConfig) -> String {
    serde_json::to_string_pretty(config).expect("config serializes") + "\n"
}
