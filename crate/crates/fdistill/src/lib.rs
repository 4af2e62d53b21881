//! Experiment harness for `fdistill-core`: model files, config files,
//! presets and result tables.
//!
//! The `fdistill` binary exposes each [`config::Preset`] as a verb; the
//! same runs are available here through [`presets::run_experiment`].

pub mod config;
mod error;
pub mod history;
pub mod model_io;
pub mod presets;
pub mod results;

pub use config::{parse_config, parse_config_str, ExperimentSpec, Preset, Scale};
pub use error::{HarnessError, Result};
pub use presets::run_experiment;
pub use results::{emit_results, ResultRecord};

/// Environment variable that overrides the enumeration cap.
pub const ENUM_CAP_VAR: &str = "FDISTILL_ENUM_CAP";

/// Applies [`ENUM_CAP_VAR`] when set.
pub fn apply_enum_cap_from_env() -> Result<()> {
    match std::env::var(ENUM_CAP_VAR) {
        Ok(text) => {
            let cap: u64 = text.trim().parse().map_err(|_| {
                HarnessError::Config(format!("{ENUM_CAP_VAR} must be a non-negative integer, got `{text}`"))
            })?;
            fdistill_core::model::set_enumeration_cap(cap);
            Ok(())
        }
        Err(std::env::VarError::NotPresent) => Ok(()),
        Err(e) => Err(HarnessError::Config(format!("{ENUM_CAP_VAR}: {e}"))),
    }
}
