//! Library side of the `mae` command: configuration documents, run
//! directories and the commands that produce them.

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod presets;

pub use config::{Overrides, RunConfig};
pub use error::{CliError, Result};
pub use pipeline::{ablate_run, evaluate_run, train_run, RunManifest, RunOptions, RunOutcome};

use std::path::{Path, PathBuf};

/// A configuration document and where it came from.
#[derive(Clone, Debug)]
pub struct ConfigSource {
    pub text: String,
    pub origin: String,
    /// Directory that relative dataset paths resolve against.
    pub base_dir: PathBuf,
}

impl ConfigSource {
    /// Reads `spec` as a file path when one exists, otherwise looks it up
    /// among the bundled presets.
    pub fn resolve(spec: &str) -> Result<Self> {
        let path = Path::new(spec);
        if path.is_file() {
            return Ok(Self {
                text: io::read_to_string(path)?,
                origin: spec.to_string(),
                base_dir: path
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from(".")),
            });
        }
        match presets::preset(spec) {
            Some(text) => Ok(Self {
                text: text.to_string(),
                origin: spec.to_string(),
                base_dir: PathBuf::from("."),
            }),
            None => Err(CliError::UnknownPreset(spec.to_string())),
        }
    }

    pub fn parse(&self) -> Result<RunConfig> {
        RunConfig::from_toml(&self.text, &self.origin)
    }
}
