//! Pipeline stages behind the subcommands.

mod experiment;
mod explain;
mod synth;
mod targets;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use alphabit_core::panel::{build_panel, Panel};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use experiment::cmd_experiment;
pub use explain::cmd_explain;
pub use synth::cmd_synth;
pub use targets::cmd_targets;

use crate::config::{require_file, RunConfig};
use crate::error::{AppError, Result};
use crate::io;

/// Written last by every command: the effective config and a checksum of
/// each file produced. Feeding it back as `--config` replays the run.
#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: RunConfig,
    files: BTreeMap<String, String>,
}

/// Files written by one command, relative to the output directory.
struct Outputs<'a> {
    config: &'a RunConfig,
    files: Vec<PathBuf>,
}

impl<'a> Outputs<'a> {
    fn new(config: &'a RunConfig) -> Self {
        Outputs { config, files: Vec::new() }
    }

    /// Absolute path of `rel`, recorded for the manifest.
    fn path(&mut self, rel: impl AsRef<Path>) -> PathBuf {
        self.files.push(rel.as_ref().to_path_buf());
        self.config.output_dir.join(rel)
    }

    fn finish(self, command: &str) -> Result<PathBuf> {
        let mut files = BTreeMap::new();
        for rel in &self.files {
            let path = self.config.output_dir.join(rel);
            let bytes = std::fs::read(&path).map_err(|e| AppError::io(&path, e))?;
            files.insert(rel.to_string_lossy().replace('\\', "/"), hex::encode(Sha256::digest(&bytes)));
        }
        let path = self.config.output_dir.join(format!("manifest_{command}.json"));
        io::write_json(&path, &Manifest { command, config: self.config.with_resolved_inputs(), files })?;
        Ok(path)
    }
}

fn load_panel(config: &RunConfig) -> Result<Panel> {
    let features_path = config.features_path();
    let targets_path = config.targets_path();
    require_file(&features_path)?;
    require_file(&targets_path)?;
    let features = io::read_features(&features_path)?;
    let targets = io::read_targets(&targets_path)?;
    let map = targets.into_iter().map(|t| ((t.company, t.year), t.value)).collect();
    Ok(build_panel(features, &map).map_err(AppError::data)?.panel)
}
