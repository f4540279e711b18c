use std::path::PathBuf;

use alphabit_core::synth::{generate, SynthConfig};

use super::Outputs;
use crate::config::{RunConfig, FACTORS_FILE, FEATURES_FILE, PRICES_FILE};
use crate::error::{AppError, Result};
use crate::io;

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// Generates a synthetic market from the root seed. Returns the manifest path.
pub fn cmd_synth(config: &RunConfig) -> Result<PathBuf> {
    let cfg = SynthConfig {
        seed: config.seed,
        ..config.synth.clone()
    };
    let data = generate(&cfg).map_err(|e| AppError::Config(e.to_string()))?;
    let mut out = Outputs::new(config);
    io::write_synth_prices(&out.path(PRICES_FILE), &data)?;
    io::write_factors(&out.path(FACTORS_FILE), &data.factors)?;
    io::write_features(&out.path(FEATURES_FILE), &data.features)?;
    io::write_json(&out.path(GROUND_TRUTH_FILE), &data.ground_truth)?;
    out.finish("synth")
}
