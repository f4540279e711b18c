use std::collections::BTreeSet;
use std::path::PathBuf;

use alphabit_core::factor::{company_targets, TargetRun};
use rayon::prelude::*;

use super::Outputs;
use crate::config::{require_file, RunConfig, TARGETS_FILE};
use crate::error::Result;
use crate::io;

pub const SKIPPED_FILE: &str = "targets_skipped.csv";

/// Computes a target for every company-year present in the features file.
pub fn cmd_targets(config: &RunConfig) -> Result<PathBuf> {
    let (prices_path, factors_path, features_path) =
        (config.prices_path(), config.factors_path(), config.features_path());
    for p in [&prices_path, &factors_path, &features_path] {
        require_file(p)?;
    }
    let prices = io::read_prices(&prices_path)?;
    let factors = io::read_factors(&factors_path)?;
    let years: Vec<i32> = io::read_features(&features_path)?
        .iter()
        .map(|r| r.year)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    // Series come back from the reader sorted by company.
    let runs: Vec<TargetRun> = prices
        .par_iter()
        .map(|s| company_targets(s, &factors, config.factor_model, &years))
        .collect();
    let mut run = TargetRun::default();
    runs.into_iter().for_each(|r| run.extend(r));
    let mut out = Outputs::new(config);
    io::write_targets(&out.path(TARGETS_FILE), &run.targets)?;
    io::write_skipped(&out.path(SKIPPED_FILE), &run.skipped)?;
    out.finish("targets")
}
