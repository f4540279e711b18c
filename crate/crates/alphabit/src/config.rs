//! Run configuration, read from JSON.

use std::path::{Path, PathBuf};

use alphabit_core::factor::FactorModel;
use alphabit_core::panel::FeatureSet;
use alphabit_core::splits::{expanding_windows, Scheme};
use alphabit_core::synth::SynthConfig;
use alphabit_core::tuning::SearchSpace;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

/// How materiality slopes are tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeTestKind {
    /// t-test of the slope regressed on the PDP grid.
    GridTTest,
    /// Spread of slopes across models refitted on company half samples.
    Replicates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    /// Pre-test years used as PDP and materiality background.
    pub background_years: i32,
    /// Replicate models for [`SlopeTestKind::Replicates`].
    pub replicates: usize,
    /// Per-cell cap on background rows.
    pub max_background: usize,
    pub min_cell_samples: usize,
    pub fdr: f64,
    pub slope_test: SlopeTestKind,
    /// Scheme whose best record is explained; the first configured one when absent.
    pub scheme: Option<Scheme>,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            background_years: 3,
            replicates: 5,
            max_background: 300,
            min_cell_samples: 30,
            fdr: 0.05,
            slope_test: SlopeTestKind::Replicates,
            scheme: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Input files; each defaults to its standard name inside `output_dir`.
    pub prices: Option<PathBuf>,
    pub factors: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub factor_model: FactorModel,
    pub schemes: Vec<Scheme>,
    pub first_test_year: i32,
    pub last_test_year: i32,
    pub n_trials: usize,
    pub top_k: usize,
    /// Models pooled per prediction.
    pub pool_size: usize,
    pub n_resamples: usize,
    pub feature_sets: Vec<FeatureSet>,
    pub seed: u64,
    pub search_space: SearchSpace,
    pub synth: SynthConfig,
    pub explain: ExplainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("out"),
            prices: None,
            factors: None,
            features: None,
            targets: None,
            factor_model: FactorModel::Capm,
            schemes: vec![Scheme::CompanyWise, Scheme::Temporal],
            first_test_year: 2016,
            last_test_year: 2020,
            n_trials: 400,
            top_k: 100,
            pool_size: 5,
            n_resamples: 100,
            feature_sets: vec![FeatureSet::EsgAndBenchmark, FeatureSet::BenchmarkOnly],
            seed: 0,
            search_space: SearchSpace::default(),
            synth: SynthConfig::default(),
            explain: ExplainConfig::default(),
        }
    }
}

pub const PRICES_FILE: &str = "prices.csv";
pub const FACTORS_FILE: &str = "factors.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const TARGETS_FILE: &str = "targets.csv";

impl RunConfig {
    /// Reads a config file, or the `config` member of a run manifest.
    /// Relative paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        if value.get("files").is_some() {
            value = value["config"].take();
        }
        let mut config: RunConfig =
            serde_json::from_value(value).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for p in [&mut self.prices, &mut self.factors, &mut self.features, &mut self.targets]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AppError::Config(m.to_string()));
        expanding_windows(self.first_test_year, self.last_test_year).map_err(|e| AppError::Config(e.to_string()))?;
        if self.schemes.is_empty() || self.feature_sets.is_empty() {
            return bad("schemes and feature_sets must not be empty");
        }
        if self.n_trials == 0 || self.top_k == 0 || self.pool_size == 0 || self.n_resamples == 0 {
            return bad("n_trials, top_k, pool_size and n_resamples must be positive");
        }
        if self.top_k > self.n_trials {
            return bad("top_k exceeds n_trials");
        }
        if self.pool_size > self.top_k {
            return bad("pool_size exceeds top_k");
        }
        if !(self.explain.fdr > 0.0 && self.explain.fdr < 1.0) {
            return bad("explain.fdr must lie in (0, 1)");
        }
        if self.explain.background_years < 1 {
            return bad("explain.background_years must be at least 1");
        }
        if self.explain.slope_test == SlopeTestKind::Replicates && self.explain.replicates < 2 {
            return bad("explain.replicates must be at least 2");
        }
        self.search_space.validate().map_err(|e| AppError::Config(e.to_string()))?;
        self.synth.validate().map_err(|e| AppError::Config(e.to_string()))
    }

    fn input(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.output_dir.join(name))
    }

    pub fn prices_path(&self) -> PathBuf {
        self.input(&self.prices, PRICES_FILE)
    }

    pub fn factors_path(&self) -> PathBuf {
        self.input(&self.factors, FACTORS_FILE)
    }

    pub fn features_path(&self) -> PathBuf {
        self.input(&self.features, FEATURES_FILE)
    }

    pub fn targets_path(&self) -> PathBuf {
        self.input(&self.targets, TARGETS_FILE)
    }

    /// Copy with every input path spelled out, so a manifest still finds its
    /// inputs when replayed into another output directory.
    pub fn with_resolved_inputs(&self) -> RunConfig {
        RunConfig {
            prices: Some(self.prices_path()),
            factors: Some(self.factors_path()),
            features: Some(self.features_path()),
            targets: Some(self.targets_path()),
            ..self.clone()
        }
    }

    pub fn test_years(&self) -> Vec<i32> {
        expanding_windows(self.first_test_year, self.last_test_year).unwrap_or_default()
    }
}

/// Fails with a config error unless `path` exists.
pub fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(AppError::Config(format!("input file {} does not exist", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn bad_year_range_is_config_error() {
        let c = RunConfig {
            first_test_year: 2020,
            last_test_year: 2016,
            ..RunConfig::default()
        };
        assert_eq!(c.validate().unwrap_err().exit_code(), 1);
    }

    #[test]
    fn manifest_config_member_is_used() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        std::fs::write(&p, r#"{"command":"synth","config":{"seed":9,"output_dir":"o"},"files":{}}"#).unwrap();
        let c = RunConfig::load(&p).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.output_dir, dir.path().join("o"));
    }

    #[test]
    fn unknown_field_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"n_trails":3}"#).unwrap();
        assert_eq!(RunConfig::load(&p).unwrap_err().exit_code(), 1);
    }
}
