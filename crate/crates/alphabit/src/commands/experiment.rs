use std::path::PathBuf;

use alphabit_core::metrics::{cross_entropy, dependence, balanced_accuracy, classify, BoxplotStats};
use alphabit_core::panel::{FeatureSet, Panel};
use alphabit_core::seed;
use alphabit_core::splits::{company_kfold, temporal_split, Scheme, SplitPlan};
use alphabit_core::tuning::{
    bootstrap_median_performance, pool_records, run_trial, top_k, BootstrapPerformance, SearchOutcome,
};
use rayon::prelude::*;

use super::{load_panel, Outputs};
use crate::config::RunConfig;
use crate::error::{AppError, Result};
use crate::io;

pub const DEPENDENCE_FILE: &str = "dependence.csv";
pub const PERFORMANCE_FILE: &str = "performance.csv";
pub const RESAMPLES_FILE: &str = "performance_resamples.csv";
pub const POOLED_FILE: &str = "pooled.csv";
pub const DELTAS_FILE: &str = "deltas.csv";
pub const FAILURES_FILE: &str = "failures.csv";

type Row = Vec<String>;

#[derive(Default)]
struct Report {
    dependence: Vec<Row>,
    performance: Vec<Row>,
    resamples: Vec<Row>,
    pooled: Vec<Row>,
    deltas: Vec<Row>,
    failures: Vec<Row>,
}

impl Report {
    fn append(&mut self, other: Report) {
        self.dependence.extend(other.dependence);
        self.performance.extend(other.performance);
        self.resamples.extend(other.resamples);
        self.pooled.extend(other.pooled);
        self.deltas.extend(other.deltas);
        self.failures.extend(other.failures);
    }
}

/// Builds the validation plan of one scheme and test year.
pub fn plan_for(panel: &Panel, config: &RunConfig, scheme: Scheme, year: i32) -> alphabit_core::Result<SplitPlan> {
    match scheme {
        Scheme::CompanyWise => company_kfold(panel, year, config.n_trials, config.seed),
        Scheme::Temporal => temporal_split(panel, year),
    }
}

/// Seed of the bootstrap subsets; shared by the feature sets of a year so
/// their resamples pair up by rank.
fn bootstrap_seed(config: &RunConfig, scheme: Scheme, year: i32) -> u64 {
    seed::derive(config.seed, &[seed::STREAM_BOOTSTRAP, scheme as u64, year as u64])
}

/// Runs the random search of every scheme, test year and feature set, then
/// writes the ranked reports.
pub fn cmd_experiment(config: &RunConfig) -> Result<PathBuf> {
    let panel = load_panel(config)?;
    let mut out = Outputs::new(config);
    let mut report = Report::default();
    for &scheme in &config.schemes {
        for year in config.test_years() {
            let mut year_report = Report::default();
            match run_year(&panel, config, scheme, year, &mut out, &mut year_report) {
                Ok(()) => report.append(year_report),
                Err(e) => {
                    report.failures.extend(year_report.failures);
                    report.failures.push(vec![
                        scheme.name().into(),
                        year.to_string(),
                        String::new(),
                        String::new(),
                        e.to_string(),
                    ]);
                }
            }
        }
    }
    let header = |extra: &[&str]| -> Vec<String> {
        ["scheme", "test_year"].iter().chain(extra).map(|s| s.to_string()).collect()
    };
    let write = |out: &mut Outputs, name: &str, h: Vec<String>, rows: Vec<Row>| {
        let h: Vec<&str> = h.iter().map(String::as_str).collect();
        io::write_csv(&out.path(name), &h, rows)
    };
    write(
        &mut out,
        DEPENDENCE_FILE,
        header(&["feature_set", "n", "pearson", "r2", "slope", "intercept", "kendall_tau", "kendall_p"]),
        report.dependence,
    )?;
    write(
        &mut out,
        PERFORMANCE_FILE,
        header(&["feature_set", "metric", "median", "q1", "q3", "whisker_low", "whisker_high", "n_outliers"]),
        report.performance,
    )?;
    write(
        &mut out,
        RESAMPLES_FILE,
        header(&["feature_set", "resample", "logloss", "balanced_accuracy"]),
        report.resamples,
    )?;
    write(
        &mut out,
        POOLED_FILE,
        header(&["feature_set", "members", "logloss", "balanced_accuracy"]),
        report.pooled,
    )?;
    write(
        &mut out,
        DELTAS_FILE,
        header(&["pool", "delta_logloss", "delta_balanced_accuracy"]),
        report.deltas,
    )?;
    write(&mut out, FAILURES_FILE, header(&["feature_set", "trial", "reason"]), report.failures)?;
    out.finish("experiment")
}

struct SetResult {
    pooled: (f64, f64),
    bootstrap: BootstrapPerformance,
}

fn run_year(
    panel: &Panel,
    config: &RunConfig,
    scheme: Scheme,
    year: i32,
    out: &mut Outputs,
    report: &mut Report,
) -> Result<()> {
    let plan = plan_for(panel, config, scheme, year).map_err(AppError::data)?;
    io::write_json(
        &out.path(format!("splits/{}_{}.json", scheme.name(), year)),
        &plan.manifest(panel),
    )?;
    let y_test: Vec<bool> = plan.test.iter().map(|&i| panel.samples()[i].target).collect();
    let key = || vec![scheme.name().to_string(), year.to_string()];
    let mut results: Vec<(FeatureSet, SetResult)> = Vec::new();
    for &set in &config.feature_sets {
        let outcome = SearchOutcome::from_results(
            (0..config.n_trials)
                .into_par_iter()
                .map(|t| (t, run_trial(panel, &plan, set, &config.search_space, config.seed, t)))
                .collect::<Vec<_>>(),
        );
        for (trial, e) in &outcome.failures {
            let mut row = key();
            row.extend([set.name().to_string(), trial.to_string(), e.to_string()]);
            report.failures.push(row);
        }
        let rel = io::search_records_path(std::path::Path::new(""), scheme, year, set);
        io::write_search_records(&out.path(rel), &outcome.records)?;

        let top = top_k(&outcome.records, config.top_k).map_err(AppError::data)?;
        let val: Vec<f64> = top.iter().map(|r| r.val_logloss).collect();
        let test: Vec<f64> = top.iter().map(|r| r.test_logloss).collect();
        let d = dependence(&val, &test).map_err(AppError::data)?;
        let mut row = key();
        row.extend([set.name().to_string(), d.n.to_string()]);
        row.extend([d.pearson, d.r2, d.slope, d.intercept, d.kendall_tau, d.kendall_p].map(num));
        report.dependence.push(row);

        let best: Vec<_> = top.iter().take(config.pool_size).collect();
        let pooled = pool_records(&best).map_err(AppError::data)?;
        let ll = cross_entropy(&pooled.probabilities, &y_test).map_err(AppError::data)?;
        let ba = balanced_accuracy(&classify(&pooled.probabilities), &y_test).map_err(AppError::data)?;
        let mut row = key();
        let members: Vec<String> = pooled.members.iter().map(usize::to_string).collect();
        row.extend([set.name().to_string(), members.join(";"), num(ll), num(ba)]);
        report.pooled.push(row);

        let bootstrap = bootstrap_median_performance(
            &top,
            &y_test,
            config.n_resamples,
            config.pool_size,
            bootstrap_seed(config, scheme, year),
        )
        .map_err(AppError::data)?;
        for (metric, stats) in [("logloss", &bootstrap.logloss), ("balanced_accuracy", &bootstrap.balanced_accuracy)] {
            let mut row = key();
            row.extend([set.name().to_string(), metric.to_string()]);
            row.extend(boxplot_fields(stats));
            report.performance.push(row);
        }
        for (i, (ll, ba)) in bootstrap.pairs.iter().enumerate() {
            let mut row = key();
            row.extend([set.name().to_string(), i.to_string(), num(*ll), num(*ba)]);
            report.resamples.push(row);
        }
        results.push((set, SetResult { pooled: (ll, ba), bootstrap }));
    }
    let find = |s: FeatureSet| results.iter().find(|r| r.0 == s).map(|r| &r.1);
    if let (Some(esg), Some(bench)) = (find(FeatureSet::EsgAndBenchmark), find(FeatureSet::BenchmarkOnly)) {
        let mut row = key();
        row.extend(["top".to_string(), num(esg.pooled.0 - bench.pooled.0), num(esg.pooled.1 - bench.pooled.1)]);
        report.deltas.push(row);
        for (i, (e, b)) in esg.bootstrap.pairs.iter().zip(&bench.bootstrap.pairs).enumerate() {
            let mut row = key();
            row.extend([i.to_string(), num(e.0 - b.0), num(e.1 - b.1)]);
            report.deltas.push(row);
        }
    }
    Ok(())
}

fn num(v: f64) -> String {
    v.to_string()
}

fn boxplot_fields(s: &BoxplotStats) -> Vec<String> {
    let mut v: Vec<String> = [s.median, s.q1, s.q3, s.whisker_low, s.whisker_high].map(num).to_vec();
    v.push(s.outliers.len().to_string());
    v
}
