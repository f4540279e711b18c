use std::path::{Path, PathBuf};

use alphabit_core::explain::{
    default_grid, half_sample, materiality, pdp, shap_summary, subsample_rows, CapBucket, MaterialityCell,
    MaterialityConfig, SlopeTest, PDP_BACKGROUND_ROWS,
};
use alphabit_core::gbdt::{fit, Ensemble, FeatureKind};
use alphabit_core::panel::{CategoricalColumn, EsgScore, FeatureSet, Panel, CATEGORICAL_OFFSET};
use alphabit_core::tuning::{refit, trial_fold, SearchRecord};
use rayon::prelude::*;

use super::experiment::plan_for;
use super::{load_panel, Outputs};
use crate::config::{RunConfig, SlopeTestKind};
use crate::error::{AppError, Result};
use crate::io::{self, SearchRow};

pub const SHAP_FILE: &str = "shap.csv";
pub const SHAP_SUMMARY_FILE: &str = "shap_summary.csv";
pub const PDP_FILE: &str = "pdp.csv";
pub const MATERIALITY_FILE: &str = "materiality.csv";
pub const MODEL_FILE: &str = "model.json";

const BUCKETS: [CapBucket; 4] = [CapBucket::All, CapBucket::Small, CapBucket::Mid, CapBucket::Large];

/// Lowest validation loss, ties by trial id.
fn best_row(rows: &[SearchRow]) -> Option<&SearchRow> {
    rows.iter()
        .min_by(|a, b| a.val_logloss.total_cmp(&b.val_logloss).then(a.trial.cmp(&b.trial)))
}

/// Explains the best ESG model of the most recent test year.
pub fn cmd_explain(config: &RunConfig) -> Result<PathBuf> {
    let panel = load_panel(config)?;
    let scheme = config.explain.scheme.unwrap_or(config.schemes[0]);
    let year = config.last_test_year;
    let set = FeatureSet::EsgAndBenchmark;
    let records_path = io::search_records_path(&config.output_dir, scheme, year, set);
    if !records_path.is_file() {
        return Err(AppError::Config(format!(
            "{} not found; run the experiment first",
            records_path.display()
        )));
    }
    let rows = io::read_search_records(&records_path)?;
    let best = best_row(&rows)
        .ok_or_else(|| AppError::Data(format!("{} holds no records", records_path.display())))?;
    let plan = plan_for(&panel, config, scheme, year).map_err(AppError::data)?;
    let record = SearchRecord {
        trial: best.trial,
        params: best.params.clone(),
        scheme,
        test_year: year,
        fold: trial_fold(&plan, best.trial),
        split_seed: plan.seed,
        feature_set: set,
        val_logloss: best.val_logloss,
        test_logloss: best.test_logloss,
        test_balanced_accuracy: best.test_balanced_accuracy,
        test_probabilities: Vec::new(),
    };
    let model = refit(&panel, &plan, &record).map_err(AppError::data)?;
    let mut out = Outputs::new(config);
    io::write_json(&out.path(MODEL_FILE), &model)?;

    write_shap(&panel, &model, &plan.test, &mut out)?;

    let background: Vec<usize> = (0..panel.len())
        .filter(|&i| (year - config.explain.background_years..year).contains(&panel.year(i)))
        .collect();
    write_pdp(&panel, &model, &background, config.seed, &out.path(PDP_FILE))?;

    let replicates: Vec<Ensemble> = match config.explain.slope_test {
        SlopeTestKind::GridTTest => Vec::new(),
        SlopeTestKind::Replicates => {
            let train = &plan.folds[record.fold].train;
            (0..config.explain.replicates)
                .into_par_iter()
                .map(|r| {
                    let idx = half_sample(&panel, train, config.seed, r);
                    fit(&panel.matrix(&idx, set), &panel.labels(&idx), &record.params)
                })
                .collect::<alphabit_core::Result<_>>()
                .map_err(AppError::data)?
        }
    };
    let mcfg = MaterialityConfig {
        min_cell_samples: config.explain.min_cell_samples,
        max_background: config.explain.max_background,
        fdr: config.explain.fdr,
        seed: config.seed,
        test: match config.explain.slope_test {
            SlopeTestKind::GridTTest => SlopeTest::GridTTest,
            SlopeTestKind::Replicates => SlopeTest::Replicates(&replicates),
        },
    };
    let tables: Vec<Vec<MaterialityCell>> = BUCKETS
        .par_iter()
        .map(|&b| materiality(&model, &panel, &background, b, &mcfg))
        .collect::<alphabit_core::Result<_>>()
        .map_err(AppError::data)?;
    io::write_materiality(&out.path(MATERIALITY_FILE), &tables.concat())?;
    for (bucket, cells) in BUCKETS.iter().zip(&tables) {
        write_matrix(&out.path(format!("materiality_{}.csv", bucket.name())), cells)?;
    }
    out.finish("explain")
}

fn write_shap(panel: &Panel, model: &Ensemble, rows: &[usize], out: &mut Outputs) -> Result<()> {
    let x = panel.matrix(rows, FeatureSet::EsgAndBenchmark);
    let summary = shap_summary(model, &x).map_err(AppError::data)?;
    let names: Vec<&str> = (0..model.n_features()).map(|f| model.feature_name(f)).collect();
    io::write_csv(
        &out.path(SHAP_FILE),
        io::SHAP_HEADER,
        rows.iter().zip(&summary.vectors).flat_map(|(&i, v)| {
            let (company, year) = (panel.company(i).to_string(), panel.year(i).to_string());
            names.iter().zip(&v.phi).map(move |(name, phi)| {
                vec![
                    company.clone(),
                    year.clone(),
                    name.to_string(),
                    phi.to_string(),
                    v.base.to_string(),
                    v.logit.to_string(),
                ]
            })
        }),
    )?;
    io::write_csv(
        &out.path(SHAP_SUMMARY_FILE),
        &["feature", "median", "q1", "q3", "whisker_low", "whisker_high", "n_outliers"],
        summary.features.iter().map(|f| {
            let s = &f.stats;
            let mut row = vec![f.feature.clone()];
            row.extend([s.median, s.q1, s.q3, s.whisker_low, s.whisker_high].map(|v| v.to_string()));
            row.push(s.outliers.len().to_string());
            row
        }),
    )
}

fn write_pdp(panel: &Panel, model: &Ensemble, background: &[usize], seed: u64, path: &Path) -> Result<()> {
    let pick = subsample_rows(background.len(), PDP_BACKGROUND_ROWS, seed);
    let idx: Vec<usize> = pick.iter().map(|&k| background[k]).collect();
    let bg = panel.matrix(&idx, FeatureSet::EsgAndBenchmark);
    let mut rows = Vec::new();
    for f in 0..model.n_features() {
        let grid = default_grid(bg.schema(), f, &bg);
        if grid.is_empty() {
            continue;
        }
        let curve = pdp(model, f, &grid, &bg).map_err(AppError::data)?;
        for (g, p) in curve.grid.iter().zip(&curve.mean_probability) {
            let label = match bg.kind(f) {
                FeatureKind::Numeric => g.to_string(),
                FeatureKind::Categorical => {
                    let column = CategoricalColumn::ALL[f - CATEGORICAL_OFFSET];
                    panel.categories().labels(column)[*g as usize].clone()
                }
            };
            rows.push(vec![curve.name.clone(), label, p.to_string()]);
        }
    }
    io::write_csv(path, io::PDP_HEADER, rows)
}

/// Sector by feature table of significant slopes; other cells are blank.
fn write_matrix(path: &Path, cells: &[MaterialityCell]) -> Result<()> {
    let mut header = vec!["sector"];
    header.extend(EsgScore::ALL.iter().map(|s| s.name()));
    let rows = cells.chunks(EsgScore::COUNT).map(|sector| {
        let mut row = vec![sector[0].sector.clone()];
        row.extend(sector.iter().map(|c| match (c.significant, c.slope_pct) {
            (true, Some(s)) => s.to_string(),
            _ => String::new(),
        }));
        row
    });
    io::write_csv(path, &header, rows)
}

