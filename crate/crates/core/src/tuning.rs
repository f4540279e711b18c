//! Random hyperparameter search, ranking, pooling and bootstrap error bars.

use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbdt::{self, Ensemble, FeatureMatrix, Hyperparams};
use crate::math;
use crate::metrics::{balanced_accuracy, classify, cross_entropy, BoxplotStats};
use crate::panel::{FeatureSet, Panel};
use crate::seed;
use crate::splits::{Scheme, SplitPlan};

/// Sampling ranges of the random search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    /// Log-uniform.
    pub learning_rate: (f64, f64),
    pub n_trees: (usize, usize),
    pub max_leaves: (usize, usize),
    pub min_samples_leaf: (usize, usize),
    pub feature_fraction: (f64, f64),
    pub bagging_fraction: (f64, f64),
    /// Log-uniform.
    pub l2_leaf_reg: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            learning_rate: (0.01, 0.3),
            n_trees: (50, 500),
            max_leaves: (4, 64),
            min_samples_leaf: (5, 100),
            feature_fraction: (0.5, 1.0),
            bagging_fraction: (0.5, 1.0),
            l2_leaf_reg: (1e-3, 10.0),
        }
    }
}

fn log_uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    math::exp(rng.random_range(math::ln(lo)..math::ln(hi)))
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let ordered = self.learning_rate.0 <= self.learning_rate.1
            && self.n_trees.0 <= self.n_trees.1
            && self.max_leaves.0 <= self.max_leaves.1
            && self.min_samples_leaf.0 <= self.min_samples_leaf.1
            && self.feature_fraction.0 <= self.feature_fraction.1
            && self.bagging_fraction.0 <= self.bagging_fraction.1
            && self.l2_leaf_reg.0 <= self.l2_leaf_reg.1;
        if !ordered || self.learning_rate.0 <= 0.0 || self.l2_leaf_reg.0 <= 0.0 {
            return Err(Error::InvalidInput("search space ranges must be ordered and log ranges positive".into()));
        }
        self.sample(&mut seed::rng(0, &[])).validate()
    }

    /// One draw; the model seed is left at zero.
    pub fn sample(&self, rng: &mut impl Rng) -> Hyperparams {
        Hyperparams {
            learning_rate: log_uniform(rng, self.learning_rate),
            n_trees: rng.random_range(self.n_trees.0..=self.n_trees.1),
            max_leaves: rng.random_range(self.max_leaves.0..=self.max_leaves.1),
            min_samples_leaf: rng.random_range(self.min_samples_leaf.0..=self.min_samples_leaf.1),
            feature_fraction: uniform(rng, self.feature_fraction),
            bagging_fraction: uniform(rng, self.bagging_fraction),
            l2_leaf_reg: log_uniform(rng, self.l2_leaf_reg),
            min_gain: 0.0,
            seed: 0,
        }
    }
}

/// Outcome of one trial. The model itself is not kept: it is reproducible
/// with [`refit`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchRecord {
    pub trial: usize,
    pub params: Hyperparams,
    pub scheme: Scheme,
    pub test_year: i32,
    pub fold: usize,
    pub split_seed: Option<u64>,
    pub feature_set: FeatureSet,
    pub val_logloss: f64,
    pub test_logloss: f64,
    pub test_balanced_accuracy: f64,
    /// Predicted probabilities on the plan's test samples.
    pub test_probabilities: Vec<f64>,
}

/// Hyperparameters of a trial. They depend on the trial and the test year,
/// not on the feature set, so both feature sets see paired draws.
pub fn trial_params(space: &SearchSpace, root_seed: u64, test_year: i32, trial: usize) -> Hyperparams {
    let path = [seed::STREAM_TRIAL, test_year as u64, trial as u64];
    let mut params = space.sample(&mut seed::rng(root_seed, &path));
    params.seed = seed::derive(root_seed, &[seed::STREAM_MODEL, test_year as u64, trial as u64]);
    params
}

/// Fold assigned to a trial: trials cycle through the plan's folds.
pub fn trial_fold(plan: &SplitPlan, trial: usize) -> usize {
    trial % plan.folds.len()
}

fn check_plan(plan: &SplitPlan) -> Result<()> {
    if plan.folds.is_empty() || plan.test.is_empty() {
        return Err(Error::Precondition("split plan needs a fold and test samples".into()));
    }
    Ok(())
}

fn targets(panel: &Panel, indices: &[usize]) -> Vec<bool> {
    indices.iter().map(|&i| panel.samples()[i].target).collect()
}

fn fit_fold(panel: &Panel, plan: &SplitPlan, fold: usize, set: FeatureSet, params: &Hyperparams) -> Result<Ensemble> {
    let train = &plan.folds[fold].train;
    gbdt::fit(&panel.matrix(train, set), &panel.labels(train), params)
}

/// Trains and scores one trial of the search.
pub fn run_trial(
    panel: &Panel,
    plan: &SplitPlan,
    feature_set: FeatureSet,
    space: &SearchSpace,
    root_seed: u64,
    trial: usize,
) -> Result<SearchRecord> {
    check_plan(plan)?;
    let params = trial_params(space, root_seed, plan.test_year, trial);
    let fold = trial_fold(plan, trial);
    let model = fit_fold(panel, plan, fold, feature_set, &params)?;
    let validation = &plan.folds[fold].validation;
    let val_p = model.predict_proba_matrix(&panel.matrix(validation, feature_set));
    let val_logloss = cross_entropy(&val_p, &targets(panel, validation))?;
    let test_probabilities = model.predict_proba_matrix(&panel.matrix(&plan.test, feature_set));
    let y_test = targets(panel, &plan.test);
    Ok(SearchRecord {
        trial,
        test_logloss: cross_entropy(&test_probabilities, &y_test)?,
        test_balanced_accuracy: balanced_accuracy(&classify(&test_probabilities), &y_test)?,
        params,
        scheme: plan.scheme,
        test_year: plan.test_year,
        fold,
        split_seed: plan.seed,
        feature_set,
        val_logloss,
        test_probabilities,
    })
}

/// Rebuilds the model of a recorded trial.
pub fn refit(panel: &Panel, plan: &SplitPlan, record: &SearchRecord) -> Result<Ensemble> {
    check_plan(plan)?;
    if record.fold >= plan.folds.len() || record.test_year != plan.test_year {
        return Err(Error::Precondition("record does not belong to this split plan".into()));
    }
    fit_fold(panel, plan, record.fold, record.feature_set, &record.params)
}

/// Records of successful trials (by trial id) and the errors of the others.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub records: Vec<SearchRecord>,
    pub failures: Vec<(usize, Error)>,
}

impl SearchOutcome {
    /// Sorts the results by trial id.
    pub fn from_results(results: impl IntoIterator<Item = (usize, Result<SearchRecord>)>) -> Self {
        let mut records = Vec::new();
        let mut failures = Vec::new();
        for (trial, r) in results {
            match r {
                Ok(rec) => records.push(rec),
                Err(e) => failures.push((trial, e)),
            }
        }
        records.sort_by_key(|r| r.trial);
        failures.sort_by_key(|f| f.0);
        SearchOutcome { records, failures }
    }
}

/// Sequential random search over trials `0..n_trials`.
pub fn random_search(
    panel: &Panel,
    plan: &SplitPlan,
    n_trials: usize,
    feature_set: FeatureSet,
    space: &SearchSpace,
    root_seed: u64,
) -> Result<SearchOutcome> {
    if n_trials == 0 {
        return Err(Error::InvalidInput("n_trials must be at least 1".into()));
    }
    check_plan(plan)?;
    space.validate()?;
    Ok(SearchOutcome::from_results(
        (0..n_trials).map(|t| (t, run_trial(panel, plan, feature_set, space, root_seed, t))),
    ))
}

/// The `k` records with the smallest validation loss, ties by trial id.
pub fn top_k(records: &[SearchRecord], k: usize) -> Result<Vec<SearchRecord>> {
    if records.len() < k {
        return Err(Error::InsufficientData {
            what: "search records",
            required: k,
            actual: records.len(),
        });
    }
    let mut order: Vec<&SearchRecord> = records.iter().collect();
    order.sort_by(|a, b| a.val_logloss.total_cmp(&b.val_logloss).then(a.trial.cmp(&b.trial)));
    Ok(order.into_iter().take(k).cloned().collect())
}

/// Mean of member probabilities per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledPrediction {
    pub members: Vec<usize>,
    pub probabilities: Vec<f64>,
}

fn mean_columns<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>) -> Result<Vec<f64>> {
    let k = rows.len() as f64;
    let mut acc: Option<Vec<f64>> = None;
    for r in rows {
        match &mut acc {
            None => acc = Some(r.to_vec()),
            Some(a) => {
                if a.len() != r.len() {
                    return Err(Error::SizeMismatch {
                        expected: a.len(),
                        actual: r.len(),
                    });
                }
                a.iter_mut().zip(r).for_each(|(s, v)| *s += v);
            }
        }
    }
    let mut acc = acc.ok_or(Error::InsufficientData {
        what: "pool members",
        required: 1,
        actual: 0,
    })?;
    acc.iter_mut().for_each(|v| *v /= k);
    Ok(acc)
}

/// Pools models on a feature matrix; members are numbered by position.
pub fn pool(members: &[Ensemble], x: &FeatureMatrix) -> Result<PooledPrediction> {
    let preds: Vec<Vec<f64>> = members.iter().map(|m| m.predict_proba_matrix(x)).collect();
    Ok(PooledPrediction {
        members: (0..members.len()).collect(),
        probabilities: mean_columns(preds.iter().map(Vec::as_slice))?,
    })
}

/// Pools the stored test predictions of search records.
pub fn pool_records(records: &[&SearchRecord]) -> Result<PooledPrediction> {
    Ok(PooledPrediction {
        members: records.iter().map(|r| r.trial).collect(),
        probabilities: mean_columns(records.iter().map(|r| r.test_probabilities.as_slice()))?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapPerformance {
    /// `(logloss, balanced accuracy)` of each pooled subset.
    pub pairs: Vec<(f64, f64)>,
    pub logloss: BoxplotStats,
    pub balanced_accuracy: BoxplotStats,
}

/// Test performance of `n_resamples` pools, each of `subset_size` records
/// drawn without replacement.
pub fn bootstrap_median_performance(
    records: &[SearchRecord],
    y_test: &[bool],
    n_resamples: usize,
    subset_size: usize,
    root_seed: u64,
) -> Result<BootstrapPerformance> {
    if n_resamples == 0 || subset_size == 0 {
        return Err(Error::InvalidInput("resample count and subset size must be positive".into()));
    }
    if records.len() < subset_size {
        return Err(Error::InsufficientData {
            what: "records to resample",
            required: subset_size,
            actual: records.len(),
        });
    }
    let mut rng = seed::rng(root_seed, &[seed::STREAM_BOOTSTRAP]);
    let mut pairs = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        let members: Vec<&SearchRecord> = index::sample(&mut rng, records.len(), subset_size)
            .into_iter()
            .map(|i| &records[i])
            .collect();
        let pooled = pool_records(&members)?;
        let ll = cross_entropy(&pooled.probabilities, y_test)?;
        let ba = balanced_accuracy(&classify(&pooled.probabilities), y_test)?;
        pairs.push((ll, ba));
    }
    let ll: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ba: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok(BootstrapPerformance {
        logloss: BoxplotStats::from_values(&ll)?,
        balanced_accuracy: BoxplotStats::from_values(&ba)?,
        pairs,
    })
}
