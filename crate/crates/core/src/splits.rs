//! Train / validation / test plans over expanding test windows.
//!
//! The test set of a plan is every sample of `test_year`; train and
//! validation only ever draw from earlier years.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Panel;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    CompanyWise,
    Temporal,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::CompanyWise => "company_wise",
            Scheme::Temporal => "temporal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Sample indices into a [`Panel`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub scheme: Scheme,
    pub test_year: i32,
    pub seed: Option<u64>,
    pub folds: Vec<Fold>,
    pub test: Vec<usize>,
}

/// Share of pre-test data held out for validation.
pub const VALIDATION_SHARE_NUM: usize = 1;
pub const VALIDATION_SHARE_DEN: usize = 4;

fn pre_test_by_company(panel: &Panel, test_year: i32) -> BTreeMap<&str, Vec<usize>> {
    let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for i in 0..panel.len() {
        if panel.year(i) < test_year {
            map.entry(panel.company(i).as_str()).or_default().push(i);
        }
    }
    map
}

/// `n_splits` independent random company splits, each holding out
/// `ceil(25%)` of the companies seen before `test_year`.
pub fn company_kfold(panel: &Panel, test_year: i32, n_splits: usize, seed: u64) -> Result<SplitPlan> {
    let by_company = pre_test_by_company(panel, test_year);
    let n = by_company.len();
    let required = n_splits.max(2);
    if n < required {
        return Err(Error::InsufficientData {
            what: "companies before the test year",
            required,
            actual: n,
        });
    }
    let n_validation = (n * VALIDATION_SHARE_NUM).div_ceil(VALIDATION_SHARE_DEN);
    let groups: Vec<&Vec<usize>> = by_company.values().collect();
    let folds = (0..n_splits)
        .map(|f| {
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = seed::rng(seed, &[seed::STREAM_SPLIT, test_year as u64, f as u64]);
            order.shuffle(&mut rng);
            let mut is_validation = alloc::vec![false; n];
            for &c in &order[..n_validation] {
                is_validation[c] = true;
            }
            let mut fold = Fold {
                train: Vec::new(),
                validation: Vec::new(),
            };
            for (c, rows) in groups.iter().enumerate() {
                if is_validation[c] {
                    fold.validation.extend_from_slice(rows);
                } else {
                    fold.train.extend_from_slice(rows);
                }
            }
            fold.train.sort_unstable();
            fold.validation.sort_unstable();
            fold
        })
        .collect();
    Ok(SplitPlan {
        scheme: Scheme::CompanyWise,
        test_year,
        seed: Some(seed),
        folds,
        test: panel.indices_in_year(test_year),
    })
}

/// Single chronological split: the most recent whole years holding at least
/// 25% of the pre-test samples form the validation set.
pub fn temporal_split(panel: &Panel, test_year: i32) -> Result<SplitPlan> {
    let mut per_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for i in 0..panel.len() {
        let y = panel.year(i);
        if y < test_year {
            per_year.entry(y).or_default().push(i);
        }
    }
    if per_year.len() < 4 {
        return Err(Error::InsufficientData {
            what: "distinct years before the test year",
            required: 4,
            actual: per_year.len(),
        });
    }
    let total: usize = per_year.values().map(Vec::len).sum();
    let first_validation_year = validation_start_year(
        &per_year.iter().map(|(y, v)| (*y, v.len())).collect::<Vec<_>>(),
        total,
    );
    let mut fold = Fold {
        train: Vec::new(),
        validation: Vec::new(),
    };
    for (y, rows) in &per_year {
        if *y >= first_validation_year {
            fold.validation.extend_from_slice(rows);
        } else {
            fold.train.extend_from_slice(rows);
        }
    }
    if fold.train.is_empty() {
        return Err(Error::InsufficientData {
            what: "training years left by the temporal split",
            required: 1,
            actual: 0,
        });
    }
    fold.train.sort_unstable();
    fold.validation.sort_unstable();
    Ok(SplitPlan {
        scheme: Scheme::Temporal,
        test_year,
        seed: None,
        folds: alloc::vec![fold],
        test: panel.indices_in_year(test_year),
    })
}

fn validation_start_year(counts: &[(i32, usize)], total: usize) -> i32 {
    let mut acc = 0;
    for &(year, c) in counts.iter().rev() {
        acc += c;
        if acc * VALIDATION_SHARE_DEN >= total * VALIDATION_SHARE_NUM {
            return year;
        }
    }
    counts[0].0
}

/// Test years `first ..= last`.
pub fn expanding_windows(first_test: i32, last_test: i32) -> Result<Vec<i32>> {
    if first_test > last_test {
        return Err(Error::Precondition(format!(
            "first test year {first_test} after last test year {last_test}"
        )));
    }
    Ok((first_test..=last_test).collect())
}

/// Leakage violations of a plan: pre-test samples dated at or after the test
/// year, overlap between train and validation, and (company-wise) companies
/// on both sides of a fold.
pub fn leakage_violations(plan: &SplitPlan, panel: &Panel) -> usize {
    let mut violations = 0;
    for fold in &plan.folds {
        violations += fold
            .train
            .iter()
            .chain(&fold.validation)
            .filter(|&&i| panel.year(i) >= plan.test_year)
            .count();
        let train: alloc::collections::BTreeSet<usize> = fold.train.iter().copied().collect();
        violations += fold.validation.iter().filter(|i| train.contains(i)).count();
        if plan.scheme == Scheme::CompanyWise {
            let train_companies: alloc::collections::BTreeSet<&str> =
                fold.train.iter().map(|&i| panel.company(i).as_str()).collect();
            violations += fold
                .validation
                .iter()
                .filter(|&&i| train_companies.contains(panel.company(i).as_str()))
                .count();
        }
    }
    violations += plan.test.iter().filter(|&&i| panel.year(i) != plan.test_year).count();
    violations
}

/// Serializable description of a plan by company identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub scheme: Scheme,
    pub test_year: i32,
    pub seed: Option<u64>,
    pub folds: Vec<ManifestFold>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFold {
    pub train_companies: Vec<String>,
    pub validation_companies: Vec<String>,
}

impl SplitPlan {
    pub fn manifest(&self, panel: &Panel) -> SplitManifest {
        let companies = |idx: &[usize]| {
            let mut v: Vec<String> = idx.iter().map(|&i| panel.company(i).to_string()).collect();
            v.sort();
            v.dedup();
            v
        };
        SplitManifest {
            scheme: self.scheme,
            test_year: self.test_year,
            seed: self.seed,
            folds: self
                .folds
                .iter()
                .map(|f| ManifestFold {
                    train_companies: companies(&f.train),
                    validation_companies: companies(&f.validation),
                })
                .collect(),
        }
    }
}
