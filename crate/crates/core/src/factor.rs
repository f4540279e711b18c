//! Rolling factor regressions and the one-bit idiosyncratic target.
//!
//! For target year `Y` a company's monthly excess returns over the five
//! civil years `Y-4 ..= Y` are regressed on the factor returns with an
//! intercept. The annual idiosyncratic return is the sum of `alpha + eps_m`
//! over the months of `Y`, and the target bit is its sign.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::panel::{monthly_returns, CompanyId, FactorRow, FactorSeries, Month, PriceSeries};

/// Minimum months inside the regression window.
pub const MIN_WINDOW_MONTHS: usize = 24;
/// Minimum monthly returns inside the target year.
pub const MIN_TARGET_MONTHS: usize = 9;
/// Regression window length in civil years, ending at the target year.
pub const WINDOW_YEARS: i32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorModel {
    /// Market excess return only.
    Capm,
    /// Market, SMB and HML.
    Ff3,
}

impl FactorModel {
    pub fn n_factors(self) -> usize {
        match self {
            FactorModel::Capm => 1,
            FactorModel::Ff3 => 3,
        }
    }

    fn push_factors(self, row: &FactorRow, out: &mut Vec<f64>) {
        out.push(row.mkt_excess);
        if self == FactorModel::Ff3 {
            out.push(row.smb);
            out.push(row.hml);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub company: CompanyId,
    pub window_end_year: i32,
    /// Monthly intercept.
    pub alpha: f64,
    /// One loading per factor of the model, market first.
    pub betas: Vec<f64>,
    pub residuals: Vec<(Month, f64)>,
    pub n_months: usize,
}

/// OLS of monthly excess returns on the model's factors, with intercept.
///
/// Months of `excess` without a factor row are ignored.
pub fn ols_fit(
    company: &CompanyId,
    window_end_year: i32,
    excess: &[(Month, f64)],
    factors: &FactorSeries,
    model: FactorModel,
) -> Result<RegressionResult> {
    let p = model.n_factors() + 1;
    let mut design = Vec::with_capacity(excess.len() * p);
    let mut y = Vec::with_capacity(excess.len());
    let mut months = Vec::with_capacity(excess.len());
    for &(m, r) in excess {
        if let Some(row) = factors.get(m) {
            design.push(1.0);
            model.push_factors(row, &mut design);
            y.push(r);
            months.push(m);
        }
    }
    let n = y.len();
    if n < MIN_WINDOW_MONTHS {
        return Err(Error::InsufficientData {
            what: "months in regression window",
            required: MIN_WINDOW_MONTHS,
            actual: n,
        });
    }
    let coef = linalg::least_squares(&design, n, p, &y)?;
    let residuals = months
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let fitted: f64 = (0..p).map(|j| design[i * p + j] * coef[j]).sum();
            (m, y[i] - fitted)
        })
        .collect();
    Ok(RegressionResult {
        company: company.clone(),
        window_end_year,
        alpha: coef[0],
        betas: coef[1..].to_vec(),
        residuals,
        n_months: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetBit {
    pub company: CompanyId,
    pub year: i32,
    /// `annual_idio > 0`.
    pub value: bool,
    pub annual_idio: f64,
    pub alpha: f64,
    pub n_months: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum SkipReason {
    NoReturns,
    ShortWindow { months: usize },
    ShortTargetYear { months: usize },
    SingularFit,
    ZeroIdiosyncratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skip {
    pub company: CompanyId,
    pub year: i32,
    #[serde(flatten)]
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TargetRun {
    pub targets: Vec<TargetBit>,
    pub skipped: Vec<Skip>,
}

impl TargetRun {
    pub fn extend(&mut self, other: TargetRun) {
        self.targets.extend(other.targets);
        self.skipped.extend(other.skipped);
    }

    pub fn as_map(&self) -> BTreeMap<(CompanyId, i32), bool> {
        self.targets
            .iter()
            .map(|t| ((t.company.clone(), t.year), t.value))
            .collect()
    }
}

/// Monthly returns in excess of the risk-free rate; months without a factor
/// row are dropped.
pub fn excess_returns(series: &PriceSeries, factors: &FactorSeries) -> Result<Vec<(Month, f64)>> {
    Ok(monthly_returns(series)?
        .into_iter()
        .filter_map(|r| factors.get(r.month).map(|f| (r.month, r.value - f.rf)))
        .collect())
}

/// Target of one company for one year from its excess returns.
pub fn company_target(
    company: &CompanyId,
    excess: &[(Month, f64)],
    factors: &FactorSeries,
    model: FactorModel,
    year: i32,
) -> core::result::Result<TargetBit, SkipReason> {
    let start = Month { year: year - WINDOW_YEARS + 1, month: 1 };
    let end = Month { year, month: 12 };
    let lo = excess.partition_point(|(m, _)| *m < start);
    let hi = excess.partition_point(|(m, _)| *m <= end);
    let window = &excess[lo..hi];
    let in_year = window.iter().filter(|(m, _)| m.year == year).count();
    if in_year < MIN_TARGET_MONTHS {
        return Err(SkipReason::ShortTargetYear { months: in_year });
    }
    let fit = match ols_fit(company, year, window, factors, model) {
        Ok(fit) => fit,
        Err(Error::InsufficientData { actual, .. }) => {
            return Err(SkipReason::ShortWindow { months: actual })
        }
        Err(_) => return Err(SkipReason::SingularFit),
    };
    let year_months: Vec<f64> = fit
        .residuals
        .iter()
        .filter(|(m, _)| m.year == year)
        .map(|(_, e)| fit.alpha + e)
        .collect();
    if year_months.len() < MIN_TARGET_MONTHS {
        return Err(SkipReason::ShortTargetYear {
            months: year_months.len(),
        });
    }
    let annual_idio: f64 = year_months.iter().sum();
    if annual_idio == 0.0 {
        return Err(SkipReason::ZeroIdiosyncratic);
    }
    Ok(TargetBit {
        company: company.clone(),
        year,
        value: annual_idio > 0.0,
        annual_idio,
        alpha: fit.alpha,
        n_months: fit.n_months,
    })
}

/// Targets of every company for one year.
pub fn compute_targets(
    prices: &[PriceSeries],
    factors: &FactorSeries,
    model: FactorModel,
    year: i32,
) -> TargetRun {
    compute_targets_for_years(prices, factors, model, &[year])
}

/// Targets for several years, computing each company's returns once.
/// Output is ordered by company, then year.
pub fn compute_targets_for_years(
    prices: &[PriceSeries],
    factors: &FactorSeries,
    model: FactorModel,
    years: &[i32],
) -> TargetRun {
    let mut order: Vec<&PriceSeries> = prices.iter().collect();
    order.sort_by(|a, b| a.company().cmp(b.company()));
    let mut run = TargetRun::default();
    for series in order {
        run.extend(company_targets(series, factors, model, years));
    }
    run
}

/// All requested years for a single company.
pub fn company_targets(
    series: &PriceSeries,
    factors: &FactorSeries,
    model: FactorModel,
    years: &[i32],
) -> TargetRun {
    let mut run = TargetRun::default();
    let company = series.company();
    let excess = match excess_returns(series, factors) {
        Ok(e) => e,
        Err(_) => {
            run.skipped.extend(years.iter().map(|&year| Skip {
                company: company.clone(),
                year,
                reason: SkipReason::NoReturns,
            }));
            return run;
        }
    };
    for &year in years {
        match company_target(company, &excess, factors, model, year) {
            Ok(t) => run.targets.push(t),
            Err(reason) => run.skipped.push(Skip {
                company: company.clone(),
                year,
                reason,
            }),
        }
    }
    run
}
