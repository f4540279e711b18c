//! CSV and JSON file formats. Readers report the offending line; writers
//! replace their target atomically.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use alphabit_core::explain::MaterialityCell;
use alphabit_core::factor::{Skip, SkipReason, TargetBit};
use alphabit_core::gbdt::Hyperparams;
use alphabit_core::panel::{
    CompanyId, Date, EsgScore, FactorRow, FactorSeries, FeatureRow, FeatureSet, Month, PriceSeries,
};
use alphabit_core::splits::Scheme;
use alphabit_core::synth::SynthData;
use alphabit_core::tuning::SearchRecord;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{AppError, Result};

pub const PRICES_HEADER: &[&str] = &["isin", "date", "close"];
pub const FACTORS_HEADER: &[&str] = &["month", "mkt_excess", "smb", "hml", "rf"];
pub const FEATURES_HEADER: &[&str] = &[
    "isin",
    "year",
    "resource_use",
    "emissions",
    "innovation",
    "workforce",
    "human_rights",
    "community",
    "product_responsibility",
    "management",
    "shareholders",
    "csr_strategy",
    "controversy",
    "market_cap",
    "country",
    "sector_l1",
    "sector_l2",
    "sector_l3",
];
pub const TARGETS_HEADER: &[&str] = &["isin", "year", "target", "annual_idio", "alpha", "n_months"];
pub const SKIPPED_HEADER: &[&str] = &["isin", "year", "reason", "months"];
pub const SEARCH_HEADER: &[&str] = &[
    "trial",
    "scheme",
    "test_year",
    "feature_set",
    "val_logloss",
    "test_logloss",
    "test_balanced_accuracy",
    "params_json",
];
pub const SHAP_HEADER: &[&str] = &["isin", "year", "feature", "phi", "base", "logit"];
pub const MATERIALITY_HEADER: &[&str] = &["feature", "sector", "cap_bucket", "slope_pct", "p_value", "significant"];
pub const PDP_HEADER: &[&str] = &["feature", "grid_value", "mean_probability"];

/// Writes through a temporary file in the target directory, then renames it
/// over `path`.
pub fn atomic_write(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(AppError::io(path, e));
    }
    Ok(())
}

/// Writes CSV rows under `header`.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    atomic_write(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(header)?;
        for r in rows {
            csv.write_record(r)?;
        }
        csv.flush()?;
        Ok(())
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    atomic_write(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::parse(path, e.line() as u64, e.to_string()))
}

/// Reads a CSV file with an exact header, passing each record and its line.
fn read_csv(path: &Path, header: &[&str], mut row: impl FnMut(&csv::StringRecord, u64) -> Result<()>) -> Result<()> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let found = reader.headers().map_err(|e| AppError::parse(path, 1, e.to_string()))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(AppError::parse(
            path,
            1,
            format!("expected header `{}`, found `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            AppError::parse(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        row(&record, line)?;
    }
    Ok(())
}

struct Fields<'a> {
    path: &'a Path,
    line: u64,
    record: &'a csv::StringRecord,
}

impl Fields<'_> {
    fn raw(&self, i: usize) -> &str {
        self.record.get(i).unwrap_or("")
    }

    fn err(&self, msg: impl Into<String>) -> AppError {
        AppError::parse(self.path, self.line, msg)
    }

    fn parse<T: std::str::FromStr>(&self, i: usize, what: &str) -> Result<T> {
        let s = self.raw(i).trim();
        s.parse().map_err(|_| self.err(format!("invalid {what} `{s}`")))
    }

    fn number(&self, i: usize, what: &str) -> Result<f64> {
        let v: f64 = self.parse(i, what)?;
        if !v.is_finite() {
            return Err(self.err(format!("{what} must be finite")));
        }
        Ok(v)
    }

    fn company(&self, i: usize) -> Result<CompanyId> {
        CompanyId::new(self.raw(i).trim()).map_err(|e| self.err(e.to_string()))
    }
}

pub fn read_prices(path: &Path) -> Result<Vec<PriceSeries>> {
    let mut by_company: BTreeMap<CompanyId, Vec<(Date, f64, u64)>> = BTreeMap::new();
    read_csv(path, PRICES_HEADER, |record, line| {
        let f = Fields { path, line, record };
        let company = f.company(0)?;
        let date: Date = f.parse(1, "date")?;
        let close = f.number(2, "close")?;
        if close <= 0.0 {
            return Err(f.err(format!("close must be positive, got {close}")));
        }
        by_company.entry(company).or_default().push((date, close, line));
        Ok(())
    })?;
    by_company
        .into_iter()
        .map(|(company, mut obs)| {
            obs.sort_by(|a, b| a.0.cmp(&b.0).then(a.2.cmp(&b.2)));
            if let Some(w) = obs.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(AppError::parse(path, w[1].2, format!("duplicate key ({company}, {})", w[1].0)));
            }
            PriceSeries::new(company, obs.into_iter().map(|(d, p, _)| (d, p)).collect()).map_err(AppError::data)
        })
        .collect()
}

/// Streams the daily prices of a synthetic market.
pub fn write_synth_prices(path: &Path, data: &SynthData) -> Result<()> {
    atomic_write(path, |w| {
        writeln!(w, "{}", PRICES_HEADER.join(","))?;
        for (c, company) in data.companies.iter().enumerate() {
            for (date, close) in data.price_observations(c) {
                writeln!(w, "{company},{date},{close}")?;
            }
        }
        Ok(())
    })
}

pub fn write_prices(path: &Path, series: &[PriceSeries]) -> Result<()> {
    write_csv(
        path,
        PRICES_HEADER,
        series.iter().flat_map(|s| {
            s.observations()
                .iter()
                .map(move |(d, p)| vec![s.company().to_string(), d.to_string(), p.to_string()])
        }),
    )
}

pub fn read_factors(path: &Path) -> Result<FactorSeries> {
    let mut rows = Vec::new();
    read_csv(path, FACTORS_HEADER, |record, line| {
        let f = Fields { path, line, record };
        let month: Month = f.parse(0, "month")?;
        rows.push((
            month,
            FactorRow {
                mkt_excess: f.number(1, "mkt_excess")?,
                smb: f.number(2, "smb")?,
                hml: f.number(3, "hml")?,
                rf: f.number(4, "rf")?,
            },
        ));
        Ok(())
    })?;
    FactorSeries::new(rows).map_err(AppError::data)
}

pub fn write_factors(path: &Path, factors: &FactorSeries) -> Result<()> {
    write_csv(
        path,
        FACTORS_HEADER,
        factors.iter().map(|(m, r)| {
            vec![m.to_string(), r.mkt_excess.to_string(), r.smb.to_string(), r.hml.to_string(), r.rf.to_string()]
        }),
    )
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureRow>> {
    let mut rows = Vec::new();
    read_csv(path, FEATURES_HEADER, |record, line| {
        let f = Fields { path, line, record };
        let mut scores = [None; EsgScore::COUNT];
        for (j, s) in scores.iter_mut().enumerate() {
            if !f.raw(2 + j).trim().is_empty() {
                *s = Some(f.number(2 + j, EsgScore::ALL[j].name())?);
            }
        }
        let text = |i: usize| -> Result<String> {
            let s = f.raw(i).trim();
            if s.is_empty() {
                return Err(f.err(format!("empty {}", FEATURES_HEADER[i])));
            }
            Ok(s.to_string())
        };
        let row = FeatureRow {
            company: f.company(0)?,
            year: f.parse(1, "year")?,
            scores,
            market_cap: f.number(13, "market_cap")?,
            country: text(14)?,
            sector_l1: text(15)?,
            sector_l2: text(16)?,
            sector_l3: text(17)?,
        };
        row.validate().map_err(|e| f.err(e.to_string()))?;
        rows.push(row);
        Ok(())
    })?;
    Ok(rows)
}

pub fn write_features(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    write_csv(
        path,
        FEATURES_HEADER,
        rows.iter().map(|r| {
            let mut out = vec![r.company.to_string(), r.year.to_string()];
            out.extend(r.scores.iter().map(|s| s.map_or(String::new(), |v| v.to_string())));
            out.extend([
                r.market_cap.to_string(),
                r.country.clone(),
                r.sector_l1.clone(),
                r.sector_l2.clone(),
                r.sector_l3.clone(),
            ]);
            out
        }),
    )
}

pub fn write_targets(path: &Path, targets: &[TargetBit]) -> Result<()> {
    write_csv(
        path,
        TARGETS_HEADER,
        targets.iter().map(|t| {
            vec![
                t.company.to_string(),
                t.year.to_string(),
                u8::from(t.value).to_string(),
                t.annual_idio.to_string(),
                t.alpha.to_string(),
                t.n_months.to_string(),
            ]
        }),
    )
}

pub fn read_targets(path: &Path) -> Result<Vec<TargetBit>> {
    let mut out = Vec::new();
    read_csv(path, TARGETS_HEADER, |record, line| {
        let f = Fields { path, line, record };
        let value = match f.raw(2).trim() {
            "0" => false,
            "1" => true,
            other => return Err(f.err(format!("target must be 0 or 1, got `{other}`"))),
        };
        out.push(TargetBit {
            company: f.company(0)?,
            year: f.parse(1, "year")?,
            value,
            annual_idio: f.number(3, "annual_idio")?,
            alpha: f.number(4, "alpha")?,
            n_months: f.parse(5, "n_months")?,
        });
        Ok(())
    })?;
    Ok(out)
}

fn skip_fields(reason: &SkipReason) -> (&'static str, String) {
    match reason {
        SkipReason::NoReturns => ("no_returns", String::new()),
        SkipReason::ShortWindow { months } => ("short_window", months.to_string()),
        SkipReason::ShortTargetYear { months } => ("short_target_year", months.to_string()),
        SkipReason::SingularFit => ("singular_fit", String::new()),
        SkipReason::ZeroIdiosyncratic => ("zero_idiosyncratic", String::new()),
    }
}

pub fn write_skipped(path: &Path, skipped: &[Skip]) -> Result<()> {
    write_csv(
        path,
        SKIPPED_HEADER,
        skipped.iter().map(|s| {
            let (reason, months) = skip_fields(&s.reason);
            vec![s.company.to_string(), s.year.to_string(), reason.to_string(), months]
        }),
    )
}

/// One row of a search-records file.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchRow {
    pub trial: usize,
    pub scheme: Scheme,
    pub test_year: i32,
    pub feature_set: FeatureSet,
    pub val_logloss: f64,
    pub test_logloss: f64,
    pub test_balanced_accuracy: f64,
    pub params: Hyperparams,
}

pub fn write_search_records(path: &Path, records: &[SearchRecord]) -> Result<()> {
    let rows = records
        .iter()
        .map(|r| {
            Ok(vec![
                r.trial.to_string(),
                r.scheme.name().to_string(),
                r.test_year.to_string(),
                r.feature_set.name().to_string(),
                r.val_logloss.to_string(),
                r.test_logloss.to_string(),
                r.test_balanced_accuracy.to_string(),
                serde_json::to_string(&r.params).map_err(AppError::runtime)?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(path, SEARCH_HEADER, rows)
}

fn enum_from_name<T: DeserializeOwned>(f: &Fields<'_>, i: usize, what: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(f.raw(i).trim().to_string()))
        .map_err(|_| f.err(format!("invalid {what} `{}`", f.raw(i))))
}

pub fn read_search_records(path: &Path) -> Result<Vec<SearchRow>> {
    let mut out = Vec::new();
    read_csv(path, SEARCH_HEADER, |record, line| {
        let f = Fields { path, line, record };
        out.push(SearchRow {
            trial: f.parse(0, "trial")?,
            scheme: enum_from_name(&f, 1, "scheme")?,
            test_year: f.parse(2, "test_year")?,
            feature_set: enum_from_name(&f, 3, "feature_set")?,
            val_logloss: f.number(4, "val_logloss")?,
            test_logloss: f.number(5, "test_logloss")?,
            test_balanced_accuracy: f.number(6, "test_balanced_accuracy")?,
            params: serde_json::from_str(f.raw(7)).map_err(|e| f.err(format!("invalid params_json: {e}")))?,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn write_materiality(path: &Path, cells: &[MaterialityCell]) -> Result<()> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    write_csv(
        path,
        MATERIALITY_HEADER,
        cells.iter().map(|c| {
            vec![
                c.feature.name().to_string(),
                c.sector.clone(),
                c.cap_bucket.name().to_string(),
                opt(c.slope_pct),
                opt(c.p_value),
                c.significant.to_string(),
            ]
        }),
    )
}

/// Path of the file holding one search.
pub fn search_records_path(dir: &Path, scheme: Scheme, year: i32, set: FeatureSet) -> PathBuf {
    dir.join("search").join(format!("{}_{}_{}.csv", scheme.name(), year, set.name()))
}
