//! Synthetic market with planted ESG effects.
//!
//! Each company-year gets a signal `s` built from its features. The true
//! annual idiosyncratic return is `scale * (steepness * s + L)` with `L`
//! standard logistic, so `P(target = 1) = sigmoid(steepness * s)`. It is
//! spread over the twelve months with zero-sum noise and added to a factor
//! model return, from which month-end prices follow.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use alloc::{format, string::ToString};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::CapBucket;
use crate::math;
use crate::panel::{days_in_month, CompanyId, Date, EsgScore, FactorRow, FactorSeries, FeatureRow, Month, PriceSeries};
use crate::seed;

pub const SECTORS: [&str; 10] = [
    "Energy",
    "Basic Materials",
    "Industrials",
    "Consumer Cyclicals",
    "Consumer Non-Cyclicals",
    "Financials",
    "Healthcare",
    "Technology",
    "Telecommunications",
    "Utilities",
];

pub const COUNTRIES: [&str; 15] = [
    "FR", "DE", "GB", "NL", "IT", "ES", "CH", "SE", "BE", "DK", "FI", "NO", "AT", "IE", "PT",
];

/// Additive contribution `size * (score - 0.5)` to the signal, restricted to
/// a sector and a cap bucket when given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEffect {
    pub feature: EsgScore,
    #[serde(default)]
    pub sector: Option<String>,
    #[serde(default = "all_bucket", with = "bucket_name")]
    pub cap_bucket: CapBucket,
    pub size: f64,
}

fn all_bucket() -> CapBucket {
    CapBucket::All
}

mod bucket_name {
    use super::CapBucket;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &CapBucket, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(b.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CapBucket, D::Error> {
        let name = alloc::string::String::deserialize(d)?;
        CapBucket::from_name(&name).ok_or_else(|| D::Error::custom("unknown cap bucket"))
    }
}

impl PlantedEffect {
    pub fn applies(&self, sector: &str, market_cap: f64) -> bool {
        self.sector.as_deref().is_none_or(|s| s == sector) && self.cap_bucket.contains(market_cap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_companies: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub effects: Vec<PlantedEffect>,
    /// Shortcut for an all-sector, all-cap effect of the controversy score.
    pub controversy_effect: f64,
    /// Scale of per-sector signal offsets (visible to benchmark features).
    pub sector_effect: f64,
    /// Signal per standard deviation of log market cap.
    pub size_effect: f64,
    /// Logistic link steepness applied to the signal.
    pub steepness: f64,
    /// Annual idiosyncratic return per unit of latent logit.
    pub idio_scale: f64,
    /// Common annual alpha added to every company.
    pub alpha: f64,
    /// Monthly volatility of the zero-sum within-year noise.
    pub idio_vol: f64,
    pub market_mean: f64,
    pub market_vol: f64,
    pub smb_vol: f64,
    pub hml_vol: f64,
    pub risk_free: f64,
    pub beta_mean: f64,
    pub beta_sd: f64,
    /// Standard deviation of SMB and HML loadings.
    pub style_beta_sd: f64,
    /// Share of companies with features in the first year; grows linearly to 1.
    pub coverage_start: f64,
    /// Per-score missingness in the first and last year, interpolated linearly.
    pub missing_start: f64,
    pub missing_end: f64,
    /// Year-to-year noise around each company's latent score.
    pub score_noise: f64,
    /// Redraws effect sizes, the size effect and sector offsets every year.
    pub yearly_rerandomize: bool,
    /// Price observations per month; the last one falls on the month end.
    pub obs_per_month: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let effect = |feature, cap_bucket, size| PlantedEffect {
            feature,
            sector: None,
            cap_bucket,
            size,
        };
        SynthConfig {
            n_companies: 2000,
            first_year: 2002,
            last_year: 2020,
            effects: vec![
                effect(EsgScore::Emissions, CapBucket::Large, 2.0),
                effect(EsgScore::ResourceUse, CapBucket::Large, 1.0),
                effect(EsgScore::ResourceUse, CapBucket::Small, -2.0),
                effect(EsgScore::Workforce, CapBucket::All, 1.0),
            ],
            controversy_effect: 1.5,
            sector_effect: 0.3,
            size_effect: 0.1,
            steepness: 1.0,
            idio_scale: 0.12,
            alpha: 0.0,
            idio_vol: 0.03,
            market_mean: 0.006,
            market_vol: 0.045,
            smb_vol: 0.025,
            hml_vol: 0.025,
            risk_free: 0.001,
            beta_mean: 1.0,
            beta_sd: 0.3,
            style_beta_sd: 0.2,
            coverage_start: 0.3,
            missing_start: 0.4,
            missing_end: 0.05,
            score_noise: 0.08,
            yearly_rerandomize: false,
            obs_per_month: 21,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Same market without any planted effect.
    pub fn null(&self) -> Self {
        SynthConfig {
            effects: Vec::new(),
            controversy_effect: 0.0,
            sector_effect: 0.0,
            size_effect: 0.0,
            alpha: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(format!("synth config: {msg}")));
        if self.n_companies == 0 {
            return bad("n_companies must be positive");
        }
        if self.first_year > self.last_year {
            return bad("first_year after last_year");
        }
        let vols = [self.market_vol, self.smb_vol, self.hml_vol, self.idio_vol, self.idio_scale];
        if vols.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("volatilities and idio_scale must be positive");
        }
        let shares = [self.coverage_start, self.missing_start, self.missing_end];
        if shares.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return bad("coverage and missingness must lie in [0, 1]");
        }
        if self.coverage_start == 0.0 && self.first_year == self.last_year {
            return bad("no company is ever covered");
        }
        if !(1..=28).contains(&self.obs_per_month) {
            return bad("obs_per_month must be in 1..=28");
        }
        if self.beta_sd < 0.0 || self.style_beta_sd < 0.0 || self.score_noise < 0.0 || self.steepness < 0.0 {
            return bad("dispersions must be non-negative");
        }
        if let Some(e) = self.effects.iter().find(|e| e.sector.as_deref().is_some_and(|s| !SECTORS.contains(&s))) {
            return bad(&format!("unknown sector {:?}", e.sector));
        }
        Ok(())
    }
}

/// True annual idiosyncratic return of a company-year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub company: CompanyId,
    pub year: i32,
    pub annual_idio_true: f64,
    pub bit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub companies: Vec<CompanyId>,
    /// Month of the first entry of each price path.
    pub start_month: Month,
    /// Month-end prices per company, aligned with `companies`.
    pub month_end_prices: Vec<Vec<f64>>,
    pub obs_per_month: usize,
    pub factors: FactorSeries,
    pub features: Vec<FeatureRow>,
    pub ground_truth: Vec<GroundTruth>,
}

impl SynthData {
    /// Price observations of one company: a single close at the end of the
    /// first month, then `obs_per_month` closes per month interpolated
    /// linearly between month ends.
    pub fn price_observations(&self, company: usize) -> Vec<(Date, f64)> {
        let path = &self.month_end_prices[company];
        let n = self.obs_per_month;
        let mut out = Vec::with_capacity(1 + (path.len() - 1) * n);
        let first = self.start_month;
        out.push((month_end(first), path[0]));
        for (k, w) in path.windows(2).enumerate() {
            let m = Month::from_index(first.index() + k as i64 + 1);
            let dim = days_in_month(m.year, m.month) as usize;
            for j in 1..=n {
                let day = (j * dim).div_ceil(n) as u8;
                let price = if j == n { w[1] } else { w[0] + (w[1] - w[0]) * j as f64 / n as f64 };
                out.push((Date { year: m.year, month: m.month, day }, price));
            }
        }
        out
    }

    pub fn price_series(&self, company: usize) -> Result<PriceSeries> {
        PriceSeries::new(self.companies[company].clone(), self.price_observations(company))
    }

    pub fn all_price_series(&self) -> Result<Vec<PriceSeries>> {
        (0..self.companies.len()).map(|c| self.price_series(c)).collect()
    }
}

fn month_end(m: Month) -> Date {
    Date {
        year: m.year,
        month: m.month,
        day: days_in_month(m.year, m.month),
    }
}

struct Company {
    id: CompanyId,
    sector: usize,
    l2: usize,
    l3: usize,
    country: usize,
    /// Latent mean of each score.
    quality: [f64; EsgScore::COUNT],
    log_cap: f64,
    coverage_draw: f64,
    beta: [f64; 3],
}

const LOG_CAP_MEDIAN: f64 = 21.82; // ln(3e9)
const LOG_CAP_SD: f64 = 1.2;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn draw_company(cfg: &SynthConfig, index: usize, rng: &mut ChaCha8Rng) -> Company {
    let country = rng.random_range(0..COUNTRIES.len());
    let id = CompanyId::new(&format!("{}{:010}", COUNTRIES[country], index)).expect("valid identifier");
    let mut quality = [0.0; EsgScore::COUNT];
    for q in quality.iter_mut().take(EsgScore::COUNT - 1) {
        *q = rng.random_range(0.05..0.95);
    }
    // Most companies have no controversy at all.
    quality[EsgScore::Controversy.index()] = if rng.random_bool(0.6) { 1.0 } else { rng.random_range(0.0..1.0) };
    Company {
        id,
        sector: rng.random_range(0..SECTORS.len()),
        l2: rng.random_range(0..2),
        l3: rng.random_range(0..2),
        country,
        quality,
        log_cap: LOG_CAP_MEDIAN + LOG_CAP_SD * normal(rng),
        coverage_draw: rng.random_range(0.0..1.0),
        beta: [
            cfg.beta_mean + cfg.beta_sd * normal(rng),
            cfg.style_beta_sd * normal(rng),
            cfg.style_beta_sd * normal(rng),
        ],
    }
}

fn lerp_year(cfg: &SynthConfig, year: i32, start: f64, end: f64) -> f64 {
    if cfg.first_year == cfg.last_year {
        return end;
    }
    let t = (year - cfg.first_year) as f64 / (cfg.last_year - cfg.first_year) as f64;
    start + (end - start) * t
}

/// Effects and sector offsets in force for one year.
struct YearSignal {
    effects: Vec<PlantedEffect>,
    sector_offsets: [f64; SECTORS.len()],
    size_effect: f64,
}

fn year_signals(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<YearSignal> {
    let mut effects = cfg.effects.clone();
    if cfg.controversy_effect != 0.0 {
        effects.push(PlantedEffect {
            feature: EsgScore::Controversy,
            sector: None,
            cap_bucket: CapBucket::All,
            size: cfg.controversy_effect,
        });
    }
    let mut offsets = [0.0; SECTORS.len()];
    offsets.iter_mut().for_each(|o| *o = cfg.sector_effect * normal(rng));
    (cfg.first_year..=cfg.last_year)
        .map(|_| {
            if !cfg.yearly_rerandomize {
                return YearSignal {
                    effects: effects.clone(),
                    sector_offsets: offsets,
                    size_effect: cfg.size_effect,
                };
            }
            let mut sector_offsets = [0.0; SECTORS.len()];
            sector_offsets.iter_mut().for_each(|o| *o = cfg.sector_effect * normal(rng));
            YearSignal {
                effects: effects
                    .iter()
                    .map(|e| PlantedEffect {
                        size: e.size * normal(rng),
                        ..e.clone()
                    })
                    .collect(),
                sector_offsets,
                size_effect: cfg.size_effect * normal(rng),
            }
        })
        .collect()
}

/// Standard logistic draw.
fn logistic(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    math::logit(u)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let root = cfg.seed;
    let mut setup = seed::rng(root, &[seed::STREAM_SYNTH, 0]);
    let companies: Vec<Company> = (0..cfg.n_companies).map(|i| draw_company(cfg, i, &mut setup)).collect();
    let signals = year_signals(cfg, &mut setup);

    // Five years of history before the first feature year, plus one month so
    // the first return is defined.
    let start_month = Month { year: cfg.first_year - 5, month: 1 }.pred();
    let n_months = ((cfg.last_year - cfg.first_year + 6) * 12) as usize;
    let mut frng = seed::rng(root, &[seed::STREAM_SYNTH, 1]);
    let mkt = Normal::new(cfg.market_mean - cfg.risk_free, cfg.market_vol).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let factor_rows: Vec<(Month, FactorRow)> = (1..=n_months)
        .map(|k| {
            let row = FactorRow {
                mkt_excess: mkt.sample(&mut frng),
                smb: cfg.smb_vol * normal(&mut frng),
                hml: cfg.hml_vol * normal(&mut frng),
                rf: cfg.risk_free,
            };
            (Month::from_index(start_month.index() + k as i64), row)
        })
        .collect();

    let mut features = Vec::new();
    let mut ground_truth = Vec::new();
    let mut month_end_prices = Vec::with_capacity(companies.len());
    for (ci, c) in companies.iter().enumerate() {
        let mut rng = seed::rng(root, &[seed::STREAM_SYNTH, 2, ci as u64]);
        let mut log_cap = c.log_cap;
        let mut idio: Vec<f64> = (0..n_months).map(|_| cfg.idio_vol * normal(&mut rng)).collect();
        for (year_offset, year) in (cfg.first_year - 5..=cfg.last_year).enumerate() {
            log_cap += 0.15 * normal(&mut rng);
            let market_cap = math::exp(log_cap);
            let mut signal = 0.0;
            if year >= cfg.first_year {
                let ys = &signals[(year - cfg.first_year) as usize];
                let mut scores = [None; EsgScore::COUNT];
                let missing = lerp_year(cfg, year, cfg.missing_start, cfg.missing_end);
                for (j, s) in scores.iter_mut().enumerate() {
                    let v = (c.quality[j] + cfg.score_noise * normal(&mut rng)).clamp(0.0, 1.0);
                    let v = if j == EsgScore::Controversy.index() && c.quality[j] == 1.0 { 1.0 } else { v };
                    let v = libm::round(v * 1e4) / 1e4;
                    if !rng.random_bool(missing) {
                        *s = Some(v);
                    }
                }
                signal += ys.sector_offsets[c.sector];
                signal += ys.size_effect * (log_cap - LOG_CAP_MEDIAN) / LOG_CAP_SD;
                for e in &ys.effects {
                    if let Some(x) = scores[e.feature.index()] {
                        if e.applies(SECTORS[c.sector], market_cap) {
                            signal += e.size * (x - 0.5);
                        }
                    }
                }
                let covered = c.coverage_draw <= lerp_year(cfg, year, cfg.coverage_start, 1.0);
                if covered {
                    features.push(FeatureRow {
                        company: c.id.clone(),
                        year,
                        scores,
                        market_cap: libm::round(market_cap),
                        country: COUNTRIES[c.country].into(),
                        sector_l1: SECTORS[c.sector].into(),
                        sector_l2: format!("{} {}", SECTORS[c.sector], ["A", "B"][c.l2]),
                        sector_l3: format!("{} {}{}", SECTORS[c.sector], ["A", "B"][c.l2], c.l3 + 1),
                    });
                }
            }
            let annual = cfg.alpha + cfg.idio_scale * (cfg.steepness * signal + logistic(&mut rng));
            // Months of this calendar year within the path (index 0 is the
            // December before the first return).
            let months = &mut idio[year_offset * 12..year_offset * 12 + 12];
            let mean = months.iter().sum::<f64>() / 12.0;
            months.iter_mut().for_each(|u| *u += annual / 12.0 - mean);
            if year >= cfg.first_year {
                ground_truth.push(GroundTruth {
                    company: c.id.clone(),
                    year,
                    annual_idio_true: annual,
                    bit: annual > 0.0,
                });
            }
        }
        let mut price = 10.0 + 90.0 * rng.random_range(0.0..1.0);
        let mut path = Vec::with_capacity(n_months + 1);
        path.push(price);
        for (k, (_, f)) in factor_rows.iter().enumerate() {
            let r = f.rf + c.beta[0] * f.mkt_excess + c.beta[1] * f.smb + c.beta[2] * f.hml + idio[k];
            price *= 1.0 + r.max(-0.95);
            path.push(price);
        }
        month_end_prices.push(path);
    }

    Ok(SynthData {
        companies: companies.into_iter().map(|c| c.id).collect(),
        start_month,
        month_end_prices,
        obs_per_month: cfg.obs_per_month,
        factors: FactorSeries::new(factor_rows)?,
        features,
        ground_truth,
    })
}
