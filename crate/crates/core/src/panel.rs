//! Company-year panel: identifiers, calendar types, price and factor series,
//! feature rows and the joined training panel.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbdt::{FeatureKind, FeatureMatrix};

/// ISIN-style company identifier: 12 ASCII alphanumerics.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CompanyId(String);

impl CompanyId {
    pub const LEN: usize = 12;

    pub fn new(isin: &str) -> Result<Self> {
        if isin.len() != Self::LEN || !isin.bytes().all(|b| b.is_ascii_alphanumeric()) {
            return Err(Error::InvalidInput(format!(
                "company id must be 12 alphanumeric characters, got {isin:?}"
            )));
        }
        Ok(CompanyId(isin.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for CompanyId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        CompanyId::new(&s)
    }
}

impl From<CompanyId> for String {
    fn from(id: CompanyId) -> String {
        id.0
    }
}

impl fmt::Display for CompanyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn is_leap(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

pub fn days_in_month(year: i32, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(year) => 29,
        _ => 28,
    }
}

/// Calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    pub year: i32,
    pub month: u8,
}

impl Month {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidInput(format!("month out of range: {month}")));
        }
        Ok(Month { year, month })
    }

    /// Months since year 0, January.
    pub fn index(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_index(index: i64) -> Self {
        Month {
            year: index.div_euclid(12) as i32,
            month: (index.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn succ(self) -> Self {
        Self::from_index(self.index() + 1)
    }

    pub fn pred(self) -> Self {
        Self::from_index(self.index() - 1)
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

fn parse_num<T: FromStr>(s: &str, what: &str) -> Result<T> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::InvalidInput(format!("bad {what}: {s:?}")));
    }
    s.parse()
        .map_err(|_| Error::InvalidInput(format!("bad {what}: {s:?}")))
}

impl FromStr for Month {
    type Err = Error;
    /// Parses `YYYY-MM`.
    fn from_str(s: &str) -> Result<Self> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| Error::InvalidInput(format!("expected YYYY-MM, got {s:?}")))?;
        if y.len() != 4 || m.len() != 2 {
            return Err(Error::InvalidInput(format!("expected YYYY-MM, got {s:?}")));
        }
        Month::new(parse_num(y, "year")?, parse_num(m, "month")?)
    }
}

impl Serialize for Month {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = <String as Deserialize>::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Calendar date (proleptic Gregorian).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Date {
    pub year: i32,
    pub month: u8,
    pub day: u8,
}

impl Date {
    pub fn new(year: i32, month: u8, day: u8) -> Result<Self> {
        Month::new(year, month)?;
        if day == 0 || day > days_in_month(year, month) {
            return Err(Error::InvalidInput(format!(
                "day out of range: {year:04}-{month:02}-{day:02}"
            )));
        }
        Ok(Date { year, month, day })
    }

    pub fn month(self) -> Month {
        Month {
            year: self.year,
            month: self.month,
        }
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

impl FromStr for Date {
    type Err = Error;
    /// Parses ISO-8601 `YYYY-MM-DD`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.splitn(3, '-');
        let (y, m, d) = match (parts.next(), parts.next(), parts.next()) {
            (Some(y), Some(m), Some(d)) if y.len() == 4 && m.len() == 2 && d.len() == 2 => {
                (y, m, d)
            }
            _ => {
                return Err(Error::InvalidInput(format!(
                    "expected YYYY-MM-DD, got {s:?}"
                )))
            }
        };
        Date::new(
            parse_num(y, "year")?,
            parse_num(m, "month")?,
            parse_num(d, "day")?,
        )
    }
}

/// Adjusted daily closes of one company, sorted by date.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    company: CompanyId,
    observations: Vec<(Date, f64)>,
}

impl PriceSeries {
    /// Sorts the observations and checks dates are unique and prices positive.
    pub fn new(company: CompanyId, mut observations: Vec<(Date, f64)>) -> Result<Self> {
        if let Some((date, price)) = observations
            .iter()
            .find(|(_, p)| !(p.is_finite() && *p > 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "{company}: non-positive price {price} on {date}"
            )));
        }
        observations.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = observations.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateKey(format!("({company}, {})", w[0].0)));
        }
        Ok(PriceSeries {
            company,
            observations,
        })
    }

    pub fn company(&self) -> &CompanyId {
        &self.company
    }

    pub fn observations(&self) -> &[(Date, f64)] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Simple return of one calendar month.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonthlyReturn {
    pub month: Month,
    pub value: f64,
}

/// Month-over-month simple returns from the last close of each calendar
/// month. A month without observations yields no return for itself nor for
/// the month after it.
pub fn monthly_returns(series: &PriceSeries) -> Result<Vec<MonthlyReturn>> {
    let mut last_close: Vec<(Month, f64)> = Vec::new();
    for &(date, price) in series.observations() {
        let month = date.month();
        match last_close.last_mut() {
            Some((m, p)) if *m == month => *p = price,
            _ => last_close.push((month, price)),
        }
    }
    if last_close.len() < 2 {
        return Err(Error::InsufficientData {
            what: "monthly returns (populated months)",
            required: 2,
            actual: last_close.len(),
        });
    }
    Ok(last_close
        .windows(2)
        .filter(|w| w[1].0 == w[0].0.succ())
        .map(|w| MonthlyReturn {
            month: w[1].0,
            value: w[1].1 / w[0].1 - 1.0,
        })
        .collect())
}

/// Monthly factor returns, decimal fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorRow {
    pub mkt_excess: f64,
    pub smb: f64,
    pub hml: f64,
    pub rf: f64,
}

/// Contiguous run of monthly factor rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSeries {
    rows: BTreeMap<Month, FactorRow>,
}

impl FactorSeries {
    pub fn new(rows: impl IntoIterator<Item = (Month, FactorRow)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (m, row) in rows {
            if map.insert(m, row).is_some() {
                return Err(Error::DuplicateKey(format!("factor month {m}")));
            }
        }
        let months: Vec<Month> = map.keys().copied().collect();
        if let Some(w) = months.windows(2).find(|w| w[1] != w[0].succ()) {
            return Err(Error::InvalidInput(format!(
                "factor months not contiguous between {} and {}",
                w[0], w[1]
            )));
        }
        Ok(FactorSeries { rows: map })
    }

    pub fn get(&self, month: Month) -> Option<&FactorRow> {
        self.rows.get(&month)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Month, &FactorRow)> {
        self.rows.iter().map(|(m, r)| (*m, r))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn first_month(&self) -> Option<Month> {
        self.rows.keys().next().copied()
    }

    pub fn last_month(&self) -> Option<Month> {
        self.rows.keys().next_back().copied()
    }
}

/// The ten pillar scores followed by the controversy score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EsgScore {
    ResourceUse,
    Emissions,
    Innovation,
    Workforce,
    HumanRights,
    Community,
    ProductResponsibility,
    Management,
    Shareholders,
    CsrStrategy,
    Controversy,
}

impl EsgScore {
    pub const COUNT: usize = 11;

    pub const ALL: [EsgScore; Self::COUNT] = [
        EsgScore::ResourceUse,
        EsgScore::Emissions,
        EsgScore::Innovation,
        EsgScore::Workforce,
        EsgScore::HumanRights,
        EsgScore::Community,
        EsgScore::ProductResponsibility,
        EsgScore::Management,
        EsgScore::Shareholders,
        EsgScore::CsrStrategy,
        EsgScore::Controversy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EsgScore::ResourceUse => "resource_use",
            EsgScore::Emissions => "emissions",
            EsgScore::Innovation => "innovation",
            EsgScore::Workforce => "workforce",
            EsgScore::HumanRights => "human_rights",
            EsgScore::Community => "community",
            EsgScore::ProductResponsibility => "product_responsibility",
            EsgScore::Management => "management",
            EsgScore::Shareholders => "shareholders",
            EsgScore::CsrStrategy => "csr_strategy",
            EsgScore::Controversy => "controversy",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// Features of one company for one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub company: CompanyId,
    pub year: i32,
    /// Indexed by [`EsgScore::index`]; `None` when not reported.
    pub scores: [Option<f64>; EsgScore::COUNT],
    /// Euros.
    pub market_cap: f64,
    pub country: String,
    pub sector_l1: String,
    pub sector_l2: String,
    pub sector_l3: String,
}

impl FeatureRow {
    pub fn validate(&self) -> Result<()> {
        for (score, value) in EsgScore::ALL.iter().zip(self.scores.iter()) {
            if let Some(v) = value {
                if !(0.0..=1.0).contains(v) {
                    return Err(Error::InvalidInput(format!(
                        "{} {}: {} = {v} outside [0, 1]",
                        self.company,
                        self.year,
                        score.name()
                    )));
                }
            }
        }
        if !(self.market_cap.is_finite() && self.market_cap > 0.0) {
            return Err(Error::InvalidInput(format!(
                "{} {}: market_cap must be positive, got {}",
                self.company, self.year, self.market_cap
            )));
        }
        Ok(())
    }

    pub fn score(&self, which: EsgScore) -> Option<f64> {
        self.scores[which.index()]
    }

    pub fn categorical(&self, column: CategoricalColumn) -> &str {
        match column {
            CategoricalColumn::Country => &self.country,
            CategoricalColumn::SectorL1 => &self.sector_l1,
            CategoricalColumn::SectorL2 => &self.sector_l2,
            CategoricalColumn::SectorL3 => &self.sector_l3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CategoricalColumn {
    Country,
    SectorL1,
    SectorL2,
    SectorL3,
}

impl CategoricalColumn {
    pub const ALL: [CategoricalColumn; 4] = [
        CategoricalColumn::Country,
        CategoricalColumn::SectorL1,
        CategoricalColumn::SectorL2,
        CategoricalColumn::SectorL3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CategoricalColumn::Country => "country",
            CategoricalColumn::SectorL1 => "sector_l1",
            CategoricalColumn::SectorL2 => "sector_l2",
            CategoricalColumn::SectorL3 => "sector_l3",
        }
    }
}

/// Column of the full model feature vector.
pub const N_FEATURES: usize = 16;
pub const MARKET_CAP_COLUMN: usize = 11;
/// First column of the four categorical features.
pub const CATEGORICAL_OFFSET: usize = 12;
pub const SECTOR_L1_COLUMN: usize = 13;

/// Names of the model features in column order.
pub fn feature_names() -> [&'static str; N_FEATURES] {
    let mut names = [""; N_FEATURES];
    for s in EsgScore::ALL {
        names[s.index()] = s.name();
    }
    names[MARKET_CAP_COLUMN] = "market_cap";
    for (i, c) in CategoricalColumn::ALL.iter().enumerate() {
        names[CATEGORICAL_OFFSET + i] = c.name();
    }
    names
}

/// Which columns a model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    EsgAndBenchmark,
    BenchmarkOnly,
}

impl FeatureSet {
    pub fn columns(self) -> &'static [usize] {
        const ALL: [usize; N_FEATURES] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15];
        match self {
            FeatureSet::EsgAndBenchmark => &ALL,
            FeatureSet::BenchmarkOnly => &ALL[EsgScore::COUNT..],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::EsgAndBenchmark => "esg_and_benchmark",
            FeatureSet::BenchmarkOnly => "benchmark_only",
        }
    }
}

/// Ordered feature description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    /// Schema of the full 16-column feature vector.
    pub fn full() -> Self {
        let features = feature_names()
            .iter()
            .enumerate()
            .map(|(i, name)| FeatureSpec {
                name: (*name).to_string(),
                kind: if i >= CATEGORICAL_OFFSET {
                    FeatureKind::Categorical
                } else {
                    FeatureKind::Numeric
                },
            })
            .collect();
        FeatureSchema { features }
    }

    pub fn select(&self, columns: &[usize]) -> Self {
        FeatureSchema {
            features: columns.iter().map(|&c| self.features[c].clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Dictionary encoding of the categorical columns: a category's code is its
/// rank among the sorted distinct labels seen when the registry was built.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CategoryRegistry {
    pub country: Vec<String>,
    pub sector_l1: Vec<String>,
    pub sector_l2: Vec<String>,
    pub sector_l3: Vec<String>,
}

impl CategoryRegistry {
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a FeatureRow>) -> Self {
        let mut sets: [BTreeSet<&str>; 4] = Default::default();
        for row in rows {
            for (set, col) in sets.iter_mut().zip(CategoricalColumn::ALL) {
                set.insert(row.categorical(col));
            }
        }
        let [c, l1, l2, l3] = sets.map(|s| s.into_iter().map(String::from).collect());
        CategoryRegistry {
            country: c,
            sector_l1: l1,
            sector_l2: l2,
            sector_l3: l3,
        }
    }

    pub fn labels(&self, column: CategoricalColumn) -> &[String] {
        match column {
            CategoricalColumn::Country => &self.country,
            CategoricalColumn::SectorL1 => &self.sector_l1,
            CategoricalColumn::SectorL2 => &self.sector_l2,
            CategoricalColumn::SectorL3 => &self.sector_l3,
        }
    }

    pub fn code(&self, column: CategoricalColumn, label: &str) -> Option<u32> {
        self.labels(column)
            .binary_search_by(|l| l.as_str().cmp(label))
            .ok()
            .map(|i| i as u32)
    }

    /// Encodes a row into the 16-column numeric vector; missing scores and
    /// unknown categories become NaN.
    pub fn encode(&self, row: &FeatureRow) -> [f64; N_FEATURES] {
        let mut out = [f64::NAN; N_FEATURES];
        for (o, s) in out.iter_mut().zip(row.scores.iter()) {
            *o = s.unwrap_or(f64::NAN);
        }
        out[MARKET_CAP_COLUMN] = row.market_cap;
        for (i, col) in CategoricalColumn::ALL.into_iter().enumerate() {
            out[CATEGORICAL_OFFSET + i] = self
                .code(col, row.categorical(col))
                .map_or(f64::NAN, |c| c as f64);
        }
        out
    }
}

/// One training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: FeatureRow,
    pub target: bool,
}

/// Joined company-year panel, sorted by (company, year).
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    samples: Vec<Sample>,
    encoded: Vec<[f64; N_FEATURES]>,
    schema: FeatureSchema,
    categories: CategoryRegistry,
}

/// Result of [`build_panel`].
#[derive(Debug, Clone)]
pub struct PanelBuild {
    pub panel: Panel,
    /// Feature rows without a matching target.
    pub dropped: usize,
}

/// Inner join of feature rows and target bits on (company, year).
pub fn build_panel(
    features: Vec<FeatureRow>,
    targets: &BTreeMap<(CompanyId, i32), bool>,
) -> Result<PanelBuild> {
    let mut seen = BTreeSet::new();
    for row in &features {
        row.validate()?;
        if !seen.insert((row.company.clone(), row.year)) {
            return Err(Error::DuplicateKey(format!("({}, {})", row.company, row.year)));
        }
    }
    let categories = CategoryRegistry::from_rows(&features);
    let total = features.len();
    let mut samples: Vec<Sample> = features
        .into_iter()
        .filter_map(|row| {
            targets
                .get(&(row.company.clone(), row.year))
                .map(|&target| Sample {
                    features: row,
                    target,
                })
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let dropped = total - samples.len();
    samples.sort_by(|a, b| {
        (&a.features.company, a.features.year).cmp(&(&b.features.company, b.features.year))
    });
    Ok(PanelBuild {
        panel: Panel::from_parts(samples, categories),
        dropped,
    })
}

impl Panel {
    fn from_parts(samples: Vec<Sample>, categories: CategoryRegistry) -> Self {
        let encoded = samples.iter().map(|s| categories.encode(&s.features)).collect();
        Panel {
            samples,
            encoded,
            schema: FeatureSchema::full(),
            categories,
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn categories(&self) -> &CategoryRegistry {
        &self.categories
    }

    pub fn encoded_row(&self, index: usize) -> &[f64; N_FEATURES] {
        &self.encoded[index]
    }

    pub fn year(&self, index: usize) -> i32 {
        self.samples[index].features.year
    }

    pub fn company(&self, index: usize) -> &CompanyId {
        &self.samples[index].features.company
    }

    /// Sorted distinct companies.
    pub fn companies(&self) -> Vec<&CompanyId> {
        let mut out: Vec<&CompanyId> = self.samples.iter().map(|s| &s.features.company).collect();
        out.dedup();
        out
    }

    /// Sorted distinct years.
    pub fn years(&self) -> Vec<i32> {
        let set: BTreeSet<i32> = self.samples.iter().map(|s| s.features.year).collect();
        set.into_iter().collect()
    }

    /// Indices of samples in the given year.
    pub fn indices_in_year(&self, year: i32) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.year(i) == year).collect()
    }

    /// Dense matrix of the selected rows restricted to a feature set.
    pub fn matrix(&self, indices: &[usize], set: FeatureSet) -> FeatureMatrix {
        let cols = set.columns();
        let mut values = Vec::with_capacity(indices.len() * cols.len());
        for &i in indices {
            let row = &self.encoded[i];
            values.extend(cols.iter().map(|&c| row[c]));
        }
        let schema = self.schema.select(cols);
        FeatureMatrix::new(schema, values).expect("panel rows match the schema")
    }

    /// Targets as 0.0 / 1.0.
    pub fn labels(&self, indices: &[usize]) -> Vec<f64> {
        indices
            .iter()
            .map(|&i| if self.samples[i].target { 1.0 } else { 0.0 })
            .collect()
    }

    /// Keeps only samples satisfying the predicate; the category registry is kept.
    pub fn filter(&self, mut keep: impl FnMut(&Sample) -> bool) -> Panel {
        let samples = self.samples.iter().filter(|s| keep(s)).cloned().collect();
        Panel::from_parts(samples, self.categories.clone())
    }
}
