use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::gbdt::{Ensemble, FeatureMatrix};
use crate::math;
use crate::seed;
use crate::metrics::simple_regression;
use crate::panel::{CategoricalColumn, EsgScore, FeatureSet, Panel, MARKET_CAP_COLUMN, N_FEATURES, SECTOR_L1_COLUMN};

use super::fdr::benjamini_hochberg;
use super::pdp::{pdp, subsample_rows, PDP_BACKGROUND_ROWS};

/// Market capitalisation bucket in euros.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CapBucket {
    Small,
    Mid,
    Large,
    All,
}

impl CapBucket {
    pub const SMALL_MAX: f64 = 2e9;
    pub const LARGE_MIN: f64 = 1e10;

    pub fn contains(self, market_cap: f64) -> bool {
        match self {
            CapBucket::Small => market_cap < Self::SMALL_MAX,
            CapBucket::Mid => (Self::SMALL_MAX..=Self::LARGE_MIN).contains(&market_cap),
            CapBucket::Large => market_cap > Self::LARGE_MIN,
            CapBucket::All => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CapBucket::Small => "small",
            CapBucket::Mid => "mid",
            CapBucket::Large => "large",
            CapBucket::All => "all",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [CapBucket::Small, CapBucket::Mid, CapBucket::Large, CapBucket::All]
            .into_iter()
            .find(|b| b.name() == name)
    }
}

/// How the p-value of a cell's slope is obtained.
#[derive(Debug, Clone, Copy)]
pub enum SlopeTest<'a> {
    /// t-test of the OLS slope through the PDP grid means.
    GridTTest,
    /// Half-sampling test: replicate models are fitted on company-level
    /// half samples of the training data (see [`half_sample`]); the standard
    /// error of the slope is the root mean square deviation of replicate
    /// slopes from the main slope, with `replicates` dof.
    Replicates(&'a [Ensemble]),
}

#[derive(Debug, Clone, Copy)]
pub struct MaterialityConfig<'a> {
    pub min_cell_samples: usize,
    pub max_background: usize,
    pub fdr: f64,
    pub seed: u64,
    pub test: SlopeTest<'a>,
}

impl Default for MaterialityConfig<'_> {
    fn default() -> Self {
        MaterialityConfig {
            min_cell_samples: 30,
            max_background: PDP_BACKGROUND_ROWS,
            fdr: 0.05,
            seed: 0,
            test: SlopeTest::GridTTest,
        }
    }
}

/// One (score, sector) cell; estimates are `None` for undersized cells.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialityCell {
    pub feature: EsgScore,
    pub sector: String,
    pub cap_bucket: CapBucket,
    /// Change of the mean predicted probability, in percentage points, from
    /// a score of 0 to a score of 1.
    pub slope_pct: Option<f64>,
    pub p_value: Option<f64>,
    pub n_background: usize,
    pub significant: bool,
}

const GRID_POINTS: usize = 11;

fn grid_slope(model: &Ensemble, feature: usize, grid: &[f64], background: &FeatureMatrix) -> Result<(f64, f64)> {
    let curve = pdp(model, feature, grid, background)?;
    match simple_regression(grid, &curve.mean_probability) {
        Ok(fit) => Ok((fit.slope, fit.slope_p)),
        Err(Error::DegenerateVariance) => Ok((0.0, 1.0)),
        Err(e) => Err(e),
    }
}

fn check_model(model: &Ensemble) -> Result<()> {
    if model.n_features() != N_FEATURES {
        return Err(Error::Precondition(
            "materiality needs a model over ESG and benchmark features".into(),
        ));
    }
    Ok(())
}

/// Materiality matrix of every ESG score against every level-1 sector,
/// restricted to `rows` of the panel falling in `cap_bucket`.
pub fn materiality(
    model: &Ensemble,
    panel: &Panel,
    rows: &[usize],
    cap_bucket: CapBucket,
    config: &MaterialityConfig<'_>,
) -> Result<Vec<MaterialityCell>> {
    check_model(model)?;
    if let SlopeTest::Replicates(reps) = config.test {
        if reps.len() < 2 {
            return Err(Error::InsufficientData {
                what: "replicate models",
                required: 2,
                actual: reps.len(),
            });
        }
        reps.iter().try_for_each(check_model)?;
    }
    let grid: Vec<f64> = (0..GRID_POINTS).map(|k| k as f64 / (GRID_POINTS - 1) as f64).collect();
    let sectors = panel.categories().labels(CategoricalColumn::SectorL1);
    let mut cells = Vec::with_capacity(sectors.len() * EsgScore::COUNT);
    for (code, sector) in sectors.iter().enumerate() {
        let members: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&i| {
                let r = panel.encoded_row(i);
                r[SECTOR_L1_COLUMN] == code as f64 && cap_bucket.contains(r[MARKET_CAP_COLUMN])
            })
            .collect();
        let n_background = members.len().min(config.max_background);
        let background = (members.len() >= config.min_cell_samples).then(|| {
            let pick = subsample_rows(members.len(), config.max_background, config.seed);
            let idx: Vec<usize> = pick.iter().map(|&k| members[k]).collect();
            panel.matrix(&idx, FeatureSet::EsgAndBenchmark)
        });
        for score in EsgScore::ALL {
            let (slope_pct, p_value) = match &background {
                None => (None, None),
                Some(bg) => {
                    let (slope, grid_p) = grid_slope(model, score.index(), &grid, bg)?;
                    let p = match config.test {
                        SlopeTest::GridTTest => grid_p,
                        SlopeTest::Replicates(reps) => replicate_p(slope, reps, score.index(), &grid, bg)?,
                    };
                    (Some(slope * 100.0), Some(p))
                }
            };
            cells.push(MaterialityCell {
                feature: score,
                sector: sector.clone(),
                cap_bucket,
                slope_pct,
                p_value,
                n_background,
                significant: false,
            });
        }
    }
    let tested: Vec<usize> = (0..cells.len()).filter(|&i| cells[i].p_value.is_some()).collect();
    let pvalues: Vec<f64> = tested.iter().filter_map(|&i| cells[i].p_value).collect();
    let flags = benjamini_hochberg(&pvalues, config.fdr)?;
    for (&i, flag) in tested.iter().zip(flags) {
        cells[i].significant = flag;
    }
    Ok(cells)
}

fn replicate_p(slope: f64, reps: &[Ensemble], feature: usize, grid: &[f64], bg: &FeatureMatrix) -> Result<f64> {
    let mut sq = 0.0;
    for m in reps {
        let d = grid_slope(m, feature, grid, bg)?.0 - slope;
        sq += d * d;
    }
    let r = reps.len() as f64;
    let se = math::sqrt(sq / r);
    Ok(if se > 0.0 {
        math::student_t_two_sided_p(slope / se, r)
    } else if slope == 0.0 {
        1.0
    } else {
        0.0
    })
}

/// Rows of `rows` belonging to a random half of their companies; replicate
/// `replicate` uses its own draw.
pub fn half_sample(panel: &Panel, rows: &[usize], root_seed: u64, replicate: usize) -> Vec<usize> {
    let mut companies: Vec<&str> = rows.iter().map(|&i| panel.company(i).as_str()).collect();
    companies.sort_unstable();
    companies.dedup();
    let mut rng = seed::rng(root_seed, &[seed::STREAM_REPLICATE, replicate as u64]);
    let keep: BTreeSet<&str> = index::sample(&mut rng, companies.len(), companies.len() / 2)
        .into_iter()
        .map(|k| companies[k])
        .collect();
    rows.iter().copied().filter(|&i| keep.contains(panel.company(i).as_str())).collect()
}
