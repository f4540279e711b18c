use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::gbdt::{Ensemble, FeatureKind, FeatureMatrix, Node, Tree};
use crate::math;
use crate::metrics::quantile_sorted;
use crate::panel::{EsgScore, FeatureSchema};
use crate::seed;

/// Default background size for partial dependence.
pub const PDP_BACKGROUND_ROWS: usize = 2000;

/// Mean predicted probability as one feature is forced across a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PdpCurve {
    pub feature: usize,
    pub name: String,
    pub grid: Vec<f64>,
    pub mean_probability: Vec<f64>,
    pub n_background: usize,
}

/// Sorted indices of at most `max_rows` of `n` rows, drawn without replacement.
pub fn subsample_rows(n: usize, max_rows: usize, root_seed: u64) -> Vec<usize> {
    if n <= max_rows {
        return (0..n).collect();
    }
    let mut rng = seed::rng(root_seed, &[seed::STREAM_PDP]);
    let mut rows = index::sample(&mut rng, n, max_rows).into_vec();
    rows.sort_unstable();
    rows
}

/// Grid for a feature: 11 points on `[0, 1]` for ESG scores, observed
/// deciles for other numeric features, every observed code for categoricals.
pub fn default_grid(schema: &FeatureSchema, feature: usize, background: &FeatureMatrix) -> Vec<f64> {
    let spec = &schema.features[feature];
    let observed = || (0..background.n_rows()).map(|i| background.value(i, feature)).filter(|v| !v.is_nan());
    match spec.kind {
        FeatureKind::Categorical => {
            let codes: BTreeSet<u64> = observed().map(|v| v as u64).collect();
            codes.into_iter().map(|c| c as f64).collect()
        }
        FeatureKind::Numeric if EsgScore::from_name(&spec.name).is_some() => {
            (0..=10).map(|k| k as f64 / 10.0).collect()
        }
        FeatureKind::Numeric => {
            let mut values: Vec<f64> = observed().collect();
            if values.is_empty() {
                return Vec::new();
            }
            values.sort_by(f64::total_cmp);
            let mut grid: Vec<f64> = (1..10).map(|k| quantile_sorted(&values, k as f64 / 10.0)).collect();
            grid.dedup();
            grid
        }
    }
}

pub fn pdp(model: &Ensemble, feature: usize, grid: &[f64], background: &FeatureMatrix) -> Result<PdpCurve> {
    if background.n_rows() == 0 {
        return Err(Error::EmptyBackground);
    }
    if feature >= model.n_features() || background.n_cols() != model.n_features() {
        return Err(Error::SizeMismatch {
            expected: model.n_features(),
            actual: background.n_cols(),
        });
    }
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("PDP grid must be non-empty and strictly increasing".into()));
    }
    let mut sums = vec![0.0; grid.len()];
    let mut logits = vec![0.0; grid.len()];
    let mut scratch = Vec::new();
    for r in background.rows() {
        grid_logits(model, r, feature, grid, &mut logits, &mut scratch);
        for (s, &z) in sums.iter_mut().zip(&logits) {
            *s += math::sigmoid(z);
        }
    }
    let n = background.n_rows() as f64;
    let mean_probability = sums.into_iter().map(|s| s / n).collect();
    Ok(PdpCurve {
        feature,
        name: model.feature_name(feature).into(),
        grid: grid.to_vec(),
        mean_probability,
        n_background: background.n_rows(),
    })
}

/// Logits of `row` with `feature` set to each grid value. Each tree is walked
/// once, branching only at splits on `feature`; trees are summed in order so
/// the result equals predicting every modified row separately.
fn grid_logits(model: &Ensemble, row: &[f64], feature: usize, grid: &[f64], out: &mut [f64], scratch: &mut Vec<usize>) {
    out.iter_mut().for_each(|z| *z = model.base_score);
    for tree in &model.trees {
        scratch.clear();
        scratch.extend(0..grid.len());
        walk(tree, 0, row, feature, grid, scratch, out);
    }
}

fn walk(tree: &Tree, mut node: usize, row: &[f64], feature: usize, grid: &[f64], points: &[usize], out: &mut [f64]) {
    loop {
        match &tree.nodes[node] {
            Node::Leaf { value, .. } => {
                points.iter().for_each(|&g| out[g] += value);
                return;
            }
            split @ Node::Split { feature: f, left, right, .. } => {
                if *f != feature {
                    node = if split.goes_left(row[*f]) { *left } else { *right };
                    continue;
                }
                let (l, r): (Vec<usize>, Vec<usize>) = points.iter().partition(|&&g| split.goes_left(grid[g]));
                if !l.is_empty() {
                    walk(tree, *left, row, feature, grid, &l, out);
                }
                if !r.is_empty() {
                    walk(tree, *right, row, feature, grid, &r, out);
                }
                return;
            }
        }
    }
}
