//! Path-dependent TreeSHAP.
//!
//! Each tree is explained by tracking, along every root-to-leaf path, the
//! fraction of "feature absent" mass (cover ratios) and "feature present"
//! mass (does `x` follow this branch). Contributions are exact Shapley values
//! of the cover-weighted conditional expectation game.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gbdt::{Ensemble, FeatureMatrix, Node, Tree};
use crate::metrics::BoxplotStats;

/// Attribution of one prediction, in logit units.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapVector {
    pub phi: Vec<f64>,
    /// Cover-weighted expected logit of the model.
    pub base: f64,
    /// The model's logit for the explained row.
    pub logit: f64,
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    zero: f64,
    one: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElement>, zero: f64, one: f64, feature: Option<usize>) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero,
        one,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    });
    let d = depth as f64;
    for i in (0..depth).rev() {
        let w = path[i].weight;
        path[i + 1].weight += one * w * (i as f64 + 1.0) / (d + 1.0);
        path[i].weight = zero * w * (d - i as f64) / (d + 1.0);
    }
}

fn unwind(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let d = depth as f64;
    let PathElement { zero, one, .. } = path[index];
    let mut next = path[depth].weight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next * (d + 1.0) / ((i as f64 + 1.0) * one);
            next = tmp - path[i].weight * zero * (d - i as f64) / (d + 1.0);
        } else {
            path[i].weight = path[i].weight * (d + 1.0) / (zero * (d - i as f64));
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let d = depth as f64;
    let PathElement { zero, one, .. } = path[index];
    let mut total = 0.0;
    if one != 0.0 {
        let mut next = path[depth].weight;
        for i in (0..depth).rev() {
            let tmp = next / ((i as f64 + 1.0) * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (d - i as f64);
        }
    } else {
        for i in (0..depth).rev() {
            total += path[i].weight / (zero * (d - i as f64));
        }
    }
    total * (d + 1.0)
}

fn cover(tree: &Tree, node: usize) -> Result<f64> {
    tree.nodes[node].cover().ok_or(Error::ModelNotAnnotated)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &Tree,
    x: &[f64],
    phi: &mut [f64],
    node: usize,
    parent_path: &[PathElement],
    zero: f64,
    one: f64,
    feature: Option<usize>,
) -> Result<()> {
    let mut path = Vec::with_capacity(parent_path.len() + 1);
    path.extend_from_slice(parent_path);
    extend(&mut path, zero, one, feature);
    match &tree.nodes[node] {
        Node::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let el = path[i];
                if let Some(f) = el.feature {
                    phi[f] += w * (el.one - el.zero) * value;
                }
            }
        }
        split @ Node::Split {
            feature: split_feature,
            left,
            right,
            ..
        } => {
            let (hot, cold) = if split.goes_left(x[*split_feature]) {
                (*left, *right)
            } else {
                (*right, *left)
            };
            let w = cover(tree, node)?;
            let hot_zero = cover(tree, hot)? / w;
            let cold_zero = cover(tree, cold)? / w;
            let (mut incoming_zero, mut incoming_one) = (1.0, 1.0);
            if let Some(k) = path.iter().position(|e| e.feature == Some(*split_feature)) {
                incoming_zero = path[k].zero;
                incoming_one = path[k].one;
                unwind(&mut path, k);
            }
            recurse(tree, x, phi, hot, &path, hot_zero * incoming_zero, incoming_one, Some(*split_feature))?;
            recurse(tree, x, phi, cold, &path, cold_zero * incoming_zero, 0.0, Some(*split_feature))?;
        }
    }
    Ok(())
}

/// Cover-weighted mean output of one tree.
pub fn tree_expected_value(tree: &Tree) -> Result<f64> {
    let root = cover(tree, 0)?;
    let mut acc = 0.0;
    for n in &tree.nodes {
        if let Node::Leaf { value, cover } = n {
            acc += cover.ok_or(Error::ModelNotAnnotated)? / root * value;
        }
    }
    Ok(acc)
}

/// Attribution of a single tree's output (without its expected value).
pub fn tree_shap_single(tree: &Tree, x: &[f64], phi: &mut [f64]) -> Result<()> {
    if let Node::Leaf { cover: None, .. } = tree.nodes[0] {
        return Err(Error::ModelNotAnnotated);
    }
    recurse(tree, x, phi, 0, &[], 1.0, 1.0, None)
}

/// `base_score` plus the expected value of every tree.
pub fn expected_logit(model: &Ensemble) -> Result<f64> {
    model
        .trees
        .iter()
        .try_fold(model.base_score, |acc, t| Ok(acc + tree_expected_value(t)?))
}

/// SHAP values of one row for the whole ensemble.
pub fn tree_shap(model: &Ensemble, x: &[f64]) -> Result<ShapVector> {
    if !model.is_annotated() {
        return Err(Error::ModelNotAnnotated);
    }
    model.check_row(x)?;
    let mut phi = vec![0.0; model.n_features()];
    for tree in &model.trees {
        tree_shap_single(tree, x, &mut phi)?;
    }
    Ok(ShapVector {
        phi,
        base: expected_logit(model)?,
        logit: model.predict_logit(x),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureShapSummary {
    pub feature: String,
    pub stats: BoxplotStats,
}

/// SHAP values of a test set together with per-feature boxplots.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapSummary {
    pub vectors: Vec<ShapVector>,
    pub features: Vec<FeatureShapSummary>,
}

pub fn shap_summary(model: &Ensemble, x: &FeatureMatrix) -> Result<ShapSummary> {
    if x.n_rows() < 5 {
        return Err(Error::InsufficientData {
            what: "rows for a SHAP summary",
            required: 5,
            actual: x.n_rows(),
        });
    }
    let vectors = x
        .rows()
        .map(|r| tree_shap(model, r))
        .collect::<Result<Vec<_>>>()?;
    let features = (0..model.n_features())
        .map(|f| {
            let values: Vec<f64> = vectors.iter().map(|v| v.phi[f]).collect();
            Ok(FeatureShapSummary {
                feature: model.feature_name(f).into(),
                stats: BoxplotStats::from_values(&values)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ShapSummary { vectors, features })
}

/// Raw values of `feature` for rows whose SHAP value of that feature is an
/// outlier; `low_only` keeps only outliers below the lower fence.
pub fn outlier_feature_values(
    summary: &ShapSummary,
    feature: usize,
    x: &FeatureMatrix,
    low_only: bool,
) -> Vec<(usize, f64)> {
    let stats = &summary.features[feature].stats;
    stats
        .outliers
        .iter()
        .filter(|&&i| !low_only || summary.vectors[i].phi[feature] < stats.whisker_low)
        .map(|&i| (i, x.value(i, feature)))
        .collect()
}
