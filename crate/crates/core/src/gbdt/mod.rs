//! Gradient-boosted decision trees for binary classification on LogLoss.
//!
//! Trees are grown leaf-wise (best gain first) on histogram bins. Numeric
//! splits are thresholds, categorical splits send a subset of categories
//! left, and every split learns a default direction for missing values.
//! Each node keeps its training-sample count ("cover") for TreeSHAP.

mod binning;
mod grow;

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::panel::FeatureSchema;

pub use grow::{fit, fit_traced, fit_with_validation, EarlyStopping, FitTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    /// Non-negative integer codes.
    Categorical,
}

/// Row-major feature matrix; NaN marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    schema: FeatureSchema,
    values: Vec<f64>,
    n_rows: usize,
}

impl FeatureMatrix {
    pub fn new(schema: FeatureSchema, values: Vec<f64>) -> Result<Self> {
        let d = schema.len();
        if d == 0 {
            return Err(Error::InvalidInput("feature schema is empty".into()));
        }
        if values.len() % d != 0 {
            return Err(Error::SizeMismatch {
                expected: d * (values.len() / d + 1),
                actual: values.len(),
            });
        }
        for (k, v) in values.iter().enumerate() {
            let kind = schema.features[k % d].kind;
            let ok = v.is_nan()
                || match kind {
                    FeatureKind::Numeric => v.is_finite(),
                    FeatureKind::Categorical => *v >= 0.0 && libm::trunc(*v) == *v && *v < 65_535.0,
                };
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "bad value {v} for feature {}",
                    schema.features[k % d].name
                )));
            }
        }
        let n_rows = values.len() / d;
        Ok(FeatureMatrix {
            schema,
            values,
            n_rows,
        })
    }

    pub fn from_rows(schema: FeatureSchema, rows: &[Vec<f64>]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * schema.len());
        for r in rows {
            if r.len() != schema.len() {
                return Err(Error::SizeMismatch {
                    expected: schema.len(),
                    actual: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(schema, values)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn kind(&self, col: usize) -> FeatureKind {
        self.schema.features[col].kind
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols() + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_cols())
    }
}

/// Boosting hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub n_trees: usize,
    pub max_leaves: usize,
    pub min_samples_leaf: usize,
    pub feature_fraction: f64,
    pub bagging_fraction: f64,
    pub l2_leaf_reg: f64,
    pub min_gain: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.1,
            n_trees: 100,
            max_leaves: 31,
            min_samples_leaf: 20,
            feature_fraction: 1.0,
            bagging_fraction: 1.0,
            l2_leaf_reg: 0.0,
            min_gain: 0.0,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("hyperparameter out of range: {what}")));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate in (0, 1]");
        }
        if self.n_trees < 1 {
            return bad("n_trees >= 1");
        }
        if self.max_leaves < 2 {
            return bad("max_leaves >= 2");
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf >= 1");
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return bad("feature_fraction in (0, 1]");
        }
        if !(self.bagging_fraction > 0.0 && self.bagging_fraction <= 1.0) {
            return bad("bagging_fraction in (0, 1]");
        }
        if !(self.l2_leaf_reg >= 0.0 && self.l2_leaf_reg.is_finite()) {
            return bad("l2_leaf_reg >= 0");
        }
        if !(self.min_gain >= 0.0 && self.min_gain.is_finite()) {
            return bad("min_gain >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// `x <= threshold` goes left.
    Threshold(f64),
    /// Sorted category codes that go left; all others go right.
    Categories(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        rule: SplitRule,
        /// Direction taken by missing values.
        default_left: bool,
        left: usize,
        right: usize,
        gain: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cover: Option<f64>,
    },
    Leaf {
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cover: Option<f64>,
    },
}

impl Node {
    pub fn cover(&self) -> Option<f64> {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }

    /// Whether a feature value takes the left branch of this split.
    pub fn goes_left(&self, x: f64) -> bool {
        match self {
            Node::Split {
                rule, default_left, ..
            } => {
                if x.is_nan() {
                    return *default_left;
                }
                match rule {
                    SplitRule::Threshold(t) => x <= *t,
                    SplitRule::Categories(left) => {
                        x >= 0.0 && left.binary_search(&(x as u32)).is_ok()
                    }
                }
            }
            Node::Leaf { .. } => false,
        }
    }
}

/// Regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, cover: Option<f64>) -> Self {
        Tree {
            nodes: alloc::vec![Node::Leaf { value, cover }],
        }
    }

    /// Index of the leaf a row lands in.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                node @ Node::Split {
                    feature,
                    left,
                    right,
                    ..
                } => {
                    i = if node.goes_left(row[*feature]) {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        match &self.nodes[self.leaf_index(row)] {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn rec(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + rec(t, *left).max(rec(t, *right)),
            }
        }
        rec(self, 0)
    }
}

/// Fitted model: `logit(x) = base_score + sum of tree outputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub schema: FeatureSchema,
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

impl Ensemble {
    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn predict_logit(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.n_features());
        self.trees
            .iter()
            .fold(self.base_score, |acc, t| acc + t.predict(row))
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        math::sigmoid(self.predict_logit(row))
    }

    pub fn predict_proba_matrix(&self, x: &FeatureMatrix) -> Vec<f64> {
        x.rows().map(|r| self.predict_proba(r)).collect()
    }

    /// Checks a row against the schema (length and categorical codes).
    pub fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_features() {
            return Err(Error::SizeMismatch {
                expected: self.n_features(),
                actual: row.len(),
            });
        }
        Ok(())
    }

    /// Whether every node carries a cover count.
    pub fn is_annotated(&self) -> bool {
        self.trees
            .iter()
            .all(|t| t.nodes.iter().all(|n| n.cover().is_some()))
    }

    /// Total split gain per feature.
    pub fn gain_importance(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.n_features()];
        for t in &self.trees {
            for n in &t.nodes {
                if let Node::Split { feature, gain, .. } = n {
                    out[*feature] += gain;
                }
            }
        }
        out
    }

    /// Features used in at least one split.
    pub fn used_features(&self) -> Vec<bool> {
        let mut out = alloc::vec![false; self.n_features()];
        for t in &self.trees {
            for n in &t.nodes {
                if let Node::Split { feature, .. } = n {
                    out[*feature] = true;
                }
            }
        }
        out
    }

    pub fn feature_name(&self, f: usize) -> &str {
        &self.schema.features[f].name
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.schema.features.iter().position(|s| s.name == name)
    }
}

/// Mean LogLoss of logits against 0/1 labels.
pub fn logloss_from_logits(logits: &[f64], y: &[f64]) -> f64 {
    let sum: f64 = logits
        .iter()
        .zip(y)
        .map(|(&z, &y)| pointwise_logloss(z, y))
        .sum();
    sum / logits.len() as f64
}

/// `log(1 + e^z) - y z`, stable for large |z|.
pub fn pointwise_logloss(z: f64, y: f64) -> f64 {
    let softplus = if z > 0.0 {
        z + libm::log1p(math::exp(-z))
    } else {
        libm::log1p(math::exp(z))
    };
    softplus - y * z
}

/// Gradient and hessian of the LogLoss with respect to the logit.
#[inline]
pub fn grad_hess(z: f64, y: f64) -> (f64, f64) {
    let p = math::sigmoid(z);
    (p - y, p * (1.0 - p))
}
