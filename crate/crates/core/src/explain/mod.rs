//! Model interpretation: TreeSHAP attributions, partial dependence,
//! materiality matrices and false-discovery-rate control.

mod fdr;
mod materiality;
mod pdp;
mod shap;

pub use fdr::benjamini_hochberg;
pub use materiality::{half_sample, materiality, CapBucket, MaterialityCell, MaterialityConfig, SlopeTest};
pub use pdp::{default_grid, pdp, subsample_rows, PdpCurve, PDP_BACKGROUND_ROWS};
pub use shap::{
    expected_logit, outlier_feature_values, shap_summary, tree_expected_value, tree_shap,
    tree_shap_single, FeatureShapSummary, ShapSummary, ShapVector,
};

/// Probability of class 1 for a logit.
pub fn logit_to_prob(logit: f64) -> f64 {
    crate::math::sigmoid(logit)
}

/// Inverse of [`logit_to_prob`].
pub fn prob_to_logit(p: f64) -> f64 {
    crate::math::logit(p)
}
