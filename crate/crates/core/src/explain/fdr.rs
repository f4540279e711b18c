use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Benjamini-Hochberg step-up procedure at level `q`.
///
/// With p-values sorted ascending, `k*` is the largest rank with
/// `p_(k) <= k q / m`; the hypotheses of ranks `1..=k*` are flagged.
pub fn benjamini_hochberg(pvalues: &[f64], q: f64) -> Result<Vec<bool>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidInput(format!("FDR level must be in (0, 1), got {q}")));
    }
    if let Some(p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!("p-value outside [0, 1]: {p}")));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let cutoff = order
        .iter()
        .enumerate()
        .rev()
        .find(|(rank, &i)| pvalues[i] <= (rank + 1) as f64 * q / m as f64)
        .map_or(0, |(rank, _)| rank + 1);
    let mut flags = vec![false; m];
    for &i in &order[..cutoff] {
        flags[i] = true;
    }
    Ok(flags)
}
