//! Per-feature histogram bins.
//!
//! A numeric feature with thresholds `t_0 < t_1 < ... < t_{B-2}` maps a value
//! `x` to bin `#{t_k < x}`, so `bin(x) <= b` exactly when `x <= t_b`. This
//! keeps routing on bins during training identical to routing on raw values
//! at prediction time. Missing values use the extra bin `B`.

use alloc::vec::Vec;

use super::{FeatureKind, FeatureMatrix};

pub const MAX_BINS: usize = 255;

#[derive(Debug, Clone)]
pub(crate) struct BinMapper {
    pub kind: FeatureKind,
    /// Numeric only.
    pub thresholds: Vec<f64>,
    /// Number of non-missing bins.
    pub n_bins: usize,
}

impl BinMapper {
    pub fn missing_bin(&self) -> usize {
        self.n_bins
    }

    pub fn bin(&self, x: f64) -> usize {
        if x.is_nan() {
            return self.missing_bin();
        }
        match self.kind {
            FeatureKind::Numeric => self.thresholds.partition_point(|&t| t < x),
            FeatureKind::Categorical => {
                let code = x as usize;
                if x < 0.0 || code >= self.n_bins {
                    self.missing_bin()
                } else {
                    code
                }
            }
        }
    }

    /// Raw threshold represented by "bins <= b go left".
    pub fn threshold(&self, b: usize) -> f64 {
        self.thresholds.get(b).copied().unwrap_or(f64::MAX)
    }

    fn numeric(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered"));
        let mut distinct: Vec<(f64, usize)> = Vec::new();
        for v in values.iter().copied() {
            match distinct.last_mut() {
                Some((d, c)) if *d == v => *c += 1,
                _ => distinct.push((v, 1)),
            }
        }
        let mut thresholds = Vec::new();
        if distinct.len() <= MAX_BINS {
            for w in distinct.windows(2) {
                thresholds.push(midpoint(w[0].0, w[1].0));
            }
        } else {
            let per_bin = values.len() as f64 / MAX_BINS as f64;
            let mut acc = 0usize;
            let mut next_cut = per_bin;
            for w in distinct.windows(2) {
                acc += w[0].1;
                if acc as f64 >= next_cut && thresholds.len() < MAX_BINS - 1 {
                    thresholds.push(midpoint(w[0].0, w[1].0));
                    while next_cut <= acc as f64 {
                        next_cut += per_bin;
                    }
                }
            }
        }
        let n_bins = thresholds.len() + 1;
        BinMapper {
            kind: FeatureKind::Numeric,
            thresholds,
            n_bins,
        }
    }

    fn categorical(values: &[f64]) -> Self {
        let max_code = values.iter().fold(-1.0f64, |m, &v| m.max(v));
        BinMapper {
            kind: FeatureKind::Categorical,
            thresholds: Vec::new(),
            n_bins: (max_code + 1.0).max(1.0) as usize,
        }
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    a + (b - a) / 2.0
}

/// Column-major binned copy of a feature matrix.
pub(crate) struct BinnedMatrix {
    pub mappers: Vec<BinMapper>,
    /// `bins[f][row]`.
    pub bins: Vec<Vec<u16>>,
    /// Offset of each feature's first bin in a flattened histogram.
    pub offsets: Vec<usize>,
    pub total_bins: usize,
}

impl BinnedMatrix {
    pub fn build(x: &FeatureMatrix) -> Self {
        let n = x.n_rows();
        let mut mappers = Vec::with_capacity(x.n_cols());
        let mut bins = Vec::with_capacity(x.n_cols());
        for f in 0..x.n_cols() {
            let column: Vec<f64> = (0..n).map(|i| x.value(i, f)).filter(|v| !v.is_nan()).collect();
            let mapper = match x.kind(f) {
                FeatureKind::Numeric => BinMapper::numeric(column),
                FeatureKind::Categorical => BinMapper::categorical(&column),
            };
            bins.push((0..n).map(|i| mapper.bin(x.value(i, f)) as u16).collect());
            mappers.push(mapper);
        }
        let mut offsets = Vec::with_capacity(mappers.len());
        let mut total_bins = 0;
        for m in &mappers {
            offsets.push(total_bins);
            total_bins += m.n_bins + 1;
        }
        BinnedMatrix {
            mappers,
            bins,
            offsets,
            total_bins,
        }
    }
}
