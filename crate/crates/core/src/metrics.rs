//! Performance and dependence measures.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, ln, sqrt};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-15;

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::SizeMismatch {
            expected: a,
            actual: b,
        });
    }
    if a == 0 {
        return Err(Error::InsufficientData {
            what: "samples",
            required: 1,
            actual: 0,
        });
    }
    Ok(())
}

/// Mean binary cross-entropy (LogLoss).
pub fn cross_entropy(p: &[f64], y: &[bool]) -> Result<f64> {
    check_len(p.len(), y.len())?;
    let sum: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if y {
                -ln(p)
            } else {
                -ln(1.0 - p)
            }
        })
        .sum();
    Ok(sum / p.len() as f64)
}

/// Mean of sensitivity and specificity.
pub fn balanced_accuracy(yhat: &[bool], y: &[bool]) -> Result<f64> {
    check_len(y.len(), yhat.len())?;
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&pred, &truth) in yhat.iter().zip(y) {
        if truth {
            pos += 1;
            tp += pred as usize;
        } else {
            neg += 1;
            tn += !pred as usize;
        }
    }
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateTarget);
    }
    Ok(0.5 * (tp as f64 / pos as f64 + tn as f64 / neg as f64))
}

/// Class decisions at the 0.5 probability threshold.
pub fn classify(p: &[f64]) -> Vec<bool> {
    p.iter().map(|&p| p > 0.5).collect()
}

/// Linear and rank dependence between two samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependenceReport {
    pub n: usize,
    pub pearson: f64,
    pub r2: f64,
    pub slope: f64,
    pub intercept: f64,
    pub kendall_tau: f64,
    pub kendall_p: f64,
}

pub fn dependence(x: &[f64], y: &[f64]) -> Result<DependenceReport> {
    check_len(x.len(), y.len())?;
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData {
            what: "dependence samples",
            required: 3,
            actual: n,
        });
    }
    let line = simple_regression(x, y)?;
    let kendall = kendall_tau_b(x, y)?;
    Ok(DependenceReport {
        n,
        pearson: line.pearson,
        r2: line.r2,
        slope: line.slope,
        intercept: line.intercept,
        kendall_tau: kendall.tau,
        kendall_p: kendall.p_value,
    })
}

/// OLS fit of `y = intercept + slope x` with its slope t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimpleRegression {
    pub slope: f64,
    pub intercept: f64,
    pub pearson: f64,
    pub r2: f64,
    /// Standard error of the slope; zero for a perfect fit.
    pub slope_se: f64,
    /// Two-sided p-value of the slope t-statistic (n - 2 dof).
    pub slope_p: f64,
}

pub fn simple_regression(x: &[f64], y: &[f64]) -> Result<SimpleRegression> {
    check_len(x.len(), y.len())?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let pearson = (sxy / sqrt(sxx * syy)).clamp(-1.0, 1.0);
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let e = b - intercept - slope * a;
            e * e
        })
        .sum();
    let r2 = (1.0 - ssr / syy).clamp(0.0, 1.0);
    let (slope_se, slope_p) = slope_test(slope, ssr, sxx, x.len());
    Ok(SimpleRegression {
        slope,
        intercept,
        pearson,
        r2,
        slope_se,
        slope_p,
    })
}

fn slope_test(slope: f64, ssr: f64, sxx: f64, n: usize) -> (f64, f64) {
    if n < 3 {
        return (f64::NAN, 1.0);
    }
    let df = (n - 2) as f64;
    let se = sqrt(ssr / df / sxx);
    let p = if se > 0.0 {
        math::student_t_two_sided_p(slope / se, df)
    } else if slope == 0.0 {
        1.0
    } else {
        0.0
    };
    (se, p)
}

/// Kendall tau-b and its normal-approximation p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KendallTau {
    pub tau: f64,
    pub p_value: f64,
    /// Concordant minus discordant pairs.
    pub s: i64,
}

/// Knight's O(n log n) algorithm with tie correction.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<KendallTau> {
    check_len(x.len(), y.len())?;
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("NaN in Kendall tau input".into()));
    }
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        x[a].partial_cmp(&x[b])
            .unwrap()
            .then(y[a].partial_cmp(&y[b]).unwrap())
    });

    let total_pairs = (n as i64) * (n as i64 - 1) / 2;
    let x_ties = tie_groups(order.iter().map(|&i| x[i]));
    let joint_ties = {
        let mut groups = Vec::new();
        let mut run = 1usize;
        for w in order.windows(2) {
            if x[w[0]] == x[w[1]] && y[w[0]] == y[w[1]] {
                run += 1;
            } else {
                groups.push(run);
                run = 1;
            }
        }
        groups.push(run);
        groups
    };
    let mut ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let swaps = merge_sort_count(&mut ys);
    let y_ties = tie_groups(ys.iter().copied());

    let pairs = |g: &[usize]| g.iter().map(|&t| (t as i64) * (t as i64 - 1) / 2).sum::<i64>();
    let (n1, n2, n3) = (pairs(&x_ties), pairs(&y_ties), pairs(&joint_ties));
    let s = total_pairs - n1 - n2 + n3 - 2 * swaps;
    let untied_x = total_pairs - n1;
    let untied_y = total_pairs - n2;
    if untied_x == 0 || untied_y == 0 {
        return Err(Error::DegenerateVariance);
    }
    let tau = s as f64 / sqrt(untied_x as f64 * untied_y as f64);

    let nf = n as f64;
    let sum_f = |g: &[usize], f: &dyn Fn(f64) -> f64| g.iter().map(|&t| f(t as f64)).sum::<f64>();
    let v0 = nf * (nf - 1.0) * (2.0 * nf + 5.0);
    let vt = sum_f(&x_ties, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let vu = sum_f(&y_ties, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let t2 = sum_f(&x_ties, &|t| t * (t - 1.0) * (t - 2.0));
    let u2 = sum_f(&y_ties, &|t| t * (t - 1.0) * (t - 2.0));
    let t1 = sum_f(&x_ties, &|t| t * (t - 1.0));
    let u1 = sum_f(&y_ties, &|t| t * (t - 1.0));
    let mut var_s = (v0 - vt - vu) / 18.0 + t1 * u1 / (2.0 * nf * (nf - 1.0));
    if n > 2 {
        var_s += t2 * u2 / (9.0 * nf * (nf - 1.0) * (nf - 2.0));
    }
    let p_value = if var_s > 0.0 {
        math::normal_two_sided_p(s as f64 / sqrt(var_s))
    } else {
        1.0
    };
    Ok(KendallTau { tau, p_value, s })
}

fn tie_groups(sorted: impl Iterator<Item = f64>) -> Vec<usize> {
    let mut groups = Vec::new();
    let mut prev: Option<f64> = None;
    let mut run = 0usize;
    for v in sorted {
        if prev == Some(v) {
            run += 1;
        } else {
            if run > 0 {
                groups.push(run);
            }
            run = 1;
            prev = Some(v);
        }
    }
    if run > 0 {
        groups.push(run);
    }
    groups
}

/// Sorts ascending and returns the number of strict inversions.
fn merge_sort_count(v: &mut [f64]) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mut buf = vec![0.0; n];
    let mut swaps = 0i64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            let (mut i, mut j, mut k) = (lo, mid, lo);
            while i < mid && j < hi {
                if v[j] < v[i] {
                    buf[k] = v[j];
                    swaps += (mid - i) as i64;
                    j += 1;
                } else {
                    buf[k] = v[i];
                    i += 1;
                }
                k += 1;
            }
            buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
            k += mid - i;
            buf[k..k + hi - j].copy_from_slice(&v[j..hi]);
            lo = hi;
        }
        v.copy_from_slice(&buf);
        width *= 2;
    }
    swaps
}

/// Boxplot summary with 1.5 IQR fences. Quartiles interpolate linearly
/// between order statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// `q1 - 1.5 IQR`.
    pub whisker_low: f64,
    /// `q3 + 1.5 IQR`.
    pub whisker_high: f64,
    /// Indices into the input of values strictly outside the fences.
    pub outliers: Vec<usize>,
}

impl BoxplotStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData {
                what: "boxplot values",
                required: 1,
                actual: 0,
            });
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        let q1 = quantile_sorted(&sorted, 0.25);
        let median = quantile_sorted(&sorted, 0.5);
        let q3 = quantile_sorted(&sorted, 0.75);
        let iqr = q3 - q1;
        let whisker_low = q1 - 1.5 * iqr;
        let whisker_high = q3 + 1.5 * iqr;
        let outliers = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v < whisker_low || v > whisker_high)
            .map(|(i, _)| i)
            .collect();
        Ok(BoxplotStats {
            median,
            q1,
            q3,
            whisker_low,
            whisker_high,
            outliers,
        })
    }
}

/// Quantile of sorted data, linear interpolation at position `q (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    quantile_sorted(&v, 0.5)
}
