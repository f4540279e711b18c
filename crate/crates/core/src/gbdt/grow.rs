//! Newton boosting with leaf-wise histogram tree growth.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::binning::BinnedMatrix;
use super::{
    grad_hess, logloss_from_logits, Ensemble, FeatureKind, FeatureMatrix, Hyperparams, Node,
    SplitRule, Tree,
};
use crate::error::{Error, Result};
use crate::math;

/// Stop when validation LogLoss has not improved for `patience` rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EarlyStopping {
    pub patience: usize,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        EarlyStopping { patience: 50 }
    }
}

/// Per-round losses of traced fits; index 0 is the loss of the base score alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitTrace {
    pub train_logloss: Vec<f64>,
    pub valid_logloss: Vec<f64>,
    /// Number of trees kept after early stopping.
    pub best_n_trees: usize,
}

pub fn fit(x: &FeatureMatrix, y: &[f64], params: &Hyperparams) -> Result<Ensemble> {
    train(x, y, params, None, None, false).map(|(m, _)| m)
}

pub fn fit_traced(x: &FeatureMatrix, y: &[f64], params: &Hyperparams) -> Result<(Ensemble, FitTrace)> {
    train(x, y, params, None, None, true)
}

pub fn fit_with_validation(
    x: &FeatureMatrix,
    y: &[f64],
    params: &Hyperparams,
    valid_x: &FeatureMatrix,
    valid_y: &[f64],
    early_stopping: Option<EarlyStopping>,
) -> Result<(Ensemble, FitTrace)> {
    if valid_x.n_rows() != valid_y.len() {
        return Err(Error::SizeMismatch {
            expected: valid_x.n_rows(),
            actual: valid_y.len(),
        });
    }
    if valid_x.schema() != x.schema() {
        return Err(Error::InvalidInput("validation schema differs from training schema".into()));
    }
    train(x, y, params, Some((valid_x, valid_y)), early_stopping, true)
}

fn train(
    x: &FeatureMatrix,
    y: &[f64],
    params: &Hyperparams,
    valid: Option<(&FeatureMatrix, &[f64])>,
    early_stopping: Option<EarlyStopping>,
    traced: bool,
) -> Result<(Ensemble, FitTrace)> {
    params.validate()?;
    let n = x.n_rows();
    if y.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            actual: y.len(),
        });
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    if n < 2 * params.min_samples_leaf {
        return Err(Error::InsufficientData {
            what: "training rows (2 x min_samples_leaf)",
            required: 2 * params.min_samples_leaf,
            actual: n,
        });
    }
    let positives = y.iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == n {
        return Err(Error::DegenerateTarget);
    }
    let prior = positives as f64 / n as f64;
    let base_score = math::ln(prior / (1.0 - prior));

    let binned = BinnedMatrix::build(x);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut logits = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trace = FitTrace {
        train_logloss: if traced { vec![logloss_from_logits(&logits, y)] } else { Vec::new() },
        ..FitTrace::default()
    };
    let mut valid_logits = valid.map(|(vx, _)| vec![base_score; vx.n_rows()]);
    if let (Some((_, vy)), Some(vl)) = (valid, &valid_logits) {
        trace.valid_logloss.push(logloss_from_logits(vl, vy));
    }

    let n_bagged = if params.bagging_fraction >= 1.0 {
        n
    } else {
        (libm::round(params.bagging_fraction * n as f64) as usize)
            .max(2 * params.min_samples_leaf)
            .min(n)
    };
    let d = x.n_cols();
    let n_active = (libm::ceil(params.feature_fraction * d as f64) as usize).clamp(1, d);

    let grower = Grower {
        binned: &binned,
        params,
    };
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut best = (trace.valid_logloss.first().copied().unwrap_or(f64::INFINITY), 0usize);
    for round in 0..params.n_trees {
        for i in 0..n {
            let (g, h) = grad_hess(logits[i], y[i]);
            grad[i] = g;
            hess[i] = h;
        }
        let rows: Vec<u32> = if n_bagged == n {
            (0..n as u32).collect()
        } else {
            let mut r: Vec<u32> = index::sample(&mut rng, n, n_bagged)
                .into_iter()
                .map(|i| i as u32)
                .collect();
            r.sort_unstable();
            r
        };
        let features: Vec<usize> = if n_active == d {
            (0..d).collect()
        } else {
            let mut f = index::sample(&mut rng, d, n_active).into_vec();
            f.sort_unstable();
            f
        };
        let tree = grower.grow(&grad, &hess, rows, &features);
        for (i, row) in x.rows().enumerate() {
            logits[i] += tree.predict(row);
        }
        if traced {
            trace.train_logloss.push(logloss_from_logits(&logits, y));
        }
        if let (Some((vx, vy)), Some(vl)) = (valid, valid_logits.as_mut()) {
            for (i, row) in vx.rows().enumerate() {
                vl[i] += tree.predict(row);
            }
            let loss = logloss_from_logits(vl, vy);
            trace.valid_logloss.push(loss);
            if loss < best.0 {
                best = (loss, round + 1);
            }
        }
        trees.push(tree);
        if let Some(es) = early_stopping {
            if valid.is_some() && round + 1 - best.1 >= es.patience {
                break;
            }
        }
    }
    if early_stopping.is_some() && valid.is_some() {
        trees.truncate(best.1);
    }
    trace.best_n_trees = trees.len();
    Ok((
        Ensemble {
            schema: x.schema().clone(),
            base_score,
            trees,
        },
        trace,
    ))
}

/// Per-bin gradient statistics of every feature, laid out by global bin.
#[derive(Clone)]
struct Histogram {
    bins: Vec<Stats>,
}

impl Histogram {
    fn zeros(len: usize) -> Self {
        Histogram {
            bins: vec![Stats::default(); len],
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    n: u32,
}

impl Stats {
    fn sub(self, o: Stats) -> Stats {
        if self.n == o.n {
            return Stats::default();
        }
        Stats {
            g: self.g - o.g,
            h: self.h - o.h,
            n: self.n - o.n,
        }
    }

    fn add(self, o: Stats) -> Stats {
        Stats {
            g: self.g + o.g,
            h: self.h + o.h,
            n: self.n + o.n,
        }
    }
}

#[derive(Debug, Clone)]
enum CandidateRule {
    /// Non-missing bins `<= bin` go left.
    UpToBin(usize),
    /// Bins (category codes) that go left.
    Bins(Vec<usize>),
}

#[derive(Debug, Clone)]
struct Candidate {
    feature: usize,
    rule: CandidateRule,
    default_left: bool,
    gain: f64,
    left: Stats,
    right: Stats,
}

/// Best split so far: gain and `(feature, position, default_left, left, right)`.
struct Scan {
    gain: f64,
    found: Option<(usize, usize, bool, Stats, Stats)>,
}

struct Leaf {
    node: usize,
    start: usize,
    end: usize,
    stats: Stats,
    hist: Histogram,
    best: Option<Candidate>,
}

struct Grower<'a> {
    binned: &'a BinnedMatrix,
    params: &'a Hyperparams,
}

impl Grower<'_> {
    fn grow(&self, grad: &[f64], hess: &[f64], mut rows: Vec<u32>, features: &[usize]) -> Tree {
        let lambda = self.params.l2_leaf_reg;
        let mut nodes = vec![Node::Leaf {
            value: 0.0,
            cover: None,
        }];
        let root_hist = self.histogram(grad, hess, &rows, features);
        let root_stats = rows.iter().fold(Stats::default(), |s, &r| {
            s.add(Stats {
                g: grad[r as usize],
                h: hess[r as usize],
                n: 1,
            })
        });
        let mut leaves = vec![Leaf {
            node: 0,
            start: 0,
            end: rows.len(),
            stats: root_stats,
            best: self.best_split(&root_hist, root_stats, features),
            hist: root_hist,
        }];
        let mut scratch = Vec::with_capacity(rows.len());

        while leaves.len() < self.params.max_leaves {
            let pick = leaves
                .iter()
                .enumerate()
                .filter_map(|(k, l)| l.best.as_ref().map(|c| (k, c.gain)))
                .fold(None::<(usize, f64)>, |acc, (k, g)| match acc {
                    Some((_, bg)) if bg >= g => acc,
                    _ => Some((k, g)),
                });
            let Some((k, _)) = pick else { break };
            let leaf = leaves.swap_remove(k);
            let cand = leaf.best.clone().expect("picked leaf has a split");
            let mid = self.partition(&mut rows[leaf.start..leaf.end], &mut scratch, &cand) + leaf.start;

            let left_node = nodes.len();
            let right_node = left_node + 1;
            nodes.push(Node::Leaf { value: 0.0, cover: None });
            nodes.push(Node::Leaf { value: 0.0, cover: None });
            let mapper = &self.binned.mappers[cand.feature];
            let rule = match &cand.rule {
                CandidateRule::UpToBin(b) => SplitRule::Threshold(mapper.threshold(*b)),
                CandidateRule::Bins(bins) => {
                    let mut codes: Vec<u32> = bins.iter().map(|&b| b as u32).collect();
                    codes.sort_unstable();
                    SplitRule::Categories(codes)
                }
            };
            nodes[leaf.node] = Node::Split {
                feature: cand.feature,
                rule,
                default_left: cand.default_left,
                left: left_node,
                right: right_node,
                gain: cand.gain,
                cover: Some(leaf.stats.n as f64),
            };

            let (small_range, large_range, small_is_left) = if mid - leaf.start <= leaf.end - mid {
                ((leaf.start, mid), (mid, leaf.end), true)
            } else {
                ((mid, leaf.end), (leaf.start, mid), false)
            };
            let small_hist = self.histogram(grad, hess, &rows[small_range.0..small_range.1], features);
            let mut large_hist = leaf.hist;
            for &f in features {
                let off = self.binned.offsets[f];
                let range = off..off + self.binned.mappers[f].n_bins + 1;
                for (l, s) in large_hist.bins[range.clone()].iter_mut().zip(&small_hist.bins[range]) {
                    *l = l.sub(*s);
                }
            }
            let (small_stats, large_stats) = if small_is_left {
                (cand.left, cand.right)
            } else {
                (cand.right, cand.left)
            };
            let (small_node, large_node) = if small_is_left {
                (left_node, right_node)
            } else {
                (right_node, left_node)
            };
            leaves.push(Leaf {
                node: small_node,
                start: small_range.0,
                end: small_range.1,
                stats: small_stats,
                best: self.best_split(&small_hist, small_stats, features),
                hist: small_hist,
            });
            leaves.push(Leaf {
                node: large_node,
                start: large_range.0,
                end: large_range.1,
                stats: large_stats,
                best: self.best_split(&large_hist, large_stats, features),
                hist: large_hist,
            });
        }

        for leaf in leaves {
            let denom = leaf.stats.h + lambda;
            let raw = if denom > 0.0 { -leaf.stats.g / denom } else { 0.0 };
            nodes[leaf.node] = Node::Leaf {
                value: raw * self.params.learning_rate,
                cover: Some(leaf.stats.n as f64),
            };
        }
        Tree { nodes }
    }

    fn histogram(&self, grad: &[f64], hess: &[f64], rows: &[u32], features: &[usize]) -> Histogram {
        let mut hist = Histogram::zeros(self.binned.total_bins);
        for &f in features {
            let off = self.binned.offsets[f];
            let bins = &self.binned.bins[f];
            for &r in rows {
                let r = r as usize;
                let slot = &mut hist.bins[off + bins[r] as usize];
                slot.g += grad[r];
                slot.h += hess[r];
                slot.n += 1;
            }
        }
        hist
    }

    fn leaf_score(&self, s: Stats) -> f64 {
        let d = s.h + self.params.l2_leaf_reg;
        if d > 0.0 {
            s.g * s.g / d
        } else {
            0.0
        }
    }

    fn best_split(&self, hist: &Histogram, total: Stats, features: &[usize]) -> Option<Candidate> {
        let min_leaf = self.params.min_samples_leaf as u32;
        if total.n < 2 * min_leaf {
            return None;
        }
        let parent = self.leaf_score(total);
        let mut best = Scan {
            gain: self.params.min_gain,
            found: None,
        };
        let mut order = Vec::new();
        let mut best_order = Vec::new();
        for &f in features {
            let mapper = &self.binned.mappers[f];
            let off = self.binned.offsets[f];
            let nb = mapper.n_bins;
            let bins = &hist.bins[off..off + nb + 1];
            let missing = bins[nb];
            let present = total.sub(missing);
            if present.n == 0 {
                continue;
            }
            // Evaluates "present bins in `left_present` go left" with each
            // admissible missing direction; `pos` identifies the threshold.
            let try_split = |best: &mut Scan, left_present: Stats, pos: usize| -> bool {
                let right_present = present.sub(left_present);
                let mut improved = false;
                let mut eval = |left: Stats, right: Stats, default_left: bool| {
                    if left.n < min_leaf || right.n < min_leaf {
                        return;
                    }
                    let gain = 0.5 * (self.leaf_score(left) + self.leaf_score(right) - parent);
                    if gain > best.gain && gain.is_finite() {
                        best.gain = gain;
                        best.found = Some((f, pos, default_left, left, right));
                        improved = true;
                    }
                };
                if missing.n == 0 {
                    if left_present.n > 0 && right_present.n > 0 {
                        eval(left_present, right_present, left_present.n >= right_present.n);
                    }
                    return improved;
                }
                if left_present.n > 0 {
                    eval(left_present, right_present.add(missing), false);
                }
                if right_present.n > 0 {
                    eval(left_present.add(missing), right_present, true);
                }
                improved
            };
            match mapper.kind {
                FeatureKind::Numeric => {
                    let mut cum = Stats::default();
                    for (b, bin) in bins[..nb].iter().enumerate() {
                        if bin.n == 0 {
                            continue;
                        }
                        cum = cum.add(*bin);
                        if cum.n == present.n {
                            // Everything present goes left: only a split
                            // isolating the missing values remains.
                            try_split(&mut best, cum, b);
                            break;
                        }
                        try_split(&mut best, cum, b);
                    }
                }
                FeatureKind::Categorical => {
                    order.clear();
                    order.extend((0..nb).filter(|&b| bins[b].n > 0));
                    order.sort_by(|&a, &b| {
                        let (sa, sb) = (bins[a], bins[b]);
                        (sa.g / sa.h)
                            .partial_cmp(&(sb.g / sb.h))
                            .unwrap_or(core::cmp::Ordering::Equal)
                            .then(a.cmp(&b))
                    });
                    let mut cum = Stats::default();
                    let mut improved = false;
                    for (k, &b) in order.iter().enumerate() {
                        cum = cum.add(bins[b]);
                        improved |= try_split(&mut best, cum, k);
                    }
                    if improved && best.found.is_some_and(|c| c.0 == f) {
                        best_order.clone_from(&order);
                    }
                }
            }
        }
        let (feature, pos, default_left, left, right) = best.found?;
        let rule = match self.binned.mappers[feature].kind {
            FeatureKind::Numeric => CandidateRule::UpToBin(pos),
            FeatureKind::Categorical => CandidateRule::Bins(best_order[..=pos].to_vec()),
        };
        Some(Candidate {
            feature,
            rule,
            default_left,
            gain: best.gain,
            left,
            right,
        })
    }

    /// Stable partition of `rows` into left then right; returns the left count.
    fn partition(&self, rows: &mut [u32], scratch: &mut Vec<u32>, cand: &Candidate) -> usize {
        let mapper = &self.binned.mappers[cand.feature];
        let bins = &self.binned.bins[cand.feature];
        let missing_bin = mapper.missing_bin();
        let mut in_left = vec![false; mapper.n_bins + 1];
        match &cand.rule {
            CandidateRule::UpToBin(b) => in_left[..=*b].iter_mut().for_each(|v| *v = true),
            CandidateRule::Bins(list) => list.iter().for_each(|&b| in_left[b] = true),
        }
        in_left[missing_bin] = cand.default_left;
        scratch.clear();
        let mut write = 0;
        for k in 0..rows.len() {
            let r = rows[k];
            if in_left[bins[r as usize] as usize] {
                rows[write] = r;
                write += 1;
            } else {
                scratch.push(r);
            }
        }
        rows[write..].copy_from_slice(scratch);
        write
    }
}
