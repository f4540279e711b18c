//! Acceptance criteria. Prints one PASS/FAIL line per criterion.
//!
//! `cargo test -p alphabit --test acceptance` runs all ten; trailing numbers
//! (`-- 4 5`) select a subset. The process fails when a criterion disagrees
//! with `KNOWN_FAILING`, so an unexpected pass also needs attention.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Instant;

use alphabit_core::explain::{
    benjamini_hochberg, half_sample, materiality, tree_shap, CapBucket, MaterialityConfig, SlopeTest,
};
use alphabit_core::factor::{company_targets, compute_targets, ols_fit, FactorModel, TargetRun};
use alphabit_core::gbdt::{
    fit, fit_traced, grad_hess, pointwise_logloss, Ensemble, FeatureKind, FeatureMatrix, Hyperparams, Node,
    SplitRule, Tree,
};
use alphabit_core::metrics::{balanced_accuracy, dependence, kendall_tau_b};
use alphabit_core::panel::{
    build_panel, CategoricalColumn, CompanyId, Date, EsgScore, FactorRow, FactorSeries, FeatureSchema, FeatureSet,
    FeatureSpec, Month, Panel, PriceSeries, MARKET_CAP_COLUMN, SECTOR_L1_COLUMN,
};
use alphabit_core::splits::{company_kfold, leakage_violations, temporal_split, Scheme, SplitPlan};
use alphabit_core::synth::{generate, SynthConfig};
use alphabit_core::tuning::{pool_records, run_trial, top_k, SearchOutcome, SearchSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

/// Criteria expected to fail; see the README for the analysis.
const KNOWN_FAILING: &[u32] = &[8];

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let selected: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "OLS recovery", c1_ols),
        (2, "LogLoss calculus", c2_logloss),
        (3, "GBDT sanity", c3_gbdt),
        (4, "TreeSHAP exactness", c4_shap),
        (5, "statistics oracles", c5_statistics),
        (6, "split hygiene", c6_splits),
        (7, "planted-signal recovery", c7_planted),
        (8, "validation-test dependence", c8_dependence),
        (9, "materiality fidelity", c9_materiality),
        (10, "determinism", c10_determinism),
    ];
    let mut surprises = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{status} {id:>2} {name}: {detail} ({:.1}s)", t.elapsed().as_secs_f64());
        if outcome.is_ok() == KNOWN_FAILING.contains(&id) {
            surprises += 1;
        }
    }
    std::process::exit(if surprises == 0 { 0 } else { 1 });
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn synth_panel(cfg: &SynthConfig) -> Panel {
    let data = generate(cfg).unwrap();
    let years: Vec<i32> = (cfg.first_year..=cfg.last_year).collect();
    let mut run = TargetRun::default();
    for c in 0..data.companies.len() {
        run.extend(company_targets(&data.price_series(c).unwrap(), &data.factors, FactorModel::Capm, &years));
    }
    build_panel(data.features, &run.as_map()).unwrap().panel
}

fn numeric_schema(n: usize) -> FeatureSchema {
    FeatureSchema {
        features: (0..n)
            .map(|i| FeatureSpec {
                name: format!("x{i}"),
                kind: FeatureKind::Numeric,
            })
            .collect(),
    }
}

// 1 ------------------------------------------------------------------------

const OLS_EXACT_TOL: f64 = 1e-9;
const OLS_ORACLE_TOL: f64 = 1e-8;
const OLS_BUDGET_SECS: f64 = 1.0;

/// Closed-form simple regression from the 2x2 normal equations.
fn normal_equations(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * sxx - sx * sx;
    ((sxx * sy - sx * sxy) / det, (n * sxy - sx * sy) / det)
}

fn c1_ols() -> Outcome {
    let mut r = rng(1);
    let start = Month { year: 2013, month: 1 };
    let months: Vec<Month> = (0..60).map(|k| Month::from_index(start.index() + k)).collect();
    let mkt = Normal::new(0.005, 0.045).unwrap();
    let factors = FactorSeries::new(months.iter().map(|&m| {
        let row = FactorRow {
            mkt_excess: mkt.sample(&mut r),
            smb: 0.0,
            hml: 0.0,
            rf: 0.001,
        };
        (m, row)
    }))
    .unwrap();
    let f: Vec<f64> = months.iter().map(|&m| factors.get(m).unwrap().mkt_excess).collect();
    let noise = Normal::new(0.0, 0.05).unwrap();
    let (mut exact_err, mut oracle_err) = (0.0f64, 0.0f64);
    let mut prices = Vec::new();
    for c in 0..1000 {
        let id = CompanyId::new(&format!("XS{c:010}")).unwrap();
        let alpha = r.random_range(-0.01..0.01);
        let beta = r.random_range(0.3..1.8);
        let clean: Vec<(Month, f64)> = months.iter().zip(&f).map(|(&m, &x)| (m, alpha + beta * x)).collect();
        let fit = ols_fit(&id, 2017, &clean, &factors, FactorModel::Capm).unwrap();
        exact_err = exact_err.max((fit.alpha - alpha).abs()).max((fit.betas[0] - beta).abs());

        let noisy: Vec<(Month, f64)> = clean.iter().map(|&(m, v)| (m, v + noise.sample(&mut r))).collect();
        let fit = ols_fit(&id, 2017, &noisy, &factors, FactorModel::Capm).unwrap();
        let y: Vec<f64> = noisy.iter().map(|p| p.1).collect();
        let (a, b) = normal_equations(&f, &y);
        oracle_err = oracle_err.max((fit.alpha - a).abs()).max((fit.betas[0] - b).abs());

        // Month-end prices whose excess returns are the noisy series.
        let mut price = 50.0;
        let mut obs = vec![(Date::new(2012, 12, 31).unwrap(), price)];
        for &(m, v) in &noisy {
            price *= 1.0 + v + 0.001;
            let last = alphabit_core::panel::days_in_month(m.year, m.month);
            obs.push((Date::new(m.year, m.month, last).unwrap(), price));
        }
        prices.push(PriceSeries::new(id, obs).unwrap());
    }
    let t = Instant::now();
    let run = compute_targets(&prices, &factors, FactorModel::Capm, 2017);
    let secs = t.elapsed().as_secs_f64();
    check(
        exact_err < OLS_EXACT_TOL && oracle_err < OLS_ORACLE_TOL && secs < OLS_BUDGET_SECS && run.targets.len() == 1000,
        format!(
            "noiseless max err {exact_err:.1e} (< {OLS_EXACT_TOL:.0e}), oracle max err {oracle_err:.1e} (< {OLS_ORACLE_TOL:.0e}), \
             1000 company targets in {secs:.3}s (< {OLS_BUDGET_SECS}s)"
        ),
    )
}

// 2 ------------------------------------------------------------------------

const GRAD_TOL: f64 = 1e-6;
const HESS_TOL: f64 = 1e-4;

fn c2_logloss() -> Outcome {
    let mut r = rng(2);
    let (mut g_err, mut h_err) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let p: f64 = r.random_range(0.001..0.999);
        let y = if r.random_bool(0.5) { 1.0 } else { 0.0 };
        let z = (p / (1.0 - p)).ln();
        let (g, h) = grad_hess(z, y);
        let p = 1.0 / (1.0 + (-z).exp());
        let loss = |z: f64| pointwise_logloss(z, y);
        let e = 1e-5;
        let fd_g = (loss(z + e) - loss(z - e)) / (2.0 * e);
        let e = 1e-4;
        let fd_h = (loss(z + e) - 2.0 * loss(z) + loss(z - e)) / (e * e);
        g_err = g_err.max((g - fd_g).abs()).max((g - (p - y)).abs());
        h_err = h_err.max((h - fd_h).abs()).max((h - p * (1.0 - p)).abs());
    }
    check(
        g_err < GRAD_TOL && h_err < HESS_TOL,
        format!("max |grad - fd| {g_err:.1e} (< {GRAD_TOL:.0e}), max |hess - fd| {h_err:.1e} (< {HESS_TOL:.0e})"),
    )
}

// 3 ------------------------------------------------------------------------

const SEPARABLE_LOSS: f64 = 0.10;
const SEPARABLE_ROUNDS: usize = 50;
const STUMP_TOL: f64 = 1e-12;

struct Stump {
    feature: usize,
    threshold: f64,
    left: f64,
    right: f64,
}

/// Best single split by enumerating every midpoint of every feature.
fn exhaustive_stump(x: &[Vec<f64>], y: &[f64], lambda: f64, min_leaf: usize) -> Stump {
    let prior = y.iter().sum::<f64>() / y.len() as f64;
    let p0 = prior;
    let g: Vec<f64> = y.iter().map(|&t| p0 - t).collect();
    let h = p0 * (1.0 - p0);
    let score = |gs: f64, n: usize| gs * gs / (h * n as f64 + lambda);
    let total: f64 = g.iter().sum();
    let mut best = (f64::NEG_INFINITY, 0, 0.0, 0.0, 0.0);
    for f in 0..x[0].len() {
        let values: BTreeSet<u64> = x.iter().map(|r| r[f].to_bits()).collect();
        let mut sorted: Vec<f64> = values.into_iter().map(f64::from_bits).collect();
        sorted.sort_by(f64::total_cmp);
        for w in sorted.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            let (mut gl, mut nl) = (0.0, 0);
            for (r, gi) in x.iter().zip(&g) {
                if r[f] <= t {
                    gl += gi;
                    nl += 1;
                }
            }
            let nr = y.len() - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let gr = total - gl;
            let gain = score(gl, nl) + score(gr, nr) - score(total, y.len());
            if gain > best.0 + 1e-12 {
                best = (gain, f, t, -gl / (h * nl as f64 + lambda), -gr / (h * nr as f64 + lambda));
            }
        }
    }
    Stump {
        feature: best.1,
        threshold: best.2,
        left: best.3,
        right: best.4,
    }
}

fn c3_gbdt() -> Outcome {
    let mut r = rng(3);
    // Monotone training loss without bagging, NaNs included.
    let n = 2000;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..5).map(|_| if r.random_bool(0.05) { f64::NAN } else { r.random_range(0.0..1.0) }).collect())
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|row| {
            let z = 2.0 * (row[0].max(0.0) - 0.5) + row[1].min(1.0) - 0.5 * row[2].max(0.0);
            if r.random_bool(1.0 / (1.0 + (-z).exp())) { 1.0 } else { 0.0 }
        })
        .collect();
    let x = FeatureMatrix::from_rows(numeric_schema(5), &rows).unwrap();
    let params = Hyperparams {
        n_trees: 100,
        max_leaves: 16,
        min_samples_leaf: 10,
        learning_rate: 0.2,
        l2_leaf_reg: 1.0,
        ..Hyperparams::default()
    };
    let (_, trace) = fit_traced(&x, &y, &params).unwrap();
    let worst_rise = trace.train_logloss.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let monotone = worst_rise <= 1e-12;

    // Separable 1-D data.
    let xs: Vec<Vec<f64>> = (0..1000).map(|_| vec![r.random_range(0.0..1.0)]).collect();
    let ys: Vec<f64> = xs.iter().map(|v| if v[0] > 0.37 { 1.0 } else { 0.0 }).collect();
    let sep = Hyperparams {
        n_trees: SEPARABLE_ROUNDS,
        max_leaves: 4,
        min_samples_leaf: 5,
        learning_rate: 0.3,
        ..Hyperparams::default()
    };
    let (_, trace) = fit_traced(&FeatureMatrix::from_rows(numeric_schema(1), &xs).unwrap(), &ys, &sep).unwrap();
    let sep_rounds = trace.train_logloss.iter().position(|&l| l < SEPARABLE_LOSS);
    let separable = sep_rounds.is_some_and(|k| k <= SEPARABLE_ROUNDS);

    // Single stump against exhaustive search; values on a 0.01 grid so the
    // histogram bins are exact.
    let mut stump_err = 0.0f64;
    let mut stump_ok = true;
    for trial in 0..20 {
        let m = 1 + trial % 4;
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..m).map(|_| (r.random_range(0..100) as f64) / 100.0).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|row| if r.random_bool(if row[0] > 0.6 { 0.8 } else { 0.3 }) { 1.0 } else { 0.0 })
            .collect();
        let lambda = [0.0, 0.5, 3.0][trial % 3];
        let min_leaf = [1, 10, 40][trial % 3];
        let params = Hyperparams {
            n_trees: 1,
            max_leaves: 2,
            min_samples_leaf: min_leaf,
            learning_rate: 1.0,
            l2_leaf_reg: lambda,
            ..Hyperparams::default()
        };
        let model = fit(&FeatureMatrix::from_rows(numeric_schema(m), &rows).unwrap(), &y, &params).unwrap();
        let oracle = exhaustive_stump(&rows, &y, lambda, min_leaf);
        match model.trees[0].nodes.as_slice() {
            [Node::Split {
                feature,
                rule: SplitRule::Threshold(t),
                left,
                right,
                ..
            }, ..] => {
                let leaf = |i: usize| match model.trees[0].nodes[i] {
                    Node::Leaf { value, .. } => value,
                    Node::Split { .. } => f64::NAN,
                };
                stump_ok &= *feature == oracle.feature && *t == oracle.threshold;
                stump_err = stump_err.max((leaf(*left) - oracle.left).abs()).max((leaf(*right) - oracle.right).abs());
            }
            _ => stump_ok = false,
        }
    }
    stump_ok &= stump_err < STUMP_TOL;
    check(
        monotone && separable && stump_ok,
        format!(
            "largest per-round loss rise {worst_rise:.1e}, separable loss < {SEPARABLE_LOSS} after {} rounds (<= {SEPARABLE_ROUNDS}), \
             20 stumps match exhaustive search: {stump_ok} (leaf err {stump_err:.1e})",
            sep_rounds.map_or("never".into(), |k| k.to_string())
        ),
    )
}

// 4 ------------------------------------------------------------------------

const SHAP_TOL: f64 = 1e-9;

fn conditional_expectation(tree: &Tree, x: &[f64], mask: u32, node: usize) -> f64 {
    match &tree.nodes[node] {
        Node::Leaf { value, .. } => *value,
        split @ Node::Split { feature, left, right, .. } => {
            if mask & (1 << feature) != 0 {
                let next = if split.goes_left(x[*feature]) { *left } else { *right };
                conditional_expectation(tree, x, mask, next)
            } else {
                let c = split.cover().unwrap();
                let cl = tree.nodes[*left].cover().unwrap();
                let cr = tree.nodes[*right].cover().unwrap();
                (cl * conditional_expectation(tree, x, mask, *left)
                    + cr * conditional_expectation(tree, x, mask, *right))
                    / c
            }
        }
    }
}

/// Shapley values by enumerating every feature subset.
fn brute_force_shapley(model: &Ensemble, x: &[f64]) -> Vec<f64> {
    let m = model.n_features();
    let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
    let value = |mask: u32| model.trees.iter().map(|t| conditional_expectation(t, x, mask, 0)).sum::<f64>();
    (0..m)
        .map(|j| {
            (0u32..1 << m)
                .filter(|mask| mask & (1 << j) == 0)
                .map(|mask| {
                    let s = mask.count_ones() as usize;
                    fact(s) * fact(m - s - 1) / fact(m) * (value(mask | 1 << j) - value(mask))
                })
                .sum()
        })
        .collect()
}

fn random_tree(r: &mut ChaCha8Rng, used: &[usize]) -> Tree {
    fn grow(r: &mut ChaCha8Rng, nodes: &mut Vec<Node>, cover: f64, depth: usize, used: &[usize]) -> usize {
        let id = nodes.len();
        if depth == 0 || cover < 2.0 || r.random_bool(0.2) {
            nodes.push(Node::Leaf {
                value: r.random_range(-1.0..1.0),
                cover: Some(cover),
            });
            return id;
        }
        nodes.push(Node::Leaf { value: 0.0, cover: None });
        let cl = r.random_range(1..cover as u64) as f64;
        let left = grow(r, nodes, cl, depth - 1, used);
        let right = grow(r, nodes, cover - cl, depth - 1, used);
        nodes[id] = Node::Split {
            feature: used[r.random_range(0..used.len())],
            rule: SplitRule::Threshold(r.random_range(0.2..0.8)),
            default_left: r.random_bool(0.5),
            left,
            right,
            gain: 1.0,
            cover: Some(cover),
        };
        id
    }
    let mut nodes = Vec::new();
    let cover = r.random_range(20..500) as f64;
    grow(r, &mut nodes, cover, 3, used);
    Tree { nodes }
}

fn c4_shap() -> Outcome {
    let mut r = rng(4);
    let mut oracle_err = 0.0f64;
    let mut dummy_ok = true;
    let mut cases = 0;
    // Random ensembles, one feature held out as a dummy.
    for _ in 0..200 {
        let m = r.random_range(2..=5);
        let dummy = r.random_range(0..m);
        let used: Vec<usize> = (0..m).filter(|&f| f != dummy).collect();
        let model = Ensemble {
            schema: numeric_schema(m),
            base_score: r.random_range(-1.0..1.0),
            trees: (0..r.random_range(1..=10)).map(|_| random_tree(&mut r, &used)).collect(),
        };
        for _ in 0..5 {
            let x: Vec<f64> =
                (0..m).map(|_| if r.random_bool(0.1) { f64::NAN } else { r.random_range(0.0..1.0) }).collect();
            let s = tree_shap(&model, &x).unwrap();
            for (a, b) in s.phi.iter().zip(brute_force_shapley(&model, &x)) {
                oracle_err = oracle_err.max((a - b).abs());
            }
            dummy_ok &= s.phi[dummy] == 0.0;
            cases += 1;
        }
    }
    // Fitted shallow ensembles.
    for seed in 0..20 {
        let rows: Vec<Vec<f64>> = (0..400).map(|_| (0..5).map(|_| r.random_range(0.0..1.0)).collect()).collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|v| if r.random_bool(if v[0] + v[1] * v[2] > 0.7 { 0.75 } else { 0.3 }) { 1.0 } else { 0.0 })
            .collect();
        let params = Hyperparams {
            n_trees: 10,
            max_leaves: 4,
            min_samples_leaf: 10,
            seed,
            ..Hyperparams::default()
        };
        let model = fit(&FeatureMatrix::from_rows(numeric_schema(5), &rows).unwrap(), &y, &params).unwrap();
        if model.trees.iter().any(|t| t.depth() > 3) {
            return Err("fitted tree deeper than 3".into());
        }
        for x in rows.iter().take(10) {
            let s = tree_shap(&model, x).unwrap();
            for (a, b) in s.phi.iter().zip(brute_force_shapley(&model, x)) {
                oracle_err = oracle_err.max((a - b).abs());
            }
            cases += 1;
        }
    }
    // Efficiency on every row of a panel.
    let panel = synth_panel(&SynthConfig {
        n_companies: 1000,
        obs_per_month: 1,
        seed: 4,
        ..SynthConfig::default()
    });
    let idx: Vec<usize> = (0..panel.len().min(10_000)).collect();
    let x = panel.matrix(&idx, FeatureSet::EsgAndBenchmark);
    let params = Hyperparams {
        n_trees: 60,
        max_leaves: 16,
        min_samples_leaf: 20,
        learning_rate: 0.1,
        feature_fraction: 0.8,
        bagging_fraction: 0.8,
        seed: 4,
        ..Hyperparams::default()
    };
    let model = fit(&x, &panel.labels(&idx), &params).unwrap();
    let used = model.used_features();
    let mut eff_err = 0.0f64;
    for row in x.rows() {
        let s = tree_shap(&model, row).unwrap();
        eff_err = eff_err.max((s.phi.iter().sum::<f64>() + s.base - model.predict_logit(row)).abs());
        dummy_ok &= used.iter().zip(&s.phi).all(|(&u, &p)| u || p == 0.0);
    }
    check(
        oracle_err < SHAP_TOL && eff_err < SHAP_TOL && dummy_ok && idx.len() == 10_000,
        format!(
            "{cases} brute-force cases max err {oracle_err:.1e}, efficiency max err {eff_err:.1e} over {} rows (< {SHAP_TOL:.0e}), \
             dummy phi exactly 0: {dummy_ok}",
            idx.len()
        ),
    )
}

// 5 ------------------------------------------------------------------------

const RANDOM_BA_TOL: f64 = 0.02;

/// Tau-b from explicit pair counts.
fn kendall_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut s, mut untied_x, mut untied_y) = (0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[i] - x[j]).signum() as i64 * i64::from(x[i] != x[j]);
            let dy = (y[i] - y[j]).signum() as i64 * i64::from(y[i] != y[j]);
            s += dx * dy;
            untied_x += i64::from(dx != 0);
            untied_y += i64::from(dy != 0);
        }
    }
    s as f64 / (untied_x as f64 * untied_y as f64).sqrt()
}

/// Flags every p-value up to the largest k with p_(k) <= k q / m.
fn bh_oracle(p: &[f64], q: f64) -> Vec<bool> {
    let m = p.len();
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut threshold = None;
    for k in 1..=m {
        if sorted[k - 1] <= k as f64 * q / m as f64 {
            threshold = Some(sorted[k - 1]);
        }
    }
    p.iter().map(|&v| threshold.is_some_and(|t| v <= t)).collect()
}

fn c5_statistics() -> Outcome {
    let mut r = rng(5);
    let mut kendall_mismatch = 0;
    for case in 0..300 {
        let n = r.random_range(3..=200);
        let levels = [3, 10, 1000][case % 3];
        let x: Vec<f64> = (0..n).map(|_| r.random_range(0..levels) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v + r.random_range(0..levels) as f64).collect();
        match kendall_tau_b(&x, &y) {
            Ok(k) => kendall_mismatch += usize::from(k.tau != kendall_oracle(&x, &y)),
            Err(_) => kendall_mismatch += usize::from(x.iter().any(|&v| v != x[0]) && y.iter().any(|&v| v != y[0])),
        }
    }
    let mut bh_mismatch = 0;
    for case in 0..200 {
        let m = r.random_range(1..=60);
        let p: Vec<f64> = (0..m)
            .map(|_| match case % 3 {
                0 => r.random_range(0.0..1.0),
                1 => r.random_range(0.0f64..1.0).powi(4),
                _ => (r.random_range(0..20) as f64) / 400.0,
            })
            .collect();
        let q = [0.05, 0.1, 0.2][case % 3];
        bh_mismatch += usize::from(benjamini_hochberg(&p, q).unwrap() != bh_oracle(&p, q));
    }
    let n = 10_000;
    let y: Vec<bool> = (0..n).map(|_| r.random_bool(0.3)).collect();
    let yhat: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
    let ba = balanced_accuracy(&yhat, &y).unwrap();
    check(
        kendall_mismatch == 0 && bh_mismatch == 0 && (ba - 0.5).abs() <= RANDOM_BA_TOL,
        format!(
            "Kendall mismatches {kendall_mismatch}/300, BH mismatches {bh_mismatch}/200, random-predictor BA {ba:.4} (0.5 +/- {RANDOM_BA_TOL})"
        ),
    )
}

// 6 ------------------------------------------------------------------------

/// Leakage counted from the plan's raw indices.
fn independent_violations(plan: &SplitPlan, panel: &Panel) -> usize {
    let mut v = 0;
    for fold in &plan.folds {
        v += fold.train.iter().chain(&fold.validation).filter(|&&i| panel.year(i) >= plan.test_year).count();
        if plan.scheme == Scheme::CompanyWise {
            let train: BTreeSet<&CompanyId> = fold.train.iter().map(|&i| panel.company(i)).collect();
            v += fold.validation.iter().filter(|&&i| train.contains(panel.company(i))).count();
        }
    }
    v
}

fn c6_splits() -> Outcome {
    let panel = synth_panel(&SynthConfig {
        n_companies: 300,
        obs_per_month: 1,
        seed: 6,
        ..SynthConfig::default()
    });
    let (mut plans, mut violations) = (0, 0);
    for seed in 0..100 {
        for year in 2016..=2020 {
            let mut list = vec![company_kfold(&panel, year, 5, seed).unwrap()];
            if seed == 0 {
                list.push(temporal_split(&panel, year).unwrap());
            }
            for plan in list {
                violations += leakage_violations(&plan, &panel) + independent_violations(&plan, &panel);
                plans += 1;
            }
        }
    }
    check(violations == 0, format!("{violations} violations across {plans} plans (100 seeds x 2016-2020)"))
}

// 7 ------------------------------------------------------------------------

const C7_COMPANIES: usize = 2000;
const C7_TRIALS: usize = 20;
const C7_POOL: usize = 5;
const C7_MIN_GAIN_PP: f64 = 3.0;
const C7_MIN_YEARS: usize = 4;
const C7_NULL_BAND_PP: f64 = 2.0;

fn search(panel: &Panel, plan: &SplitPlan, set: FeatureSet, trials: usize, seed: u64) -> SearchOutcome {
    let space = SearchSpace::default();
    SearchOutcome::from_results(
        (0..trials)
            .into_par_iter()
            .map(|t| (t, run_trial(panel, plan, set, &space, seed, t)))
            .collect::<Vec<_>>(),
    )
}

/// ESG minus benchmark balanced accuracy of the pooled top models, per year.
fn esg_gain(cfg: &SynthConfig) -> Vec<(i32, f64)> {
    let panel = synth_panel(cfg);
    (2016..=2020)
        .map(|year| {
            let plan = company_kfold(&panel, year, C7_TRIALS, 7).unwrap();
            let y: Vec<bool> = plan.test.iter().map(|&i| panel.samples()[i].target).collect();
            let ba = |set| {
                let top = top_k(&search(&panel, &plan, set, C7_TRIALS, 3).records, C7_POOL).unwrap();
                let pooled = pool_records(&top.iter().collect::<Vec<_>>()).unwrap();
                let yhat: Vec<bool> = pooled.probabilities.iter().map(|&p| p > 0.5).collect();
                balanced_accuracy(&yhat, &y).unwrap()
            };
            (year, 100.0 * (ba(FeatureSet::EsgAndBenchmark) - ba(FeatureSet::BenchmarkOnly)))
        })
        .collect()
}

fn c7_planted() -> Outcome {
    let planted = SynthConfig {
        n_companies: C7_COMPANIES,
        obs_per_month: 1,
        seed: 7,
        ..SynthConfig::default()
    };
    let gains = esg_gain(&planted);
    let null = SynthConfig {
        effects: Vec::new(),
        controversy_effect: 0.0,
        ..planted.clone()
    };
    let null_gains = esg_gain(&null);
    let hits = gains.iter().filter(|g| g.1 >= C7_MIN_GAIN_PP).count();
    let null_ok = null_gains.iter().all(|g| g.1.abs() <= C7_NULL_BAND_PP);
    let show = |v: &[(i32, f64)]| v.iter().map(|(y, g)| format!("{y}:{g:+.1}")).collect::<Vec<_>>().join(" ");
    check(
        hits >= C7_MIN_YEARS && null_ok,
        format!(
            "planted gain pp [{}] ({hits}/5 >= {C7_MIN_GAIN_PP}), null gain pp [{}] (all within +/-{C7_NULL_BAND_PP})",
            show(&gains),
            show(&null_gains)
        ),
    )
}

// 8 ------------------------------------------------------------------------

const C8_COMPANIES: usize = 600;
const C8_TRIALS: usize = 200;
const C8_TOP: usize = 100;
const C8_ALPHA: f64 = 0.05;
const C8_YEARS: [i32; 2] = [2019, 2020];

fn top_dependence(cfg: &SynthConfig) -> Vec<(i32, f64, f64)> {
    let panel = synth_panel(cfg);
    C8_YEARS
        .iter()
        .map(|&year| {
            let plan = company_kfold(&panel, year, C8_TRIALS, 8).unwrap();
            let out = search(&panel, &plan, FeatureSet::EsgAndBenchmark, C8_TRIALS, 8);
            let top = top_k(&out.records, C8_TOP).unwrap();
            let v: Vec<f64> = top.iter().map(|r| r.val_logloss).collect();
            let t: Vec<f64> = top.iter().map(|r| r.test_logloss).collect();
            let d = dependence(&v, &t).unwrap();
            (year, d.kendall_tau, d.kendall_p)
        })
        .collect()
}

fn c8_dependence() -> Outcome {
    let stable = SynthConfig {
        n_companies: C8_COMPANIES,
        obs_per_month: 1,
        seed: 8,
        ..SynthConfig::default()
    };
    let rerandomized = SynthConfig {
        yearly_rerandomize: true,
        ..stable.clone()
    };
    let significant = |d: &(i32, f64, f64)| d.1 > 0.0 && d.2 < C8_ALPHA;
    let s = top_dependence(&stable);
    let r = top_dependence(&rerandomized);
    let show = |v: &[(i32, f64, f64)]| {
        v.iter().map(|(y, tau, p)| format!("{y}: tau {tau:.2} p {p:.1e}")).collect::<Vec<_>>().join(", ")
    };
    check(
        s.iter().all(significant) && !r.iter().any(significant),
        format!("stable [{}]; re-randomized [{}]", show(&s), show(&r)),
    )
}

// 9 ------------------------------------------------------------------------

const C9_COMPANIES: usize = 1000;
const C9_NULL_SEEDS: u64 = 20;
const C9_PLANTED_SEEDS: u64 = 4;
const C9_REPLICATES: usize = 5;
const C9_MIN_SIGN_ACCURACY: f64 = 0.90;
const C9_MAX_NULL_RATE: f64 = 0.05 + 0.03;
const BUCKETS: [CapBucket; 4] = [CapBucket::All, CapBucket::Small, CapBucket::Mid, CapBucket::Large];

/// `(flagged, tested, flagged with the planted sign)` over the four buckets.
fn materiality_counts(cfg: &SynthConfig) -> (usize, usize, usize) {
    let panel = synth_panel(cfg);
    let rows: Vec<usize> = (0..panel.len()).collect();
    let params = Hyperparams {
        n_trees: 150,
        max_leaves: 16,
        min_samples_leaf: 40,
        learning_rate: 0.07,
        bagging_fraction: 0.8,
        feature_fraction: 0.8,
        l2_leaf_reg: 1.0,
        seed: cfg.seed,
        ..Hyperparams::default()
    };
    let fit_rows = |idx: &[usize], seed: u64| {
        let p = Hyperparams { seed, ..params.clone() };
        fit(&panel.matrix(idx, FeatureSet::EsgAndBenchmark), &panel.labels(idx), &p).unwrap()
    };
    let model = fit_rows(&rows, cfg.seed);
    let replicates: Vec<Ensemble> = (0..C9_REPLICATES)
        .into_par_iter()
        .map(|k| fit_rows(&half_sample(&panel, &rows, cfg.seed, k), 1000 + k as u64))
        .collect();
    let background: Vec<usize> = rows.iter().copied().filter(|&i| panel.year(i) >= 2018).collect();
    let config = MaterialityConfig {
        max_background: 300,
        seed: cfg.seed,
        test: SlopeTest::Replicates(&replicates),
        ..MaterialityConfig::default()
    };
    let (mut flagged, mut tested, mut correct) = (0, 0, 0);
    for bucket in BUCKETS {
        let cells = materiality(&model, &panel, &background, bucket, &config).unwrap();
        tested += cells.iter().filter(|c| c.p_value.is_some()).count();
        for c in cells.iter().filter(|c| c.significant) {
            flagged += 1;
            // Mean planted slope over the cell's background rows.
            let code = panel.categories().code(CategoricalColumn::SectorL1, &c.sector).unwrap() as f64;
            let mut planted = 0.0;
            for &i in &background {
                let row = panel.encoded_row(i);
                if row[SECTOR_L1_COLUMN] != code || !bucket.contains(row[MARKET_CAP_COLUMN]) {
                    continue;
                }
                planted += cfg
                    .effects
                    .iter()
                    .filter(|e| e.feature == c.feature && e.applies(&c.sector, row[MARKET_CAP_COLUMN]))
                    .map(|e| e.size)
                    .sum::<f64>();
                if c.feature == EsgScore::Controversy {
                    planted += cfg.controversy_effect;
                }
            }
            let slope = c.slope_pct.unwrap();
            correct += usize::from(planted != 0.0 && planted.signum() == slope.signum());
        }
    }
    (flagged, tested, correct)
}

fn c9_materiality() -> Outcome {
    let base = SynthConfig {
        n_companies: C9_COMPANIES,
        obs_per_month: 1,
        ..SynthConfig::default()
    };
    let (mut sig, mut right) = (0, 0);
    for seed in 0..C9_PLANTED_SEEDS {
        let (f, _, c) = materiality_counts(&SynthConfig { seed: 900 + seed, ..base.clone() });
        sig += f;
        right += c;
    }
    let (mut null_flagged, mut null_tested) = (0, 0);
    for seed in 0..C9_NULL_SEEDS {
        let (f, t, _) = materiality_counts(&SynthConfig { seed: 950 + seed, ..base.null() });
        null_flagged += f;
        null_tested += t;
    }
    let accuracy = right as f64 / sig.max(1) as f64;
    let null_rate = null_flagged as f64 / null_tested.max(1) as f64;
    check(
        sig > 0 && accuracy >= C9_MIN_SIGN_ACCURACY && null_rate <= C9_MAX_NULL_RATE,
        format!(
            "planted: {right}/{sig} flagged cells with the planted sign ({:.1}% >= {:.0}%); \
             null: {null_flagged}/{null_tested} cells flagged over {C9_NULL_SEEDS} seeds ({:.2}% <= {:.0}%)",
            100.0 * accuracy,
            100.0 * C9_MIN_SIGN_ACCURACY,
            100.0 * null_rate,
            100.0 * C9_MAX_NULL_RATE
        ),
    )
}

// 10 -----------------------------------------------------------------------

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "first_test_year": 2018,
        "last_test_year": 2020,
        "n_trials": 12,
        "top_k": 8,
        "pool_size": 3,
        "n_resamples": 20,
        "seed": 10,
        "search_space": { "n_trees": [10, 60], "max_leaves": [4, 16], "min_samples_leaf": [5, 30] },
        "synth": { "n_companies": 250, "first_year": 2008, "last_year": 2020, "obs_per_month": 5 },
        "explain": { "replicates": 3, "min_cell_samples": 10, "max_background": 100 }
    });
    let config_path = dir.path().join("run.json");
    fs::write(&config_path, config.to_string()).unwrap();
    let runs = [dir.path().join("a"), dir.path().join("b")];
    for out in &runs {
        for cmd in ["synth", "targets", "experiment", "explain"] {
            let status = Command::new(env!("CARGO_BIN_EXE_alphabit"))
                .args([cmd, "--config", config_path.to_str().unwrap(), "--out", out.to_str().unwrap()])
                .stdout(Stdio::null())
                .status()
                .unwrap();
            if !status.success() {
                return Err(format!("`alphabit {cmd}` exited with {status}"));
            }
        }
    }
    let (a, b) = (files_under(&runs[0]), files_under(&runs[1]));
    if a != b {
        return Err("runs produced different file sets".into());
    }
    let reports: Vec<&PathBuf> = a.iter().filter(|p| !p.to_string_lossy().starts_with("manifest_")).collect();
    let differing: Vec<String> = reports
        .iter()
        .filter(|p| fs::read(runs[0].join(p)).unwrap() != fs::read(runs[1].join(p)).unwrap())
        .map(|p| p.display().to_string())
        .collect();
    // Manifests embed the output directory; their hash maps must agree.
    let hashes = |root: &Path, p: &Path| {
        let v: serde_json::Value = serde_json::from_slice(&fs::read(root.join(p)).unwrap()).unwrap();
        v["files"].clone()
    };
    let manifests: Vec<&PathBuf> = a.iter().filter(|p| p.to_string_lossy().starts_with("manifest_")).collect();
    let manifest_diffs = manifests.iter().filter(|p| hashes(&runs[0], p) != hashes(&runs[1], p)).count();
    check(
        differing.is_empty() && manifest_diffs == 0 && manifests.len() == 4,
        format!(
            "{} report files compared byte for byte, {} differ {:?}; {} manifest hash maps, {manifest_diffs} differ",
            reports.len(),
            differing.len(),
            differing,
            manifests.len()
        ),
    )
}
