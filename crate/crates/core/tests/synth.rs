use alphabit_core::explain::CapBucket;
use alphabit_core::factor::{company_targets, FactorModel};
use alphabit_core::panel::{monthly_returns, EsgScore, FeatureRow};
use alphabit_core::synth::{generate, GroundTruth, PlantedEffect, SynthConfig};
use std::collections::BTreeMap;

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        n_companies: 300,
        obs_per_month: 1,
        seed,
        ..SynthConfig::default()
    }
}

fn share_of_ones(gt: &[GroundTruth]) -> f64 {
    gt.iter().filter(|g| g.bit).count() as f64 / gt.len() as f64
}

#[test]
fn null_market_gives_fair_coins() {
    let cfg = SynthConfig {
        n_companies: 530,
        ..small(4).null()
    };
    let data = generate(&cfg).unwrap();
    assert!(data.ground_truth.len() >= 10_000);
    let share = share_of_ones(&data.ground_truth);
    assert!((share - 0.5).abs() < 0.02, "{share}");
}

/// Mean true annual return of company-years in `within`, split by `pred`.
fn group_means(
    cfg: &SynthConfig,
    within: impl Fn(&FeatureRow) -> bool,
    pred: impl Fn(&FeatureRow) -> bool,
) -> (f64, f64) {
    let data = generate(cfg).unwrap();
    let truth: BTreeMap<_, _> = data
        .ground_truth
        .iter()
        .map(|g| ((g.company.clone(), g.year), g.annual_idio_true))
        .collect();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for row in data.features.iter().filter(|r| within(r)) {
        let v = truth[&(row.company.clone(), row.year)];
        if pred(row) {
            a.push(v);
        } else {
            b.push(v);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&a), mean(&b))
}

#[test]
fn controversy_effect_separates_group_means() {
    let cfg = SynthConfig {
        controversy_effect: 4.0,
        ..small(2).null()
    };
    let (high, low) = group_means(&cfg, |_| true, |r| r.score(EsgScore::Controversy).is_some_and(|v| v > 0.5));
    assert!(high > low + 0.05, "{high} vs {low}");
}

#[test]
fn cap_bucket_signs_order_group_means() {
    let effect = |cap_bucket, size| PlantedEffect {
        feature: EsgScore::ResourceUse,
        sector: None,
        cap_bucket,
        size,
    };
    let cfg = SynthConfig {
        effects: vec![effect(CapBucket::Small, -4.0), effect(CapBucket::Large, 4.0)],
        ..small(3).null()
    };
    let good = |r: &FeatureRow| r.score(EsgScore::ResourceUse).is_some_and(|v| v > 0.5);
    let (small_hi, small_lo) = group_means(&cfg, |r| r.market_cap < 2e9, good);
    let (large_hi, large_lo) = group_means(&cfg, |r| r.market_cap > 1e10, good);
    assert!(small_hi < small_lo, "{small_hi} vs {small_lo}");
    assert!(large_hi > large_lo, "{large_hi} vs {large_lo}");
}

#[test]
fn targets_recover_ground_truth() {
    let cfg = small(5);
    let data = generate(&cfg).unwrap();
    let years: Vec<i32> = (cfg.first_year..=cfg.last_year).collect();
    let truth: BTreeMap<_, _> = data
        .ground_truth
        .iter()
        .map(|g| ((g.company.clone(), g.year), g.bit))
        .collect();
    let (mut agree, mut total) = (0usize, 0usize);
    for c in 0..data.companies.len() {
        let run = company_targets(&data.price_series(c).unwrap(), &data.factors, FactorModel::Capm, &years);
        assert!(run.skipped.is_empty());
        for t in run.targets {
            total += 1;
            agree += usize::from(truth[&(t.company, t.year)] == t.value);
        }
    }
    assert_eq!(total, data.ground_truth.len());
    let rate = agree as f64 / total as f64;
    assert!(rate >= 0.95, "agreement {rate}");
}

#[test]
fn daily_path_matches_month_ends() {
    let cfg = SynthConfig {
        n_companies: 3,
        first_year: 2015,
        last_year: 2016,
        ..SynthConfig::default()
    };
    let data = generate(&cfg).unwrap();
    let series = data.price_series(1).unwrap();
    let returns = monthly_returns(&series).unwrap();
    assert_eq!(returns.len(), data.month_end_prices[1].len() - 1);
    for (k, r) in returns.iter().enumerate() {
        let p = &data.month_end_prices[1];
        assert!((r.value - (p[k + 1] / p[k] - 1.0)).abs() < 1e-12);
    }
}

#[test]
fn generation_is_deterministic() {
    let cfg = SynthConfig {
        n_companies: 50,
        ..small(8)
    };
    assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
    let other = SynthConfig { seed: 9, ..cfg.clone() };
    assert_ne!(generate(&cfg).unwrap().ground_truth, generate(&other).unwrap().ground_truth);
}

#[test]
fn coverage_grows_and_missingness_decays() {
    let cfg = small(1);
    let data = generate(&cfg).unwrap();
    let rows = |y: i32| data.features.iter().filter(|r| r.year == y).collect::<Vec<_>>();
    let (first, last) = (rows(cfg.first_year), rows(cfg.last_year));
    assert!(first.len() < last.len());
    assert_eq!(last.len(), cfg.n_companies);
    let missing = |rs: &[&FeatureRow]| {
        rs.iter().map(|r| r.scores.iter().filter(|s| s.is_none()).count()).sum::<usize>() as f64
            / (rs.len() * EsgScore::COUNT) as f64
    };
    assert!(missing(&first) > missing(&last));
}
