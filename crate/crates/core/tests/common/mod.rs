use alphabit_core::factor::{company_targets, FactorModel, TargetRun};
use alphabit_core::panel::{build_panel, Panel};
use alphabit_core::synth::{generate, SynthConfig};

pub fn synth_panel(n_companies: usize, seed: u64) -> Panel {
    let cfg = SynthConfig {
        n_companies,
        obs_per_month: 1,
        seed,
        ..SynthConfig::default()
    };
    let data = generate(&cfg).unwrap();
    let years: Vec<i32> = (cfg.first_year..=cfg.last_year).collect();
    let mut run = TargetRun::default();
    for c in 0..data.companies.len() {
        run.extend(company_targets(&data.price_series(c).unwrap(), &data.factors, FactorModel::Capm, &years));
    }
    build_panel(data.features, &run.as_map()).unwrap().panel
}
