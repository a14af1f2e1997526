use std::collections::BTreeMap;

use labordemand::io::PipelineConfig;
use labordemand::market_sim::*;
use labordemand::pipeline::{run_synthetic, TIGHTNESS, WAGE};
use labordemand::policy::*;
use proptest::prelude::*;

const YEARS: [i32; 8] = [2012, 2013, 2014, 2015, 2016, 2017, 2018, 2019];
const TIGHTNESS_SERIES: [f64; 8] = [0.24457256, 0.22334746, 0.24606094, 0.27413556, 0.29112986, 0.35252666, 0.42646006, 0.47312701];
const FULL_TIME: [f64; 8] = [19.360292, 19.505922, 19.717863, 19.899733, 20.18586, 20.435862, 20.839214, 20.9289];
const PART_TIME: [f64; 8] = [13.580809, 13.937017, 14.291071, 14.517637, 14.898007, 15.232993, 15.579667, 15.722178];

fn counterfactual_inputs(eta_ft: f64, eta_pt: f64, draws: usize) -> CounterfactualInputs {
    CounterfactualInputs {
        years: YEARS.to_vec(),
        tightness: TIGHTNESS_SERIES.to_vec(),
        groups: vec![
            GroupSeries { name: "full_time".into(), employment: FULL_TIME.to_vec(), eta_lt: Estimate::new(eta_ft, 0.002) },
            GroupSeries { name: "part_time".into(), employment: PART_TIME.to_vec(), eta_lt: Estimate::new(eta_pt, 0.002) },
        ],
        base_year: 2012,
        convention: ChangeConvention::LogChange,
        path: CounterfactualPath::FromBase,
        draws,
        seed: 11,
        ci_level: 0.95,
    }
}

#[test]
fn full_time_counterfactual_and_gap() {
    let res = counterfactual_employment(&counterfactual_inputs(-0.048, -0.043, 2000)).unwrap();
    let ft = res.groups.iter().find(|g| g.name == "full_time").unwrap();
    let last = ft.counterfactual.last().unwrap();
    assert!((last - 21.618454).abs() / 21.618454 < 0.005, "{last}");
    assert!((res.gap - 1.1).abs() <= 0.1, "gap {}", res.gap);
    assert!(res.gap_ci.0 <= res.gap && res.gap <= res.gap_ci.1);
}

#[test]
fn no_tightness_response_means_no_gap() {
    let mut inp = counterfactual_inputs(0.0, 0.0, 200);
    for g in inp.groups.iter_mut() {
        g.eta_lt.se = 0.0;
    }
    for path in [CounterfactualPath::FromBase, CounterfactualPath::Chained] {
        inp.path = path;
        let res = counterfactual_employment(&inp).unwrap();
        assert_eq!(res.gap, 0.0);
        assert_eq!(res.factual, res.counterfactual);
    }
}

#[test]
fn minimum_wage_cells() {
    for (eta, se, target) in [(-0.494, 0.022, -67_210.0), (-0.713, 0.021, -97_006.0)] {
        let inp = MinWageInputs {
            elasticity: Estimate::new(eta, se),
            wage_effect: Estimate::new(0.0069, 0.00004),
            workforce: 19_717_863.0,
            draws: 10_000,
            seed: 5,
        };
        let res = minwage_effect(&inp).unwrap();
        assert!((res.employment_change - target).abs() / target.abs() < 1e-3);
        assert!(res.std_error > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn minimum_wage_point_is_bilinear(eta in -2.0..0.0f64, we in 0.0..0.05f64, k in 0.1..3.0f64) {
        let run = |eta: f64, we: f64| {
            minwage_effect(&MinWageInputs {
                elasticity: Estimate::new(eta, 0.0),
                wage_effect: Estimate::new(we, 0.0),
                workforce: 1e6,
                draws: 1,
                seed: 0,
            })
            .unwrap()
            .employment_change
        };
        let base = run(eta, we);
        prop_assert!((run(k * eta, we) - k * base).abs() <= 1e-9 * base.abs().max(1.0));
        prop_assert!((run(eta, k * we) - k * base).abs() <= 1e-9 * base.abs().max(1.0));
    }
}

#[test]
fn simulated_error_is_thread_count_independent() {
    let inp = MinWageInputs {
        elasticity: Estimate::new(-0.5, 0.02),
        wage_effect: Estimate::new(0.0069, 0.00004),
        workforce: 1e7,
        draws: 3000,
        seed: 9,
    };
    let parallel = minwage_effect(&inp).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| minwage_effect(&inp).unwrap());
    assert_eq!(parallel, serial);
}

#[test]
fn simulation_is_deterministic_and_shares_sum_to_one() {
    let cfg = EconomyConfig { n_firms: 150, n_occupations: 10, n_regions: 4, ..Default::default() };
    let a = simulate_economy(&cfg).unwrap();
    let b = simulate_economy(&cfg).unwrap();
    assert_eq!(a.firms, b.firms);
    assert_eq!(a.markets, b.markets);
    let mut totals: BTreeMap<(u64, i32), f64> = BTreeMap::new();
    for r in &a.firms {
        *totals.entry((r.firm_id, r.year)).or_default() += r.employment;
    }
    let mut sums: BTreeMap<(u64, i32), f64> = BTreeMap::new();
    for r in &a.firms {
        *sums.entry((r.firm_id, r.year)).or_default() += r.employment / totals[&(r.firm_id, r.year)];
    }
    for s in sums.values() {
        assert!((s - 1.0).abs() <= 1e-12);
    }
    let c = simulate_economy(&EconomyConfig { seed: 2, ..cfg }).unwrap();
    assert_ne!(a.firms, c.firms);
}

#[test]
fn without_confounding_least_squares_is_unbiased_too() {
    let mut cfg = PipelineConfig::default();
    cfg.simulate = EconomyConfig { demand_confound_sd: 0.0, n_firms: 1500, ..Default::default() };
    let mut ols_lw = Vec::new();
    let mut iv_lt = Vec::new();
    for seed in 1..=8 {
        cfg.simulate.seed = seed;
        let run = run_synthetic(&simulate_economy(&cfg.simulate).unwrap(), &cfg).unwrap();
        ols_lw.push(run.estimates.ols.as_ref().unwrap().estimate(WAGE).unwrap());
        iv_lt.push(run.estimates.tsls.estimate(TIGHTNESS).unwrap());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean(&ols_lw) + 0.713).abs() < 0.05 * 0.713, "ols {:?}", ols_lw);
    assert!((mean(&iv_lt) + 0.048).abs() < 0.1 * 0.048, "iv {:?}", iv_lt);
}

#[test]
fn confounding_biases_least_squares_upward() {
    let mut cfg = PipelineConfig::default();
    cfg.simulate.n_firms = 1000;
    for seed in 1..=5 {
        cfg.simulate.seed = seed;
        let run = run_synthetic(&simulate_economy(&cfg.simulate).unwrap(), &cfg).unwrap();
        assert!(run.estimates.ols.as_ref().unwrap().estimate(WAGE).unwrap() > -0.713);
    }
}

#[test]
fn degenerate_configs_are_flagged() {
    let flat = EconomyConfig {
        national_shock_sd: NationalShockSd { wage: 0.0, vacancies: 0.0, job_seekers: 0.0 },
        ..Default::default()
    };
    assert!(matches!(simulate_economy(&flat), Err(SimError::Degenerate(_))));
    let single = EconomyConfig { n_occupations: 1, ..Default::default() };
    assert!(matches!(simulate_economy(&single), Err(SimError::Degenerate(_))));
}

#[test]
fn steady_state_residual_is_small() {
    let m = MatchingParams::new(0.5, 0.46).unwrap();
    for (l, u) in [(100.0, 25.0), (5e4, 3e3), (1e6, 1e4)] {
        let theta = steady_state_tightness(0.331, l, 0.5, u, 0.46).unwrap();
        let resid = (matches(u, theta * u, &m) - 0.331 * l).abs() / (0.331 * l);
        assert!(resid <= 1e-10, "{resid}");
    }
}
