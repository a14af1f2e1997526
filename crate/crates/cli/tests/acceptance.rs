//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::BTreeMap;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use labordemand::estimator::{ols, rotemberg, tsls, Dataset, FixedEffect, RegressionSpec};
use labordemand::io::PipelineConfig;
use labordemand::market_sim::simulate_economy;
use labordemand::model::{aggregate_wage_elasticity, annualize_separation_rate, feedback_shrinkage, vacancy_matching_elasticity};
use labordemand::pipeline::{run_synthetic, DEPENDENT, TIGHTNESS, WAGE};
use labordemand::policy::*;
use labordemand::shift_share::rotemberg_components;
use labordemand::tightness::{adjust_markets, flow_weights, FlowWeights, MarketAdjustment, TransitionMatrix};
use labordemand::zones::{modularity, sweep_thresholds, threshold_grid, CommutingGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    if took > limit {
        o.pass = false;
    }
    o.detail = format!("{} [{:.2}s, limit {}s]", o.detail, took.as_secs_f64(), limit.as_secs());
    o
}

fn calibration_reproduction() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let input = dir.path().join("table.json");
    std::fs::write(&input, r#"{"delta": 0.331, "r": 0.150, "eta_lw": -0.730, "eta_lt": -0.051, "phi1": 1.852, "phi2": 0.468}"#)
        .expect("write input");
    let out = Command::new(env!("CARGO_BIN_EXE_labordemand"))
        .args(["calibrate", "--input"])
        .arg(&input)
        .output()
        .expect("run calibrate");
    let text = String::from_utf8_lossy(&out.stdout).trim().to_string();
    let value: f64 = text.parse().unwrap_or(f64::NAN);
    outcome(out.status.success() && (value - 0.429).abs() <= 0.001, format!("Φ/W printed as {text}"))
}

fn aggregate_elasticity() -> Outcome {
    let ft = aggregate_wage_elasticity(-0.713, -0.048, 9.285).unwrap();
    let pt = aggregate_wage_elasticity(-0.067, -0.043, 10.36).unwrap();
    let shrink = feedback_shrinkage(-0.048, 9.285).unwrap();
    let pass = (ft + 0.49).abs() <= 0.005 && (pt + 0.05).abs() <= 0.005 && (shrink - 0.308).abs() <= 0.003;
    outcome(pass, format!("full-time {ft:.4}, part-time {pt:.4}, shrinkage {:.2}%", 100.0 * shrink))
}

fn matching_inversion() -> Outcome {
    let v = vacancy_matching_elasticity(9.285, -4.039).unwrap();
    outcome((v - 0.54).abs() <= 0.01, format!("1 − μ = {v:.4}"))
}

fn separation_conversion() -> Outcome {
    let d = annualize_separation_rate(0.0010999).unwrap();
    outcome((d - 0.331).abs() <= 0.0005, format!("yearly rate {d:.5}"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn identification_oracle() -> Outcome {
    let base = PipelineConfig::default();
    let truth = (base.simulate.true_eta_lw, base.simulate.true_eta_lt);
    let runs: Vec<Result<(f64, f64, f64, f64, f64), String>> = (1..=200u64)
        .into_par_iter()
        .map(|seed| {
            let mut cfg = base.clone();
            cfg.simulate.seed = seed;
            let panel = simulate_economy(&cfg.simulate).map_err(|e| e.to_string())?;
            let run = run_synthetic(&panel, &cfg).map_err(|e| e.to_string())?;
            let e = &run.estimates;
            let ols_lw = e.ols.as_ref().and_then(|o| o.estimate(WAGE)).unwrap_or(f64::NAN);
            Ok((
                e.tsls.estimate(WAGE).unwrap_or(f64::NAN),
                e.tsls.estimate(TIGHTNESS).unwrap_or(f64::NAN),
                ols_lw,
                e.tsls.first_stage_f(WAGE).unwrap_or(0.0),
                e.tsls.first_stage_f(TIGHTNESS).unwrap_or(0.0),
            ))
        })
        .collect();
    let errors: Vec<&String> = runs.iter().filter_map(|r| r.as_ref().err()).collect();
    if let Some(e) = errors.first() {
        return outcome(false, format!("{} replications failed, first: {e}", errors.len()));
    }
    let rows: Vec<_> = runs.into_iter().map(Result::unwrap).collect();
    let n = rows.len() as f64;
    let med_lw = median(rows.iter().map(|r| r.0).collect());
    let med_lt = median(rows.iter().map(|r| r.1).collect());
    let ols_above = rows.iter().filter(|r| r.2 > truth.0).count() as f64 / n;
    let strong = rows.iter().filter(|r| r.3 > 10.0 && r.4 > 10.0).count() as f64 / n;
    let rel_lw = (med_lw - truth.0).abs() / truth.0.abs();
    let rel_lt = (med_lt - truth.1).abs() / truth.1.abs();
    let pass = rel_lw <= 0.05 && rel_lt <= 0.05 && ols_above >= 0.95 && strong >= 0.90;
    outcome(
        pass,
        format!(
            "median 2SLS η_W {med_lw:.4} ({:.1}% off), η_θ {med_lt:.5} ({:.1}% off); OLS above truth {:.0}%; all F > 10 in {:.0}%",
            100.0 * rel_lw,
            100.0 * rel_lt,
            100.0 * ols_above,
            100.0 * strong
        ),
    )
}

fn rotemberg_identities() -> Outcome {
    let mut worst_sum: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut fixtures = 0;
    for seed in 1..=3u64 {
        let mut cfg = PipelineConfig::default();
        cfg.simulate.seed = seed;
        cfg.simulate.n_firms = 800;
        cfg.simulate.n_occupations = 15;
        let panel = match simulate_economy(&cfg.simulate) {
            Ok(p) => p,
            Err(e) => return outcome(false, e.to_string()),
        };
        let run = match run_synthetic(&panel, &cfg) {
            Ok(r) => r,
            Err(e) => return outcome(false, e.to_string()),
        };
        let units = run.data.key("unit").unwrap().to_vec();
        let years: Vec<i32> = run.data.key("year").unwrap().iter().map(|&y| y as i32).collect();
        for (endog, growth) in [(WAGE, &run.instruments.wage_growth), (TIGHTNESS, &run.instruments.vacancy_growth)] {
            let comps = rotemberg_components(&run.instruments.shares, growth, &units, &years);
            let spec = RegressionSpec::new(DEPENDENT, &[endog]).fixed_effect(FixedEffect::single("year")).cluster("unit");
            match rotemberg(&spec, &run.data, &comps) {
                Ok(rep) => {
                    worst_sum = worst_sum.max((rep.sum_alpha - 1.0).abs());
                    worst_gap = worst_gap.max(rep.identity_gap());
                    fixtures += 1;
                }
                Err(e) => return outcome(false, e.to_string()),
            }
        }
    }
    outcome(
        worst_sum <= 1e-8 && worst_gap <= 1e-6,
        format!("{fixtures} fixtures: max |Σα − 1| = {worst_sum:.2e}, max relative gap to Bartik IV = {worst_gap:.2e}"),
    )
}

fn flow_collapse() -> Outcome {
    let cfg = labordemand::market_sim::EconomyConfig { n_firms: 50, n_occupations: 12, n_regions: 5, ..Default::default() };
    let panel = simulate_economy(&cfg).unwrap();
    let codes: Vec<String> = panel.occupation_employment.iter().map(|r| r.occupation.clone()).collect();
    let n = codes.len();
    let identity: Vec<Vec<f64>> = (0..n).map(|o| (0..n).map(|h| f64::from(u8::from(o == h))).collect()).collect();
    let tm = TransitionMatrix::new(codes.clone(), identity, vec![1.0; n]).unwrap();
    let none = flow_weights(&tm, 10.0).unwrap();
    let raw = adjust_markets(&panel.markets, &MarketAdjustment::default()).unwrap();
    let no_flows = adjust_markets(&panel.markets, &MarketAdjustment { flows: Some(&none), ..Default::default() }).unwrap();
    let collapse = raw.iter().zip(&no_flows).all(|(a, b)| {
        a.adjusted_vacancies == b.adjusted_vacancies && a.adjusted_job_seekers == b.adjusted_job_seekers
    });
    let uniform = FlowWeights { occupations: codes, weights: vec![vec![1.0; n]; n] };
    let pooled = adjust_markets(&panel.markets, &MarketAdjustment { flows: Some(&uniform), ..Default::default() }).unwrap();
    let mut totals: BTreeMap<(i32, u64), (f64, f64)> = BTreeMap::new();
    for m in &raw {
        let t = totals.entry((m.year, m.region)).or_default();
        t.0 += m.total_vacancies;
        t.1 += m.job_seekers;
    }
    let aggregate = pooled.iter().all(|m| {
        let t = totals[&(m.year, m.region)];
        m.adjusted_vacancies == t.0 && m.adjusted_job_seekers == t.1
    });
    outcome(
        collapse && aggregate,
        format!("zero cross-flows identical: {collapse}; uniform weights equal zone totals: {aggregate} ({} cells)", raw.len()),
    )
}

/// Modularity straight from `(1/2m) Σ_ij [A_ij − k_i k_j / 2m] δ(c_i, c_j)`.
fn brute_force_modularity(a: &[Vec<f64>], c: &[usize]) -> f64 {
    let n = a.len();
    let k: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if c[i] == c[j] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

fn zone_delineation() -> Outcome {
    let n = 20;
    let planted: Vec<usize> = (0..n).map(|i| usize::from(i >= 10)).collect();
    let mut flows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let f = if planted[i] == planted[j] { 40.0 + ((i * 7 + j * 3) % 11) as f64 } else { 1.0 + ((i + j) % 3) as f64 };
            flows[i][j] = f;
            flows[j][i] = f;
        }
    }
    let lf: Vec<f64> = (0..n).map(|i| 2000.0 + 150.0 * ((i * 5) % 13) as f64).collect();
    let graph = CommutingGraph::new((1..=n as u64).collect(), flows.clone(), lf).unwrap();
    let sweep = sweep_thresholds(&graph, &threshold_grid(0.0, 0.5, 0.005)).unwrap();
    let found = &sweep.best.assignment;
    let recovered = (0..n).all(|i| (0..n).all(|j| (found[i] == found[j]) == (planted[i] == planted[j])));
    let brute = brute_force_modularity(&flows, found);
    let q_match = (sweep.best.modularity - brute).abs() <= 1e-12;
    let single = modularity(&graph, &vec![0; n]);
    outcome(
        recovered && q_match && single == 0.0,
        format!(
            "planted partition recovered: {recovered}; Q = {:.12} vs brute force {:.12}; all-in-one Q = {single}",
            sweep.best.modularity, brute
        ),
    )
}

fn minimum_wage() -> Outcome {
    let cell = |eta: f64, se: f64, seed: u64| MinWageInputs {
        elasticity: Estimate::new(eta, se),
        wage_effect: Estimate::new(0.0069, 0.00004),
        workforce: 19_718_000.0,
        draws: 10_000,
        seed,
    };
    let a = minwage_effect(&cell(-0.713, 0.021, 1)).unwrap().employment_change;
    let b = minwage_effect(&cell(-0.494, 0.022, 1)).unwrap().employment_change;
    let ok_points = ((a + 96_432.0) / 96_432.0).abs() <= 0.02 && ((b + 66_757.0) / 66_757.0).abs() <= 0.02;
    let ses: Vec<f64> = (1..=5).map(|s| minwage_effect(&cell(-0.713, 0.021, s)).unwrap().std_error).collect();
    let mean = ses.iter().sum::<f64>() / ses.len() as f64;
    let spread = ses.iter().map(|s| (s - mean).abs() / mean).fold(0.0, f64::max);
    outcome(
        ok_points && spread <= 0.02,
        format!("cells {a:.0} / {b:.0}; simulated SE {mean:.0}, max deviation across 5 seeds {:.2}%", 100.0 * spread),
    )
}

fn counterfactual() -> Outcome {
    let years = vec![2012, 2013, 2014, 2015, 2016, 2017, 2018, 2019];
    let theta = vec![0.24457256, 0.22334746, 0.24606094, 0.27413556, 0.29112986, 0.35252666, 0.42646006, 0.47312701];
    let ft = vec![19.360292, 19.505922, 19.717863, 19.899733, 20.18586, 20.435862, 20.839214, 20.9289];
    let pt = vec![13.580809, 13.937017, 14.291071, 14.517637, 14.898007, 15.232993, 15.579667, 15.722178];
    let inp = CounterfactualInputs {
        years,
        tightness: theta,
        groups: vec![
            GroupSeries { name: "full_time".into(), employment: ft, eta_lt: Estimate::new(-0.048, 0.002) },
            GroupSeries { name: "part_time".into(), employment: pt, eta_lt: Estimate::new(-0.043, 0.002) },
        ],
        base_year: 2012,
        convention: ChangeConvention::LogChange,
        path: CounterfactualPath::FromBase,
        draws: 2000,
        seed: 1,
        ci_level: 0.95,
    };
    let res = match counterfactual_employment(&inp) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let ft_2019 = *res.groups[0].counterfactual.last().unwrap();
    let rel = (ft_2019 - 21.618454).abs() / 21.618454;
    outcome(
        rel <= 0.005 && (res.gap - 1.1).abs() <= 0.1,
        format!("full-time 2019 counterfactual {ft_2019:.4}M ({:.2}% off); total gap {:.3}M", 100.0 * rel, res.gap),
    )
}

fn numerical_core() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut g = || -> f64 { rng.sample(StandardNormal) };
    let n = 400;
    let groups: Vec<u64> = (0..n as u64).map(|i| i % 7).collect();
    let z: Vec<f64> = (0..n).map(|_| g()).collect();
    let u: Vec<f64> = (0..n).map(|_| g()).collect();
    let w: Vec<f64> = (0..n).map(|_| g()).collect();
    let x: Vec<f64> = (0..n).map(|i| 0.7 * z[i] + 0.5 * u[i] + 0.2 * groups[i] as f64 + 0.3 * g()).collect();
    let y: Vec<f64> = (0..n).map(|i| -0.5 * x[i] + 0.4 * w[i] + groups[i] as f64 + u[i]).collect();
    let mut data = Dataset::new(n)
        .with_column("y", y)
        .unwrap()
        .with_column("x", x)
        .unwrap()
        .with_column("w", w)
        .unwrap()
        .with_column("z", z)
        .unwrap()
        .with_key("g", groups.clone())
        .unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);

    let ls = ols(&RegressionSpec::new("y", &["x"]).exogenous(&["w"]), &data).unwrap();
    let self_iv = tsls(&RegressionSpec::new("y", &["x"]).exogenous(&["w"]).instruments(&["x"]), &data).unwrap();
    let self_gap = ls.coefficients.iter().zip(&self_iv.coefficients).map(|(a, b)| rel(a.estimate, b.estimate)).fold(0.0, f64::max);

    let absorbed = ols(&RegressionSpec::new("y", &["x"]).exogenous(&["w"]).fixed_effect(FixedEffect::single("g")), &data).unwrap();
    let mut names = Vec::new();
    for level in 1..7u64 {
        let name = format!("g{level}");
        data.add_column(name.clone(), groups.iter().map(|&v| f64::from(u8::from(v == level))).collect()).unwrap();
        names.push(name);
    }
    let mut exog = vec!["w"];
    exog.extend(names.iter().map(String::as_str));
    let dummies = ols(&RegressionSpec::new("y", &["x"]).exogenous(&exog), &data).unwrap();
    let fe_gap = ["x", "w"]
        .iter()
        .map(|c| rel(absorbed.estimate(c).unwrap(), dummies.estimate(c).unwrap()))
        .fold(0.0, f64::max);

    let iv = tsls(&RegressionSpec::new("y", &["x"]).exogenous(&["w"]).instruments(&["z"]), &data).unwrap();
    let pi = iv.first_stages[0].coefficients.iter().find(|c| c.name == "z").unwrap().estimate;
    let rf = iv.reduced_form.as_ref().unwrap().iter().find(|c| c.name == "z").unwrap().estimate;
    let chain_gap = rel(rf, pi * iv.estimate("x").unwrap());

    outcome(
        self_gap <= 1e-8 && fe_gap <= 1e-9 && chain_gap <= 1e-8,
        format!("self-instrumented gap {self_gap:.1e}; absorbed vs dummies {fe_gap:.1e}; IV chain {chain_gap:.1e}"),
    )
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome>)> = vec![
        ("1 calibration reproduction", Box::new(|| timed(Duration::from_secs(1), calibration_reproduction))),
        ("2 aggregate elasticity", Box::new(|| timed(Duration::from_secs(1), aggregate_elasticity))),
        ("3 matching-elasticity inversion", Box::new(matching_inversion)),
        ("4 separation-rate conversion", Box::new(separation_conversion)),
        ("5 identification oracle", Box::new(|| timed(Duration::from_secs(300), identification_oracle))),
        ("6 Rotemberg identities", Box::new(rotemberg_identities)),
        ("7 flow-adjustment collapse", Box::new(flow_collapse)),
        ("8 zone delineation", Box::new(zone_delineation)),
        ("9 minimum-wage simulation", Box::new(minimum_wage)),
        ("10 counterfactual", Box::new(counterfactual)),
        ("11 numerical-core invariants", Box::new(|| timed(Duration::from_secs(30), numerical_core))),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
