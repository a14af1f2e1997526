use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use labordemand::estimator::{format_table, rotemberg, RegressionSpec};
use labordemand::io::*;
use labordemand::market_sim::simulate_economy;
use labordemand::model::Calibration;
use labordemand::pipeline::{self, MarketInputs, DEPENDENT, INSTRUMENTS, TIGHTNESS, WAGE};
use labordemand::policy::{calibrate, counterfactual_employment, minwage_effect, CounterfactualInputs, Estimate, GroupSeries};
use labordemand::shift_share::{rotemberg_components, InstrumentSettings, NationalGrowth};
use labordemand::zones::{enforce_contiguity, sweep_thresholds, threshold_grid, CommutingGraph};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "labordemand", version, about = "Labor demand estimation pipeline under search frictions")]
struct Cli {
    /// Pipeline config (TOML). Defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Validate config and input schemas without computing or writing.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Output directory (created if missing). `calibrate` only writes when set.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic economy with known elasticities.
    Simulate,
    /// Build commuting zones by threshold sweep over dominant-flow mergers.
    DelineateZones,
    /// Gross up vacancies, flow-adjust stocks and build firm tightness.
    BuildTightness,
    /// Base-year shares and the wage, vacancy and job-seeker instruments.
    BuildInstruments,
    /// First-difference 2SLS of employment on wages and tightness.
    Estimate,
    /// Rotemberg weights of one shift-share instrument.
    Rotemberg {
        #[arg(long, value_enum, default_value_t = Target::Wage)]
        endogenous: Target,
    },
    /// Pre-match hiring cost share of the wage from the elasticity pair.
    Calibrate {
        /// JSON with delta, r, eta_lw, eta_lt, phi1, phi2; else `[policy.calibration]`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Minimum-wage simulation and tightness counterfactual.
    Policy,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Target {
    /// Wage growth, with national wage growth as shifts.
    Wage,
    /// Tightness growth, with national vacancy growth as shifts.
    Tightness,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let help = format!("Config defaults:\n\n{}", PipelineConfig::default_toml());
    let matches = Cli::command().after_long_help(help).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.simulate.seed = seed;
        cfg.policy.counterfactual.seed = seed;
        for m in cfg.policy.minwage.iter_mut() {
            m.seed = seed;
        }
    }
    let ctx = Ctx { cfg, dry_run: cli.dry_run, out: cli.out };
    match cli.command {
        Command::Simulate => simulate(&ctx),
        Command::DelineateZones => delineate_zones(&ctx),
        Command::BuildTightness => build_tightness(&ctx),
        Command::BuildInstruments => build_instruments(&ctx),
        Command::Estimate => estimate(&ctx),
        Command::Rotemberg { endogenous } => rotemberg_cmd(&ctx, endogenous),
        Command::Calibrate { input } => calibrate_cmd(&ctx, input.as_deref()),
        Command::Policy => policy(&ctx),
    }
}

struct Ctx {
    cfg: PipelineConfig,
    dry_run: bool,
    out: Option<PathBuf>,
}

impl Ctx {
    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    fn path(&self, name: &'static str, p: &Option<PathBuf>) -> Result<PathBuf> {
        let path = p.clone().ok_or_else(|| anyhow!("missing input `{name}`: set [inputs].{name} in the config"))?;
        if !path.exists() {
            bail!("input `{name}` not found at {}", path.display());
        }
        Ok(path)
    }

    fn table<T: CsvSchema>(&self, name: &'static str, p: &Option<PathBuf>) -> Result<Vec<T>> {
        let path = self.path(name, p)?;
        let rows = read_table::<T>(&path)?;
        if self.dry_run {
            eprintln!("{}: {} rows ok", path.display(), rows.len());
        }
        Ok(rows)
    }

    fn optional_table<T: CsvSchema>(&self, name: &'static str, p: &Option<PathBuf>) -> Result<Option<Vec<T>>> {
        p.as_ref().map(|_| self.table(name, p)).transpose()
    }
}

fn read_table<T: CsvSchema>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_csv(f).with_context(|| format!("reading {}", path.display()))
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    let target = dir.join(name);
    tmp.persist(&target).with_context(|| format!("writing {}", target.display()))?;
    Ok(())
}

fn write_table<T: CsvSchema>(dir: &Path, rows: &[T]) -> Result<()> {
    write_atomic(dir, T::TABLE, to_csv_string(rows)?.as_bytes())
}

fn write_report(dir: &Path, kind: &str, body: serde_json::Value) -> Result<()> {
    write_atomic(dir, &format!("{kind}.json"), Envelope::new(kind, body).to_json()?.as_bytes())
}

fn zone_map(records: &[ZoneAssignmentRecord]) -> BTreeMap<u64, u64> {
    records.iter().map(|r| (r.region, r.zone)).collect()
}

fn simulate(ctx: &Ctx) -> Result<()> {
    let sim = &ctx.cfg.simulate;
    if ctx.dry_run {
        sim.validate()?;
        eprintln!("[simulate] config ok");
        return Ok(());
    }
    let panel = simulate_economy(sim)?;
    let dir = ctx.out_dir()?;
    write_table(&dir, &panel.firms)?;
    write_table(&dir, &panel.markets)?;
    write_table(&dir, &panel.notification_shares)?;
    write_table(&dir, &panel.transitions)?;
    write_table(&dir, &panel.occupation_employment)?;
    write_table(&dir, &panel.commuting)?;
    write_table(&dir, &panel.labor_force)?;
    write_report(
        &dir,
        "simulate",
        json!({
            "config": sim,
            "truth": { "eta_lw": sim.true_eta_lw, "eta_lt": sim.true_eta_lt },
            "rows": { "firm_panel": panel.firms.len(), "markets": panel.markets.len() },
        }),
    )?;
    println!("simulated {} firms over {} years into {}", sim.n_firms, sim.n_years, dir.display());
    Ok(())
}

fn delineate_zones(ctx: &Ctx) -> Result<()> {
    let inputs = &ctx.cfg.inputs;
    let commuting: Vec<CommutingRecord> = ctx.table("commuting", &inputs.commuting)?;
    let labor_force: Vec<LaborForceRecord> = ctx.table("labor_force", &inputs.labor_force)?;
    let adjacency: Option<Vec<AdjacencyRecord>> = ctx.optional_table("adjacency", &inputs.adjacency)?;
    let graph = CommutingGraph::from_records(&commuting, &labor_force, adjacency.as_deref())?;
    if ctx.dry_run {
        return Ok(());
    }
    let z = &ctx.cfg.zones;
    let sweep = sweep_thresholds(&graph, &threshold_grid(z.grid_start, z.grid_end, z.grid_step))?;
    let best = if graph.adjacency.is_some() { enforce_contiguity(&graph, &sweep.best, z.contiguity) } else { sweep.best.clone() };
    let dir = ctx.out_dir()?;
    write_table(&dir, &best.to_records(&graph))?;
    write_report(&dir, "zones", json!({ "best": best, "sweep": sweep.points }))?;
    println!(
        "{} regions -> {} zones (threshold {:?}, modularity {:.4})",
        graph.len(),
        best.n_zones,
        best.threshold,
        best.modularity
    );
    Ok(())
}

fn adjusted_markets(ctx: &Ctx, zones: Option<&BTreeMap<u64, u64>>) -> Result<Vec<AdjustedMarketRecord>> {
    let inputs = &ctx.cfg.inputs;
    let t = &ctx.cfg.tightness;
    let markets: Vec<MarketRecord> = ctx.table("markets", &inputs.markets)?;
    let shares: Option<Vec<NotificationShareRecord>> =
        if t.notification { Some(ctx.table("notification_shares", &inputs.notification_shares)?) } else { None };
    let (transitions, employment): (Option<Vec<TransitionRecord>>, Option<Vec<OccupationEmploymentRecord>>) = if t.flow_adjustment {
        (
            Some(ctx.table("transitions", &inputs.transitions)?),
            Some(ctx.table("occupation_employment", &inputs.occupation_employment)?),
        )
    } else {
        (None, None)
    };
    let mi = MarketInputs {
        notification_shares: shares.as_deref(),
        transitions: transitions.as_deref(),
        occupation_employment: employment.as_deref(),
        zones,
    };
    Ok(pipeline::build_markets(&markets, &mi, t)?)
}

fn build_tightness(ctx: &Ctx) -> Result<()> {
    let inputs = &ctx.cfg.inputs;
    let firms: Vec<FirmRecord> = ctx.table("firm_panel", &inputs.firm_panel)?;
    let zones = ctx.optional_table::<ZoneAssignmentRecord>("zones", &inputs.zones)?.map(|z| zone_map(&z));
    let markets = adjusted_markets(ctx, zones.as_ref())?;
    if ctx.dry_run {
        return Ok(());
    }
    let firm = pipeline::build_firm_tightness(&firms, &markets, zones.as_ref())?;
    let dir = ctx.out_dir()?;
    write_table(&dir, &markets)?;
    write_table(&dir, &firm)?;
    let undefined = markets.iter().filter(|m| m.tightness.is_none()).count();
    println!("{} market cells ({} undefined), {} firm-years", markets.len(), undefined, firm.len());
    Ok(())
}

fn instrument_settings(cfg: &PipelineConfig) -> InstrumentSettings {
    InstrumentSettings {
        lag: cfg.instruments.lag,
        wage_weighting: cfg.instruments.wage_weighting,
        missing_cap: cfg.instruments.missing_cap,
    }
}

fn market_tightness_input(ctx: &Ctx) -> Result<Vec<AdjustedMarketRecord>> {
    match &ctx.cfg.inputs.market_tightness {
        Some(_) => ctx.table("market_tightness", &ctx.cfg.inputs.market_tightness),
        None => adjusted_markets(ctx, None),
    }
}

fn build_instruments(ctx: &Ctx) -> Result<()> {
    let firms: Vec<FirmRecord> = ctx.table("firm_panel", &ctx.cfg.inputs.firm_panel)?;
    let markets = market_tightness_input(ctx)?;
    if ctx.dry_run {
        return Ok(());
    }
    let set = pipeline::build_instruments(&firms, &markets, ctx.cfg.instruments.base_year, &instrument_settings(&ctx.cfg))?;
    let dir = ctx.out_dir()?;
    write_table(&dir, &set.records)?;
    let missing = set.records.iter().filter(|r| r.z_w.is_none() || r.z_v.is_none() || r.z_u.is_none()).count();
    write_report(
        &dir,
        "instruments",
        json!({
            "settings": ctx.cfg.instruments,
            "firms": set.shares.units.len(),
            "excluded": set.shares.excluded,
            "firm_years": set.records.len(),
            "missing_firm_years": missing,
        }),
    )?;
    println!("{} firm-years of instruments ({} missing), {} firms excluded", set.records.len(), missing, set.shares.excluded.len());
    Ok(())
}

fn estimation_data(ctx: &Ctx) -> Result<Option<(labordemand::estimator::Dataset, Vec<InstrumentRecord>)>> {
    let inputs = &ctx.cfg.inputs;
    let firm: Vec<FirmTightnessRecord> = ctx.table("firm_tightness", &inputs.firm_tightness)?;
    let z: Vec<InstrumentRecord> = ctx.table("instruments", &inputs.instruments)?;
    let zones = ctx.optional_table::<ZoneAssignmentRecord>("zones", &inputs.zones)?.map(|z| zone_map(&z));
    if ctx.dry_run {
        return Ok(None);
    }
    let data = pipeline::estimation_dataset(&firm, &z, zones.as_ref(), ctx.cfg.estimate.lag)?;
    Ok(Some((data, z)))
}

fn estimate(ctx: &Ctx) -> Result<()> {
    let Some((data, _)) = estimation_data(ctx)? else { return Ok(()) };
    let est = pipeline::estimate_elasticities(&data, &ctx.cfg.estimate)?;
    let dir = ctx.out_dir()?;
    write_report(&dir, "estimate", serde_json::to_value(&est)?)?;
    let z: Vec<String> = INSTRUMENTS.iter().map(|s| s.to_string()).collect();
    let mut cols = Vec::new();
    if let Some(ols) = &est.ols {
        cols.push(("OLS", ols, &[][..]));
    }
    cols.push(("2SLS", &est.tsls, &z[..]));
    println!("{}", format_table(&cols));
    for w in &est.tsls.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn rotemberg_cmd(ctx: &Ctx, target: Target) -> Result<()> {
    let firms: Vec<FirmRecord> = ctx.table("firm_panel", &ctx.cfg.inputs.firm_panel)?;
    let markets = market_tightness_input(ctx)?;
    let Some((data, _)) = estimation_data(ctx)? else { return Ok(()) };
    let set = pipeline::build_instruments(&firms, &markets, ctx.cfg.instruments.base_year, &instrument_settings(&ctx.cfg))?;
    let (endog, growth): (&str, &NationalGrowth) = match target {
        Target::Wage => (WAGE, &set.wage_growth),
        Target::Tightness => (TIGHTNESS, &set.vacancy_growth),
    };
    let units = data.key("unit")?.to_vec();
    let years: Vec<i32> = data.key("year")?.iter().map(|&y| y as i32).collect();
    let components = rotemberg_components(&set.shares, growth, &units, &years);
    let spec = ctx.cfg.estimate.apply(RegressionSpec::new(DEPENDENT, &[endog]))?;
    let rep = rotemberg(&spec, &data, &components)?;
    let dir = ctx.out_dir()?;
    write_report(&dir, "rotemberg", serde_json::to_value(&rep)?)?;
    println!("{endog}: Bartik estimate {:.4}, sum of weights {:.6}", rep.bartik_estimate, rep.sum_alpha);
    println!("{:<10}{:>8}{:>10}{:>10}{:>10}", "shift", "period", "alpha", "beta", "growth");
    for e in rep.entries.iter().take(5) {
        let fmt = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        println!("{:<10}{:>8}{:>10}{:>10}{:>10.4}", e.label, e.period, fmt(e.alpha), fmt(e.beta), e.growth);
    }
    Ok(())
}

fn calibrate_cmd(ctx: &Ctx, input: Option<&Path>) -> Result<()> {
    let inputs = match input {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Calibration::from_json(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ctx.cfg.policy.calibration,
    };
    if ctx.dry_run {
        eprintln!("calibration inputs ok");
        return Ok(());
    }
    let solved = calibrate(&inputs)?;
    let share = solved.phi_over_w.ok_or_else(|| anyhow!("calibration produced no cost share"))?;
    println!("{share:.3}");
    if let Some(dir) = &ctx.out {
        fs::create_dir_all(dir)?;
        write_report(dir, "calibrate", serde_json::to_value(solved)?)?;
    }
    Ok(())
}

fn counterfactual_inputs(ctx: &Ctx, series: &[SeriesRecord]) -> Result<CounterfactualInputs> {
    let cf = &ctx.cfg.policy.counterfactual;
    let mut tightness: BTreeMap<i32, f64> = BTreeMap::new();
    let mut groups: BTreeMap<&str, BTreeMap<i32, f64>> = BTreeMap::new();
    for r in series {
        match tightness.get(&r.year) {
            Some(&t) if t != r.tightness => bail!("series: year {} has conflicting tightness {t} and {}", r.year, r.tightness),
            _ => {
                tightness.insert(r.year, r.tightness);
            }
        }
        if groups.entry(r.group.as_str()).or_default().insert(r.year, r.employment).is_some() {
            bail!("series: duplicate row for {} in {}", r.group, r.year);
        }
    }
    let years: Vec<i32> = tightness.keys().copied().collect();
    let groups = groups
        .into_iter()
        .map(|(name, emp)| {
            let el = cf
                .groups
                .iter()
                .find(|g| g.name == name)
                .ok_or_else(|| anyhow!("no elasticity for group `{name}` in [policy.counterfactual].groups"))?;
            let employment = years
                .iter()
                .map(|y| emp.get(y).copied().ok_or_else(|| anyhow!("series: group {name} lacks year {y}")))
                .collect::<Result<Vec<_>>>()?;
            Ok(GroupSeries { name: name.to_string(), employment, eta_lt: Estimate::new(el.eta_lt, el.se) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CounterfactualInputs {
        years,
        tightness: tightness.into_values().collect(),
        groups,
        base_year: cf.base_year,
        convention: cf.convention,
        path: cf.path,
        draws: cf.draws,
        seed: cf.seed,
        ci_level: cf.ci_level,
    })
}

fn policy(ctx: &Ctx) -> Result<()> {
    let series: Option<Vec<SeriesRecord>> = ctx.optional_table("series", &ctx.cfg.inputs.series)?;
    let cf_inputs = series.as_deref().map(|s| counterfactual_inputs(ctx, s)).transpose()?;
    if ctx.dry_run {
        return Ok(());
    }
    let minwage = ctx.cfg.policy.minwage.iter().map(minwage_effect).collect::<Result<Vec<_>, _>>()?;
    for (inp, res) in ctx.cfg.policy.minwage.iter().zip(&minwage) {
        println!(
            "minimum wage: elasticity {:.3} -> employment change {:.0} (s.e. {:.0})",
            inp.elasticity.value, res.employment_change, res.std_error
        );
    }
    let dir = ctx.out_dir()?;
    let cf = match &cf_inputs {
        Some(inp) => {
            let res = counterfactual_employment(inp)?;
            write_table(&dir, &res.to_records())?;
            println!(
                "counterfactual gap in {}: {:.4} ({:.4}, {:.4})",
                inp.years.last().copied().unwrap_or_default(),
                res.gap,
                res.gap_ci.0,
                res.gap_ci.1
            );
            Some(res)
        }
        None => None,
    };
    let body = json!({
        "minwage": ctx.cfg.policy.minwage.iter().zip(&minwage).map(|(i, r)| json!({ "inputs": i, "result": r })).collect::<Vec<_>>(),
        "counterfactual": cf,
    });
    write_report(&dir, "policy", body)?;
    Ok(())
}
