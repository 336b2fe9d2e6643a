//! Command implementations: validate everything, compute, then write.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use uav_ruin::allocation::Regime;
use uav_ruin::channel::ChannelState;
use uav_ruin::engine::{run_flight, run_tti, FlightReport, Scheme, TtiResult, TtiState};
use uav_ruin::experiments::{
    default_ruin_grid, gap, gap_csv, psi_sweep, psi_sweep_csv, ruin_table, ruin_table_csv,
    summarize_flights, sweep_csv, sweep_users, waterfill_csv, waterfill_demo, FlightPair,
};
use uav_ruin::oracle::MAX_USERS;
use uav_ruin::ruin::ClaimConvention;
use uav_ruin::scenario::{generate_scenario, records, NetworkScenario, ScenarioConfig};

use crate::output::{sha256_hex, OutputDir};
use crate::{Command, Common, Convention, Failure, RegimeArg};

/// Surplus levels, in watts, of the association-versus-risk sweep.
const PSI_SWEEP_LEVELS_W: [f64; 8] = [20.0, 10.0, 5.0, 3.0, 2.0, 1.0, 0.5, 0.0];

enum Source {
    Config(ScenarioConfig),
    Records(NetworkScenario),
}

/// Validated inputs shared by every command.
struct Setup {
    source: Source,
    seeds: Vec<u64>,
    schemes: Vec<Scheme>,
    out: OutputDir,
}

impl Setup {
    fn new(common: &Common, command: &str) -> Result<Self, Failure> {
        let (source, label, text) = load_source(common)?;
        let seeds = parse_list(&common.seeds, "--seeds")?;
        let schemes = common.scheme.schemes();
        let mut out = OutputDir::prepare(&common.out, command)?;
        out.input("command", command);
        out.input("version", env!("CARGO_PKG_VERSION"));
        out.input("scenario", label);
        out.input("scenario_sha256", sha256_hex(text.as_bytes()));
        out.input("seeds", join(&seeds));
        out.input(
            "schemes",
            schemes
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(","),
        );
        let options = match &source {
            Source::Config(c) => (c.tmax, c.eps0),
            Source::Records(s) => (s.options.tmax, s.options.eps0),
        };
        out.input("tmax", options.0);
        out.input("eps0", format!("{:?}", options.1));
        Ok(Self {
            source,
            seeds,
            schemes,
            out,
        })
    }

    fn config(&self, command: &str) -> Result<&ScenarioConfig, Failure> {
        match &self.source {
            Source::Config(c) => Ok(c),
            Source::Records(_) => Err(Failure::Invalid(format!(
                "{command} generates its own topologies and needs a config file, not a record file"
            ))),
        }
    }

    fn scenario(&self, seed: u64) -> Result<NetworkScenario, Failure> {
        match &self.source {
            Source::Config(c) => Ok(generate_scenario(c, seed)?),
            Source::Records(s) => Ok(s.clone()),
        }
    }
}

fn load_source(common: &Common) -> Result<(Source, String, String), Failure> {
    let Some(path) = &common.scenario else {
        let mut cfg = ScenarioConfig::default();
        apply_overrides(&mut cfg, common)?;
        let text = cfg.to_text();
        return Ok((Source::Config(cfg), "default".into(), text));
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))?;
    let context = |e: uav_ruin::Error| Failure::Invalid(format!("{}: {e}", path.display()));
    let source = if records::looks_like_records(&text) {
        if !common.overrides.is_empty() {
            return Err(Failure::Invalid(
                "--set applies to config files, not record files".into(),
            ));
        }
        let mut s = records::read(&text).map_err(context)?;
        if let Some(t) = common.tmax {
            s.options.tmax = t;
        }
        if let Some(e) = common.eps0 {
            s.options.eps0 = e;
        }
        if s.options.tmax == 0 || s.options.eps0.is_nan() || s.options.eps0 <= 0.0 {
            return Err(Failure::Invalid(
                "tmax must be at least 1 and eps0 positive".into(),
            ));
        }
        Source::Records(s)
    } else {
        let mut cfg = ScenarioConfig::parse(&text).map_err(context)?;
        apply_overrides(&mut cfg, common)?;
        Source::Config(cfg)
    };
    Ok((source, path.display().to_string(), text))
}

fn apply_overrides(cfg: &mut ScenarioConfig, common: &Common) -> Result<(), Failure> {
    for o in &common.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Failure::Invalid(format!("--set expects key=value, got {o:?}")))?;
        cfg.set(k.trim(), v.trim())
            .map_err(|m| Failure::Invalid(format!("--set {o}: {m}")))?;
    }
    if let Some(t) = common.tmax {
        cfg.tmax = t;
    }
    if let Some(e) = common.eps0 {
        cfg.eps0 = e;
    }
    Ok(cfg.check()?)
}

/// Parse `a..b`, `a..=b`, a single value or a comma list.
fn parse_list(text: &str, flag: &str) -> Result<Vec<u64>, Failure> {
    let bad = || {
        Failure::Invalid(format!(
            "{flag}: expected a..b, a..=b, n or a comma list, got {text:?}"
        ))
    };
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    let values: Vec<u64> = if let Some((a, b)) = text.split_once("..=") {
        (num(a)?..=num(b)?).collect()
    } else if let Some((a, b)) = text.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        text.split(',').map(num).collect::<Result<_, _>>()?
    };
    if values.is_empty() {
        return Err(Failure::Invalid(format!("{flag}: {text:?} is empty")));
    }
    Ok(values)
}

fn join(values: &[u64]) -> String {
    values
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn no_scenario(common: &Common, command: &str) -> Result<(), Failure> {
    if common.scenario.is_some() || !common.overrides.is_empty() {
        return Err(Failure::Invalid(format!(
            "{command} does not use a scenario"
        )));
    }
    Ok(())
}

pub fn execute(command: Command) -> Result<PathBuf, Failure> {
    match command {
        Command::Run(common) => run(&common),
        Command::Flight { common, horizon } => flight(&common, horizon),
        Command::SweepUsers { common, counts } => sweep(&common, &counts),
        Command::RuinTable {
            common,
            paths,
            convention,
            arrival_rate,
        } => ruin(&common, paths, convention, arrival_rate),
        Command::Gap { common, bs, users } => gap_cmd(&common, &bs, &users),
        Command::WaterfillDemo { common, regime } => demo(&common, regime),
    }
}

fn jobs(setup: &Setup) -> Vec<(u64, Scheme)> {
    setup
        .seeds
        .iter()
        .flat_map(|&seed| setup.schemes.iter().map(move |&scheme| (seed, scheme)))
        .collect()
}

fn run(common: &Common) -> Result<PathBuf, Failure> {
    let mut setup = Setup::new(common, "run")?;
    let results = jobs(&setup)
        .par_iter()
        .map(|&(seed, scheme)| -> Result<_, Failure> {
            let s = setup.scenario(seed)?;
            let ch = ChannelState::compute(&s)?;
            let r = run_tti(&s, &ch, &TtiState::initial(&s), scheme)?;
            Ok((seed, scheme, s, r))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut summary =
        String::from("seed,scheme,objective,iterations,converged,last_delta_w,urllc_served\n");
    for (seed, scheme, s, r) in &results {
        let tag = format!("seed{seed}_{}", scheme.as_str());
        setup.out.add(format!("{tag}_power.csv"), r.power_csv(s));
        setup
            .out
            .add(format!("{tag}_association.csv"), association_csv(s, r));
        let _ = writeln!(
            summary,
            "{seed},{},{:?},{},{},{:?},{}",
            scheme.as_str(),
            r.objective,
            r.iterations,
            r.converged,
            r.last_delta_w,
            r.urllc.len()
        );
    }
    setup.out.add("summary.csv", summary);
    setup.out.finish()
}

fn association_csv(s: &NetworkScenario, r: &TtiResult) -> String {
    let mut out = String::from("user_id,bs_id,class,rate_bps\n");
    for (k, user) in s.users.iter().enumerate() {
        let bs = r
            .embb
            .serving(k)
            .or_else(|| r.urllc.iter().find(|u| u.0 == k).map(|u| u.1))
            .map(|j| j.to_string())
            .unwrap_or_default();
        let _ = writeln!(out, "{k},{bs},{},{:?}", user.kind.as_str(), r.rates_bps[k]);
    }
    out
}

fn flight(common: &Common, horizon: usize) -> Result<PathBuf, Failure> {
    if horizon == 0 {
        return Err(Failure::Invalid("--horizon must be at least 1".into()));
    }
    let mut setup = Setup::new(common, "flight")?;
    setup.out.input("horizon_ttis", horizon);
    let reports = jobs(&setup)
        .par_iter()
        .map(|&(seed, scheme)| -> Result<FlightReport, Failure> {
            Ok(run_flight(&setup.scenario(seed)?, horizon, scheme, seed)?)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut summary = String::from(
        "seed,scheme,flight_ttis,users_served_total,final_surplus_w,ruined_tti,ruined_uav,urllc_overflow,urllc_outages,converged_ttis\n",
    );
    for r in &reports {
        setup.out.add(
            format!("seed{}_{}_trace.csv", r.seed, r.scheme.as_str()),
            r.trace_csv(),
        );
        let (tti, uav) = r
            .ruined
            .map(|(t, u)| (t.to_string(), u.to_string()))
            .unwrap_or_default();
        let _ = writeln!(
            summary,
            "{},{},{},{},{:?},{tti},{uav},{},{},{}",
            r.seed,
            r.scheme.as_str(),
            r.flight_ttis,
            r.users_served_total,
            r.final_surplus_w,
            r.urllc_overflow,
            r.urllc_outages,
            r.converged_ttis
        );
    }
    setup.out.add("summary.csv", summary);
    if setup.schemes.len() == 2 {
        let pairs: Vec<FlightPair> = reports
            .chunks(2)
            .map(|c| FlightPair {
                seed: c[0].seed,
                ruin: c[0].clone(),
                sinr: c[1].clone(),
            })
            .collect();
        let sum = summarize_flights(&pairs);
        let text = format!(
            "seeds = {}\nflight_wins = {}\nusers_wins = {}\nboth_wins = {}\nmean_flight_gain_ttis = {:?}\nmean_users_gain = {:?}\nmean_surplus_gain_w = {:?}\n",
            sum.seeds,
            sum.flight_wins,
            sum.users_wins,
            sum.both_wins,
            sum.mean_flight_gain,
            sum.mean_users_gain,
            sum.mean_surplus_gain_w
        );
        setup.out.add("comparison.txt", text);
    }
    if let Source::Config(cfg) = &setup.source {
        let rows = psi_sweep(cfg, setup.seeds[0], &PSI_SWEEP_LEVELS_W)?;
        setup.out.add("psi_sweep.csv", psi_sweep_csv(&rows));
    }
    setup.out.finish()
}

fn sweep(common: &Common, counts: &[usize]) -> Result<PathBuf, Failure> {
    let mut setup = Setup::new(common, "sweep-users")?;
    let cfg = setup.config("sweep-users")?.clone();
    if counts.is_empty() || counts.iter().any(|&n| n < cfg.n_urllc + cfg.n_mmtc) {
        return Err(Failure::Invalid(format!(
            "--counts must be nonempty and each at least the {} URLLC and mMTC users",
            cfg.n_urllc + cfg.n_mmtc
        )));
    }
    setup.out.input(
        "counts",
        counts
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(","),
    );
    let rows = sweep_users(&cfg, counts, &setup.seeds)?;
    setup.out.add("sweep_users.csv", sweep_csv(&rows));
    setup.out.finish()
}

fn ruin(
    common: &Common,
    paths: u64,
    convention: Convention,
    arrival_rate: f64,
) -> Result<PathBuf, Failure> {
    no_scenario(common, "ruin-table")?;
    if paths == 0 {
        return Err(Failure::Invalid("--paths must be at least 1".into()));
    }
    let convention = match convention {
        Convention::PerTti => ClaimConvention::PerTti,
        Convention::CompoundPoisson if arrival_rate > 0.0 && arrival_rate.is_finite() => {
            ClaimConvention::CompoundPoisson { arrival_rate }
        }
        Convention::CompoundPoisson => {
            return Err(Failure::Invalid("--arrival-rate must be positive".into()))
        }
    };
    let mut setup = Setup::new(common, "ruin-table")?;
    setup.out.input("paths", paths);
    setup.out.input("convention", convention.label());
    let rows = ruin_table(&default_ruin_grid(), paths, convention, setup.seeds[0])?;
    setup.out.add("ruin_table.csv", ruin_table_csv(&rows));
    setup.out.finish()
}

fn gap_cmd(common: &Common, bs: &[usize], users: &str) -> Result<PathBuf, Failure> {
    let counts: Vec<usize> = parse_list(users, "--users")?
        .into_iter()
        .map(|n| n as usize)
        .collect();
    if counts.iter().any(|&n| n == 0 || n > MAX_USERS) {
        return Err(Failure::Invalid(format!(
            "--users must lie in 1..={MAX_USERS}"
        )));
    }
    if bs.is_empty() || bs.iter().any(|&n| !(1..=3).contains(&n)) {
        return Err(Failure::Invalid("--bs values must lie in 1..=3".into()));
    }
    let mut setup = Setup::new(common, "gap")?;
    let cfg = setup.config("gap")?.clone();
    setup.out.input(
        "users",
        counts
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(","),
    );
    for &n_bs in bs {
        let rows = gap(&cfg, n_bs, &counts, &setup.seeds)?;
        setup.out.add(format!("gap_{n_bs}bs.csv"), gap_csv(&rows));
    }
    setup.out.finish()
}

fn demo(common: &Common, regime: RegimeArg) -> Result<PathBuf, Failure> {
    no_scenario(common, "waterfill-demo")?;
    let regimes = match regime {
        RegimeArg::Sufficient => vec![Regime::Sufficient],
        RegimeArg::Capped => vec![Regime::Capped],
        RegimeArg::Scarce => vec![Regime::Scarce],
        RegimeArg::All => vec![Regime::Sufficient, Regime::Capped, Regime::Scarce],
    };
    let mut setup = Setup::new(common, "waterfill-demo")?;
    for r in regimes {
        setup.out.add(
            format!("waterfill_{}.csv", r.as_str()),
            waterfill_csv(&waterfill_demo(r)?),
        );
    }
    setup.out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_list("0..3", "s").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_list("2..=4", "s").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_list("7", "s").unwrap(), vec![7]);
        assert_eq!(parse_list("5,1,9", "s").unwrap(), vec![5, 1, 9]);
        assert!(parse_list("3..3", "s").is_err());
        assert!(parse_list("a..b", "s").is_err());
        assert!(parse_list("", "s").is_err());
    }
}
