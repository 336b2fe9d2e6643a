//! Batch recipes behind the command-line tool and the acceptance suite.
//!
//! Every recipe is a pure function of its configuration and seeds; seeds fan
//! out over rayon and results come back in seed order.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::allocation::{waterfill, Regime};
use crate::channel::ChannelState;
use crate::engine::{run_flight, run_tti, run_tti_admitting, FlightReport, Scheme, TtiState};
use crate::oracle::{solve_exact, SmallInstance};
use crate::ruin::{
    estimate_ruin_mc, ruin_probability, ClaimConvention, MonteCarloConfig, SurplusModel,
};
use crate::scenario::{generate_scenario, ScenarioConfig, UserKind};
use crate::Result;

/// Analytic and Monte-Carlo probability of ruin at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuinRow {
    pub model: SurplusModel,
    pub psi_analytic: f64,
    pub psi_mc: f64,
    pub mc_stderr: f64,
}

impl RuinRow {
    /// Distance between the two estimates in standard errors.
    pub fn z_score(&self) -> f64 {
        let diff = (self.psi_analytic - self.psi_mc).abs();
        if self.mc_stderr > 0.0 {
            diff / self.mc_stderr
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Parameter points whose analytic ruin probability lies in `[0.05, 0.95]`.
pub fn default_ruin_grid() -> Vec<SurplusModel> {
    let mut grid = Vec::new();
    for &launch_w in &[0.0, 0.5, 1.0, 2.0, 4.0] {
        for &premium_w in &[0.1, 0.3, 0.6] {
            for &claim_rate_mu in &[1.0, 2.0, 4.0] {
                for &horizon_ttis in &[5, 20] {
                    let m = SurplusModel {
                        launch_w,
                        premium_w,
                        claim_rate_mu,
                        horizon_ttis,
                    };
                    if ruin_probability(&m).is_ok_and(|p| (0.05..=0.95).contains(&p)) {
                        grid.push(m);
                    }
                }
            }
        }
    }
    grid
}

/// Compare the analytic formula with simulation at every grid point.
pub fn ruin_table(
    grid: &[SurplusModel],
    paths: u64,
    convention: ClaimConvention,
    seed: u64,
) -> Result<Vec<RuinRow>> {
    grid.iter()
        .enumerate()
        .map(|(i, m)| {
            let cfg =
                MonteCarloConfig::for_model(m, paths, convention, seed.wrapping_add(i as u64));
            let mc = estimate_ruin_mc(m, &cfg)?;
            Ok(RuinRow {
                model: *m,
                psi_analytic: ruin_probability(m)?,
                psi_mc: mc.psi_hat,
                mc_stderr: mc.stderr,
            })
        })
        .collect()
}

pub fn ruin_table_csv(rows: &[RuinRow]) -> String {
    let mut out = String::from("rho0,premium,mu,horizon,psi_analytic,psi_mc,mc_stderr\n");
    for r in rows {
        let m = r.model;
        let _ = writeln!(
            out,
            "{:?},{:?},{:?},{},{:?},{:?},{:?}",
            m.launch_w,
            m.premium_w,
            m.claim_rate_mu,
            m.horizon_ttis,
            r.psi_analytic,
            r.psi_mc,
            r.mc_stderr
        );
    }
    out
}

/// Mean per-user rate for one (user count, topology, traffic class).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_users: usize,
    /// `uav` for the UAV-assisted network, `terrestrial` without UAVs.
    pub scheme: &'static str,
    pub class: UserKind,
    pub rate_bps_mean: f64,
    pub rate_bps_ci95: f64,
}

/// Per-user rates against the number of cellular users.
///
/// `n_users` counts every user; URLLC and mMTC counts stay as configured and
/// the rest are eMBB. Each seed draws a fresh topology and runs one TTI.
pub fn sweep_users(cfg: &ScenarioConfig, counts: &[usize], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &n in counts {
        for (label, n_ubs) in [("uav", cfg.n_ubs), ("terrestrial", 0)] {
            let mut c = cfg.clone();
            c.n_ubs = n_ubs;
            c.n_embb = n.saturating_sub(cfg.n_urllc + cfg.n_mmtc);
            let per_seed: Vec<(f64, Option<f64>)> = seeds
                .par_iter()
                .map(|&seed| -> Result<(f64, Option<f64>)> {
                    let s = generate_scenario(&c, seed)?;
                    let ch = ChannelState::compute(&s)?;
                    let mut state = TtiState::initial(&s);
                    let (r, _) = run_tti_admitting(&s, &ch, &mut state, Scheme::Ruin)?;
                    let embb: Vec<f64> = s.embb_class_users().map(|k| r.rates_bps[k]).collect();
                    let urllc: Vec<f64> =
                        state.active_urllc.iter().map(|&k| r.rates_bps[k]).collect();
                    // Seeds where every URLLC request was dropped carry no URLLC rate.
                    Ok((mean(&embb), (!urllc.is_empty()).then(|| mean(&urllc))))
                })
                .collect::<Result<_>>()?;
            let embb: Vec<f64> = per_seed.iter().map(|r| r.0).collect();
            let urllc: Vec<f64> = per_seed.iter().filter_map(|r| r.1).collect();
            rows.push(SweepRow {
                n_users: n,
                scheme: label,
                class: UserKind::Embb,
                rate_bps_mean: mean(&embb),
                rate_bps_ci95: ci95(&embb),
            });
            rows.push(SweepRow {
                n_users: n,
                scheme: label,
                class: UserKind::Urllc,
                rate_bps_mean: mean(&urllc),
                rate_bps_ci95: ci95(&urllc),
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("n_users,scheme,class,rate_bps_mean,rate_bps_ci95\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:?},{:?}",
            r.n_users,
            r.scheme,
            r.class.as_str(),
            r.rate_bps_mean,
            r.rate_bps_ci95
        );
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn ci95(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    1.96 * (var / xs.len() as f64).sqrt()
}

/// Both schemes flown on the same topology and arrivals.
#[derive(Debug, Clone, PartialEq)]
pub struct FlightPair {
    pub seed: u64,
    pub ruin: FlightReport,
    pub sinr: FlightReport,
}

impl FlightPair {
    pub fn ruin_dominates(&self) -> bool {
        self.ruin.flight_ttis >= self.sinr.flight_ttis
            && self.ruin.users_served_total >= self.sinr.users_served_total
    }
}

/// Fly both schemes for every seed; the seed drives topology and arrivals.
pub fn flight_comparison(
    cfg: &ScenarioConfig,
    seeds: &[u64],
    horizon_ttis: usize,
) -> Result<Vec<FlightPair>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let s = generate_scenario(cfg, seed)?;
            Ok(FlightPair {
                seed,
                ruin: run_flight(&s, horizon_ttis, Scheme::Ruin, seed)?,
                sinr: run_flight(&s, horizon_ttis, Scheme::Sinr, seed)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlightSummary {
    pub seeds: usize,
    pub flight_wins: usize,
    pub users_wins: usize,
    pub both_wins: usize,
    pub mean_flight_gain: f64,
    pub mean_users_gain: f64,
    pub mean_surplus_gain_w: f64,
}

pub fn summarize_flights(pairs: &[FlightPair]) -> FlightSummary {
    let n = pairs.len().max(1) as f64;
    FlightSummary {
        seeds: pairs.len(),
        flight_wins: pairs
            .iter()
            .filter(|p| p.ruin.flight_ttis >= p.sinr.flight_ttis)
            .count(),
        users_wins: pairs
            .iter()
            .filter(|p| p.ruin.users_served_total >= p.sinr.users_served_total)
            .count(),
        both_wins: pairs.iter().filter(|p| p.ruin_dominates()).count(),
        mean_flight_gain: pairs
            .iter()
            .map(|p| p.ruin.flight_ttis as f64 - p.sinr.flight_ttis as f64)
            .sum::<f64>()
            / n,
        mean_users_gain: pairs
            .iter()
            .map(|p| p.ruin.users_served_total as f64 - p.sinr.users_served_total as f64)
            .sum::<f64>()
            / n,
        mean_surplus_gain_w: pairs
            .iter()
            .map(|p| p.ruin.final_surplus_w - p.sinr.final_surplus_w)
            .sum::<f64>()
            / n,
    }
}

pub fn flight_summary_csv(pairs: &[FlightPair]) -> String {
    let mut out =
        String::from("seed,scheme,flight_ttis,users_served_total,final_surplus_w,ruined_tti\n");
    for p in pairs {
        for r in [&p.ruin, &p.sinr] {
            let ruined = r.ruined.map(|(t, _)| t.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{:?},{ruined}",
                p.seed,
                r.scheme.as_str(),
                r.flight_ttis,
                r.users_served_total,
                r.final_surplus_w
            );
        }
    }
    out
}

/// UAV-associated users at one common surplus level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiRow {
    pub surplus_w: f64,
    pub psi: f64,
    pub ruin_uav_users: usize,
    pub sinr_uav_users: usize,
}

/// Set every UAV to each surplus level in turn and count UAV-associated users.
pub fn psi_sweep(cfg: &ScenarioConfig, seed: u64, surplus_levels_w: &[f64]) -> Result<Vec<PsiRow>> {
    let s = generate_scenario(cfg, seed)?;
    let ch = ChannelState::compute(&s)?;
    let base = TtiState::initial(&s);
    surplus_levels_w
        .par_iter()
        .map(|&level| {
            let mut state = base.clone();
            for u in s.uav_indices() {
                state.surplus_w[u] = level;
            }
            let count = |scheme| -> Result<(usize, f64)> {
                let (r, _) = run_tti_admitting(&s, &ch, &mut state.clone(), scheme)?;
                let psi = s.uav_indices().map(|u| r.psi[u]).next().unwrap_or(0.0);
                Ok((s.uav_indices().map(|u| r.n_assoc(u)).sum(), psi))
            };
            let (ruin_uav_users, psi) = count(Scheme::Ruin)?;
            let (sinr_uav_users, _) = count(Scheme::Sinr)?;
            Ok(PsiRow {
                surplus_w: level,
                psi,
                ruin_uav_users,
                sinr_uav_users,
            })
        })
        .collect()
}

pub fn psi_sweep_csv(rows: &[PsiRow]) -> String {
    let mut out = String::from("surplus_w,psi,ruin_uav_users,sinr_uav_users\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:?},{:?},{},{}",
            r.surplus_w, r.psi, r.ruin_uav_users, r.sinr_uav_users
        );
    }
    out
}

/// Heuristic against exhaustive optimum on one small instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapRow {
    pub n_bs: usize,
    pub n_users: usize,
    pub seed: u64,
    pub heuristic_obj: f64,
    pub oracle_obj: f64,
    pub gap_rel: f64,
}

/// Small-network configuration: the MBS, one UAV and (for three BSs) one SBS,
/// with `n_users` eMBB users.
pub fn small_config(base: &ScenarioConfig, n_bs: usize, n_users: usize) -> ScenarioConfig {
    let mut c = base.clone();
    c.n_ubs = usize::from(n_bs >= 2);
    c.n_sbs = n_bs.saturating_sub(2);
    c.n_embb = n_users;
    c.n_urllc = 0;
    c.n_mmtc = 0;
    c
}

/// Optimality gap of the ruin-based heuristic on small instances.
pub fn gap(
    base: &ScenarioConfig,
    n_bs: usize,
    user_counts: &[usize],
    seeds: &[u64],
) -> Result<Vec<GapRow>> {
    let jobs: Vec<(usize, u64)> = user_counts
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    jobs.par_iter()
        .map(|&(n, seed)| {
            let s = generate_scenario(&small_config(base, n_bs, n), seed)?;
            let ch = ChannelState::compute(&s)?;
            let state = TtiState::initial(&s);
            let heuristic = run_tti(&s, &ch, &state, Scheme::Ruin)?;
            let exact = solve_exact(
                &SmallInstance::new(s.clone(), state)?,
                s.options.varsigma,
                s.options.xi,
            )?;
            let gap_rel = (exact.objective - heuristic.objective)
                / exact.objective.abs().max(f64::MIN_POSITIVE);
            Ok(GapRow {
                n_bs,
                n_users: n,
                seed,
                heuristic_obj: heuristic.objective,
                oracle_obj: exact.objective,
                gap_rel,
            })
        })
        .collect()
}

pub fn gap_csv(rows: &[GapRow]) -> String {
    let mut out = String::from("n_users,seed,heuristic_obj,oracle_obj,gap_rel\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:?},{:?},{:?}",
            r.n_users, r.seed, r.heuristic_obj, r.oracle_obj, r.gap_rel
        );
    }
    out
}

/// One user of a water-filling illustration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaterfillRow {
    pub user: usize,
    pub inv_theta: f64,
    pub power_w: f64,
    pub water_level: f64,
}

/// Five users with spread-out gains, under a budget chosen to land in `regime`.
pub fn waterfill_demo(regime: Regime) -> Result<Vec<WaterfillRow>> {
    let (theta, budget, p_max): (Vec<f64>, f64, f64) = match regime {
        Regime::Sufficient => (vec![4.0, 2.5, 2.0, 1.6, 1.25], 2.0, 1.0),
        Regime::Capped => (vec![40.0, 20.0, 2.0, 1.6, 1.25], 3.5, 1.0),
        Regime::Scarce => (vec![10.0, 5.0, 2.0, 0.5, 0.2], 0.6, 1.0),
    };
    let omega = vec![1.0; theta.len()];
    let wf = waterfill(&theta, &omega, budget, p_max)?;
    let level = wf.water_level.unwrap_or(0.0);
    Ok(theta
        .iter()
        .zip(&wf.powers)
        .enumerate()
        .map(|(user, (&t, &p))| WaterfillRow {
            user,
            inv_theta: 1.0 / t,
            power_w: p,
            water_level: level,
        })
        .collect())
}

pub fn waterfill_csv(rows: &[WaterfillRow]) -> String {
    let mut out = String::from("user,inv_theta,power_w,water_level\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?}",
            r.user, r.inv_theta, r.power_w, r.water_level
        );
    }
    out
}

/// Iterations of the first TTI of a default flight, per seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub last_delta_w: f64,
}

pub fn convergence(
    cfg: &ScenarioConfig,
    seeds: &[u64],
    scheme: Scheme,
) -> Result<Vec<ConvergenceRow>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let s = generate_scenario(cfg, seed)?;
            let ch = ChannelState::compute(&s)?;
            let (r, _) = run_tti_admitting(&s, &ch, &mut TtiState::initial(&s), scheme)?;
            Ok(ConvergenceRow {
                seed,
                iterations: r.iterations,
                converged: r.converged,
                last_delta_w: r.last_delta_w,
            })
        })
        .collect()
}

/// `(iterations, count)` pairs in increasing order of iterations.
pub fn iteration_histogram(rows: &[ConvergenceRow]) -> Vec<(usize, usize)> {
    let mut hist = std::collections::BTreeMap::new();
    for r in rows {
        *hist.entry(r.iterations).or_insert(0) += 1;
    }
    hist.into_iter().collect()
}
