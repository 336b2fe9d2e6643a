//! Per-TTI iterative association and power allocation, and whole UAV flights.
//!
//! One TTI proceeds as follows:
//!
//! 1. every BS spreads its budget uniformly over the active users and the
//!    resulting SINRs seed the association;
//! 2. URLLC users are pinned to their best-SINR BS;
//! 3. the scheme's association heuristic (ruin-weighted or SINR-only) places
//!    the eMBB-class users, and its per-UAV user counts become caps that the
//!    rest of the TTI respects;
//! 4. the loop alternates a local search (single-user moves, pairwise swaps
//!    and, once those stall, variable-depth chains of moves) that maximises
//!    the weighted objective at the current interference snapshot, with URLLC
//!    power and eMBB water-filling, until the
//!    association is stable and powers move by less than `eps0`, or `tmax`
//!    iterations have run.
//!
//! A flight repeats this every TTI while charging each UAV's surplus ledger
//! with what it actually transmitted.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::allocation::{allocate_embb, effective_gain, urllc_power, waterfill, UrllcTarget};
use crate::association::{
    associate_ruin, associate_sinr_baseline, associate_urllc, AssociationInput, AssociationMatrix,
};
use crate::channel::{
    bandwidth_shares, embb_data, interference_w, sinr, sinr_matrix, ChannelState,
};
use crate::ruin::{ruin_probability, SurplusModel};
use crate::scenario::{InterferenceModel, NetworkScenario, UserKind};
use crate::{Error, Matrix, Result};

/// Candidate BSs per user considered by the local search, best SINR first.
const CANDIDATE_BS: usize = 4;
/// Relative objective improvement below which a move is not taken.
const IMPROVEMENT_TOL: f64 = 1e-12;
/// Longest chain of tentative moves in the variable-depth search.
const MAX_CHAIN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// Survival-weighted association that caps risky UAVs.
    Ruin,
    /// Best-SINR association that ignores the surplus.
    Sinr,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::Ruin, Scheme::Sinr];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Ruin => "ruin",
            Scheme::Sinr => "sinr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ruin" => Some(Scheme::Ruin),
            "sinr" => Some(Scheme::Sinr),
            _ => None,
        }
    }
}

/// Everything that changes from one TTI to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct TtiState {
    /// Surplus of every BS at the start of the TTI, premium included;
    /// entries of terrestrial BSs are ignored.
    pub surplus_w: Vec<f64>,
    /// URLLC users with a request in this TTI.
    pub active_urllc: Vec<usize>,
}

impl TtiState {
    /// Launch energy on every UAV and the mean number of URLLC requests
    /// (rounded, at most one frame's worth) from the first URLLC users.
    pub fn initial(s: &NetworkScenario) -> Self {
        let n = (s.urllc_arrivals_per_tti.round() as usize).min(s.radio.minislots_per_frame());
        Self {
            surplus_w: launch_surplus(s),
            active_urllc: s.urllc_users().take(n).collect(),
        }
    }
}

fn launch_surplus(s: &NetworkScenario) -> Vec<f64> {
    s.base_stations
        .iter()
        .map(|bs| {
            if bs.is_uav() {
                s.energy.launch_power_w
            } else {
                0.0
            }
        })
        .collect()
}

/// Probability of ruin of a UAV holding `surplus_w`; certain below zero.
pub fn ruin_at(s: &NetworkScenario, surplus_w: f64) -> f64 {
    if surplus_w < 0.0 {
        return 1.0;
    }
    ruin_probability(&SurplusModel {
        launch_w: surplus_w,
        premium_w: s.energy.premium_w,
        claim_rate_mu: s.energy.claim_rate_mu,
        horizon_ttis: s.energy.ruin_horizon_ttis,
    })
    .unwrap_or(1.0)
}

/// URLLC powers plus eMBB water-filling for a fixed association.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedAllocation {
    pub powers: Matrix,
    /// `(user, bs, power_w)` per URLLC user.
    pub urllc: Vec<(usize, usize, f64)>,
    pub urllc_spend_w: Vec<f64>,
    pub water_levels: Vec<Option<f64>>,
    pub slack: Vec<bool>,
}

/// Zero every entry of `powers` that is not an associated link.
pub fn mask_to_association(
    powers: &Matrix,
    embb: &AssociationMatrix,
    urllc: &[(usize, usize)],
) -> Matrix {
    let mut masked = Matrix::zeros(powers.rows(), powers.cols());
    for k in 0..powers.cols() {
        if let Some(j) = embb.serving(k) {
            masked[(j, k)] = powers[(j, k)];
        }
    }
    for &(k, j) in urllc {
        masked[(j, k)] = powers[(j, k)];
    }
    masked
}

/// Allocate power for a fixed association against an interference snapshot.
///
/// The snapshot is masked to the association first, so only links that
/// actually carry data interfere.
pub fn allocate_fixed(
    s: &NetworkScenario,
    ch: &ChannelState,
    embb: &AssociationMatrix,
    urllc: &[(usize, usize)],
    snapshot: &Matrix,
) -> Result<FixedAllocation> {
    let nj = s.base_stations.len();
    let model = s.options.interference;
    let noise = s.radio.noise_power_w;
    let masked = mask_to_association(snapshot, embb, urllc);
    let target = urllc_target(s);

    let mut urllc_out = Vec::with_capacity(urllc.len());
    let mut spend = vec![0.0; nj];
    let mut infeasible = Vec::new();
    for &(k, j) in urllc {
        let i = interference_w(&masked, &ch.gain, j, k, model) + noise;
        match urllc_power(j, k, ch.gain[(j, k)], i, &target, s.radio.p_max_w) {
            Ok(p) => {
                spend[j] += p;
                urllc_out.push((k, j, p));
            }
            Err(Error::InfeasibleLink { .. } | Error::ReliabilityInfeasible { .. }) => {
                infeasible.push((j, k))
            }
            Err(e) => return Err(e),
        }
    }
    if !infeasible.is_empty() {
        return Err(Error::UrllcInfeasible(infeasible));
    }

    let mut residual = Vec::with_capacity(nj);
    for (j, bs) in s.base_stations.iter().enumerate() {
        let r = bs.power_budget_w - spend[j];
        if r < -1e-12 {
            return Err(Error::BudgetOverdraw {
                bs: j,
                required_w: spend[j],
                budget_w: bs.power_budget_w,
            });
        }
        residual.push(r.max(0.0));
    }

    let bandwidths: Vec<f64> = s.base_stations.iter().map(|b| b.bandwidth_hz).collect();
    let omega = bandwidth_shares(embb, &bandwidths);
    let mut theta = Matrix::zeros(nj, embb.n_users());
    for k in 0..embb.n_users() {
        if let Some(j) = embb.serving(k) {
            let i = interference_w(&masked, &ch.gain, j, k, model);
            theta[(j, k)] = effective_gain(
                ch.gain[(j, k)],
                i,
                noise,
                omega[(j, k)],
                s.options.theta_mode,
                s.options.noise_scaling,
            );
        }
    }
    let embb_alloc = allocate_embb(embb, &theta, &omega, &residual, s.radio.p_max_w)?;
    let mut powers = embb_alloc.powers;
    for &(k, j, p) in &urllc_out {
        powers[(j, k)] = p;
    }
    Ok(FixedAllocation {
        powers,
        urllc: urllc_out,
        urllc_spend_w: spend,
        water_levels: embb_alloc.water_levels,
        slack: embb_alloc.slack,
    })
}

fn urllc_target(s: &NetworkScenario) -> UrllcTarget {
    UrllcTarget {
        zeta: s.radio.urllc_sinr_threshold,
        epsilon: s.radio.urllc_epsilon,
        mode: s.options.urllc_mode,
        fading: s.options.fading,
    }
}

/// eMBB airtime left in the frame after `n_urllc` mini-slots.
pub fn duty_cycle_s(s: &NetworkScenario, n_urllc: usize) -> f64 {
    embb_data(1.0, s.radio.embb_tti_s, s.radio.urllc_tti_s, n_urllc).bits
}

/// Weighted objective `varsigma * sum D' - xi * sum psi_u`.
///
/// `D'` is the eMBB data of every associated eMBB-class user in this frame and
/// `psi_u` the probability of ruin of UAV `u` from its surplus at the start of
/// the TTI, so the ruin term does not depend on `powers`.
#[allow(clippy::too_many_arguments)]
pub fn objective_value(
    s: &NetworkScenario,
    ch: &ChannelState,
    embb: &AssociationMatrix,
    powers: &Matrix,
    n_urllc: usize,
    surplus_w: &[f64],
    varsigma: f64,
    xi: f64,
) -> f64 {
    let data: f64 = embb_data_bits(s, ch, embb, powers, n_urllc).iter().sum();
    let ruin: f64 = s.uav_indices().map(|u| ruin_at(s, surplus_w[u])).sum();
    varsigma * data - xi * ruin
}

/// Per-user eMBB data `D'` in bits; zero for anyone not eMBB-associated.
pub fn embb_data_bits(
    s: &NetworkScenario,
    ch: &ChannelState,
    embb: &AssociationMatrix,
    powers: &Matrix,
    n_urllc: usize,
) -> Vec<f64> {
    let duty = duty_cycle_s(s, n_urllc);
    let bandwidths: Vec<f64> = s.base_stations.iter().map(|b| b.bandwidth_hz).collect();
    let omega = bandwidth_shares(embb, &bandwidths);
    (0..embb.n_users())
        .map(|k| match embb.serving(k) {
            Some(j) => {
                let g = sinr(
                    powers,
                    &ch.gain,
                    s.radio.noise_power_w,
                    j,
                    k,
                    s.options.interference,
                );
                duty * omega[(j, k)] * (1.0 + g).log2()
            }
            None => 0.0,
        })
        .collect()
}

/// Outcome of one TTI.
#[derive(Debug, Clone, PartialEq)]
pub struct TtiResult {
    pub scheme: Scheme,
    /// eMBB-class association.
    pub embb: AssociationMatrix,
    /// `(user, bs, power_w)` per active URLLC user.
    pub urllc: Vec<(usize, usize, f64)>,
    pub powers: Matrix,
    pub water_levels: Vec<Option<f64>>,
    /// Shannon rate of every user under the final powers.
    pub rates_bps: Vec<f64>,
    /// eMBB data per user in this frame.
    pub data_bits: Vec<f64>,
    /// Probability of ruin per BS when the TTI started.
    pub psi: Vec<f64>,
    /// Per-UAV user caps from the association heuristic.
    pub caps: Vec<Option<usize>>,
    /// Surplus per BS after paying for this TTI.
    pub surplus_after_w: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `max |P_t - P_{t-1}|` of the last iteration.
    pub last_delta_w: f64,
    pub n_urllc: usize,
    /// URLLC mini-slots filled the whole frame.
    pub saturated: bool,
}

impl TtiResult {
    /// Users associated with BS `j`, URLLC included.
    pub fn n_assoc(&self, j: usize) -> usize {
        self.embb.count(j) + self.urllc.iter().filter(|u| u.1 == j).count()
    }

    /// CSV with header `bs_id,user_id,class,power_w,water_level`.
    pub fn power_csv(&self, s: &NetworkScenario) -> String {
        let mut out = String::from("bs_id,user_id,class,power_w,water_level\n");
        for j in 0..self.powers.rows() {
            let level = self.water_levels[j]
                .map(|l| format!("{l:?}"))
                .unwrap_or_default();
            for k in self.embb.users_of(j) {
                let _ = writeln!(
                    out,
                    "{j},{k},{},{:?},{level}",
                    s.users[k].kind.as_str(),
                    self.powers[(j, k)]
                );
            }
            for &(k, _, p) in self.urllc.iter().filter(|u| u.1 == j) {
                let _ = writeln!(out, "{j},{k},{},{p:?},", UserKind::Urllc.as_str());
            }
        }
        out
    }
}

/// Run the iterative association and allocation for one TTI.
pub fn run_tti(
    s: &NetworkScenario,
    ch: &ChannelState,
    state: &TtiState,
    scheme: Scheme,
) -> Result<TtiResult> {
    let nj = s.base_stations.len();
    let nk = s.users.len();
    if state.surplus_w.len() != nj {
        return Err(Error::Domain(format!(
            "state has {} surplus entries for {nj} BSs",
            state.surplus_w.len()
        )));
    }
    if let Some(&k) = state
        .active_urllc
        .iter()
        .find(|&&k| k >= nk || s.users[k].kind != UserKind::Urllc)
    {
        return Err(Error::Domain(format!("user {k} is not a URLLC user")));
    }
    let embb_users: Vec<usize> = s.embb_class_users().collect();
    let n_urllc = state.active_urllc.len();
    let frame = embb_data(1.0, s.radio.embb_tti_s, s.radio.urllc_tti_s, n_urllc);
    let psi: Vec<f64> = (0..nj)
        .map(|j| {
            if s.base_stations[j].is_uav() {
                ruin_at(s, state.surplus_w[j])
            } else {
                0.0
            }
        })
        .collect();

    let active: Vec<usize> = embb_users
        .iter()
        .chain(&state.active_urllc)
        .copied()
        .collect();
    if active.is_empty() {
        return Ok(TtiResult {
            scheme,
            embb: AssociationMatrix::new(nj, nk),
            urllc: Vec::new(),
            powers: Matrix::zeros(nj, nk),
            water_levels: vec![None; nj],
            rates_bps: vec![0.0; nk],
            data_bits: vec![0.0; nk],
            psi,
            caps: vec![None; nj],
            surplus_after_w: state.surplus_w.clone(),
            objective: objective_value(
                s,
                ch,
                &AssociationMatrix::new(nj, nk),
                &Matrix::zeros(nj, nk),
                n_urllc,
                &state.surplus_w,
                s.options.varsigma,
                s.options.xi,
            ),
            iterations: 0,
            converged: true,
            last_delta_w: 0.0,
            n_urllc,
            saturated: frame.saturated,
        });
    }

    // Uniform initial powers and the SINRs they induce.
    let mut p0 = Matrix::zeros(nj, nk);
    for (j, bs) in s.base_stations.iter().enumerate() {
        for &k in &active {
            p0[(j, k)] = bs.power_budget_w / active.len() as f64;
        }
    }
    let gamma0 = sinr_matrix(&p0, &ch.gain, s.radio.noise_power_w, s.options.interference);
    let urllc_pairs = associate_urllc(&gamma0, &state.active_urllc);

    let budgets: Vec<f64> = s.base_stations.iter().map(|b| b.power_budget_w).collect();
    let input = AssociationInput {
        gamma: &gamma0,
        psi: &psi,
        candidate_power: &p0,
        budgets_w: &budgets,
        alpha: s.options.alpha,
        users: &embb_users,
    };
    let initial = match scheme {
        Scheme::Ruin => associate_ruin(&input)?,
        Scheme::Sinr => associate_sinr_baseline(&input)?,
    };
    let caps: Vec<Option<usize>> = (0..nj)
        .map(|j| s.base_stations[j].is_uav().then(|| initial.assoc.count(j)))
        .collect();
    let mut search = LocalSearch::new(s, ch, &caps, &gamma0, &embb_users, frame.bits);
    let mut embb = initial.assoc;
    let mut prev = p0;
    let mut alloc = allocate_fixed(s, ch, &embb, &urllc_pairs, &prev)?;
    let mut iterations = 0;
    let mut converged = false;
    let mut last_delta = f64::INFINITY;
    while iterations < s.options.tmax {
        iterations += 1;
        let snapshot = mask_to_association(&alloc.powers, &embb, &urllc_pairs);
        let moved = search.improve(&mut embb, &snapshot, &alloc.urllc_spend_w)?;
        let next = allocate_fixed(s, ch, &embb, &urllc_pairs, &alloc.powers)?;
        last_delta = next.powers.max_abs_diff(&prev);
        prev = next.powers.clone();
        alloc = next;
        if !moved && last_delta < s.options.eps0 {
            converged = true;
            break;
        }
    }

    let powers = alloc.powers;
    let data_bits = embb_data_bits(s, ch, &embb, &powers, n_urllc);
    let bandwidths: Vec<f64> = s.base_stations.iter().map(|b| b.bandwidth_hz).collect();
    let omega = bandwidth_shares(&embb, &bandwidths);
    let mut rates = vec![0.0; nk];
    for (k, rate) in rates.iter_mut().enumerate() {
        if let Some(j) = embb.serving(k) {
            let g = sinr(
                &powers,
                &ch.gain,
                s.radio.noise_power_w,
                j,
                k,
                s.options.interference,
            );
            *rate = omega[(j, k)] * (1.0 + g).log2();
        }
    }
    for &(k, j, _) in &alloc.urllc {
        let g = sinr(
            &powers,
            &ch.gain,
            s.radio.noise_power_w,
            j,
            k,
            s.options.interference,
        );
        rates[k] = s.base_stations[j].bandwidth_hz * (1.0 + g).log2();
    }
    let surplus_after: Vec<f64> = (0..nj)
        .map(|j| {
            if s.base_stations[j].is_uav() {
                state.surplus_w[j] - powers.row_sum(j)
            } else {
                state.surplus_w[j]
            }
        })
        .collect();
    let objective = objective_value(
        s,
        ch,
        &embb,
        &powers,
        n_urllc,
        &state.surplus_w,
        s.options.varsigma,
        s.options.xi,
    );
    Ok(TtiResult {
        scheme,
        embb,
        urllc: alloc.urllc,
        powers,
        water_levels: alloc.water_levels,
        rates_bps: rates,
        data_bits,
        psi,
        caps,
        surplus_after_w: surplus_after,
        objective,
        iterations,
        converged,
        last_delta_w: last_delta,
        n_urllc,
        saturated: frame.saturated,
    })
}

/// [`run_tti`], dropping URLLC users whose target no power can meet.
///
/// Dropped users are removed from `state` and returned in increasing order.
pub fn run_tti_admitting(
    s: &NetworkScenario,
    ch: &ChannelState,
    state: &mut TtiState,
    scheme: Scheme,
) -> Result<(TtiResult, Vec<usize>)> {
    let mut dropped = Vec::new();
    loop {
        match run_tti(s, ch, state, scheme) {
            Err(Error::UrllcInfeasible(links)) => {
                dropped.extend(links.iter().map(|l| l.1));
                state
                    .active_urllc
                    .retain(|k| !links.iter().any(|l| l.1 == *k));
            }
            other => {
                dropped.sort_unstable();
                return Ok((other?, dropped));
            }
        }
    }
}

/// Interference seen by user `k` if served by `j`, excluding `k`'s own link.
fn external_interference(snapshot: &Matrix, gains: &Matrix, model: InterferenceModel) -> Matrix {
    let row_sums: Vec<f64> = (0..snapshot.rows()).map(|j| snapshot.row_sum(j)).collect();
    Matrix::from_fn(snapshot.rows(), snapshot.cols(), |j, k| {
        (0..snapshot.rows())
            .filter(|&jp| jp != j)
            .map(|jp| match model {
                // Only the link to `k` itself would count, and it is being re-decided.
                InterferenceModel::AsWritten => 0.0,
                InterferenceModel::Conventional => {
                    (row_sums[jp] - snapshot[(jp, k)]) * gains[(jp, k)]
                }
            })
            .sum()
    })
}

/// Incremental evaluator for the per-BS share of the objective.
struct LocalSearch<'a> {
    s: &'a NetworkScenario,
    ch: &'a ChannelState,
    caps: &'a [Option<usize>],
    users: &'a [usize],
    candidates: Vec<Vec<usize>>,
    duty_s: f64,
    interference: Matrix,
    urllc_spend: Vec<f64>,
}

impl<'a> LocalSearch<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        s: &'a NetworkScenario,
        ch: &'a ChannelState,
        caps: &'a [Option<usize>],
        gamma0: &Matrix,
        users: &'a [usize],
        duty_s: f64,
    ) -> Self {
        let nj = s.base_stations.len();
        let candidates = (0..s.users.len())
            .map(|k| {
                let mut js: Vec<usize> = (0..nj).collect();
                js.sort_by(|&a, &b| gamma0[(b, k)].total_cmp(&gamma0[(a, k)]).then(a.cmp(&b)));
                js.truncate(CANDIDATE_BS);
                js.sort_unstable();
                js
            })
            .collect();
        Self {
            s,
            ch,
            caps,
            users,
            candidates,
            duty_s,
            interference: Matrix::zeros(nj, s.users.len()),
            urllc_spend: vec![0.0; nj],
        }
    }

    fn allows(&self, k: usize, j: usize, current: Option<usize>) -> bool {
        self.candidates[k].contains(&j) || current == Some(j)
    }

    /// Objective share of BS `j` serving eMBB users `members`.
    fn value(&self, j: usize, members: &[usize]) -> Result<f64> {
        let s = self.s;
        let bs = &s.base_stations[j];
        let mut data = 0.0;
        if !members.is_empty() {
            let omega = bs.bandwidth_hz / members.len() as f64;
            let noise = s.radio.noise_power_w;
            let theta: Vec<f64> = members
                .iter()
                .map(|&k| {
                    effective_gain(
                        self.ch.gain[(j, k)],
                        self.interference[(j, k)],
                        noise,
                        omega,
                        s.options.theta_mode,
                        s.options.noise_scaling,
                    )
                })
                .collect();
            let budget = (bs.power_budget_w - self.urllc_spend[j]).max(0.0);
            let wf = waterfill(&theta, &vec![omega; members.len()], budget, s.radio.p_max_w)?;
            for (&k, &p) in members.iter().zip(&wf.powers) {
                let g = p * self.ch.gain[(j, k)] / (self.interference[(j, k)] + noise);
                data += omega * (1.0 + g).log2();
            }
        }
        Ok(s.options.varsigma * self.duty_s * data)
    }

    /// One pass of improving moves and swaps; returns whether anything moved.
    fn improve(
        &mut self,
        assoc: &mut AssociationMatrix,
        snapshot: &Matrix,
        urllc_spend: &[f64],
    ) -> Result<bool> {
        let nj = assoc.n_bs();
        self.interference =
            external_interference(snapshot, &self.ch.gain, self.s.options.interference);
        self.urllc_spend = urllc_spend.to_vec();
        let mut members: Vec<Vec<usize>> = (0..nj).map(|j| assoc.users_of(j).collect()).collect();
        let mut values = (0..nj)
            .map(|j| self.value(j, &members[j]))
            .collect::<Result<Vec<f64>>>()?;
        let mut moved = false;

        for &k in self.users {
            let from = assoc.serving(k);
            let base_from = from.map(|f| values[f]).unwrap_or(0.0);
            let without: Option<(usize, Vec<usize>, f64)> = match from {
                Some(f) => {
                    let rest: Vec<usize> = members[f].iter().copied().filter(|&u| u != k).collect();
                    let v = self.value(f, &rest)?;
                    Some((f, rest, v))
                }
                None => None,
            };
            let mut best: Option<(usize, f64, Vec<usize>, f64)> = None;
            for j in 0..nj {
                if Some(j) == from || !self.allows(k, j, from) {
                    continue;
                }
                if let Some(cap) = self.caps[j] {
                    if members[j].len() + 1 > cap {
                        continue;
                    }
                }
                let mut grown = members[j].clone();
                let pos = grown.partition_point(|&u| u < k);
                grown.insert(pos, k);
                let v = self.value(j, &grown)?;
                let gain = v - values[j] + without.as_ref().map_or(0.0, |w| w.2) - base_from;
                if best.as_ref().is_none_or(|b| gain > b.1) {
                    best = Some((j, gain, grown, v));
                }
            }
            let Some((j, gain, grown, v)) = best else {
                continue;
            };
            let scale = values
                .iter()
                .map(|x| x.abs())
                .sum::<f64>()
                .max(f64::MIN_POSITIVE);
            // Unassociated users must be placed even at a loss.
            if from.is_some() && gain <= IMPROVEMENT_TOL * scale {
                continue;
            }
            if let Some((f, rest, vf)) = without {
                members[f] = rest;
                values[f] = vf;
            }
            members[j] = grown;
            values[j] = v;
            assoc.assign(j, k);
            moved = true;
        }

        for a in 0..self.users.len() {
            for b in a + 1..self.users.len() {
                let (ka, kb) = (self.users[a], self.users[b]);
                let (Some(ja), Some(jb)) = (assoc.serving(ka), assoc.serving(kb)) else {
                    continue;
                };
                if ja == jb || !self.allows(ka, jb, Some(ja)) || !self.allows(kb, ja, Some(jb)) {
                    continue;
                }
                let swap_in = |list: &[usize], out: usize, inn: usize| {
                    let mut v: Vec<usize> = list.iter().copied().filter(|&u| u != out).collect();
                    let pos = v.partition_point(|&u| u < inn);
                    v.insert(pos, inn);
                    v
                };
                let new_a = swap_in(&members[ja], ka, kb);
                let new_b = swap_in(&members[jb], kb, ka);
                let va = self.value(ja, &new_a)?;
                let vb = self.value(jb, &new_b)?;
                let gain = va + vb - values[ja] - values[jb];
                let scale = values
                    .iter()
                    .map(|x| x.abs())
                    .sum::<f64>()
                    .max(f64::MIN_POSITIVE);
                if gain > IMPROVEMENT_TOL * scale {
                    members[ja] = new_a;
                    members[jb] = new_b;
                    values[ja] = va;
                    values[jb] = vb;
                    assoc.assign(jb, ka);
                    assoc.assign(ja, kb);
                    moved = true;
                }
            }
        }
        if !moved {
            moved = self.deepen(assoc, &mut members, &mut values)?;
        }
        Ok(moved)
    }

    /// Variable-depth search: chain the best single moves, worsening ones
    /// included, moving each user at most once, and keep the best prefix.
    fn deepen(
        &self,
        assoc: &mut AssociationMatrix,
        members: &mut [Vec<usize>],
        values: &mut [f64],
    ) -> Result<bool> {
        let nj = assoc.n_bs();
        let scale = values
            .iter()
            .map(|x| x.abs())
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        let mut trial_members = members.to_vec();
        let mut trial_values = values.to_vec();
        let mut trial = assoc.clone();
        let mut locked = vec![false; self.s.users.len()];
        let (mut total, mut best_total, mut best_len) = (0.0, 0.0, 0);
        let mut chain: Vec<Move> = Vec::new();
        for _ in 0..self.users.len().min(MAX_CHAIN) {
            let mut best: Option<(Move, f64)> = None;
            for &k in self.users {
                let Some(from) = trial.serving(k) else {
                    continue;
                };
                if locked[k] {
                    continue;
                }
                let rest: Vec<usize> = trial_members[from]
                    .iter()
                    .copied()
                    .filter(|&u| u != k)
                    .collect();
                let v_from = self.value(from, &rest)?;
                for to in 0..nj {
                    if to == from || !self.allows(k, to, Some(from)) {
                        continue;
                    }
                    if self.caps[to].is_some_and(|cap| trial_members[to].len() + 1 > cap) {
                        continue;
                    }
                    let mut grown = trial_members[to].clone();
                    let pos = grown.partition_point(|&u| u < k);
                    grown.insert(pos, k);
                    let v_to = self.value(to, &grown)?;
                    let gain = v_to - trial_values[to] + v_from - trial_values[from];
                    if best.as_ref().is_none_or(|b| gain > b.1) {
                        let m = Move {
                            user: k,
                            from,
                            rest: rest.clone(),
                            v_from,
                            to,
                            grown,
                            v_to,
                        };
                        best = Some((m, gain));
                    }
                }
            }
            let Some((m, gain)) = best else { break };
            m.apply(&mut trial, &mut trial_members, &mut trial_values);
            locked[m.user] = true;
            chain.push(m);
            total += gain;
            if total > best_total + IMPROVEMENT_TOL * scale {
                best_total = total;
                best_len = chain.len();
            }
        }
        for m in chain.into_iter().take(best_len) {
            m.apply(assoc, members, values);
        }
        Ok(best_len > 0)
    }
}

/// One tentative relocation with the member lists and values it produces.
struct Move {
    user: usize,
    from: usize,
    rest: Vec<usize>,
    v_from: f64,
    to: usize,
    grown: Vec<usize>,
    v_to: f64,
}

impl Move {
    fn apply(&self, assoc: &mut AssociationMatrix, members: &mut [Vec<usize>], values: &mut [f64]) {
        members[self.from].clone_from(&self.rest);
        values[self.from] = self.v_from;
        members[self.to].clone_from(&self.grown);
        values[self.to] = self.v_to;
        assoc.assign(self.to, self.user);
    }
}

/// Per-UAV record of one flight TTI.
#[derive(Debug, Clone, PartialEq)]
pub struct UavTti {
    pub tti: usize,
    pub uav: usize,
    /// Surplus after this TTI's deduction.
    pub surplus_w: f64,
    /// Probability of ruin used for this TTI's association.
    pub psi: f64,
    pub n_assoc: usize,
    pub sum_power_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlightReport {
    pub scheme: Scheme,
    pub seed: u64,
    pub horizon_ttis: usize,
    /// TTIs completed before the first UAV ran out of surplus.
    pub flight_ttis: usize,
    /// UAV-served user-TTIs with positive power over the flight.
    pub users_served_total: usize,
    /// `(tti, uav)` of the ruin event that ended the flight.
    pub ruined: Option<(usize, usize)>,
    pub trace: Vec<UavTti>,
    /// URLLC requests beyond the frame's mini-slots.
    pub urllc_overflow: usize,
    /// URLLC requests dropped because no power could meet the target.
    pub urllc_outages: usize,
    /// Total UAV surplus at the end of the flight.
    pub final_surplus_w: f64,
    pub iterations: Vec<usize>,
    pub converged_ttis: usize,
}

impl FlightReport {
    /// CSV with header `tti,uav_id,surplus_w,psi,n_assoc,sum_power_w`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("tti,uav_id,surplus_w,psi,n_assoc,sum_power_w\n");
        for r in &self.trace {
            let _ = writeln!(
                out,
                "{},{},{:?},{:?},{},{:?}",
                r.tti, r.uav, r.surplus_w, r.psi, r.n_assoc, r.sum_power_w
            );
        }
        out
    }

    /// Flat `key = value` summary.
    pub fn summary(&self) -> String {
        let ruined = self
            .ruined
            .map(|(t, u)| format!("{t}:{u}"))
            .unwrap_or_else(|| "none".into());
        format!(
            "scheme = {}\nseed = {}\nhorizon_ttis = {}\nflight_ttis = {}\nusers_served_total = {}\nruined = {ruined}\nfinal_surplus_w = {:?}\nurllc_overflow = {}\nurllc_outages = {}\nconverged_ttis = {}\n",
            self.scheme.as_str(),
            self.seed,
            self.horizon_ttis,
            self.flight_ttis,
            self.users_served_total,
            self.final_surplus_w,
            self.urllc_overflow,
            self.urllc_outages,
            self.converged_ttis,
        )
    }
}

/// Simulate one flight of every UAV for up to `horizon_ttis` TTIs.
///
/// Each TTI adds the premium, draws the URLLC arrivals (identically for both
/// schemes under the same seed), runs [`run_tti`] and charges every UAV with
/// its transmit power. The flight ends after the first TTI that leaves any
/// UAV with negative surplus.
pub fn run_flight(
    s: &NetworkScenario,
    horizon_ttis: usize,
    scheme: Scheme,
    seed: u64,
) -> Result<FlightReport> {
    if horizon_ttis == 0 {
        return Err(Error::Domain(
            "flight horizon must be at least one TTI".into(),
        ));
    }
    let ch = ChannelState::compute(s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arrivals = if s.urllc_arrivals_per_tti > 0.0 {
        Some(
            Poisson::new(s.urllc_arrivals_per_tti)
                .map_err(|e| Error::Domain(format!("URLLC arrivals: {e}")))?,
        )
    } else {
        None
    };
    let urllc_users: Vec<usize> = s.urllc_users().collect();
    let slots = s.radio.minislots_per_frame().min(urllc_users.len());
    let uavs: Vec<usize> = s.uav_indices().collect();

    let mut surplus = launch_surplus(s);
    let mut report = FlightReport {
        scheme,
        seed,
        horizon_ttis,
        flight_ttis: 0,
        users_served_total: 0,
        ruined: None,
        trace: Vec::new(),
        urllc_overflow: 0,
        urllc_outages: 0,
        final_surplus_w: 0.0,
        iterations: Vec::new(),
        converged_ttis: 0,
    };
    for tti in 1..=horizon_ttis {
        for &u in &uavs {
            surplus[u] += s.energy.premium_w;
        }
        let requested = arrivals.as_ref().map_or(0, |d| d.sample(&mut rng) as usize);
        let admitted = requested.min(slots);
        report.urllc_overflow += requested - admitted;
        let mut picked: Vec<usize> = sample(&mut rng, urllc_users.len(), admitted)
            .into_iter()
            .map(|i| urllc_users[i])
            .collect();
        picked.sort_unstable();

        let mut state = TtiState {
            surplus_w: surplus.clone(),
            active_urllc: picked,
        };
        let (result, dropped) = run_tti_admitting(s, &ch, &mut state, scheme)?;
        report.urllc_outages += dropped.len();
        report.iterations.push(result.iterations);
        report.converged_ttis += usize::from(result.converged);

        let mut ruined_uav = None;
        for &u in &uavs {
            let spend = result.powers.row_sum(u);
            surplus[u] -= spend;
            report.trace.push(UavTti {
                tti,
                uav: u,
                surplus_w: surplus[u],
                psi: result.psi[u],
                n_assoc: result.n_assoc(u),
                sum_power_w: spend,
            });
            if surplus[u] < 0.0 && ruined_uav.is_none() {
                ruined_uav = Some(u);
            }
        }
        if let Some(u) = ruined_uav {
            report.ruined = Some((tti, u));
            break;
        }
        report.flight_ttis = tti;
        report.users_served_total += uavs
            .iter()
            .map(|&u| result.powers.row(u).iter().filter(|&&p| p > 0.0).count())
            .sum::<usize>();
    }
    report.final_surplus_w = uavs.iter().map(|&u| surplus[u]).sum();
    Ok(report)
}
