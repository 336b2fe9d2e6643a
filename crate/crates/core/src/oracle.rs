//! Exact solver for small instances by exhaustive enumeration.
//!
//! URLLC users stay pinned to their best-SINR BS. Every way of associating the
//! eMBB-class users is tried; for each, power follows from [`allocate_fixed`]
//! (closed-form URLLC power, then per-BS water-filling, which is the exact
//! optimum for a fixed association) iterated to a fixed point of the
//! interference snapshot, and the weighted objective is evaluated. The best
//! association wins, ties going to the lexicographically smallest one.

use rayon::prelude::*;

use crate::allocation::kkt_check;
use crate::association::{associate_urllc, AssociationMatrix};
use crate::channel::{bandwidth_shares, sinr_matrix, ChannelState};
use crate::engine::{allocate_fixed, mask_to_association, objective_value, TtiState};
use crate::scenario::NetworkScenario;
use crate::{Error, Matrix, Result};

pub const MAX_BS: usize = 3;
pub const MAX_USERS: usize = 8;

/// A scenario and TTI state small enough to enumerate.
#[derive(Debug, Clone)]
pub struct SmallInstance {
    pub scenario: NetworkScenario,
    pub state: TtiState,
}

impl SmallInstance {
    pub fn new(scenario: NetworkScenario, state: TtiState) -> Result<Self> {
        let (bs, users) = (scenario.base_stations.len(), scenario.users.len());
        if bs > MAX_BS || users > MAX_USERS || bs == 0 {
            return Err(Error::TooLarge {
                bs,
                users,
                max_bs: MAX_BS,
                max_users: MAX_USERS,
            });
        }
        Ok(Self { scenario, state })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub embb: AssociationMatrix,
    pub urllc: Vec<(usize, usize)>,
    pub powers: Matrix,
    pub objective: f64,
    /// Number of associations evaluated.
    pub evaluated: usize,
    /// Largest KKT residual over the water-filling of the winning association.
    pub kkt_residual: f64,
}

/// Maximise the weighted objective over every eMBB association.
pub fn solve_exact(inst: &SmallInstance, varsigma: f64, xi: f64) -> Result<ExactSolution> {
    let s = &inst.scenario;
    let ch = ChannelState::compute(s)?;
    let nj = s.base_stations.len();
    let nk = s.users.len();
    let embb_users: Vec<usize> = s.embb_class_users().collect();
    let active: Vec<usize> = embb_users
        .iter()
        .chain(&inst.state.active_urllc)
        .copied()
        .collect();
    let mut p0 = Matrix::zeros(nj, nk);
    for (j, bs) in s.base_stations.iter().enumerate() {
        for &k in &active {
            p0[(j, k)] = bs.power_budget_w / active.len() as f64;
        }
    }
    let gamma0 = sinr_matrix(&p0, &ch.gain, s.radio.noise_power_w, s.options.interference);
    let urllc = associate_urllc(&gamma0, &inst.state.active_urllc);
    let n_urllc = inst.state.active_urllc.len();

    let total = nj.pow(embb_users.len() as u32);
    let decode = |index: usize| {
        let mut assoc = AssociationMatrix::new(nj, nk);
        let mut rest = index;
        // The first eMBB user is the most significant digit.
        for &k in embb_users.iter().rev() {
            assoc.assign(rest % nj, k);
            rest /= nj;
        }
        assoc
    };
    let evaluate = |index: usize| -> Result<(f64, Matrix)> {
        let assoc = decode(index);
        let powers = settle(s, &ch, &assoc, &urllc, &p0)?;
        let obj = objective_value(
            s,
            &ch,
            &assoc,
            &powers,
            n_urllc,
            &inst.state.surplus_w,
            varsigma,
            xi,
        );
        Ok((obj, powers))
    };
    let objectives: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|i| evaluate(i).map(|r| r.0))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, &obj) in objectives.iter().enumerate() {
        let tol = 1e-12 * objectives[best].abs();
        if obj > objectives[best] + tol {
            best = i;
        }
    }
    let (objective, powers) = evaluate(best)?;
    let embb = decode(best);
    let kkt_residual = certify(s, &ch, &embb, &urllc, &powers);
    Ok(ExactSolution {
        embb,
        urllc,
        powers,
        objective,
        evaluated: total,
        kkt_residual,
    })
}

/// Iterate the fixed-association allocation until the interference settles.
fn settle(
    s: &NetworkScenario,
    ch: &ChannelState,
    embb: &AssociationMatrix,
    urllc: &[(usize, usize)],
    start: &Matrix,
) -> Result<Matrix> {
    let mut prev = allocate_fixed(s, ch, embb, urllc, start)?.powers;
    for _ in 0..s.options.tmax {
        let next = allocate_fixed(s, ch, embb, urllc, &prev)?.powers;
        let delta = next.max_abs_diff(&prev);
        prev = next;
        if delta < s.options.eps0 {
            break;
        }
    }
    Ok(prev)
}

/// KKT residual of every BS's eMBB water-filling under the final snapshot.
fn certify(
    s: &NetworkScenario,
    ch: &ChannelState,
    embb: &AssociationMatrix,
    urllc: &[(usize, usize)],
    powers: &Matrix,
) -> f64 {
    let masked = mask_to_association(powers, embb, urllc);
    let bandwidths: Vec<f64> = s.base_stations.iter().map(|b| b.bandwidth_hz).collect();
    let omega = bandwidth_shares(embb, &bandwidths);
    let mut worst: f64 = 0.0;
    for j in 0..embb.n_bs() {
        let users: Vec<usize> = embb.users_of(j).collect();
        if users.is_empty() {
            continue;
        }
        let urllc_spend: f64 = urllc
            .iter()
            .filter(|u| u.1 == j)
            .map(|&(k, _)| powers[(j, k)])
            .sum();
        let budget = (s.base_stations[j].power_budget_w - urllc_spend).max(0.0);
        let theta: Vec<f64> = users
            .iter()
            .map(|&k| {
                let i =
                    crate::channel::interference_w(&masked, &ch.gain, j, k, s.options.interference);
                crate::allocation::effective_gain(
                    ch.gain[(j, k)],
                    i,
                    s.radio.noise_power_w,
                    omega[(j, k)],
                    s.options.theta_mode,
                    s.options.noise_scaling,
                )
            })
            .collect();
        let om: Vec<f64> = users.iter().map(|&k| omega[(j, k)]).collect();
        let p: Vec<f64> = users.iter().map(|&k| powers[(j, k)]).collect();
        worst = worst.max(kkt_check(&p, &theta, &om, budget, s.radio.p_max_w).max_residual());
    }
    worst
}
