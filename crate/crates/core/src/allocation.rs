//! Downlink power allocation.
//!
//! URLLC users receive the smallest power that keeps their SINR at the
//! threshold `zeta` with confidence `1 - epsilon`. eMBB users share what is
//! left of each BS budget by capped water-filling,
//!
//! ```text
//! P_k = min(p_max, [omega_k / lambda - 1 / theta_k]^+),
//! ```
//!
//! where the water level `lambda` is found by bisection so that the powers
//! exhaust the budget. [`kkt_check`] certifies a candidate allocation against
//! the optimality conditions of `max sum omega_k ln(1 + theta_k P_k)`.

use crate::association::AssociationMatrix;
use crate::scenario::{Fading, NoiseScaling, ThetaMode, UrllcMode};
use crate::{Error, Matrix, Result};

/// Largest accepted violation in a [`KktCertificate`].
pub const KKT_TOLERANCE: f64 = 1e-6;

const BISECTION_ITERATIONS: usize = 200;

/// Per-link power matrix with its budget and cap invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerMatrix(pub Matrix);

impl PowerMatrix {
    /// Human-readable list of cap and budget violations (absolute tolerance 1e-6 W).
    pub fn violations(&self, budgets_w: &[f64], p_max_w: f64) -> Vec<String> {
        let p = &self.0;
        let mut out = Vec::new();
        for (j, &budget) in budgets_w.iter().enumerate().take(p.rows()) {
            for (k, &v) in p.row(j).iter().enumerate() {
                if !(v >= 0.0 && v <= p_max_w + 1e-6) {
                    out.push(format!("P[{j}][{k}] = {v} outside [0, {p_max_w}]"));
                }
            }
            let total = p.row_sum(j);
            if total > budget + 1e-6 {
                out.push(format!(
                    "BS {j} transmits {total} W over its {budget} W budget"
                ));
            }
        }
        out
    }
}

/// Reliability requirement for URLLC links.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UrllcTarget {
    pub zeta: f64,
    pub epsilon: f64,
    pub mode: UrllcMode,
    pub fading: Fading,
}

impl UrllcTarget {
    /// SINR the power must reach on the deterministic channel: `zeta` without
    /// fading, `zeta / -ln(1 - epsilon)` under unit-mean Rayleigh fading.
    pub fn required_sinr(&self) -> f64 {
        match self.fading {
            Fading::None => self.zeta,
            Fading::Rayleigh => self.zeta / -(-self.epsilon).ln_1p(),
        }
    }
}

/// URLLC power without the `p_max` check; `+inf` on a dead link.
pub fn urllc_power_unchecked(
    gain: f64,
    interference_plus_noise_w: f64,
    target: &UrllcTarget,
) -> f64 {
    let q = target.required_sinr();
    match target.mode {
        UrllcMode::Standard => q * interference_plus_noise_w / gain,
        UrllcMode::AsWritten => q * (1.0 + interference_plus_noise_w) / gain,
    }
}

/// Closed-form URLLC power for link `(bs, user)`.
pub fn urllc_power(
    bs: usize,
    user: usize,
    gain: f64,
    interference_plus_noise_w: f64,
    target: &UrllcTarget,
    p_max_w: f64,
) -> Result<f64> {
    if !(gain > 0.0) {
        return Err(Error::InfeasibleLink { bs, user });
    }
    let p = urllc_power_unchecked(gain, interference_plus_noise_w, target);
    if !(p <= p_max_w) {
        return Err(Error::ReliabilityInfeasible {
            bs,
            user,
            required_w: p,
            p_max_w,
        });
    }
    Ok(p)
}

/// Effective gain `theta` of an eMBB link.
pub fn effective_gain(
    gain: f64,
    interference_w: f64,
    noise_w: f64,
    bandwidth_hz: f64,
    mode: ThetaMode,
    scaling: NoiseScaling,
) -> f64 {
    let noise = match scaling {
        NoiseScaling::Total => noise_w,
        NoiseScaling::PerHz => bandwidth_hz * noise_w,
    };
    match mode {
        ThetaMode::Consistent => gain / (interference_w + noise),
        ThetaMode::AsWritten => gain / (1.0 + interference_w + noise),
    }
}

/// Result of one capped water-filling problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Waterfill {
    pub powers: Vec<f64>,
    /// `None` when no user can use power.
    pub water_level: Option<f64>,
    /// Every user sits at `p_max` and budget is left over.
    pub slack: bool,
}

impl Waterfill {
    pub fn total(&self) -> f64 {
        self.powers.iter().sum()
    }
}

fn capped_power(omega: f64, theta: f64, lambda: f64, p_max: f64) -> f64 {
    (omega / lambda - 1.0 / theta).clamp(0.0, p_max)
}

fn usable(omega: f64, theta: f64) -> bool {
    omega > 0.0 && theta > 0.0 && theta.is_finite() && omega.is_finite()
}

/// Capped water-filling of `budget_w` over users with gains `theta` and weights `omega`.
pub fn waterfill(theta: &[f64], omega: &[f64], budget_w: f64, p_max_w: f64) -> Result<Waterfill> {
    if theta.len() != omega.len() {
        return Err(Error::Domain(format!(
            "theta has {} entries but omega has {}",
            theta.len(),
            omega.len()
        )));
    }
    if !(budget_w >= 0.0) {
        return Err(Error::Domain(format!(
            "budget {budget_w} W must be nonnegative"
        )));
    }
    if !(p_max_w > 0.0) {
        return Err(Error::Domain(format!("p_max {p_max_w} W must be positive")));
    }
    let n = theta.len();
    let active: Vec<usize> = (0..n).filter(|&k| usable(omega[k], theta[k])).collect();
    let mut powers = vec![0.0; n];
    if active.is_empty() {
        return Ok(Waterfill {
            powers,
            water_level: None,
            slack: false,
        });
    }
    // Marginal utility at zero and at the cap bracket the water level.
    let lambda_hi = active
        .iter()
        .map(|&k| omega[k] * theta[k])
        .fold(0.0, f64::max);
    if budget_w == 0.0 {
        return Ok(Waterfill {
            powers,
            water_level: Some(lambda_hi),
            slack: false,
        });
    }
    let full = active.len() as f64 * p_max_w;
    if full <= budget_w {
        for &k in &active {
            powers[k] = p_max_w;
        }
        let slack = full < budget_w;
        let level = if slack {
            0.0
        } else {
            active
                .iter()
                .map(|&k| omega[k] * theta[k] / (1.0 + theta[k] * p_max_w))
                .fold(f64::INFINITY, f64::min)
        };
        return Ok(Waterfill {
            powers,
            water_level: Some(level),
            slack,
        });
    }
    let lambda_lo = active
        .iter()
        .map(|&k| omega[k] / (p_max_w + 1.0 / theta[k]))
        .fold(f64::INFINITY, f64::min);
    let total = |lambda: f64| -> f64 {
        active
            .iter()
            .map(|&k| capped_power(omega[k], theta[k], lambda, p_max_w))
            .sum()
    };
    // total(lo) = full > budget, total(hi) = 0 < budget; total is nonincreasing in lambda.
    let (mut lo, mut hi) = (lambda_lo, lambda_hi);
    debug_assert!(total(lo) >= budget_w && total(hi) <= budget_w);
    for _ in 0..BISECTION_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) > budget_w {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut lambda = 0.5 * (lo + hi);
    if let Some(exact) = refine_level(&active, theta, omega, budget_w, p_max_w, lambda) {
        lambda = exact;
    }
    for &k in &active {
        powers[k] = capped_power(omega[k], theta[k], lambda, p_max_w);
    }
    Ok(Waterfill {
        powers,
        water_level: Some(lambda),
        slack: false,
    })
}

/// Closed-form level for the active set implied by `lambda`, accepted only
/// when it reproduces that active set.
fn refine_level(
    active: &[usize],
    theta: &[f64],
    omega: &[f64],
    budget: f64,
    p_max: f64,
    lambda: f64,
) -> Option<f64> {
    let (mut capped, mut omega_sum, mut inv_theta_sum) = (0usize, 0.0, 0.0);
    for &k in active {
        let raw = omega[k] / lambda - 1.0 / theta[k];
        if raw >= p_max {
            capped += 1;
        } else if raw > 0.0 {
            omega_sum += omega[k];
            inv_theta_sum += 1.0 / theta[k];
        }
    }
    if omega_sum == 0.0 {
        return None;
    }
    let inv = (budget - capped as f64 * p_max + inv_theta_sum) / omega_sum;
    if !(inv > 0.0) {
        return None;
    }
    let exact = 1.0 / inv;
    let same_set = active.iter().all(|&k| {
        let before = omega[k] / lambda - 1.0 / theta[k];
        let after = omega[k] / exact - 1.0 / theta[k];
        let class = |r: f64| (r >= p_max) as u8 * 2 + (r > 0.0) as u8;
        class(before) == class(after) || (after - before).abs() <= 1e-12 * p_max
    });
    same_set.then_some(exact)
}

/// Residuals of the optimality conditions, each relative and nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktCertificate {
    pub water_level: f64,
    /// Interior users: `|omega theta / (1 + theta P) - lambda|`.
    pub stationarity: f64,
    /// Cap and nonnegativity violations plus budget overdraw.
    pub primal: f64,
    /// Negative multipliers of either bound.
    pub dual: f64,
    /// `mu P` and `nu (P - p_max)`.
    pub complementary: f64,
    /// `|sum P - budget| / budget`, or `lambda` when the budget is slack.
    pub budget: f64,
    pub slack: bool,
}

impl KktCertificate {
    pub fn max_residual(&self) -> f64 {
        [
            self.stationarity,
            self.primal,
            self.dual,
            self.complementary,
            self.budget,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn accepted(&self) -> bool {
        self.max_residual() <= KKT_TOLERANCE
    }
}

/// Check `powers` against the KKT conditions of the capped water-filling problem.
pub fn kkt_check(
    powers: &[f64],
    theta: &[f64],
    omega: &[f64],
    budget_w: f64,
    p_max_w: f64,
) -> KktCertificate {
    const CLASS_TOL: f64 = 1e-9;
    let users: Vec<usize> = (0..powers.len())
        .filter(|&k| usable(omega[k], theta[k]))
        .collect();
    let g = |k: usize, p: f64| omega[k] * theta[k] / (1.0 + theta[k] * p);
    let mut primal: f64 = 0.0;
    for (k, &p) in powers.iter().enumerate() {
        primal = primal.max((-p).max(p - p_max_w).max(0.0) / p_max_w);
        if !users.contains(&k) && p != 0.0 {
            // Power on a link that cannot carry data.
            primal = primal.max(p.abs() / p_max_w);
        }
    }
    let sum: f64 = powers.iter().sum();
    let budget_scale = budget_w.max(f64::MIN_POSITIVE);
    primal = primal.max((sum - budget_w).max(0.0) / budget_scale);

    let is_zero = |p: f64| p <= CLASS_TOL * p_max_w;
    let is_capped = |p: f64| p >= p_max_w * (1.0 - CLASS_TOL);
    let interior: Vec<usize> = users
        .iter()
        .copied()
        .filter(|&k| !is_zero(powers[k]) && !is_capped(powers[k]))
        .collect();
    let slack = !users.is_empty() && sum < budget_w * (1.0 - CLASS_TOL);
    let lambda = if slack {
        0.0
    } else if !interior.is_empty() {
        interior.iter().map(|&k| g(k, powers[k])).sum::<f64>() / interior.len() as f64
    } else {
        // Any level between the largest zero-user utility and the smallest
        // capped-user utility works; take the lower end.
        users
            .iter()
            .filter(|&&k| is_zero(powers[k]))
            .map(|&k| g(k, 0.0))
            .fold(0.0, f64::max)
    };
    let scale = users
        .iter()
        .map(|&k| g(k, 0.0))
        .fold(lambda, f64::max)
        .max(f64::MIN_POSITIVE);

    let mut stationarity: f64 = 0.0;
    let mut dual: f64 = 0.0;
    let mut complementary: f64 = 0.0;
    for &k in &users {
        let p = powers[k];
        if is_zero(p) {
            let mu = lambda - g(k, p);
            dual = dual.max((-mu).max(0.0) / scale);
            complementary = complementary.max((mu * p).abs() / (scale * p_max_w));
        } else if is_capped(p) {
            let nu = g(k, p) - lambda;
            dual = dual.max((-nu).max(0.0) / scale);
            complementary = complementary.max((nu * (p - p_max_w)).abs() / (scale * p_max_w));
        } else {
            stationarity = stationarity.max((g(k, p) - lambda).abs() / scale);
        }
    }
    let budget = if users.is_empty() {
        0.0
    } else if slack {
        lambda / scale
    } else {
        (sum - budget_w).abs() / budget_scale
    };
    KktCertificate {
        water_level: lambda,
        stationarity,
        primal,
        dual,
        complementary,
        budget,
        slack,
    }
}

/// Per-BS eMBB allocation for a fixed association.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbbAllocation {
    pub powers: Matrix,
    pub water_levels: Vec<Option<f64>>,
    pub slack: Vec<bool>,
}

/// Water-fill every BS's residual budget over its associated eMBB users.
///
/// `residual_budgets_w[j]` is the BS budget minus its URLLC spend; a value
/// below `-1e-12` W is an overdraw and is reported as an error.
pub fn allocate_embb(
    assoc: &AssociationMatrix,
    theta: &Matrix,
    omega: &Matrix,
    residual_budgets_w: &[f64],
    p_max_w: f64,
) -> Result<EmbbAllocation> {
    let (nj, nk) = (assoc.n_bs(), assoc.n_users());
    let mut powers = Matrix::zeros(nj, nk);
    let mut water_levels = vec![None; nj];
    let mut slack = vec![false; nj];
    for j in 0..nj {
        let budget = residual_budgets_w[j];
        if budget < -1e-12 {
            return Err(Error::BudgetOverdraw {
                bs: j,
                required_w: -budget,
                budget_w: 0.0,
            });
        }
        let users: Vec<usize> = assoc.users_of(j).collect();
        if users.is_empty() {
            continue;
        }
        let th: Vec<f64> = users.iter().map(|&k| theta[(j, k)]).collect();
        let om: Vec<f64> = users.iter().map(|&k| omega[(j, k)]).collect();
        let wf = waterfill(&th, &om, budget.max(0.0), p_max_w)?;
        for (i, &k) in users.iter().enumerate() {
            powers[(j, k)] = wf.powers[i];
        }
        water_levels[j] = wf.water_level;
        slack[j] = wf.slack;
    }
    Ok(EmbbAllocation {
        powers,
        water_levels,
        slack,
    })
}

/// Which of the three water-filling regimes an allocation is in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Every user gets power and none is capped.
    Sufficient,
    /// At least one user sits at `p_max`.
    Capped,
    /// At least one user is below the water and gets nothing.
    Scarce,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Sufficient => "sufficient",
            Regime::Capped => "capped",
            Regime::Scarce => "scarce",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sufficient" => Some(Regime::Sufficient),
            "capped" => Some(Regime::Capped),
            "scarce" => Some(Regime::Scarce),
            _ => None,
        }
    }

    /// Does `powers` exhibit this regime?
    pub fn holds(self, powers: &[f64], p_max_w: f64) -> bool {
        let at_cap = |p: f64| (p - p_max_w).abs() <= 1e-12 * p_max_w;
        match self {
            Regime::Sufficient => powers.iter().all(|&p| p > 0.0 && !at_cap(p)),
            Regime::Capped => powers.iter().any(|&p| at_cap(p)),
            Regime::Scarce => powers.contains(&0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp1};

    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let wf = waterfill(&[1.0, 1.0], &[1.0, 1.0], 2.0, 10.0).unwrap();
        assert!(close(wf.powers[0], 1.0, 1e-12) && close(wf.powers[1], 1.0, 1e-12));
        assert!(close(wf.water_level.unwrap(), 0.5, 1e-12));
    }

    #[test]
    fn strong_user_is_capped() {
        let wf = waterfill(&[10.0, 0.1], &[1.0, 1.0], 3.0, 2.0).unwrap();
        assert_eq!(wf.powers[0], 2.0);
        assert!(close(wf.powers[1], 1.0, 1e-12));
        assert!(close(wf.water_level.unwrap(), 1.0 / 11.0, 1e-12));
    }

    #[test]
    fn weak_user_stays_dry() {
        let wf = waterfill(&[1.0, 1e-6], &[1.0, 1.0], 0.5, 10.0).unwrap();
        assert!(close(wf.powers[0], 0.5, 1e-12));
        assert_eq!(wf.powers[1], 0.0);
        assert!(close(wf.water_level.unwrap(), 2.0 / 3.0, 1e-12));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            waterfill(&[1.0], &[1.0], -1.0, 1.0),
            Err(Error::Domain(_))
        ));
        let empty = waterfill(&[], &[], 1.0, 1.0).unwrap();
        assert!(empty.powers.is_empty() && empty.water_level.is_none());
        let zero = waterfill(&[2.0, 1.0], &[1.0, 1.0], 0.0, 1.0).unwrap();
        assert_eq!(zero.powers, vec![0.0, 0.0]);
        assert_eq!(zero.water_level, Some(2.0));
    }

    #[test]
    fn huge_budget_is_slack_and_certified() {
        let theta = [3.0, 0.5, 8.0];
        let omega = [1.0, 2.0, 0.5];
        let wf = waterfill(&theta, &omega, 100.0, 1.0).unwrap();
        assert!(wf.slack);
        assert_eq!(wf.powers, vec![1.0; 3]);
        let cert = kkt_check(&wf.powers, &theta, &omega, 100.0, 1.0);
        assert!(cert.slack && cert.accepted(), "{cert:?}");
        assert!(theta
            .iter()
            .zip(omega)
            .all(|(t, w)| w * t / (1.0 + t) > cert.water_level));
    }

    #[test]
    fn perturbation_is_detected() {
        let theta = [4.0, 1.0, 0.3, 9.0];
        let omega = [1.0, 1.0, 2.0, 0.5];
        let wf = waterfill(&theta, &omega, 1.5, 0.6).unwrap();
        assert!(kkt_check(&wf.powers, &theta, &omega, 1.5, 0.6).accepted());
        for k in 0..theta.len() {
            let mut p = wf.powers.clone();
            p[k] += 1e-3;
            let cert = kkt_check(&p, &theta, &omega, 1.5, 0.6);
            assert!(
                !cert.accepted(),
                "perturbing user {k} went unnoticed: {cert:?}"
            );
        }
    }

    #[test]
    fn fuzzed_instances_are_certified() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let n = rng.random_range(1..=32);
            let theta: Vec<f64> = (0..n)
                .map(|_| 10f64.powf(rng.random_range(-3.0..4.0)))
                .collect();
            let omega: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
            let p_max = rng.random_range(0.05..2.0);
            let budget = rng.random_range(0.0..1.2) * n as f64 * p_max;
            let wf = waterfill(&theta, &omega, budget, p_max).unwrap();
            let cert = kkt_check(&wf.powers, &theta, &omega, budget, p_max);
            assert!(cert.accepted(), "{cert:?}");
            if !wf.slack {
                assert!((wf.total() - budget).abs() <= 1e-9 * budget.max(1e-300));
            }
        }
    }

    #[test]
    fn regimes_are_constructible() {
        let sufficient = waterfill(&[2.0, 3.0, 4.0], &[1.0; 3], 1.0, 1.0).unwrap();
        assert!(Regime::Sufficient.holds(&sufficient.powers, 1.0));
        assert!(!Regime::Capped.holds(&sufficient.powers, 1.0));
        let capped = waterfill(&[50.0, 0.5, 0.4], &[1.0; 3], 1.5, 1.0).unwrap();
        assert!(Regime::Capped.holds(&capped.powers, 1.0));
        let scarce = waterfill(&[5.0, 4.0, 1e-3], &[1.0; 3], 0.5, 1.0).unwrap();
        assert!(Regime::Scarce.holds(&scarce.powers, 1.0));
        assert!(!Regime::Sufficient.holds(&scarce.powers, 1.0));
    }

    fn target(mode: UrllcMode, fading: Fading) -> UrllcTarget {
        UrllcTarget {
            zeta: 5.0,
            epsilon: 1e-5,
            mode,
            fading,
        }
    }

    #[test]
    fn urllc_standard_hits_threshold() {
        let t = target(UrllcMode::Standard, Fading::None);
        let p = urllc_power(0, 0, 1e-9, 1e-13, &t, 1.0).unwrap();
        assert!(close(p, 5e-4, 1e-12));
        assert!(close(p * 1e-9 / 1e-13, 5.0, 1e-9));
    }

    #[test]
    fn urllc_vanishing_threshold() {
        let t = UrllcTarget {
            zeta: 1e-12,
            ..target(UrllcMode::Standard, Fading::None)
        };
        assert!(urllc_power(0, 0, 1e-9, 1e-13, &t, 1.0).unwrap() < 1e-15);
    }

    #[test]
    fn urllc_modes_diverge() {
        let std = urllc_power_unchecked(1e-9, 1e-13, &target(UrllcMode::Standard, Fading::None));
        let lit = urllc_power_unchecked(1e-9, 1e-13, &target(UrllcMode::AsWritten, Fading::None));
        assert!(close(lit / std, (1.0 + 1e-13) / 1e-13, 1e-9));
    }

    #[test]
    fn urllc_errors() {
        let t = target(UrllcMode::Standard, Fading::None);
        assert!(matches!(
            urllc_power(2, 3, 0.0, 1e-13, &t, 1.0),
            Err(Error::InfeasibleLink { bs: 2, user: 3 })
        ));
        assert!(matches!(
            urllc_power(1, 4, 1e-15, 1e-13, &t, 0.1),
            Err(Error::ReliabilityInfeasible { bs: 1, user: 4, .. })
        ));
    }

    #[test]
    fn rayleigh_quantile_meets_outage_target() {
        let t = UrllcTarget {
            zeta: 5.0,
            epsilon: 0.02,
            mode: UrllcMode::Standard,
            fading: Fading::Rayleigh,
        };
        let (h, i) = (1e-9, 1e-13);
        let p = urllc_power_unchecked(h, i, &t);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 200_000;
        let outages = (0..n)
            .filter(|_| {
                let fade: f64 = Exp1.sample(&mut rng);
                p * fade * h / i < t.zeta
            })
            .count();
        let rate = outages as f64 / n as f64;
        let se = (t.epsilon * (1.0 - t.epsilon) / n as f64).sqrt();
        assert!((rate - t.epsilon).abs() <= 4.0 * se, "outage {rate}");
    }

    #[test]
    fn embb_allocation_uses_residual_budget() {
        let mut assoc = AssociationMatrix::new(2, 4);
        for k in 0..3 {
            assoc.assign(0, k);
        }
        let theta = Matrix::filled(2, 4, 100.0);
        let omega = Matrix::filled(2, 4, 1.0);
        let alloc = allocate_embb(&assoc, &theta, &omega, &[0.2, 0.0], 0.1).unwrap();
        assert!((alloc.powers.row_sum(0) - 0.2).abs() <= 1e-9 * 0.2);
        assert_eq!(alloc.powers.row_sum(1), 0.0);
        let drained = allocate_embb(&assoc, &theta, &omega, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(drained.powers.row_sum(0), 0.0);
        assert!(matches!(
            allocate_embb(&assoc, &theta, &omega, &[-0.5, 0.0], 0.1),
            Err(Error::BudgetOverdraw { bs: 0, .. })
        ));
        let pm = PowerMatrix(alloc.powers);
        assert!(pm.violations(&[0.2, 0.0], 0.1).is_empty());
    }

    fn rows() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64, f64)> {
        (1usize..12).prop_flat_map(|n| {
            (
                prop::collection::vec(1e-3f64..1e3, n),
                prop::collection::vec(0.1f64..5.0, n),
                0.0f64..6.0,
                0.05f64..2.0,
            )
        })
    }

    proptest! {
        #[test]
        fn permutation_equivariant((theta, omega, budget, p_max) in rows(), shift in 0usize..12) {
            let n = theta.len();
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let a = waterfill(&theta, &omega, budget, p_max).unwrap();
            let pt: Vec<f64> = perm.iter().map(|&i| theta[i]).collect();
            let po: Vec<f64> = perm.iter().map(|&i| omega[i]).collect();
            let b = waterfill(&pt, &po, budget, p_max).unwrap();
            for (i, &src) in perm.iter().enumerate() {
                prop_assert!((a.powers[src] - b.powers[i]).abs() <= 1e-9 * p_max);
            }
        }

        #[test]
        fn monotone_in_budget((theta, omega, budget, p_max) in rows(), extra in 0.0f64..3.0) {
            let a = waterfill(&theta, &omega, budget, p_max).unwrap();
            let b = waterfill(&theta, &omega, budget + extra, p_max).unwrap();
            for (x, y) in a.powers.iter().zip(&b.powers) {
                prop_assert!(*y >= x - 1e-9 * p_max);
            }
        }

        #[test]
        fn urllc_standard_sinr_is_zeta(h in 1e-14f64..1e-6, i in 1e-14f64..1e-9, zeta in 0.1f64..1e3) {
            let t = UrllcTarget { zeta, epsilon: 1e-5, mode: UrllcMode::Standard, fading: Fading::None };
            let p = urllc_power_unchecked(h, i, &t);
            prop_assert!(((p * h / i) - zeta).abs() <= 1e-9 * zeta);
        }
    }
}
