//! UAV surplus process and finite-time probability of ruin.
//!
//! A UAV starts with launch energy `rho0`, harvests a constant premium `rho`
//! every TTI and pays transmit-power claims. The analytic ruin probability
//! over `t` TTIs is
//!
//! ```text
//! psi(rho0, t) = sum_{j=1..t} (mu c_j)^(j-1) / (j-1)! * exp(-mu c_j) * c_1 / c_j,
//! c_j = rho0 + j * rho
//! ```
//!
//! evaluated term by term in log space. The Monte-Carlo estimator in this
//! module simulates the same ledger path by path and serves as its oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurplusModel {
    pub launch_w: f64,
    /// Harvested energy per TTI.
    pub premium_w: f64,
    /// Rate of the exponential claim size.
    pub claim_rate_mu: f64,
    pub horizon_ttis: u32,
}

impl SurplusModel {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_ttis == 0 {
            return Err(Error::Domain(
                "ruin horizon must be at least one TTI".into(),
            ));
        }
        if !(self.launch_w >= 0.0 && self.premium_w >= 0.0) {
            return Err(Error::Domain(format!(
                "launch {} and premium {} must be nonnegative",
                self.launch_w, self.premium_w
            )));
        }
        if !(self.claim_rate_mu > 0.0 && self.claim_rate_mu.is_finite()) {
            return Err(Error::Domain(format!(
                "claim rate {} must be positive",
                self.claim_rate_mu
            )));
        }
        Ok(())
    }

    /// Accumulated capital `rho0 + j * rho` at TTI `j`.
    pub fn capital_at(&self, j: u32) -> f64 {
        self.launch_w + f64::from(j) * self.premium_w
    }
}

/// Analytic finite-time ruin probability, clamped to `[0, 1]`.
pub fn ruin_probability(model: &SurplusModel) -> Result<f64> {
    model.validate()?;
    let c1 = model.capital_at(1);
    if c1 <= 0.0 {
        // No capital and no income: the first (a.s. positive) claim ruins.
        return Ok(1.0);
    }
    let mu = model.claim_rate_mu;
    let mut ln_factorial = 0.0;
    let mut psi = 0.0;
    for j in 1..=model.horizon_ttis {
        if j > 1 {
            ln_factorial += f64::from(j - 1).ln();
        }
        let cj = model.capital_at(j);
        let x = mu * cj;
        let ln_term = f64::from(j - 1) * x.ln() - ln_factorial - x + (c1 / cj).ln();
        psi += ln_term.exp();
    }
    Ok(psi.clamp(0.0, 1.0))
}

/// Association score `alpha * (1 - psi) * gamma`.
pub fn survival_factor(psi: f64, gamma: f64, alpha: f64) -> f64 {
    alpha * (1.0 - psi) * gamma
}

/// One realised surplus path.
#[derive(Debug, Clone, PartialEq)]
pub struct SurplusTrace {
    /// `levels[0]` is the launch energy, `levels[s]` the surplus after TTI `s`.
    pub levels: Vec<f64>,
    /// First TTI with negative surplus.
    pub ruined_at: Option<usize>,
}

/// How claims arrive within a TTI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClaimConvention {
    /// Exactly one claim per TTI.
    PerTti,
    /// A Poisson number of claims per TTI with the given mean.
    CompoundPoisson { arrival_rate: f64 },
}

impl ClaimConvention {
    pub fn label(&self) -> &'static str {
        match self {
            ClaimConvention::PerTti => "per_tti",
            ClaimConvention::CompoundPoisson { .. } => "compound_poisson",
        }
    }
}

/// Source of the total claim charged in each TTI.
pub trait ClaimSampler {
    fn total_claims(&mut self, tti: u32, rng: &mut ChaCha8Rng) -> f64;
}

pub struct NoClaims;

impl ClaimSampler for NoClaims {
    fn total_claims(&mut self, _tti: u32, _rng: &mut ChaCha8Rng) -> f64 {
        0.0
    }
}

/// Fixed claim per TTI, `claims[s - 1]` for TTI `s`; zero past the end.
pub struct ScriptedClaims(pub Vec<f64>);

impl ClaimSampler for ScriptedClaims {
    fn total_claims(&mut self, tti: u32, _rng: &mut ChaCha8Rng) -> f64 {
        self.0.get(tti as usize - 1).copied().unwrap_or(0.0)
    }
}

/// Exponential claim sizes under a [`ClaimConvention`].
pub struct ExponentialClaims {
    convention: ClaimConvention,
    size: Exp<f64>,
    count: Option<Poisson<f64>>,
}

impl ExponentialClaims {
    pub fn new(convention: ClaimConvention, claim_size_rate: f64) -> Result<Self> {
        let size = Exp::new(claim_size_rate).map_err(|_| {
            Error::Domain(format!(
                "claim size rate {claim_size_rate} must be positive"
            ))
        })?;
        let count = match convention {
            ClaimConvention::PerTti => None,
            ClaimConvention::CompoundPoisson { arrival_rate } => {
                Some(Poisson::new(arrival_rate).map_err(|_| {
                    Error::Domain(format!("arrival rate {arrival_rate} must be positive"))
                })?)
            }
        };
        Ok(Self {
            convention,
            size,
            count,
        })
    }

    pub fn convention(&self) -> ClaimConvention {
        self.convention
    }
}

impl ClaimSampler for ExponentialClaims {
    fn total_claims(&mut self, _tti: u32, rng: &mut ChaCha8Rng) -> f64 {
        match &self.count {
            None => self.size.sample(rng),
            Some(count) => {
                let n = count.sample(rng) as u64;
                (0..n).map(|_| self.size.sample(rng)).sum()
            }
        }
    }
}

/// Run the surplus ledger for `model.horizon_ttis` TTIs.
pub fn simulate_surplus(
    model: &SurplusModel,
    sampler: &mut dyn ClaimSampler,
    seed: u64,
) -> SurplusTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels = Vec::with_capacity(model.horizon_ttis as usize + 1);
    let mut level = model.launch_w;
    levels.push(level);
    let mut ruined_at = None;
    for s in 1..=model.horizon_ttis {
        level += model.premium_w - sampler.total_claims(s, &mut rng);
        levels.push(level);
        if level < 0.0 && ruined_at.is_none() {
            ruined_at = Some(s as usize);
        }
    }
    SurplusTrace { levels, ruined_at }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloConfig {
    pub paths: u64,
    pub convention: ClaimConvention,
    pub claim_size_rate: f64,
    pub seed: u64,
}

impl MonteCarloConfig {
    /// Both knobs default to the model's `mu`.
    pub fn for_model(
        model: &SurplusModel,
        paths: u64,
        convention: ClaimConvention,
        seed: u64,
    ) -> Self {
        Self {
            paths,
            convention,
            claim_size_rate: model.claim_rate_mu,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub psi_hat: f64,
    pub stderr: f64,
    pub ci95: (f64, f64),
    pub paths: u64,
    pub ruined_paths: u64,
}

const PATHS_PER_CHUNK: u64 = 4096;

/// Fraction of simulated paths that go negative within the horizon.
///
/// Paths are split into fixed chunks, each with its own ChaCha stream, and
/// ruin counts are summed as integers, so the estimate does not depend on
/// thread scheduling.
pub fn estimate_ruin_mc(
    model: &SurplusModel,
    cfg: &MonteCarloConfig,
) -> Result<MonteCarloEstimate> {
    model.validate()?;
    if cfg.paths == 0 {
        return Err(Error::Domain(
            "Monte-Carlo estimate needs at least one path".into(),
        ));
    }
    ExponentialClaims::new(cfg.convention, cfg.claim_size_rate)?;
    let chunks = cfg.paths.div_ceil(PATHS_PER_CHUNK);
    let ruined: u64 = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut sampler =
                ExponentialClaims::new(cfg.convention, cfg.claim_size_rate).expect("checked above");
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(chunk);
            let n = PATHS_PER_CHUNK.min(cfg.paths - chunk * PATHS_PER_CHUNK);
            (0..n)
                .filter(|_| path_is_ruined(model, &mut sampler, &mut rng))
                .count() as u64
        })
        .sum();
    let n = cfg.paths as f64;
    let p = ruined as f64 / n;
    let stderr = (p * (1.0 - p) / n).sqrt();
    Ok(MonteCarloEstimate {
        psi_hat: p,
        stderr,
        ci95: ((p - 1.96 * stderr).max(0.0), (p + 1.96 * stderr).min(1.0)),
        paths: cfg.paths,
        ruined_paths: ruined,
    })
}

fn path_is_ruined(
    model: &SurplusModel,
    sampler: &mut ExponentialClaims,
    rng: &mut ChaCha8Rng,
) -> bool {
    let mut level = model.launch_w;
    for s in 1..=model.horizon_ttis {
        level += model.premium_w - sampler.total_claims(s, rng);
        if level < 0.0 {
            return true;
        }
    }
    false
}

/// Budget form and surplus form of the UAV energy constraint agree.
///
/// `total_claims <= rho0 + rho * t` must hold exactly when the surplus
/// `rho0 + rho * t - total_claims` is nonnegative.
pub fn surplus_feasibility_equiv(
    total_claims: f64,
    model: &SurplusModel,
    elapsed_ttis: u32,
) -> bool {
    let level = model.capital_at(elapsed_ttis);
    let budget_ok = total_claims <= level;
    let surplus_ok = level - total_claims >= 0.0;
    budget_ok == surplus_ok
}

/// Draw a uniform value in `[lo, hi)`; used by fuzz tests across the crate.
#[doc(hidden)]
pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
