//! Network topology, user population and model parameters.
//!
//! A [`NetworkScenario`] is the single immutable input to every experiment. It
//! is either generated from a [`ScenarioConfig`] and a seed, or read back from
//! the line-oriented record format in [`records`]. All quantities are stored in
//! meters, hertz, watts (linear) and seconds; dB/dBm conversion happens when a
//! config is ingested.

mod config;
pub mod records;

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::Result;

pub use config::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BsKind {
    Mbs,
    Sbs,
    Ubs,
}

impl BsKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BsKind::Mbs => "MBS",
            BsKind::Sbs => "SBS",
            BsKind::Ubs => "UBS",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "MBS" => Some(BsKind::Mbs),
            "SBS" => Some(BsKind::Sbs),
            "UBS" => Some(BsKind::Ubs),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseStation {
    pub id: usize,
    pub kind: BsKind,
    /// `[x, y, z]` in meters; `z` is the altitude.
    pub position: [f64; 3],
    /// Per-TTI transmit budget (watt-TTI). For UAVs this is the radio cap; the
    /// energy actually available lives in the surplus ledger.
    pub power_budget_w: f64,
    pub bandwidth_hz: f64,
}

impl BaseStation {
    pub fn is_uav(&self) -> bool {
        self.kind == BsKind::Ubs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UserKind {
    Embb,
    Urllc,
    /// Aggregated machine-type traffic, served like one eMBB user.
    Mmtc,
}

impl UserKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UserKind::Embb => "eMBB",
            UserKind::Urllc => "URLLC",
            UserKind::Mmtc => "mMTC",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "eMBB" => Some(UserKind::Embb),
            "URLLC" => Some(UserKind::Urllc),
            "mMTC" => Some(UserKind::Mmtc),
            _ => None,
        }
    }

    /// eMBB and the mMTC aggregate share the broadband frame.
    pub fn is_embb_class(self) -> bool {
        !matches!(self, UserKind::Urllc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct User {
    pub id: usize,
    pub kind: UserKind,
    /// Ground-plane position `[x, y]` in meters.
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioParams {
    pub frequency_hz: f64,
    pub noise_power_w: f64,
    /// URLLC SINR threshold, linear.
    pub urllc_sinr_threshold: f64,
    pub urllc_epsilon: f64,
    pub embb_tti_s: f64,
    pub urllc_tti_s: f64,
    pub p_max_w: f64,
    /// Intercept of the terrestrial pathloss law.
    pub pathloss_intercept_db: f64,
}

impl RadioParams {
    /// Number of URLLC mini-slots in one eMBB frame.
    pub fn minislots_per_frame(&self) -> usize {
        (self.embb_tti_s / self.urllc_tti_s + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyParams {
    pub launch_power_w: f64,
    pub premium_w: f64,
    pub claim_rate_mu: f64,
    /// Look-ahead window, in TTIs, of the ruin probability used for association.
    pub ruin_horizon_ttis: u32,
}

/// Which power terms count as interference in the SINR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterferenceModel {
    /// Power that other non-macro BSs direct at the same user.
    #[default]
    AsWritten,
    /// Total transmit power of every other BS, macro included.
    Conventional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UrllcMode {
    /// `P = q * I / h`: the resulting SINR equals the threshold exactly.
    #[default]
    Standard,
    /// `P = q * (1 + I) / h` as printed.
    AsWritten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThetaMode {
    /// `theta = h / (I + noise)`, so `theta * P` is the link SINR.
    #[default]
    Consistent,
    /// `theta = h / (1 + I + noise)` as printed.
    AsWritten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseScaling {
    /// Noise power is the total in-band power `sigma^2`.
    #[default]
    Total,
    /// Solver formulas use `omega * sigma^2`.
    PerHz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fading {
    #[default]
    None,
    /// Unit-mean exponential power gain on URLLC links.
    Rayleigh,
}

macro_rules! keyword_enum {
    ($ty:ty { $($variant:path => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($variant => $name),+ }
            }

            pub fn parse(s: &str) -> Option<Self> {
                match s { $($name => Some($variant),)+ _ => None }
            }
        }
    };
}

keyword_enum!(UrllcMode { UrllcMode::Standard => "standard", UrllcMode::AsWritten => "as_written" });
keyword_enum!(ThetaMode { ThetaMode::Consistent => "consistent", ThetaMode::AsWritten => "as_written" });
keyword_enum!(NoiseScaling { NoiseScaling::Total => "total", NoiseScaling::PerHz => "per_hz" });
keyword_enum!(Fading { Fading::None => "none", Fading::Rayleigh => "rayleigh" });

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOptions {
    pub interference: InterferenceModel,
    pub urllc_mode: UrllcMode,
    pub theta_mode: ThetaMode,
    pub noise_scaling: NoiseScaling,
    pub fading: Fading,
    /// Control factor of the survival score.
    pub alpha: f64,
    /// Weight of the data term in the objective.
    pub varsigma: f64,
    /// Weight of the ruin term in the objective.
    pub xi: f64,
    /// Iteration cap of the association/allocation loop.
    pub tmax: usize,
    /// Convergence threshold on the largest power change, watts.
    pub eps0: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            interference: InterferenceModel::AsWritten,
            urllc_mode: UrllcMode::Standard,
            theta_mode: ThetaMode::Consistent,
            noise_scaling: NoiseScaling::Total,
            fading: Fading::None,
            alpha: 1.0,
            varsigma: 1.0,
            xi: 1.0,
            tmax: 100,
            eps0: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkScenario {
    pub base_stations: Vec<BaseStation>,
    pub users: Vec<User>,
    pub radio: RadioParams,
    pub energy: EnergyParams,
    pub options: ModelOptions,
    pub area_side_m: f64,
    pub seed: u64,
    /// Mean of the Poisson URLLC arrival count per TTI.
    pub urllc_arrivals_per_tti: f64,
}

impl NetworkScenario {
    pub fn uav_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.base_stations
            .iter()
            .enumerate()
            .filter(|(_, bs)| bs.is_uav())
            .map(|(j, _)| j)
    }

    pub fn embb_class_users(&self) -> impl Iterator<Item = usize> + '_ {
        self.users
            .iter()
            .enumerate()
            .filter(|(_, u)| u.kind.is_embb_class())
            .map(|(k, _)| k)
    }

    pub fn urllc_users(&self) -> impl Iterator<Item = usize> + '_ {
        self.users
            .iter()
            .enumerate()
            .filter(|(_, u)| u.kind == UserKind::Urllc)
            .map(|(k, _)| k)
    }

    /// Every invariant violation; empty when the scenario is valid.
    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }
}

/// Build a scenario from generation parameters; a pure function of `(params, seed)`.
///
/// The macro BS sits at the area center, small cells and UAVs are dropped
/// uniformly over the square (UAVs at the configured height) and users are
/// placed uniformly on the ground. User ids are ordered mMTC (id 0), eMBB, URLLC.
pub fn generate_scenario(params: &ScenarioConfig, seed: u64) -> Result<NetworkScenario> {
    params.check()?;
    let side = params.area_side_m;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let uniform = |rng: &mut ChaCha20Rng| [rng.random::<f64>() * side, rng.random::<f64>() * side];

    let mut base_stations = Vec::with_capacity(1 + params.n_sbs + params.n_ubs);
    base_stations.push(BaseStation {
        id: 0,
        kind: BsKind::Mbs,
        position: [side / 2.0, side / 2.0, 0.0],
        power_budget_w: params.mbs_power_w,
        bandwidth_hz: params.bandwidth_hz,
    });
    for _ in 0..params.n_sbs {
        let [x, y] = uniform(&mut rng);
        base_stations.push(BaseStation {
            id: base_stations.len(),
            kind: BsKind::Sbs,
            position: [x, y, 0.0],
            power_budget_w: params.sbs_power_w,
            bandwidth_hz: params.bandwidth_hz,
        });
    }
    for _ in 0..params.n_ubs {
        let [x, y] = uniform(&mut rng);
        base_stations.push(BaseStation {
            id: base_stations.len(),
            kind: BsKind::Ubs,
            position: [x, y, params.ubs_height_m],
            power_budget_w: params.ubs_power_w,
            bandwidth_hz: params.bandwidth_hz,
        });
    }

    let kinds = std::iter::repeat_n(UserKind::Mmtc, params.n_mmtc)
        .chain(std::iter::repeat_n(UserKind::Embb, params.n_embb))
        .chain(std::iter::repeat_n(UserKind::Urllc, params.n_urllc));
    let users = kinds
        .enumerate()
        .map(|(id, kind)| User {
            id,
            kind,
            position: uniform(&mut rng),
        })
        .collect();

    Ok(NetworkScenario {
        base_stations,
        users,
        radio: params.radio(),
        energy: params.energy(),
        options: params.options(),
        area_side_m: side,
        seed,
        urllc_arrivals_per_tti: params.urllc_arrivals,
    })
}

/// One broken invariant, with a stable machine-readable code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub code: &'static str,
    pub detail: String,
}

impl Violation {
    fn new(code: &'static str, detail: impl Into<String>) -> Self {
        Self {
            code,
            detail: detail.into(),
        }
    }

    pub(crate) fn join(violations: &[Violation]) -> String {
        violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ")
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)
    }
}

/// Check every scenario invariant. Total: never fails, returns all violations.
pub fn validate(s: &NetworkScenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |code, detail: String| out.push(Violation::new(code, detail));

    if !(s.area_side_m > 0.0) {
        push(
            "area",
            format!("area side {} must be positive", s.area_side_m),
        );
    }

    let mut seen = HashSet::new();
    for bs in &s.base_stations {
        if !seen.insert(bs.id) {
            push(
                "duplicate_bs_id",
                format!("BS id {} appears more than once", bs.id),
            );
        }
    }
    for (j, bs) in s.base_stations.iter().enumerate() {
        if bs.id != j {
            push(
                "bs_id_order",
                format!("BS at position {j} has id {}", bs.id),
            );
        }
        let z = bs.position[2];
        match bs.kind {
            BsKind::Ubs if !(z > 0.0) => {
                push("ubs_altitude", format!("UBS {} has altitude {z}", bs.id))
            }
            BsKind::Mbs | BsKind::Sbs if z != 0.0 => push(
                "terrestrial_altitude",
                format!("{} {} has altitude {z}", bs.kind.as_str(), bs.id),
            ),
            _ => {}
        }
        if !(bs.power_budget_w >= 0.0) {
            push(
                "bs_power",
                format!("BS {} power budget {}", bs.id, bs.power_budget_w),
            );
        }
        if !(bs.bandwidth_hz > 0.0) {
            push(
                "bs_bandwidth",
                format!("BS {} bandwidth {}", bs.id, bs.bandwidth_hz),
            );
        }
        if !bs.position.iter().all(|c| c.is_finite()) {
            push(
                "bs_position",
                format!("BS {} position is not finite", bs.id),
            );
        }
    }
    let macros: Vec<_> = s
        .base_stations
        .iter()
        .filter(|b| b.kind == BsKind::Mbs)
        .collect();
    if macros.len() != 1 || macros[0].id != 0 {
        push(
            "mbs",
            format!("expected exactly one MBS with id 0, found {}", macros.len()),
        );
    }

    let mut seen = HashSet::new();
    for u in &s.users {
        if !seen.insert(u.id) {
            push(
                "duplicate_user_id",
                format!("user id {} appears more than once", u.id),
            );
        }
    }
    for (k, u) in s.users.iter().enumerate() {
        if u.id != k && seen.len() == s.users.len() {
            push(
                "user_id_order",
                format!("user at position {k} has id {}", u.id),
            );
        }
        let [x, y] = u.position;
        if !(0.0..=s.area_side_m).contains(&x) || !(0.0..=s.area_side_m).contains(&y) {
            push("user_outside_area", format!("user {} at ({x}, {y})", u.id));
        }
    }
    let mmtc: Vec<_> = s
        .users
        .iter()
        .filter(|u| u.kind == UserKind::Mmtc)
        .collect();
    if mmtc.len() > 1 || mmtc.first().is_some_and(|u| u.id != 0) {
        push(
            "mmtc",
            format!("at most one mMTC user with id 0, found {}", mmtc.len()),
        );
    }

    let r = &s.radio;
    if !(r.frequency_hz > 0.0) {
        push("frequency", format!("frequency {}", r.frequency_hz));
    }
    if !(r.noise_power_w > 0.0) {
        push("noise", format!("noise power {}", r.noise_power_w));
    }
    if !(r.embb_tti_s > r.urllc_tti_s && r.urllc_tti_s > 0.0) {
        push(
            "tti",
            format!("need T > t > 0, got T={} t={}", r.embb_tti_s, r.urllc_tti_s),
        );
    }
    if !(r.urllc_epsilon > 0.0 && r.urllc_epsilon < 1.0) {
        push(
            "epsilon",
            format!("epsilon {} outside (0, 1)", r.urllc_epsilon),
        );
    }
    if !(r.urllc_sinr_threshold > 0.0) {
        push("zeta", format!("zeta {}", r.urllc_sinr_threshold));
    }
    if !(r.p_max_w > 0.0) {
        push("p_max", format!("p_max {}", r.p_max_w));
    }

    let e = &s.energy;
    if !(e.launch_power_w >= 0.0) {
        push("launch_power", format!("launch power {}", e.launch_power_w));
    }
    if !(e.premium_w >= 0.0) {
        push("premium", format!("premium {}", e.premium_w));
    }
    if !(e.claim_rate_mu > 0.0) {
        push("claim_mu", format!("claim rate {}", e.claim_rate_mu));
    }
    if e.ruin_horizon_ttis == 0 {
        push(
            "ruin_horizon",
            "ruin horizon must be at least one TTI".to_string(),
        );
    }

    let o = &s.options;
    if !(o.alpha > 0.0) {
        push("alpha", format!("alpha {}", o.alpha));
    }
    if !(o.eps0 > 0.0) || o.tmax == 0 {
        push("convergence", format!("tmax {} eps0 {}", o.tmax, o.eps0));
    }
    if !(s.urllc_arrivals_per_tti >= 0.0) {
        push(
            "urllc_arrivals",
            format!("arrival mean {}", s.urllc_arrivals_per_tti),
        );
    }
    out
}
