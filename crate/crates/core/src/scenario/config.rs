use std::collections::HashSet;
use std::fmt::Write as _;
use std::str::FromStr;

use super::{
    EnergyParams, Fading, InterferenceModel, ModelOptions, NoiseScaling, RadioParams, ThetaMode,
    UrllcMode,
};
use crate::{Error, Result};

/// Generation parameters, read from a flat `key = value` text file.
///
/// Values are in the units a user would write: dBm for noise, dB for the URLLC
/// threshold, milliseconds for TTIs. [`ScenarioConfig::radio`] converts them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub area_side_m: f64,
    pub n_sbs: usize,
    pub n_ubs: usize,
    pub n_embb: usize,
    pub n_urllc: usize,
    pub n_mmtc: usize,
    pub ubs_height_m: f64,
    pub frequency_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_dbm: f64,
    pub p_max_w: f64,
    pub mbs_power_w: f64,
    pub sbs_power_w: f64,
    pub ubs_power_w: f64,
    pub uav_launch_w: f64,
    pub premium_w: f64,
    pub claim_mu: f64,
    pub ruin_horizon: u32,
    pub zeta_db: f64,
    pub epsilon: f64,
    pub embb_tti_ms: f64,
    pub urllc_tti_ms: f64,
    pub urllc_arrivals: f64,
    pub pathloss_intercept_db: f64,
    pub alpha: f64,
    pub varsigma: f64,
    pub xi: f64,
    pub interference_includes_mbs: bool,
    pub urllc_mode: UrllcMode,
    pub theta_mode: ThetaMode,
    pub noise_scaling: NoiseScaling,
    pub fading: Fading,
    pub tmax: usize,
    pub eps0: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            area_side_m: 4000.0,
            n_sbs: 10,
            n_ubs: 5,
            n_embb: 40,
            n_urllc: 8,
            n_mmtc: 1,
            ubs_height_m: 200.0,
            frequency_hz: 2e9,
            bandwidth_hz: 50e6,
            noise_dbm: -97.5,
            p_max_w: 0.1,
            mbs_power_w: 20.0,
            sbs_power_w: 1.0,
            ubs_power_w: 0.5,
            uav_launch_w: 10.0,
            premium_w: 0.3,
            claim_mu: 2.0,
            ruin_horizon: 50,
            zeta_db: 10.0,
            epsilon: 1e-5,
            embb_tti_ms: 1.0,
            urllc_tti_ms: 0.125,
            urllc_arrivals: 2.0,
            pathloss_intercept_db: 15.3,
            alpha: 1.0,
            varsigma: 1.0,
            xi: 1.0,
            interference_includes_mbs: false,
            urllc_mode: UrllcMode::Standard,
            theta_mode: ThetaMode::Consistent,
            noise_scaling: NoiseScaling::Total,
            fading: Fading::None,
            tmax: 100,
            eps0: 1e-6,
            seed: 42,
        }
    }
}

fn num<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("cannot parse {value:?} as a number"))
}

fn flag(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true/false, got {value:?}")),
    }
}

fn keyword<T>(value: &str, parse: fn(&str) -> Option<T>) -> std::result::Result<T, String> {
    parse(value).ok_or_else(|| format!("unrecognised value {value:?}"))
}

impl ScenarioConfig {
    /// Parse a config file. Unknown or repeated keys are hard errors; keys not
    /// mentioned keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("key `{key}` given twice"),
                });
            }
            cfg.set(key, value)
                .map_err(|msg| Error::Parse { line: line_no, msg })?;
        }
        Ok(cfg)
    }

    /// Assign one key. Used by the parser and by CLI overrides.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "area_side_m" => self.area_side_m = num(value)?,
            "n_sbs" => self.n_sbs = num(value)?,
            "n_ubs" => self.n_ubs = num(value)?,
            "n_embb" => self.n_embb = num(value)?,
            "n_urllc" => self.n_urllc = num(value)?,
            "n_mmtc" => self.n_mmtc = num(value)?,
            "ubs_height_m" => self.ubs_height_m = num(value)?,
            "frequency_hz" => self.frequency_hz = num(value)?,
            "bandwidth_hz" => self.bandwidth_hz = num(value)?,
            "noise_dbm" => self.noise_dbm = num(value)?,
            "p_max_w" => self.p_max_w = num(value)?,
            "mbs_power_w" => self.mbs_power_w = num(value)?,
            "sbs_power_w" => self.sbs_power_w = num(value)?,
            "ubs_power_w" => self.ubs_power_w = num(value)?,
            "uav_launch_w" => self.uav_launch_w = num(value)?,
            "premium_w" => self.premium_w = num(value)?,
            "claim_mu" => self.claim_mu = num(value)?,
            "ruin_horizon" => self.ruin_horizon = num(value)?,
            "zeta_db" => self.zeta_db = num(value)?,
            "epsilon" => self.epsilon = num(value)?,
            "embb_tti_ms" => self.embb_tti_ms = num(value)?,
            "urllc_tti_ms" => self.urllc_tti_ms = num(value)?,
            "urllc_arrivals" => self.urllc_arrivals = num(value)?,
            "pathloss_intercept_db" => self.pathloss_intercept_db = num(value)?,
            "alpha" => self.alpha = num(value)?,
            "varsigma" => self.varsigma = num(value)?,
            "xi" => self.xi = num(value)?,
            "interference_includes_mbs" => self.interference_includes_mbs = flag(value)?,
            "urllc_mode" => self.urllc_mode = keyword(value, UrllcMode::parse)?,
            "theta_mode" => self.theta_mode = keyword(value, ThetaMode::parse)?,
            "noise_scaling" => self.noise_scaling = keyword(value, NoiseScaling::parse)?,
            "fading" => self.fading = keyword(value, Fading::parse)?,
            "tmax" => self.tmax = num(value)?,
            "eps0" => self.eps0 = num(value)?,
            "seed" => self.seed = num(value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Render as a config file that parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("area_side_m", format!("{:?}", self.area_side_m));
        kv("n_sbs", self.n_sbs.to_string());
        kv("n_ubs", self.n_ubs.to_string());
        kv("n_embb", self.n_embb.to_string());
        kv("n_urllc", self.n_urllc.to_string());
        kv("n_mmtc", self.n_mmtc.to_string());
        kv("ubs_height_m", format!("{:?}", self.ubs_height_m));
        kv("frequency_hz", format!("{:?}", self.frequency_hz));
        kv("bandwidth_hz", format!("{:?}", self.bandwidth_hz));
        kv("noise_dbm", format!("{:?}", self.noise_dbm));
        kv("p_max_w", format!("{:?}", self.p_max_w));
        kv("mbs_power_w", format!("{:?}", self.mbs_power_w));
        kv("sbs_power_w", format!("{:?}", self.sbs_power_w));
        kv("ubs_power_w", format!("{:?}", self.ubs_power_w));
        kv("uav_launch_w", format!("{:?}", self.uav_launch_w));
        kv("premium_w", format!("{:?}", self.premium_w));
        kv("claim_mu", format!("{:?}", self.claim_mu));
        kv("ruin_horizon", self.ruin_horizon.to_string());
        kv("zeta_db", format!("{:?}", self.zeta_db));
        kv("epsilon", format!("{:?}", self.epsilon));
        kv("embb_tti_ms", format!("{:?}", self.embb_tti_ms));
        kv("urllc_tti_ms", format!("{:?}", self.urllc_tti_ms));
        kv("urllc_arrivals", format!("{:?}", self.urllc_arrivals));
        kv(
            "pathloss_intercept_db",
            format!("{:?}", self.pathloss_intercept_db),
        );
        kv("alpha", format!("{:?}", self.alpha));
        kv("varsigma", format!("{:?}", self.varsigma));
        kv("xi", format!("{:?}", self.xi));
        kv(
            "interference_includes_mbs",
            self.interference_includes_mbs.to_string(),
        );
        kv("urllc_mode", self.urllc_mode.as_str().to_string());
        kv("theta_mode", self.theta_mode.as_str().to_string());
        kv("noise_scaling", self.noise_scaling.as_str().to_string());
        kv("fading", self.fading.as_str().to_string());
        kv("tmax", self.tmax.to_string());
        kv("eps0", format!("{:?}", self.eps0));
        kv("seed", self.seed.to_string());
        s
    }

    /// Parameter checks that must hold before generation.
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.area_side_m > 0.0) {
            return bad(format!(
                "area_side_m must be positive, got {}",
                self.area_side_m
            ));
        }
        if self.n_mmtc > 1 {
            return bad(format!("n_mmtc must be 0 or 1, got {}", self.n_mmtc));
        }
        if self.n_ubs > 0 && !(self.ubs_height_m > 0.0) {
            return bad(format!(
                "ubs_height_m must be positive, got {}",
                self.ubs_height_m
            ));
        }
        if !(self.embb_tti_ms > self.urllc_tti_ms && self.urllc_tti_ms > 0.0) {
            return bad("need embb_tti_ms > urllc_tti_ms > 0".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        for (name, v) in [
            ("frequency_hz", self.frequency_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("p_max_w", self.p_max_w),
            ("claim_mu", self.claim_mu),
            ("alpha", self.alpha),
            ("eps0", self.eps0),
        ] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("mbs_power_w", self.mbs_power_w),
            ("sbs_power_w", self.sbs_power_w),
            ("ubs_power_w", self.ubs_power_w),
            ("uav_launch_w", self.uav_launch_w),
            ("premium_w", self.premium_w),
            ("urllc_arrivals", self.urllc_arrivals),
        ] {
            if !(v >= 0.0) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if self.ruin_horizon == 0 || self.tmax == 0 {
            return bad("ruin_horizon and tmax must be at least 1".into());
        }
        Ok(())
    }

    pub fn noise_power_w(&self) -> f64 {
        10f64.powf((self.noise_dbm - 30.0) / 10.0)
    }

    pub fn radio(&self) -> RadioParams {
        RadioParams {
            frequency_hz: self.frequency_hz,
            noise_power_w: self.noise_power_w(),
            urllc_sinr_threshold: 10f64.powf(self.zeta_db / 10.0),
            urllc_epsilon: self.epsilon,
            embb_tti_s: self.embb_tti_ms * 1e-3,
            urllc_tti_s: self.urllc_tti_ms * 1e-3,
            p_max_w: self.p_max_w,
            pathloss_intercept_db: self.pathloss_intercept_db,
        }
    }

    pub fn energy(&self) -> EnergyParams {
        EnergyParams {
            launch_power_w: self.uav_launch_w,
            premium_w: self.premium_w,
            claim_rate_mu: self.claim_mu,
            ruin_horizon_ttis: self.ruin_horizon,
        }
    }

    pub fn options(&self) -> ModelOptions {
        ModelOptions {
            interference: if self.interference_includes_mbs {
                InterferenceModel::Conventional
            } else {
                InterferenceModel::AsWritten
            },
            urllc_mode: self.urllc_mode,
            theta_mode: self.theta_mode,
            noise_scaling: self.noise_scaling,
            fading: self.fading,
            alpha: self.alpha,
            varsigma: self.varsigma,
            xi: self.xi,
            tmax: self.tmax,
            eps0: self.eps0,
        }
    }
}
