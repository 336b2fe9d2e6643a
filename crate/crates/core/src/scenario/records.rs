//! Line-oriented scenario records.
//!
//! ```text
//! PARAM,key,value
//! BS,id,kind,x,y,z,power_w,bw_hz
//! USER,id,kind,x,y
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so `read(write(s))`
//! reproduces `s` bit for bit. Lines starting with `#` are ignored.

use std::fmt::Write as _;

use super::{
    BaseStation, BsKind, EnergyParams, Fading, InterferenceModel, ModelOptions, NetworkScenario,
    NoiseScaling, RadioParams, ThetaMode, UrllcMode, User, UserKind,
};
use crate::{Error, Result};

/// Does `text` look like a record file rather than a key-value config?
pub fn looks_like_records(text: &str) -> bool {
    text.lines()
        .map(str::trim)
        .any(|l| l.starts_with("BS,") || l.starts_with("PARAM,"))
}

pub fn write(s: &NetworkScenario) -> String {
    let mut out = String::from("# uav-ruin scenario records v1\n");
    let mut param = |k: &str, v: String| {
        let _ = writeln!(out, "PARAM,{k},{v}");
    };
    param("area_side_m", format!("{:?}", s.area_side_m));
    param("seed", s.seed.to_string());
    param("urllc_arrivals", format!("{:?}", s.urllc_arrivals_per_tti));
    let r = &s.radio;
    param("frequency_hz", format!("{:?}", r.frequency_hz));
    param("noise_power_w", format!("{:?}", r.noise_power_w));
    param(
        "urllc_sinr_threshold",
        format!("{:?}", r.urllc_sinr_threshold),
    );
    param("urllc_epsilon", format!("{:?}", r.urllc_epsilon));
    param("embb_tti_s", format!("{:?}", r.embb_tti_s));
    param("urllc_tti_s", format!("{:?}", r.urllc_tti_s));
    param("p_max_w", format!("{:?}", r.p_max_w));
    param(
        "pathloss_intercept_db",
        format!("{:?}", r.pathloss_intercept_db),
    );
    let e = &s.energy;
    param("launch_power_w", format!("{:?}", e.launch_power_w));
    param("premium_w", format!("{:?}", e.premium_w));
    param("claim_rate_mu", format!("{:?}", e.claim_rate_mu));
    param("ruin_horizon", e.ruin_horizon_ttis.to_string());
    let o = &s.options;
    param(
        "interference_includes_mbs",
        (o.interference == InterferenceModel::Conventional).to_string(),
    );
    param("urllc_mode", o.urllc_mode.as_str().into());
    param("theta_mode", o.theta_mode.as_str().into());
    param("noise_scaling", o.noise_scaling.as_str().into());
    param("fading", o.fading.as_str().into());
    param("alpha", format!("{:?}", o.alpha));
    param("varsigma", format!("{:?}", o.varsigma));
    param("xi", format!("{:?}", o.xi));
    param("tmax", o.tmax.to_string());
    param("eps0", format!("{:?}", o.eps0));

    for bs in &s.base_stations {
        let [x, y, z] = bs.position;
        let _ = writeln!(
            out,
            "BS,{},{},{x:?},{y:?},{z:?},{:?},{:?}",
            bs.id,
            bs.kind.as_str(),
            bs.power_budget_w,
            bs.bandwidth_hz
        );
    }
    for u in &s.users {
        let [x, y] = u.position;
        let _ = writeln!(out, "USER,{},{},{x:?},{y:?}", u.id, u.kind.as_str());
    }
    out
}

struct Fields<'a> {
    line: usize,
    parts: Vec<&'a str>,
}

impl Fields<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn expect_len(&self, n: usize) -> Result<()> {
        if self.parts.len() == n {
            Ok(())
        } else {
            Err(self.err(format!(
                "{} record needs {n} fields, got {}",
                self.parts[0],
                self.parts.len()
            )))
        }
    }

    fn f64(&self, i: usize) -> Result<f64> {
        self.parts[i]
            .parse()
            .map_err(|_| self.err(format!("field {i}: {:?} is not a number", self.parts[i])))
    }

    fn usize(&self, i: usize) -> Result<usize> {
        self.parts[i]
            .parse()
            .map_err(|_| self.err(format!("field {i}: {:?} is not an index", self.parts[i])))
    }
}

pub fn read(text: &str) -> Result<NetworkScenario> {
    let mut s = NetworkScenario {
        base_stations: Vec::new(),
        users: Vec::new(),
        radio: RadioParams {
            frequency_hz: f64::NAN,
            noise_power_w: f64::NAN,
            urllc_sinr_threshold: f64::NAN,
            urllc_epsilon: f64::NAN,
            embb_tti_s: f64::NAN,
            urllc_tti_s: f64::NAN,
            p_max_w: f64::NAN,
            pathloss_intercept_db: 15.3,
        },
        energy: EnergyParams {
            launch_power_w: f64::NAN,
            premium_w: f64::NAN,
            claim_rate_mu: f64::NAN,
            ruin_horizon_ttis: 0,
        },
        options: ModelOptions::default(),
        area_side_m: f64::NAN,
        seed: 0,
        urllc_arrivals_per_tti: 0.0,
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f = Fields {
            line: idx + 1,
            parts: line.split(',').map(str::trim).collect(),
        };
        match f.parts[0] {
            "PARAM" => {
                f.expect_len(3)?;
                set_param(&mut s, f.parts[1], f.parts[2]).map_err(|m| f.err(m))?;
            }
            "BS" => {
                f.expect_len(8)?;
                let kind = BsKind::parse(f.parts[2])
                    .ok_or_else(|| f.err(format!("unknown BS kind {:?}", f.parts[2])))?;
                s.base_stations.push(BaseStation {
                    id: f.usize(1)?,
                    kind,
                    position: [f.f64(3)?, f.f64(4)?, f.f64(5)?],
                    power_budget_w: f.f64(6)?,
                    bandwidth_hz: f.f64(7)?,
                });
            }
            "USER" => {
                f.expect_len(5)?;
                let kind = UserKind::parse(f.parts[2])
                    .ok_or_else(|| f.err(format!("unknown user kind {:?}", f.parts[2])))?;
                s.users.push(User {
                    id: f.usize(1)?,
                    kind,
                    position: [f.f64(3)?, f.f64(4)?],
                });
            }
            other => return Err(f.err(format!("unknown record type {other:?}"))),
        }
    }
    Ok(s)
}

fn set_param(s: &mut NetworkScenario, key: &str, v: &str) -> std::result::Result<(), String> {
    let num = |v: &str| {
        v.parse::<f64>()
            .map_err(|_| format!("{key}: {v:?} is not a number"))
    };
    let int = |v: &str| {
        v.parse::<u64>()
            .map_err(|_| format!("{key}: {v:?} is not an integer"))
    };
    let kw = |ok: bool| {
        if ok {
            Ok(())
        } else {
            Err(format!("{key}: unrecognised value {v:?}"))
        }
    };
    match key {
        "area_side_m" => s.area_side_m = num(v)?,
        "seed" => s.seed = int(v)?,
        "urllc_arrivals" => s.urllc_arrivals_per_tti = num(v)?,
        "frequency_hz" => s.radio.frequency_hz = num(v)?,
        "noise_power_w" => s.radio.noise_power_w = num(v)?,
        "urllc_sinr_threshold" => s.radio.urllc_sinr_threshold = num(v)?,
        "urllc_epsilon" => s.radio.urllc_epsilon = num(v)?,
        "embb_tti_s" => s.radio.embb_tti_s = num(v)?,
        "urllc_tti_s" => s.radio.urllc_tti_s = num(v)?,
        "p_max_w" => s.radio.p_max_w = num(v)?,
        "pathloss_intercept_db" => s.radio.pathloss_intercept_db = num(v)?,
        "launch_power_w" => s.energy.launch_power_w = num(v)?,
        "premium_w" => s.energy.premium_w = num(v)?,
        "claim_rate_mu" => s.energy.claim_rate_mu = num(v)?,
        "ruin_horizon" => s.energy.ruin_horizon_ttis = int(v)? as u32,
        "interference_includes_mbs" => {
            s.options.interference = match v {
                "true" => InterferenceModel::Conventional,
                "false" => InterferenceModel::AsWritten,
                _ => return kw(false),
            }
        }
        "urllc_mode" => {
            let m = UrllcMode::parse(v);
            kw(m.is_some())?;
            s.options.urllc_mode = m.unwrap_or_default();
        }
        "theta_mode" => {
            let m = ThetaMode::parse(v);
            kw(m.is_some())?;
            s.options.theta_mode = m.unwrap_or_default();
        }
        "noise_scaling" => {
            let m = NoiseScaling::parse(v);
            kw(m.is_some())?;
            s.options.noise_scaling = m.unwrap_or_default();
        }
        "fading" => {
            let m = Fading::parse(v);
            kw(m.is_some())?;
            s.options.fading = m.unwrap_or_default();
        }
        "alpha" => s.options.alpha = num(v)?,
        "varsigma" => s.options.varsigma = num(v)?,
        "xi" => s.options.xi = num(v)?,
        "tmax" => s.options.tmax = int(v)? as usize,
        "eps0" => s.options.eps0 = num(v)?,
        _ => return Err(format!("unknown PARAM key `{key}`")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::scenario::{generate_scenario, ScenarioConfig};

    #[test]
    fn detects_record_files() {
        assert!(looks_like_records("# x\nBS,0,MBS,1,1,0,1,1\n"));
        assert!(!looks_like_records("n_sbs = 2\n"));
    }

    #[test]
    fn rejects_malformed_records() {
        assert!(read("BS,0,MBS,1,1\n").is_err());
        assert!(read("BS,0,TOWER,1,1,0,1,1\n").is_err());
        assert!(read("USER,0,eMBB,x,1\n").is_err());
        assert!(read("LINK,0,1\n").is_err());
        assert!(read("PARAM,colour,blue\n").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn records_round_trip_bit_exactly(seed in any::<u64>(), n_sbs in 0usize..6, n_ubs in 0usize..6, n_embb in 0usize..20) {
            let cfg = ScenarioConfig { n_sbs, n_ubs, n_embb, ..ScenarioConfig::default() };
            let s = generate_scenario(&cfg, seed).unwrap();
            let text = write(&s);
            let back = read(&text).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert_eq!(write(&back), text);
        }
    }
}
