//! Pathloss, channel gains, SINR, bandwidth shares and rates.

use crate::association::AssociationMatrix;
use crate::scenario::{BaseStation, BsKind, InterferenceModel, NetworkScenario, RadioParams, User};
use crate::{Error, Matrix, Result};

/// Free-space constant `20 log10(4 pi / c)` for distance in m and frequency in Hz.
const FSPL_OFFSET_DB: f64 = 147.55;
const TERRESTRIAL_SLOPE_DB: f64 = 37.6;

/// 3-D Euclidean distance; users stand on the ground plane.
pub fn distance_m(bs: &BaseStation, user: &User) -> f64 {
    let [bx, by, bz] = bs.position;
    let [ux, uy] = user.position;
    ((bx - ux).powi(2) + (by - uy).powi(2) + bz.powi(2)).sqrt()
}

/// Pathloss in dB: free space for UAVs, log-distance for terrestrial cells.
pub fn pathloss_db(bs: &BaseStation, user: &User, radio: &RadioParams) -> Result<f64> {
    let d = distance_m(bs, user);
    if !(d > 0.0) {
        return Err(Error::Domain(format!(
            "BS {} and user {} are co-located; pathloss undefined",
            bs.id, user.id
        )));
    }
    Ok(match bs.kind {
        BsKind::Ubs => 20.0 * (d * radio.frequency_hz).log10() - FSPL_OFFSET_DB,
        BsKind::Mbs | BsKind::Sbs => radio.pathloss_intercept_db + TERRESTRIAL_SLOPE_DB * d.log10(),
    })
}

pub fn gain_from_pathloss_db(pathloss_db: f64) -> f64 {
    10f64.powf(-pathloss_db / 10.0)
}

pub fn pathloss_db_from_gain(gain: f64) -> f64 {
    -10.0 * gain.log10()
}

/// Static per-link geometry for a scenario, `|J| x |K|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub pathloss_db: Matrix,
    pub gain: Matrix,
    pub distances_m: Matrix,
}

impl ChannelState {
    pub fn compute(s: &NetworkScenario) -> Result<Self> {
        let (nj, nk) = (s.base_stations.len(), s.users.len());
        let mut pathloss = Matrix::zeros(nj, nk);
        let mut gain = Matrix::zeros(nj, nk);
        let mut dist = Matrix::zeros(nj, nk);
        for (j, bs) in s.base_stations.iter().enumerate() {
            for (k, user) in s.users.iter().enumerate() {
                let pl = pathloss_db(bs, user, &s.radio)?;
                pathloss[(j, k)] = pl;
                gain[(j, k)] = gain_from_pathloss_db(pl);
                dist[(j, k)] = distance_m(bs, user);
            }
        }
        Ok(Self {
            pathloss_db: pathloss,
            gain,
            distances_m: dist,
        })
    }
}

/// Interference power seen by user `k` when served by BS `j`.
///
/// `AsWritten` sums the power other non-macro BSs direct at `k` itself;
/// `Conventional` sums the total transmit power of every other BS.
pub fn interference_w(
    powers: &Matrix,
    gains: &Matrix,
    j: usize,
    k: usize,
    model: InterferenceModel,
) -> f64 {
    (0..powers.rows())
        .filter(|&jp| jp != j)
        .map(|jp| match model {
            InterferenceModel::AsWritten if jp == 0 => 0.0,
            InterferenceModel::AsWritten => powers[(jp, k)] * gains[(jp, k)],
            InterferenceModel::Conventional => powers.row_sum(jp) * gains[(jp, k)],
        })
        .sum()
}

/// Linear SINR of link `(j, k)`.
pub fn sinr(
    powers: &Matrix,
    gains: &Matrix,
    noise_w: f64,
    j: usize,
    k: usize,
    model: InterferenceModel,
) -> f64 {
    powers[(j, k)] * gains[(j, k)] / (interference_w(powers, gains, j, k, model) + noise_w)
}

/// SINR of every link.
pub fn sinr_matrix(
    powers: &Matrix,
    gains: &Matrix,
    noise_w: f64,
    model: InterferenceModel,
) -> Matrix {
    Matrix::from_fn(powers.rows(), powers.cols(), |j, k| {
        sinr(powers, gains, noise_w, j, k, model)
    })
}

/// Equal split of each BS's band among its associated users; empty BSs get a zero row.
pub fn bandwidth_shares(assoc: &AssociationMatrix, bandwidths_hz: &[f64]) -> Matrix {
    let mut shares = Matrix::zeros(assoc.n_bs(), assoc.n_users());
    for (j, &w) in bandwidths_hz.iter().enumerate() {
        let n = assoc.count(j);
        if n == 0 {
            continue;
        }
        for k in assoc.users_of(j) {
            shares[(j, k)] = w / n as f64;
        }
    }
    shares
}

/// Shannon rate in bits/s; zero for unassociated links.
pub fn rate_bps(associated: bool, bandwidth_hz: f64, sinr: f64) -> f64 {
    if associated {
        bandwidth_hz * (1.0 + sinr).log2()
    } else {
        0.0
    }
}

/// eMBB data carried in one frame after URLLC preemption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameData {
    pub bits: f64,
    /// URLLC mini-slots asked for more than the whole frame.
    pub saturated: bool,
}

/// `max(0, T - t * n_urllc) * rate`.
pub fn embb_data(rate_bps: f64, embb_tti_s: f64, urllc_tti_s: f64, n_urllc: usize) -> FrameData {
    let busy = urllc_tti_s * n_urllc as f64;
    FrameData {
        bits: (embb_tti_s - busy).max(0.0) * rate_bps,
        saturated: busy > embb_tti_s,
    }
}

/// SINR, bandwidth and rate of every link under one association and power matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    pub sinr: Matrix,
    pub bandwidth_share_hz: Matrix,
    pub rate_bps: Matrix,
}

impl LinkBudget {
    pub fn evaluate(
        assoc: &AssociationMatrix,
        powers: &Matrix,
        gains: &Matrix,
        bandwidths_hz: &[f64],
        noise_w: f64,
        model: InterferenceModel,
    ) -> Self {
        let sinr = sinr_matrix(powers, gains, noise_w, model);
        let shares = bandwidth_shares(assoc, bandwidths_hz);
        let rate = Matrix::from_fn(powers.rows(), powers.cols(), |j, k| {
            rate_bps(assoc.x(j, k), shares[(j, k)], sinr[(j, k)])
        });
        Self {
            sinr,
            bandwidth_share_hz: shares,
            rate_bps: rate,
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::scenario::{ScenarioConfig, UserKind};

    fn radio() -> RadioParams {
        ScenarioConfig::default().radio()
    }

    fn bs(kind: BsKind, z: f64) -> BaseStation {
        BaseStation {
            id: 1,
            kind,
            position: [0.0, 0.0, z],
            power_budget_w: 1.0,
            bandwidth_hz: 50e6,
        }
    }

    fn user_at(x: f64) -> User {
        User {
            id: 0,
            kind: UserKind::Embb,
            position: [x, 0.0],
        }
    }

    #[test]
    fn uav_free_space_pathloss() {
        // d = 200 m straight below the UAV: 20 log10(4e11) - 147.55
        let pl = pathloss_db(&bs(BsKind::Ubs, 200.0), &user_at(0.0), &radio()).unwrap();
        assert!((pl - 84.491_199_826_559).abs() < 1e-9, "{pl}");
    }

    #[test]
    fn terrestrial_pathloss() {
        let pl = pathloss_db(&bs(BsKind::Sbs, 0.0), &user_at(100.0), &radio()).unwrap();
        assert!((pl - 90.5).abs() < 1e-12);
        let pl = pathloss_db(&bs(BsKind::Mbs, 0.0), &user_at(1.0), &radio()).unwrap();
        assert!((pl - 15.3).abs() < 1e-12);
    }

    #[test]
    fn colocated_link_is_a_domain_error() {
        assert!(matches!(
            pathloss_db(&bs(BsKind::Sbs, 0.0), &user_at(0.0), &radio()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn noise_limited_sinr() {
        let p = Matrix::filled(1, 1, 0.5);
        let h = Matrix::filled(1, 1, 1e-8);
        let g = sinr(&p, &h, 1.7783e-13, 0, 0, InterferenceModel::AsWritten);
        assert!((g - 28_116.8).abs() < 0.1, "{g}");
        let p = Matrix::zeros(1, 1);
        assert_eq!(
            sinr(&p, &h, 1.7783e-13, 0, 0, InterferenceModel::AsWritten),
            0.0
        );
    }

    #[test]
    fn symmetric_interferers_approach_unit_sinr() {
        // BS 0 is the macro; SBSs 1 and 2 both point 1 W at user 0.
        let p = Matrix::from_fn(3, 1, |j, _| if j == 0 { 0.0 } else { 1.0 });
        let h = Matrix::filled(3, 1, 1e-9);
        let g = sinr(&p, &h, 1e-30, 1, 0, InterferenceModel::AsWritten);
        assert!((g - 1.0).abs() < 1e-12);
    }

    #[test]
    fn macro_is_excluded_only_in_the_literal_model() {
        let p = Matrix::from_fn(2, 1, |_, _| 1.0);
        let h = Matrix::filled(2, 1, 1e-9);
        assert_eq!(
            interference_w(&p, &h, 1, 0, InterferenceModel::AsWritten),
            0.0
        );
        assert_eq!(
            interference_w(&p, &h, 1, 0, InterferenceModel::Conventional),
            1e-9
        );
    }

    #[test]
    fn bandwidth_is_split_equally() {
        let mut a = AssociationMatrix::new(2, 6);
        for k in 0..5 {
            a.assign(0, k);
        }
        a.assign(1, 5);
        let w = bandwidth_shares(&a, &[50e6, 50e6]);
        assert!((0..5).all(|k| w[(0, k)] == 10e6 && w[(1, k)] == 0.0));
        assert_eq!(w[(1, 5)], 50e6);

        let empty = AssociationMatrix::new(2, 3);
        assert!(bandwidth_shares(&empty, &[50e6, 50e6])
            .as_slice()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate_bps(true, 1e7, 3.0), 2e7);
        assert_eq!(rate_bps(false, 1e7, 3.0), 0.0);
        assert_eq!(rate_bps(true, 1e7, 0.0), 0.0);
    }

    #[test]
    fn frame_preemption() {
        let full = embb_data(123.0, 1e-3, 0.125e-3, 8);
        assert_eq!(full.bits, 0.0);
        assert!(!full.saturated);
        assert_eq!(embb_data(2e7, 1e-3, 0.125e-3, 0).bits, 1e-3 * 2e7);
        assert!((embb_data(2e7, 1e-3, 0.125e-3, 4).bits - 1e4).abs() < 1e-9);
        let over = embb_data(2e7, 1e-3, 0.125e-3, 9);
        assert_eq!(over.bits, 0.0);
        assert!(over.saturated);
    }

    proptest! {
        #[test]
        fn sinr_monotone_in_own_and_interfering_power(
            own in 1e-4f64..10.0, other in 0.0f64..10.0, bump in 1e-3f64..1.0,
            h_own in 1e-14f64..1e-6, h_other in 1e-14f64..1e-6,
        ) {
            let build = |own: f64, other: f64| Matrix::from_fn(3, 1, |j, _| match j { 1 => own, 2 => other, _ => 0.0 });
            let h = Matrix::from_fn(3, 1, |j, _| if j == 2 { h_other } else { h_own });
            let sigma = 1.7783e-13;
            let base = sinr(&build(own, other), &h, sigma, 1, 0, InterferenceModel::AsWritten);
            prop_assert!(sinr(&build(own + bump, other), &h, sigma, 1, 0, InterferenceModel::AsWritten) > base);
            prop_assert!(sinr(&build(own, other + bump), &h, sigma, 1, 0, InterferenceModel::AsWritten) < base);
        }

        #[test]
        fn gain_pathloss_round_trip(pl in 0.0f64..250.0) {
            let back = pathloss_db_from_gain(gain_from_pathloss_db(pl));
            prop_assert!((back - pl).abs() <= 1e-9 * pl.max(1.0));
        }

        #[test]
        fn rate_monotone_in_sinr_and_linear_in_bandwidth(g in 0.0f64..1e6, dg in 0.0f64..10.0, w in 1.0f64..1e8) {
            prop_assert!(rate_bps(true, w, g + dg) >= rate_bps(true, w, g));
            prop_assert!((rate_bps(true, 2.0 * w, g) - 2.0 * rate_bps(true, w, g)).abs() <= 1e-9 * rate_bps(true, w, g).max(1.0));
        }

        #[test]
        fn frame_data_nonincreasing_in_urllc_load(rate in 0.0f64..1e9, n in 0usize..12) {
            let a = embb_data(rate, 1e-3, 0.125e-3, n).bits;
            let b = embb_data(rate, 1e-3, 0.125e-3, n + 1).bits;
            prop_assert!(b <= a);
        }
    }
}
