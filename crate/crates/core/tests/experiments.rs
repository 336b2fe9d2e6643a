use uav_ruin::allocation::Regime;
use uav_ruin::experiments::*;
use uav_ruin::ruin::{ClaimConvention, SurplusModel};
use uav_ruin::scenario::ScenarioConfig;

fn small() -> ScenarioConfig {
    ScenarioConfig {
        n_sbs: 2,
        n_ubs: 2,
        n_embb: 10,
        n_urllc: 2,
        n_mmtc: 0,
        ..ScenarioConfig::default()
    }
}

#[test]
fn ruin_table_csv_has_one_row_per_point() {
    let grid = vec![SurplusModel {
        launch_w: 1.0,
        premium_w: 0.3,
        claim_rate_mu: 2.0,
        horizon_ttis: 5,
    }];
    let rows = ruin_table(&grid, 2_000, ClaimConvention::PerTti, 0).unwrap();
    let csv = ruin_table_csv(&rows);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "rho0,premium,mu,horizon,psi_analytic,psi_mc,mc_stderr"
    );
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("1.0,0.3,2.0,5,"));
}

#[test]
fn recipes_are_reproducible() {
    let seeds = [3, 4];
    assert_eq!(
        flight_comparison(&small(), &seeds, 10).unwrap(),
        flight_comparison(&small(), &seeds, 10).unwrap()
    );
    assert_eq!(
        sweep_users(&small(), &[12, 16], &seeds).unwrap(),
        sweep_users(&small(), &[12, 16], &seeds).unwrap()
    );
}

#[test]
fn sweep_covers_both_networks_and_classes() {
    let rows = sweep_users(&small(), &[12], &[1]).unwrap();
    assert_eq!(rows.len(), 4);
    let csv = sweep_csv(&rows);
    assert!(csv.starts_with("n_users,scheme,class,rate_bps_mean,rate_bps_ci95\n"));
    assert!(
        csv.contains(",uav,eMBB,") && csv.contains(",terrestrial,URLLC,"),
        "{csv}"
    );
}

#[test]
fn flight_csv_has_two_rows_per_seed() {
    let pairs = flight_comparison(&small(), &[0, 1, 2], 10).unwrap();
    assert_eq!(flight_summary_csv(&pairs).lines().count(), 1 + 6);
    assert_eq!(summarize_flights(&pairs).seeds, 3);
}

#[test]
fn psi_rises_as_surplus_falls() {
    let rows = psi_sweep(&small(), 5, &[10.0, 2.0, 0.0]).unwrap();
    assert!(rows.windows(2).all(|w| w[1].psi >= w[0].psi));
    assert!(rows
        .windows(2)
        .all(|w| w[1].ruin_uav_users <= w[0].ruin_uav_users));
    assert!(psi_sweep_csv(&rows).starts_with("surplus_w,psi,ruin_uav_users,sinr_uav_users\n"));
}

#[test]
fn gap_rows_follow_the_requested_grid() {
    let rows = gap(&ScenarioConfig::default(), 2, &[3, 4], &[0, 1]).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.gap_rel.abs() <= 1e-6));
    assert!(gap_csv(&rows).starts_with("n_users,seed,heuristic_obj,oracle_obj,gap_rel\n"));
}

#[test]
fn waterfill_demo_shares_one_level() {
    for regime in [Regime::Sufficient, Regime::Capped, Regime::Scarce] {
        let rows = waterfill_demo(regime).unwrap();
        assert!(rows
            .windows(2)
            .all(|w| w[0].water_level == w[1].water_level));
        assert_eq!(waterfill_csv(&rows).lines().count(), rows.len() + 1);
    }
}
