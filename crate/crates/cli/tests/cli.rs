use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use uav_ruin::scenario::{generate_scenario, records, ScenarioConfig};

fn uav_ruin(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uav-ruin"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("UAV_RUIN_OUT")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn run_writes_tables_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = uav_ruin(&["run", "--seeds", "0..2", "--scheme", "ruin"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("run");
    assert!(read(run.join("seed0_ruin_power.csv"))
        .starts_with("bs_id,user_id,class,power_w,water_level\n"));
    assert!(
        read(run.join("seed1_ruin_association.csv")).starts_with("user_id,bs_id,class,rate_bps\n")
    );
    assert_eq!(read(run.join("summary.csv")).lines().count(), 3);
    let manifest = read(run.join("manifest.txt"));
    assert!(manifest.contains("command = run\n"));
    assert!(manifest.contains("seeds = 0,1\n"));
    assert!(manifest.contains("output.summary.csv = "));
    assert!(!run.join("seed0_sinr_power.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["flight", "--seeds", "3", "--horizon", "15"];
    assert_eq!(code(&uav_ruin(&args, dir.path())), 0);
    let first = read(dir.path().join("flight/manifest.txt"));
    let trace = read(dir.path().join("flight/seed3_ruin_trace.csv"));
    assert_eq!(code(&uav_ruin(&args, dir.path())), 0);
    assert_eq!(read(dir.path().join("flight/manifest.txt")), first);
    assert_eq!(read(dir.path().join("flight/seed3_ruin_trace.csv")), trace);
    assert!(dir.path().join("flight/comparison.txt").exists());
    assert!(dir.path().join("flight/psi_sweep.csv").exists());
}

#[test]
fn config_file_and_overrides_are_applied() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    fs::write(
        &cfg,
        "# small network\nn_sbs = 1\nn_ubs = 1\nn_embb = 5\nn_urllc = 1\nn_mmtc = 0\n",
    )
    .unwrap();
    let o = uav_ruin(
        &[
            "run",
            "--scenario",
            cfg.to_str().unwrap(),
            "--seeds",
            "0",
            "--tmax",
            "7",
            "--set",
            "alpha=2",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = read(dir.path().join("run/manifest.txt"));
    assert!(manifest.contains("tmax = 7\n"), "{manifest}");
    // MBS, SBS, UAV and six users.
    assert_eq!(
        read(dir.path().join("run/seed0_ruin_association.csv"))
            .lines()
            .count(),
        7
    );
}

#[test]
fn record_files_fix_the_topology() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig {
        n_sbs: 1,
        n_ubs: 1,
        n_embb: 4,
        n_urllc: 0,
        n_mmtc: 0,
        ..ScenarioConfig::default()
    };
    let rec = dir.path().join("net.csv");
    fs::write(&rec, records::write(&generate_scenario(&cfg, 5).unwrap())).unwrap();
    let path = rec.to_str().unwrap();
    let o = uav_ruin(
        &[
            "run",
            "--scenario",
            path,
            "--seeds",
            "0,1",
            "--scheme",
            "sinr",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        read(dir.path().join("run/seed0_sinr_power.csv")),
        read(dir.path().join("run/seed1_sinr_power.csv"))
    );
    assert_eq!(
        code(&uav_ruin(&["sweep-users", "--scenario", path], dir.path())),
        1
    );
}

#[test]
fn invalid_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["run", "--seeds", "4..4"],
        vec!["run", "--seeds", "x"],
        vec!["run", "--set", "no_such_key=1"],
        vec!["run", "--scenario", "/nonexistent/scenario.cfg"],
        vec!["run", "--scheme", "fastest"],
        vec!["gap", "--users", "3..=9"],
        vec!["ruin-table", "--scenario", "x.cfg"],
        vec!["teleport"],
    ] {
        let o = uav_ruin(&args, dir.path());
        assert_eq!(
            code(&o),
            1,
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    assert!(!dir.path().join("run").join("summary.csv").exists());
}

#[test]
fn infeasible_network_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = uav_ruin(&["run", "--seeds", "0", "--set", "zeta_db=60"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("URLLC infeasible"));
}

#[test]
fn output_root_defaults_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_uav-ruin"))
        .args(["waterfill-demo", "--regime", "capped"])
        .env("UAV_RUIN_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let csv = read(dir.path().join("waterfill-demo/waterfill_capped.csv"));
    assert!(csv.starts_with("user,inv_theta,power_w,water_level\n"));
    let at_cap = csv
        .lines()
        .skip(1)
        .any(|l| l.split(',').nth(2) == Some("1.0"));
    assert!(at_cap, "{csv}");
}

#[test]
fn small_gap_and_ruin_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = uav_ruin(
        &["gap", "--bs", "2", "--users", "3", "--seeds", "0..2"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let gap = read(dir.path().join("gap/gap_2bs.csv"));
    assert_eq!(gap.lines().count(), 3);
    let o = uav_ruin(
        &[
            "ruin-table",
            "--paths",
            "500",
            "--convention",
            "compound-poisson",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read(dir.path().join("ruin-table/manifest.txt"))
        .contains("convention = compound_poisson\n"));
}

#[test]
fn sweep_writes_one_row_per_count_network_and_class() {
    let dir = tempfile::tempdir().unwrap();
    let o = uav_ruin(
        &["sweep-users", "--counts", "15,20", "--seeds", "0..2"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        read(dir.path().join("sweep-users/sweep_users.csv"))
            .lines()
            .count(),
        1 + 2 * 2 * 2
    );
}
