use std::process::Command;

const SMALL: [&str; 8] = [
    "rounds=3",
    "swarm.num_uavs=4",
    "swarm.ev_xy=[[\"200 m\",\"500 m\"],[\"800 m\",\"500 m\"]]",
    "tasks.kinds=[{correlated={domain=0}},\"conflicting\"]",
    "tasks.min_uavs=[1,1]",
    "tasks.total_samples=400",
    "tasks.test_size=64",
    "learning.hidden=[8,3]",
];

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_uav-mtfl"));
    c.env_remove("UAV_MTFL_THREADS");
    c
}

fn with_small(cmd: &mut Command) -> &mut Command {
    for s in SMALL {
        cmd.args(["--set", s]);
    }
    cmd
}

#[test]
fn simulate_writes_the_csv_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = with_small(bin().args(["simulate", "--seed", "4", "--out"]).arg(dir.path())).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["rounds.csv", "uavs.csv", "affinity.csv", "summary.csv", "scenario.toml"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let scenario = std::fs::read_to_string(dir.path().join("scenario.toml")).unwrap();
    assert!(scenario.contains("seed = 4"));
}

#[test]
fn simulate_reads_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let out = with_small(bin().args(["simulate", "--out"]).arg(&first)).output().unwrap();
    assert!(out.status.success());
    let second = dir.path().join("b");
    let out = bin().args(["simulate", "--config"]).arg(first.join("scenario.toml")).arg("--out").arg(&second).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(first.join("uavs.csv")).unwrap(), std::fs::read(second.join("uavs.csv")).unwrap());
}

#[test]
fn sweep_prints_one_row_per_v() {
    let out = with_small(bin().args(["sweep-v", "--v", "0.1,10"])).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("rounds,v,"));
    assert!(lines[2].starts_with("3,10.0,"));
}

#[test]
fn bad_override_fails_with_a_message() {
    let out = bin().args(["sweep-v", "--set", "energy.e_max=\"-1 J\""]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn thread_variable_must_be_a_count() {
    let out = bin().env("UAV_MTFL_THREADS", "many").arg("bench").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().env("UAV_MTFL_THREADS", "2").args(["bench", "--reps", "2"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("bcd"));
}
