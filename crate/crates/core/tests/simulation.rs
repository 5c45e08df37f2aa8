use std::fs;
use std::path::Path;

use uav_mtfl::association::{advance_aou, baseline_aou, utility_table, RoundInputs};
use uav_mtfl::sim::{self, report, ScenarioConfig, World};

fn small(extra: &[&str]) -> ScenarioConfig {
    let mut o: Vec<String> = [
        "rounds=8",
        "swarm.num_uavs=5",
        "swarm.ev_xy=[[\"200 m\",\"500 m\"],[\"800 m\",\"500 m\"]]",
        "tasks.kinds=[{correlated={domain=0}},\"conflicting\"]",
        "tasks.min_uavs=[1,1]",
        "tasks.total_samples=600",
        "tasks.val_size=64",
        "tasks.test_size=128",
        "learning.hidden=[8,3]",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    o.extend(extra.iter().map(|s| s.to_string()));
    ScenarioConfig::with_overrides(sim::config::DEFAULT_SCENARIO, &o).unwrap()
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn same_config_and_seed_write_identical_bytes() {
    let cfg = small(&[]);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    sim::run_to_dir(&cfg, a.path()).unwrap();
    sim::run_to_dir(&cfg, b.path()).unwrap();
    let (fa, fb) = (csv_bytes(a.path()), csv_bytes(b.path()));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["affinity.csv", "rounds.csv", "summary.csv", "uavs.csv"]);
    assert_eq!(fa, fb);
    assert!(a.path().join("scenario.toml").exists());
}

#[test]
fn a_different_seed_changes_the_run() {
    let a = sim::run(&small(&[])).unwrap();
    let b = sim::run(&small(&["seed=2"])).unwrap();
    assert_ne!(a.rounds, b.rounds);
}

#[test]
fn csvs_rebuild_the_report() {
    let cfg = small(&[]);
    let dir = tempfile::tempdir().unwrap();
    let report = sim::run_to_dir(&cfg, dir.path()).unwrap();
    let (rounds, summary) = report::read_csv(dir.path()).unwrap();
    assert_eq!(rounds, report.rounds);
    assert_eq!(summary, report.summary);
}

#[test]
fn written_scenario_reloads_to_the_same_config() {
    let cfg = small(&["v=3.5"]);
    let dir = tempfile::tempdir().unwrap();
    sim::run_to_dir(&cfg, dir.path()).unwrap();
    let back = ScenarioConfig::load(&dir.path().join("scenario.toml"), &[]).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn aou_decisions_replay_from_the_log() {
    let cfg = small(&["strategy.association=\"aou\"", "rounds=6"]);
    let world = World::build(&cfg).unwrap();
    let report = sim::run_world(&world).unwrap();
    let (n, m) = (cfg.swarm.num_uavs, cfg.num_tasks());
    let mut aou = vec![vec![0u64; m]; n];
    for rec in &report.rounds {
        assert!(rec.fallback.is_none());
        let queues: Vec<f64> = rec.uavs.iter().map(|u| u.queue_before).collect();
        let alpha: Vec<f64> = rec.tasks.iter().map(|k| k.alpha).collect();
        let inputs = RoundInputs {
            model: &world.model,
            gains: &world.gains,
            queues: &queues,
            alpha: &alpha,
            data: &world.data_share,
            v: cfg.v,
            min_per_task: &cfg.tasks.min_uavs,
        };
        let want = baseline_aou(&utility_table(&inputs), &aou, &cfg.tasks.min_uavs).unwrap();
        let got: Vec<usize> = rec.uavs.iter().map(|u| u.task).collect();
        assert_eq!(got, want.assignment, "round {}", rec.round);
        advance_aou(&mut aou, &got);
    }
}

#[test]
fn random_association_without_sharing_is_seeded() {
    let cfg = small(&["strategy.association=\"random\"", "strategy.sharing=\"none\""]);
    let a = sim::run(&cfg).unwrap();
    let b = sim::run(&cfg).unwrap();
    assert_eq!(a.rounds, b.rounds);
    for rec in &a.rounds {
        for (k, t) in rec.tasks.iter().enumerate() {
            assert_eq!(t.share_set, vec![k]);
        }
    }
}

#[test]
fn every_strategy_meets_the_staffing_minimums() {
    for assoc in ["proposed", "aou", "channel_aware", "random"] {
        let cfg = small(&[&format!("strategy.association=\"{assoc}\""), "rounds=3"]);
        let report = sim::run(&cfg).unwrap();
        for rec in &report.rounds {
            assert!(rec.tasks.iter().all(|t| t.uavs >= 1), "{assoc}: {:?}", rec.tasks);
            let share: f64 = rec.uavs.iter().map(|u| u.gamma).sum();
            assert!((share - 1.0).abs() < 1e-9, "{assoc}: shares sum to {share}");
        }
    }
}

#[test]
fn sweep_returns_one_row_per_value_and_repeats_exactly() {
    let cfg = small(&["rounds=3"]);
    let rows = sim::sweep_v(&cfg, &[0.5, 0.5, 20.0]).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0], rows[1]);
    assert_eq!(rows[2].v, 20.0);
    assert_eq!(sim::sweep_v(&cfg, &[2.0]).unwrap().len(), 1);
    assert!(sim::sweep_v(&cfg, &[]).is_err());

    let mut buf = Vec::new();
    sim::write_summaries(&rows, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
}

#[test]
fn infeasible_staffing_is_rejected_up_front() {
    let o = ["tasks.min_uavs=[4,4,4]".to_string()];
    assert!(ScenarioConfig::with_overrides(sim::config::DEFAULT_SCENARIO, &o).is_err());
}
