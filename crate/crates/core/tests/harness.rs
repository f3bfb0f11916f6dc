use std::fs;

use accelq::harness::{
    read_trajectory_csv, run_config, summary_path, ExperimentConfig, LqrSection, SystemSpec, TabularSection, Task,
    TrajectoryTable,
};
use accelq::lqr::{build_mass_damper, LinearSystem, Variant};
use serde_json::Value;

fn small_tabular() -> ExperimentConfig {
    let mut c = ExperimentConfig::for_task(Task::Tabular);
    c.num_seeds = Some(3);
    c.base_seed = Some(11);
    c.iterations = Some(200);
    c.thresholds = Some(vec![0.5, 0.1]);
    c
}

#[test]
fn identical_configs_give_identical_bytes() {
    let cfg = small_tabular().resolve().unwrap();
    let a = run_config(&cfg).unwrap().csv_bytes().unwrap();
    let b = run_config(&cfg).unwrap().csv_bytes().unwrap();
    assert_eq!(a, b);

    let mut threaded = small_tabular();
    threaded.jobs = Some(3);
    let c = run_config(&threaded.resolve().unwrap()).unwrap().csv_bytes().unwrap();
    assert_eq!(a, c);
}

#[test]
fn seed_changes_output() {
    let a = run_config(&small_tabular().resolve().unwrap()).unwrap();
    let mut other = small_tabular();
    other.base_seed = Some(12);
    let b = run_config(&other.resolve().unwrap()).unwrap();
    assert_ne!(a.csv_bytes().unwrap(), b.csv_bytes().unwrap());
    assert_ne!(a.config_hash, b.config_hash);
}

#[test]
fn jobs_and_out_do_not_affect_hash() {
    let a = small_tabular().resolve().unwrap().config_hash();
    let mut b = small_tabular();
    b.jobs = Some(7);
    b.out = Some("elsewhere.csv".into());
    assert_eq!(a, b.resolve().unwrap().config_hash());
}

#[test]
fn written_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/run.csv");
    let rec = run_config(&small_tabular().resolve().unwrap()).unwrap();
    rec.write(&out).unwrap();

    let parsed = read_trajectory_csv(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(Some(parsed), rec.table());

    let summary: Value = serde_json::from_str(&fs::read_to_string(summary_path(&out)).unwrap()).unwrap();
    assert_eq!(summary["config_hash"], rec.config_hash.as_str());
    assert_eq!(summary["task"], "tabular");
    let cells = summary["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 4);
    assert!(cells.iter().all(|c| c["num_seeds"] == 3));
    assert_eq!(cells[0]["threshold_crossings"].as_array().unwrap().len(), 2);
}

#[test]
fn lqr_csv_round_trips() {
    let mut cfg = ExperimentConfig::for_task(Task::Lqr);
    cfg.seeds = Some(vec![4, 2]);
    cfg.iterations = Some(30);
    cfg.lqr = Some(LqrSection {
        variants: vec![Variant::Vanilla, Variant::Nes],
        ..Default::default()
    });
    let rec = run_config(&cfg.resolve().unwrap()).unwrap();
    let bytes = rec.csv_bytes().unwrap();
    let parsed = read_trajectory_csv(bytes.as_slice()).unwrap();
    let TrajectoryTable::Gain(trajs) = &parsed else {
        panic!("expected gain table")
    };
    assert_eq!(trajs.len(), 4);
    assert!(trajs.iter().all(|t| t.errors.len() == 31));
    assert_eq!(Some(parsed), rec.table());
}

#[test]
fn config_json_round_trip() {
    let mut cfg = small_tabular();
    cfg.tabular = Some(TabularSection {
        map: "frozenlake8x8".into(),
        m_values: Some(vec![2.0, 4.0]),
        ..Default::default()
    });
    let text = cfg.to_json().unwrap();
    let back = ExperimentConfig::from_json(&text).unwrap();
    assert_eq!(back.to_json().unwrap(), text);
    assert_eq!(
        back.resolve().unwrap().config_hash(),
        cfg.resolve().unwrap().config_hash()
    );
}

#[test]
fn bad_configs_are_rejected() {
    assert!(ExperimentConfig::from_json(r#"{"task": "tabular", "bogus": 1}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"task": "chess"}"#).is_err());
    assert!(ExperimentConfig::from_json("not json").is_err());

    let mut both = small_tabular();
    both.seeds = Some(vec![1]);
    assert!(both.resolve().is_err());

    let mut wrong_section = small_tabular();
    wrong_section.lqr = Some(LqrSection::default());
    assert!(wrong_section.resolve().is_err());

    let mut bad_map = small_tabular();
    bad_map.tabular = Some(TabularSection {
        map: "no/such/map.txt".into(),
        ..Default::default()
    });
    assert!(bad_map.resolve().is_err());

    let mut bad_gamma = small_tabular();
    bad_gamma.gamma = Some(1.5);
    assert!(bad_gamma.resolve().is_err());
}

#[test]
fn system_file_matches_builder() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sys.json");
    let sys = build_mass_damper(3, 1, 0.1, 0.01).unwrap();
    fs::write(&path, sys.to_json().unwrap()).unwrap();
    let loaded = SystemSpec::File(path).build().unwrap();
    assert_eq!(loaded, sys);
    assert_eq!(LinearSystem::from_json(&sys.to_json().unwrap()).unwrap(), sys);
}
