use std::fs;
use std::path::Path;

use trustsim::config::ConfigLayer;
use trustsim::presets::{run_experiment, ExperimentPreset, ExperimentRequest};

fn request(preset: Option<ExperimentPreset>, cli: ConfigLayer) -> ExperimentRequest {
    ExperimentRequest {
        preset,
        file: ConfigLayer::default(),
        cli,
        threads: 0,
    }
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn pair_trace_writes_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(
        &request(Some(ExperimentPreset::Fig3PairTrace), ConfigLayer::default()),
        dir.path(),
    )
    .unwrap();
    let names: Vec<String> = out
        .files
        .iter()
        .map(|f| f.strip_prefix(dir.path()).unwrap().display().to_string())
        .collect();
    assert_eq!(
        names,
        [
            "graphs/run_0.edges",
            "agents.csv",
            "runs.csv",
            "summary.csv",
            "metadata.json"
        ]
    );

    let agents = lines(&dir.path().join("agents.csv"));
    assert_eq!(agents[0], "condition,run,step,agent,belief,world_trust");
    assert_eq!(agents.len() - 1, 4 * 50 * 2);
    let runs = lines(&dir.path().join("runs.csv"));
    assert_eq!(
        runs[0],
        "condition,p_obj,run,step,mean_belief,belief_variance,mean_world_trust"
    );
    assert_eq!(runs.len() - 1, 4 * 50);
    let summary = lines(&dir.path().join("summary.csv"));
    assert_eq!(
        summary[0],
        "condition,p_obj,step,grand_mean_belief,between_run_variance"
    );
    assert_eq!(summary.len() - 1, 4 * 50);
    // a single run has no between-run spread
    assert!(summary[1..].iter().all(|l| l.ends_with(",0")));

    let edges = lines(&dir.path().join("graphs/run_0.edges"));
    assert_eq!(edges.len(), 50);
    let graph = trustsim::topology::Graph::parse_edge_list(50, &edges.join("\n")).unwrap();
    assert_eq!(graph.edge_count(), 50);

    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["preset"], "fig3-pair-trace");
    assert_eq!(meta["master_seed"], 0);
    assert_eq!(meta["cells"][0]["config"]["p_obj"], 0.66);
    assert_eq!(meta["cells"][0]["config"]["schema"], 1);
}

#[test]
fn run_means_sweep_splits_agent_files_by_reliability() {
    let dir = tempfile::tempdir().unwrap();
    let cli = ConfigLayer {
        runs: Some(2),
        steps: Some(5),
        ..Default::default()
    };
    run_experiment(&request(Some(ExperimentPreset::Fig5RunMeans), cli), dir.path()).unwrap();
    for p in ["0.33", "0.66", "0.8", "0.9"] {
        let agents = lines(&dir.path().join(format!("p_obj_{p}/agents.csv")));
        assert_eq!(agents.len() - 1, 4 * 2 * 5 * 50);
    }
    let runs = lines(&dir.path().join("runs.csv"));
    assert_eq!(runs.len() - 1, 4 * 4 * 2 * 5);
    assert!(runs[1].starts_with("NetworkUpdater,0.33,0,1,"));
}

#[test]
fn isolated_landscape_covers_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cli = ConfigLayer {
        runs: Some(20),
        ..Default::default()
    };
    let out = run_experiment(&request(Some(ExperimentPreset::Fig2PriorKnowledge), cli), dir.path()).unwrap();
    let rows = lines(&dir.path().join("accuracy.csv"));
    assert_eq!(rows[0], "condition,p_obj,base_rate,runs,mean_brier,mean_absolute_error");
    assert_eq!(rows.len() - 1, 3 * 81);
    assert_eq!(out.accuracy.len(), 3 * 81);
    assert!(out
        .accuracy
        .iter()
        .all(|r| r.runs == 20 && (0.0..=1.0).contains(&r.mean_brier)));
    assert!(!dir.path().join("runs.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cli = ConfigLayer {
        runs: Some(3),
        ..Default::default()
    };
    run_experiment(&request(Some(ExperimentPreset::Fig4RunPanels), cli.clone()), a.path()).unwrap();
    let mut single = request(Some(ExperimentPreset::Fig4RunPanels), cli);
    single.threads = 1;
    run_experiment(&single, b.path()).unwrap();
    for f in ["agents.csv", "runs.csv", "summary.csv", "graphs/run_2.edges"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn zero_steps_writes_header_only_files() {
    let dir = tempfile::tempdir().unwrap();
    let cli = ConfigLayer {
        p_obj: Some(0.7),
        steps: Some(0),
        runs: Some(2),
        ..Default::default()
    };
    run_experiment(&request(None, cli), dir.path()).unwrap();
    for (f, header) in [
        ("agents.csv", "condition,run,step,agent,belief,world_trust"),
        (
            "runs.csv",
            "condition,p_obj,run,step,mean_belief,belief_variance,mean_world_trust",
        ),
        (
            "summary.csv",
            "condition,p_obj,step,grand_mean_belief,between_run_variance",
        ),
    ] {
        assert_eq!(lines(&dir.path().join(f)), [header]);
    }
}

#[test]
fn failed_experiment_removes_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    // a directory squatting on an output name makes the late write fail
    fs::create_dir(dir.path().join("summary.csv")).unwrap();
    let cli = ConfigLayer {
        p_obj: Some(0.7),
        steps: Some(3),
        runs: Some(2),
        ..Default::default()
    };
    let err = run_experiment(&request(None, cli), dir.path()).unwrap_err();
    assert!(!err.is_config_error());
    assert!(!dir.path().join("agents.csv").exists());
    assert!(!dir.path().join("runs.csv").exists());
    assert!(!dir.path().join("metadata.json").exists());
}

#[test]
fn invalid_layers_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cli = ConfigLayer {
        p_obj: Some(1.5),
        ..Default::default()
    };
    let err = run_experiment(
        &request(Some(ExperimentPreset::Fig6GrandMeans), cli),
        &dir.path().join("out"),
    )
    .unwrap_err();
    assert!(err.is_config_error());
    assert!(!dir.path().join("out").exists());

    let missing = run_experiment(&request(None, ConfigLayer::default()), &dir.path().join("out")).unwrap_err();
    assert!(missing.is_config_error());
}
