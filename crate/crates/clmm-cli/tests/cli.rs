//! Functional tests driving the built `clmm` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clmm_core::io::{
    hmm_from_json, read_model, scenario_to_json, write_model, write_trajectories, CouplingSpec,
    ScenarioFile,
};
use clmm_core::simulate::sample_trajectory;
use clmm_core::stochastic::Partition;
use clmm_core::{ClMmmc, RandomSource};

fn clmm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clmm"))
        .args(args)
        .current_dir(dir)
        .env_remove("CLMM_THREADS")
        .output()
        .expect("binary runs")
}

fn clmm_ok(args: &[&str], dir: &Path) -> Output {
    let out = clmm(args, dir);
    assert!(
        out.status.success(),
        "clmm {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn random_model(r: usize, s: usize, seed: u64) -> ClMmmc {
    let mut rng = RandomSource::new(seed);
    ClMmmc::random(r, s, Partition::single_block(r), &mut rng).unwrap()
}

#[test]
fn simulate_writes_steps_plus_one_states_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    write_model(dir.path().join("model.json"), &random_model(4, 2, 1)).unwrap();

    clmm_ok(
        &["simulate", "--model", "model.json", "--steps", "50", "--seed", "7", "-o", "a.txt"],
        dir.path(),
    );
    let text = fs::read_to_string(dir.path().join("a.txt")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert_eq!(text.split_whitespace().count(), 51);

    clmm_ok(
        &["simulate", "--model", "model.json", "--steps", "50", "--seed", "7", "-o", "b.txt"],
        dir.path(),
    );
    assert_eq!(
        fs::read(dir.path().join("a.txt")).unwrap(),
        fs::read(dir.path().join("b.txt")).unwrap()
    );

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.txt.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 7);
    assert!(manifest["inputs"]["model.json"].is_string());
    assert!(manifest["outputs"]["a.txt"].is_string());
}

#[test]
fn simulate_trips_writes_one_line_per_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = ScenarioFile::default_graph(0.3, CouplingSpec::PerTrip);
    fs::write(dir.path().join("scenario.json"), scenario_to_json(&scenario)).unwrap();

    clmm_ok(
        &["simulate", "--scenario", "scenario.json", "--trips", "7", "--seed", "3", "-o", "trips.txt"],
        dir.path(),
    );
    let text = fs::read_to_string(dir.path().join("trips.txt")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    for line in lines {
        // Every trip starts at the origin and returns to it.
        assert!(line.starts_with("1 "));
        assert!(line.ends_with(" 1"));
    }
}

#[test]
fn single_latent_state_estimate_recovers_empirical_counts() {
    let dir = tempfile::tempdir().unwrap();
    let truth = random_model(3, 1, 5);
    let data = sample_trajectory(&truth, 400, &mut RandomSource::new(6));
    write_trajectories(dir.path().join("data.txt"), std::slice::from_ref(&data)).unwrap();

    clmm_ok(
        &["estimate", "--data", "data.txt", "--R", "3", "--S", "1", "--starts", "2", "--seed", "9", "-o", "est.json"],
        dir.path(),
    );

    let mut counts = [[0.0_f64; 3]; 3];
    let mut totals = [0.0_f64; 3];
    for w in data.states().windows(2) {
        counts[w[0]][w[1]] += 1.0;
        totals[w[0]] += 1.0;
    }
    let est = read_model(dir.path().join("est.json")).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!(
                (est.visible_page(0).get(i, j) - counts[i][j] / totals[i]).abs() <= 1e-12,
                "entry ({i},{j})"
            );
        }
    }
}

#[test]
fn known_pages_pass_through_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let truth = random_model(4, 2, 11);
    let data = sample_trajectory(&truth, 300, &mut RandomSource::new(12));
    write_trajectories(dir.path().join("data.txt"), std::slice::from_ref(&data)).unwrap();

    let page: Vec<Vec<f64>> = (0..4)
        .map(|i| truth.visible_page(1).row(i).entries().to_vec())
        .collect();
    fs::write(
        dir.path().join("page.json"),
        serde_json::to_string(&page).unwrap(),
    )
    .unwrap();

    clmm_ok(
        &["estimate", "--data", "data.txt", "--R", "4", "--S", "2", "--known", "AR:2=page.json", "--starts", "2", "--max-iters", "30", "--seed", "1", "-o", "est.json"],
        dir.path(),
    );

    let est = read_model(dir.path().join("est.json")).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert_eq!(
                est.visible_page(1).get(i, j).to_bits(),
                truth.visible_page(1).get(i, j).to_bits(),
                "entry ({i},{j})"
            );
        }
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("est.report.json")).unwrap())
            .unwrap();
    assert_eq!(report["mode"], "single");
    assert_eq!(report["starts"].as_array().unwrap().len(), 2);
}

#[test]
fn multi_line_data_selects_multi_trajectory_mode() {
    let dir = tempfile::tempdir().unwrap();
    let truth = random_model(3, 1, 21);
    let mut rng = RandomSource::new(22);
    let data: Vec<_> = (0..3).map(|_| sample_trajectory(&truth, 40, &mut rng)).collect();
    write_trajectories(dir.path().join("data.txt"), &data).unwrap();

    clmm_ok(
        &["estimate", "--data", "data.txt", "--R", "3", "--S", "1", "--starts", "1", "--seed", "2", "-o", "est.json"],
        dir.path(),
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("est.report.json")).unwrap())
            .unwrap();
    assert_eq!(report["mode"], "multi");
}

#[test]
fn lift_verifies_and_writes_a_valid_hmm() {
    let dir = tempfile::tempdir().unwrap();
    let model = random_model(3, 2, 31);
    write_model(dir.path().join("model.json"), &model).unwrap();
    let data = sample_trajectory(&model, 60, &mut RandomSource::new(32));
    write_trajectories(dir.path().join("traj.txt"), std::slice::from_ref(&data)).unwrap();

    let out = clmm_ok(
        &["lift", "--model", "model.json", "--verify", "traj.txt", "-o", "hmm.json"],
        dir.path(),
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("relative gap"), "stdout: {stdout}");

    let lifted = hmm_from_json(&fs::read_to_string(dir.path().join("hmm.json")).unwrap()).unwrap();
    assert_eq!(lifted.num_states(), 6);
    assert_eq!(lifted.num_symbols(), 3);
}

#[test]
fn failures_emit_one_coded_line_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let truth = random_model(3, 1, 41);
    let data = sample_trajectory(&truth, 30, &mut RandomSource::new(42));
    write_trajectories(dir.path().join("data.txt"), std::slice::from_ref(&data)).unwrap();

    // Partition covering only part of the state space.
    let out = clmm(
        &["estimate", "--data", "data.txt", "--R", "3", "--S", "1", "--gamma", "1-2", "--starts", "1", "-o", "est.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "stderr: {stderr}");
    assert!(stderr.starts_with("clmm: error["), "stderr: {stderr}");

    // Unknown --known kind is a usage error.
    let out = clmm(
        &["estimate", "--data", "data.txt", "--R", "3", "--S", "1", "--known", "AX:1=nope.json", "--starts", "1", "-o", "est.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("clmm: error[USAGE]:"));
}

#[test]
fn repro_writes_tables_and_rejects_out_of_scale_runs() {
    let dir = tempfile::tempdir().unwrap();
    clmm_ok(
        &["repro", "--experiment", "synthetic-open", "--instances", "2", "--steps", "120", "--starts", "1", "--seed", "3", "-o", "out"],
        dir.path(),
    );
    let runs = fs::read_to_string(dir.path().join("out/runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 3);
    assert!(runs.starts_with("instance,seed,ll_true,ll_est,ll_gap,"));
    let summary = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    assert!(summary.starts_with("metric,count,mean,std,min,q1,median,q3,max"));
    assert!(dir.path().join("out/hist_ll_gap.csv").is_file());
    assert!(dir.path().join("out/manifest.json").is_file());

    let out = clmm(
        &["repro", "--experiment", "synthetic-open", "--instances", "0", "-o", "out2"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("--instances"));
}
