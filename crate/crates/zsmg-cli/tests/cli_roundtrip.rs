//! End-to-end checks of the `zsmg` binary: artifact determinism, hash
//! verification on eval, exit codes, and agreement between the certified
//! exploitability scores and direct library evaluation.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use zsmg::exact::{nash_backward_induction, Side};
use zsmg::game::{benchmark_game, MarkovGame};
use zsmg::replay::{markov_exploitability_side, uniform_markov_policy};

fn zsmg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zsmg"))
        .args(args)
        .env("ZSMG_THREADS", "2")
        .output()
        .expect("binary spawns")
}

fn stdout_json_lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("stdout line is JSON"))
        .collect()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn write_config(dir: &Path, episodes: u64, seeds: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{
            "version": 1,
            "game": {{"builtin": {{"name": "benchmark"}}}},
            "episodes": {episodes},
            "seeds": [{seeds}],
            "epsilon_grid": [1.0]
        }}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn gen_is_deterministic_and_validates_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    let built = tmp.path().join("builtin.json");
    let out = zsmg(&["gen", "--builtin", "benchmark", "--out", built.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let game = MarkovGame::load(&built).unwrap();
    assert_eq!(game.dims(), benchmark_game().dims());
    let report = &stdout_json_lines(&out)[0];
    assert_eq!(report["game_hash"].as_str().unwrap().len(), 64);

    let r1 = tmp.path().join("r1.json");
    let r2 = tmp.path().join("r2.json");
    for path in [&r1, &r2] {
        let out = zsmg(&[
            "gen", "--random", "--seed", "42", "-S", "4", "-A", "3", "-B", "2", "-H", "2",
            "--out", path.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
    }
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());

    let out = zsmg(&["gen", "--random", "-S", "0"]);
    assert_eq!(code(&out), 2);
    let out = zsmg(&["gen", "--builtin", "benchmark", "--random"]);
    assert_eq!(code(&out), 2, "builtin and random are mutually exclusive");
}

#[test]
fn train_is_bit_deterministic_and_eval_agrees_with_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), 600, "1, 2");
    let run_a = tmp.path().join("a");
    let run_b = tmp.path().join("b");
    for dir in [&run_a, &run_b] {
        let out = zsmg(&[
            "train", "--config", config.to_str().unwrap(), "--out", dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    for seed in [1, 2] {
        for file in ["metrics.csv", "episodes.csv", "policy_events.jsonl", "learner.json"] {
            let a = std::fs::read(run_a.join(format!("seed-{seed}")).join(file)).unwrap();
            let b = std::fs::read(run_b.join(format!("seed-{seed}")).join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between identical runs for seed {seed}");
        }
    }

    let out = zsmg(&["eval", "--run", run_a.to_str().unwrap(), "--mc-episodes", "200"]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let reports = stdout_json_lines(&out);
    assert_eq!(reports.len(), 2, "one report per seed");

    // The reported gap bound must equal a direct recomputation from the
    // stored per-episode metrics.
    let metrics = std::fs::read_to_string(run_a.join("seed-1/metrics.csv")).unwrap();
    let gaps: Vec<f64> = metrics
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(gaps.len(), 600);
    let recomputed = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let reported = reports[0]["gap_bound"].as_f64().unwrap();
    assert!(
        (recomputed - reported).abs() <= 1e-12,
        "gap_bound {reported} vs metrics.csv average {recomputed}"
    );
    assert_eq!(reports[0]["convergence"].as_array().unwrap().len(), 4);
    assert!(reports[0]["monte_carlo"]["max_policy_value"]["mean"].is_f64());

    let report_file = run_a.join("seed-1/report.json");
    let parsed: Value =
        serde_json::from_str(&std::fs::read_to_string(&report_file).unwrap()).unwrap();
    assert_eq!(parsed["gap_bound"].as_f64().unwrap(), reported);
    let conv = std::fs::read_to_string(run_a.join("seed-1/convergence.csv")).unwrap();
    assert_eq!(conv.lines().count(), 5, "header plus one row per grid point");

    // Tampering with the stored game must be refused, not rescored.
    let game_file = run_b.join("game.json");
    let mut bytes = std::fs::read(&game_file).unwrap();
    bytes.extend_from_slice(b" ");
    std::fs::write(&game_file, bytes).unwrap();
    let out = zsmg(&["eval", "--run", run_b.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("hash"), "stderr: {stderr}");
}

#[test]
fn eval_refuses_strided_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), 300, "5");
    let run = tmp.path().join("strided");
    let out = zsmg(&[
        "train", "--config", config.to_str().unwrap(), "--out", run.to_str().unwrap(),
        "--stride", "3",
    ]);
    assert_eq!(code(&out), 0);
    let out = zsmg(&["eval", "--run", run.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("stride"));
}

#[test]
fn baseline_algo_is_recorded_in_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), 200, "9");
    let run = tmp.path().join("base");
    let out = zsmg(&[
        "train", "--config", config.to_str().unwrap(), "--out", run.to_str().unwrap(),
        "--algo", "baseline",
    ]);
    assert_eq!(code(&out), 0);
    let manifest = std::fs::read_to_string(run.join("seed-9/manifest.json")).unwrap();
    assert!(manifest.contains("\"algo\":\"baseline\""), "manifest: {manifest}");
    let report = &stdout_json_lines(&out)[0];
    assert_eq!(report["algo"], "baseline");
    assert_eq!(report["runs"][0]["references_triggered"], 0);
}

#[test]
fn one_episode_run_certifies_the_uniform_policy() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), 1, "1");
    let run = tmp.path().join("k1");
    let out = zsmg(&[
        "train", "--config", config.to_str().unwrap(), "--out", run.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        std::fs::read_to_string(run.join("seed-1/policy_events.jsonl")).unwrap(),
        "",
        "no stage completes within one episode"
    );
    let out = zsmg(&["eval", "--run", run.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report = &stdout_json_lines(&out)[0];

    let game = benchmark_game();
    let exact = nash_backward_induction(&game).unwrap();
    for (field, side) in
        [("exploitability_upper_max", Side::Max), ("exploitability_upper_min", Side::Min)]
    {
        let uniform = uniform_markov_policy(&game, side);
        let expect = markov_exploitability_side(&game, &exact, &uniform, side).unwrap();
        let got = report[field].as_f64().unwrap();
        assert!(
            (got - expect).abs() <= 1e-9,
            "{field}: certified {got} vs direct Markov evaluation {expect}"
        );
    }
}

#[test]
fn bench_filter_runs_single_criterion() {
    let out = zsmg(&["bench", "--only", "oracle"]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let outcomes = stdout_json_lines(&out);
    assert_eq!(outcomes.len(), 1);
    assert_eq!(outcomes[0]["name"], "oracle-exactness");
    assert_eq!(outcomes[0]["pass"], true);

    let out = zsmg(&["bench", "--only", "no-such-criterion"]);
    assert_eq!(code(&out), 2);
}
