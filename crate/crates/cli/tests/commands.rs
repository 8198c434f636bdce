//! The binary's contract: run-directory contents, exit codes, and plot and
//! trace outputs that re-read through their own parsers.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use inavrl::env::parse_trace_csv;
use inavrl::io::{parse_chart_svg, parse_metrics_csv, parse_trace_svg};
use inavrl::EvalReport;

const BIN: &str = env!("CARGO_BIN_EXE_indoor-nav-rl");

fn cli(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("INAVRL_WORKERS")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A few seconds of training on a tiny network.
fn train_small(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--profile",
        "desk",
        "--set",
        "phases.0.iterations=4",
        "--set",
        "phases.1.iterations=2",
        "--set",
        "train.train_batch_size=600",
        "--set",
        "train.hidden_layers=[16,16]",
        "--set",
        "train.epochs_per_iteration=2",
        "--output-dir",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    cli(&args)
}

#[test]
fn train_writes_a_complete_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let out = train_small(&run, &["--seed", "4", "--reward-model", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let stdout = String::from_utf8(out.stdout).unwrap();
    let progress: Vec<&str> = stdout.lines().filter(|l| l.starts_with("iter")).collect();
    assert_eq!(progress.len(), 6);
    for key in ["phase", "goal_rate", "ma5", "mean_kl"] {
        assert!(progress[0].contains(key), "{}", progress[0]);
    }

    let snapshot: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(snapshot["seed"], 4);
    assert_eq!(snapshot["reward_model"], 2);
    assert_eq!(snapshot["train"]["train_batch_size"], 600);
    assert_eq!(snapshot["train"]["learning_rate"], 5e-5);

    let rows = parse_metrics_csv(&fs::read_to_string(run.join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(run.join("checkpoints/iter_000004.ckpt").exists());
    assert!(run.join("checkpoints/final.ckpt").exists());
    assert!(run.join("RUN_COMPLETE").exists());
    assert!(!run.join("RUN_INCOMPLETE").exists());
}

#[test]
fn usage_and_config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("r");
    let run = run.to_str().unwrap();
    assert_eq!(code(&cli(&["train", "--reward-model", "3", "--output-dir", run])), 2);
    assert_eq!(
        code(&cli(&["train", "--set", "train.nonsense=1", "--output-dir", run])),
        2
    );
    assert_eq!(
        code(&cli(&["train", "--set", "train.clip_param=-1", "--output-dir", run])),
        2
    );
    assert_eq!(
        code(&cli(&["train", "--config", "/nonexistent.json", "--output-dir", run])),
        2
    );
    assert_eq!(code(&cli(&["frobnicate"])), 2);
    let bad_world = cli(&[
        "train",
        "--set",
        "phases.0.world=/nonexistent/world.json",
        "--output-dir",
        run,
    ]);
    assert_eq!(code(&bad_world), 2);
    assert!(stderr(&bad_world).contains("world"));

    let workers = Command::new(BIN)
        .args(["train", "--output-dir", run])
        .env("INAVRL_WORKERS", "none")
        .output()
        .unwrap();
    assert_eq!(code(&workers), 2);
    assert!(stderr(&workers).contains("INAVRL_WORKERS"));
}

#[test]
fn eval_trace_and_plot_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    assert_eq!(code(&train_small(&run, &["--seed", "1"])), 0);
    let ckpt = run.join("checkpoints/final.ckpt");
    let ckpt = ckpt.to_str().unwrap();

    // Evaluation picks up the run's snapshot and is reproducible.
    let report_path = tmp.path().join("eval.json");
    let report_arg = report_path.to_str().unwrap();
    let eval = |extra: &[&str]| {
        let mut args = vec![
            "eval",
            "--checkpoint",
            ckpt,
            "--world",
            "empty",
            "--episodes",
            "30",
            "--report",
            report_arg,
        ];
        args.extend_from_slice(extra);
        let out = cli(&args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(String::from_utf8_lossy(&out.stdout).contains("goal_rate"));
        serde_json::from_str::<EvalReport>(&fs::read_to_string(&report_path).unwrap()).unwrap()
    };
    let a = eval(&["--deterministic"]);
    let b = eval(&["--deterministic"]);
    assert_eq!(a, b);
    assert_eq!(a.episodes, 30);
    assert_eq!(a.goals + a.collisions + a.timeouts, 30);
    assert!(eval(&[]).goal_rate <= 1.0);

    assert_eq!(
        code(&cli(&[
            "eval",
            "--checkpoint",
            ckpt,
            "--world",
            "empty",
            "--episodes",
            "0"
        ])),
        2
    );
    let mismatch = cli(&[
        "eval",
        "--checkpoint",
        ckpt,
        "--world",
        "empty",
        "--profile",
        "full",
        "--report",
        report_arg,
    ]);
    assert_eq!(code(&mismatch), 2);
    let msg = stderr(&mismatch);
    assert!(msg.contains("expected") && msg.contains("found"), "{msg}");

    let truncated = tmp.path().join("cut.ckpt");
    let bytes = fs::read(ckpt).unwrap();
    fs::write(&truncated, &bytes[..bytes.len() / 2]).unwrap();
    let cut = cli(&[
        "eval",
        "--checkpoint",
        truncated.to_str().unwrap(),
        "--world",
        "empty",
        "--config",
        run.join("config.json").to_str().unwrap(),
        "--report",
        report_arg,
    ]);
    assert_eq!(code(&cut), 1);
    assert!(stderr(&cut).contains("truncated checkpoint"));

    for world in ["empty", "obstacles"] {
        let stem = tmp.path().join(format!("trace_{world}"));
        let out = cli(&[
            "trace",
            "--checkpoint",
            ckpt,
            "--world",
            world,
            "--trace-seed",
            "2",
            "--output",
            stem.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let rows = parse_trace_csv(&fs::read_to_string(stem.with_extension("csv")).unwrap()).unwrap();
        let svg = parse_trace_svg(&fs::read_to_string(stem.with_extension("svg")).unwrap()).unwrap();
        assert_eq!(svg.path.len(), rows.len());
        assert_eq!(Some(svg.path[0]), svg.start);
        let last = svg.path.last().unwrap();
        let reached = last.distance(svg.goal.unwrap()) <= svg.goal_radius.unwrap() + 1e-9;
        assert_eq!(reached, rows.last().unwrap().outcome == inavrl::StepOutcome::Goal);
        assert_eq!(svg.obstacles > 0, world == "obstacles");
        assert!(svg.spawn_points > 0);
    }

    let chart = tmp.path().join("chart.svg");
    let metrics = run.join("metrics.csv");
    let out = cli(&[
        "plot",
        "--metrics",
        metrics.to_str().unwrap(),
        "--output",
        chart.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let parsed = parse_chart_svg(&fs::read_to_string(&chart).unwrap()).unwrap();
    let rows = parse_metrics_csv(&fs::read_to_string(&metrics).unwrap()).unwrap();
    let present = rows.iter().filter(|r| r.goal_rate_ma5.is_some()).count();
    assert_eq!(parsed.polylines.iter().map(Vec::len).sum::<usize>(), present);
    assert_eq!(parsed.phase_rules, vec![4]);
}

#[test]
fn plot_rejects_bad_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    assert_eq!(code(&train_small(&run, &[])), 0);
    let text = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let out_svg = tmp.path().join("out.svg");

    let header_only = tmp.path().join("header.csv");
    fs::write(&header_only, format!("{}\n", text.lines().next().unwrap())).unwrap();
    let out = cli(&[
        "plot",
        "--metrics",
        header_only.to_str().unwrap(),
        "--output",
        out_svg.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no data rows"));

    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[3] = lines[3].replacen(",", ",x", 2);
    let broken = tmp.path().join("broken.csv");
    fs::write(&broken, lines.join("\n") + "\n").unwrap();
    let out = cli(&[
        "plot",
        "--metrics",
        broken.to_str().unwrap(),
        "--output",
        out_svg.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("row 3"), "{}", stderr(&out));
    assert!(!out_svg.exists());
}
