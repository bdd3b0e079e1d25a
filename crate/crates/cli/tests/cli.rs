//! End-to-end tests driving the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reconcile-bench"))
        .args(args)
        .output()
        .expect("binary should execute")
}

fn bench_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reconcile-bench"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary should execute")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

/// Parse `summary.csv` into (tool, scenario, metric, mu) tuples.
fn summary_cells(text: &str) -> Vec<(String, String, String, f64)> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("tool,") && !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].to_string(),
                f[1].to_string(),
                f[2].to_string(),
                f[3].parse::<f64>().unwrap(),
            )
        })
        .collect()
}

fn cell(cells: &[(String, String, String, f64)], tool: &str, scenario: &str, metric: &str) -> f64 {
    cells
        .iter()
        .find(|(t, s, m, _)| t == tool && s == scenario && m == metric)
        .unwrap_or_else(|| panic!("missing cell {tool}/{scenario}/{metric}"))
        .3
}

#[test]
fn single_app_run_emits_200_raw_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("results");
    let out = bench(&[
        "run",
        "--scenario",
        "single-app",
        "--profile",
        "argo",
        "--max",
        "100",
        "--reps",
        "20",
        "--step",
        "10",
        "--seed",
        "42",
        "--preset",
        "table3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let raw = read(&out_dir.join("raw.csv"));
    assert_eq!(raw.lines().count(), 201, "header plus 200 records");
    assert!(raw.starts_with("scenario,profile,k,rep,t_push_s"));
    let aggregated = read(&out_dir.join("aggregated.csv"));
    assert_eq!(aggregated.lines().count(), 11, "header plus 10 grid points");
    assert!(out_dir.join("summary.txt").is_file());
    assert!(out_dir.join("summary.csv").is_file());
}

#[test]
fn multi_app_csync_run_emits_180_raw_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("results");
    let out = bench(&[
        "run",
        "--scenario",
        "multi-app",
        "--profile",
        "csync",
        "--max",
        "90",
        "--reps",
        "20",
        "--step",
        "10",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let raw = read(&out_dir.join("raw.csv"));
    assert_eq!(raw.lines().count(), 181);
}

#[test]
fn default_run_covers_all_three_tools() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("results");
    let out = bench(&[
        "run",
        "--scenario",
        "multi-app",
        "--max",
        "11",
        "--reps",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = read(&out_dir.join("summary.txt"));
    for tool in ["Argo CD", "Flux CD", "Config Sync"] {
        assert!(summary.contains(tool), "summary missing {tool}\n{summary}");
    }
}

#[test]
fn unknown_profile_exits_two_and_names_the_valid_set() {
    let out = bench(&["run", "--scenario", "single-app", "--profile", "xyz"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().count(), 1, "diagnostic must be one line");
    let line = stderr.lines().next().unwrap();
    assert!(line.starts_with("error:"), "got: {line}");
    for name in ["argo", "flux", "csync"] {
        assert!(line.contains(name), "diagnostic should name {name}: {line}");
    }
}

#[test]
fn invalid_parameters_exit_two() {
    for args in [
        vec!["run", "--scenario", "single-app", "--max", "0"],
        vec!["run", "--scenario", "bogus"],
        vec!["run", "--scenario", "single-app", "--step", "0"],
        vec!["nephio", "--mode", "multi", "--max", "0"],
        vec!["nephio", "--mode", "bogus"],
        vec!["run", "--scenario", "nephio-multi"],
    ] {
        let out = bench(&args);
        assert_eq!(out.status.code(), Some(2), "args {args:?}");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.starts_with("error:"), "args {args:?}: {stderr}");
    }
}

#[test]
fn capacity_overflow_exits_three() {
    let out = bench(&[
        "run",
        "--scenario",
        "multi-app",
        "--profile",
        "argo",
        "--max",
        "104",
        "--step",
        "103",
        "--reps",
        "1",
        "--out",
        tempfile::tempdir().unwrap().path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn nephio_multi_summary_tracks_per_intent_means() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("results");
    let out = bench(&[
        "nephio",
        "--mode",
        "multi",
        "--max",
        "90",
        "--step",
        "10",
        "--reps",
        "20",
        "--preset",
        "table3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let raw = read(&out_dir.join("raw.csv"));
    assert!(raw
        .lines()
        .next()
        .unwrap()
        .ends_with("t_inproc_s,t_hydrate_s,t_oh_s"));
    assert_eq!(raw.lines().count(), 181);
    let cells = summary_cells(&read(&out_dir.join("summary.csv")));
    let inproc = cell(&cells, "Nephio", "nephio-multi", "t_inproc");
    let hydrate = cell(&cells, "Nephio", "nephio-multi", "t_hydrate");
    let oh = cell(&cells, "Nephio", "nephio-multi", "t_oh");
    assert!((inproc - 7.79).abs() / 7.79 < 0.10, "t_inproc {inproc}");
    assert!((hydrate - 4.97).abs() / 4.97 < 0.10, "t_hydrate {hydrate}");
    assert!((oh - 2.73).abs() / 2.73 < 0.10, "t_oh {oh}");
}

#[test]
fn nephio_single_summary_mean_inproc() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("results");
    let out = bench(&[
        "nephio",
        "--mode",
        "single",
        "--reps",
        "20",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let cells = summary_cells(&read(&out_dir.join("summary.csv")));
    let inproc = cell(&cells, "Nephio", "nephio-single", "t_inproc");
    assert!(
        (17.0..=18.8).contains(&inproc),
        "single-intent mean t_inproc {inproc}"
    );
}

#[test]
fn seed_runs_are_byte_identical_across_reruns_and_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (name, parallel) in [("a", "1"), ("b", "1"), ("c", "8")] {
        let out_dir = dir.path().join(name);
        let out = bench(&[
            "run",
            "--scenario",
            "multi-app",
            "--profile",
            "csync",
            "--max",
            "41",
            "--reps",
            "4",
            "--seed",
            "7",
            "--trace",
            "--parallel",
            parallel,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        outputs.push(out_dir);
    }
    for file in [
        "raw.csv",
        "aggregated.csv",
        "summary.txt",
        "summary.csv",
        "trace.log",
    ] {
        let a = read(&outputs[0].join(file));
        let b = read(&outputs[1].join(file));
        let c = read(&outputs[2].join(file));
        assert_eq!(a, b, "{file} differs between identical reruns");
        assert_eq!(a, c, "{file} differs between --parallel 1 and 8");
    }
}

#[test]
fn summarize_combines_files_like_a_concatenated_run() {
    let dir = tempfile::tempdir().unwrap();
    let run_a = dir.path().join("a");
    let run_b = dir.path().join("b");
    for (out_dir, profile) in [(&run_a, "argo"), (&run_b, "flux")] {
        let out = bench(&[
            "run",
            "--scenario",
            "single-app",
            "--profile",
            profile,
            "--max",
            "21",
            "--reps",
            "3",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    // summarize the two files
    let combined = dir.path().join("combined");
    let out = bench(&[
        "summarize",
        run_a.join("raw.csv").to_str().unwrap(),
        run_b.join("raw.csv").to_str().unwrap(),
        "--out",
        combined.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // oracle: one file holding both record sets
    let raw_a = read(&run_a.join("raw.csv"));
    let raw_b = read(&run_b.join("raw.csv"));
    let mut concat = raw_a.clone();
    concat.push_str(&raw_b.lines().skip(1).collect::<Vec<_>>().join("\n"));
    concat.push('\n');
    let concat_path = dir.path().join("concat.csv");
    std::fs::write(&concat_path, concat).unwrap();
    let oracle_out = dir.path().join("oracle");
    let out = bench(&[
        "summarize",
        concat_path.to_str().unwrap(),
        "--out",
        oracle_out.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let strip = |text: String| -> Vec<String> {
        text.lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.to_string())
            .collect()
    };
    assert_eq!(
        strip(read(&combined.join("summary.csv"))),
        strip(read(&oracle_out.join("summary.csv"))),
        "combined summary must equal the single-run summary over concatenation"
    );
}

#[test]
fn malformed_header_names_the_first_bad_column() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(
        &bad,
        "scenario,profile,k,rep,t_push_s,OOPS,t_recon_s,t_deploy_s,t_healthy_s,u_cpu_millicore,u_mem_mib,seed\n",
    )
    .unwrap();
    let out = bench(&["summarize", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("OOPS"),
        "should name the bad column: {stderr}"
    );
}

#[test]
fn preset_directory_override_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let preset_dir = dir.path().join("presets");
    std::fs::create_dir(&preset_dir).unwrap();
    // an unknown preset name fails without the override directory
    let out = bench(&[
        "run",
        "--scenario",
        "single-app",
        "--profile",
        "argo",
        "--max",
        "1",
        "--step",
        "1",
        "--reps",
        "1",
        "--preset",
        "custom",
    ]);
    assert_eq!(out.status.code(), Some(2));

    let bundled = include_str!("../../core/presets/table3.toml");
    std::fs::write(preset_dir.join("custom.toml"), bundled).unwrap();
    let out_dir = dir.path().join("results");
    let out = Command::new(env!("CARGO_BIN_EXE_reconcile-bench"))
        .env("RECONCILE_BENCH_PRESET_DIR", &preset_dir)
        .args([
            "run",
            "--scenario",
            "single-app",
            "--profile",
            "argo",
            "--max",
            "1",
            "--step",
            "1",
            "--reps",
            "1",
            "--preset",
            "custom",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn unwritable_output_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "not a directory").unwrap();
    let out = bench(&[
        "run",
        "--scenario",
        "single-app",
        "--profile",
        "argo",
        "--max",
        "1",
        "--step",
        "1",
        "--reps",
        "1",
        "--out",
        blocker.join("nested").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn relative_out_dir_works_from_any_cwd() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench_in(
        dir.path(),
        &[
            "run",
            "--scenario",
            "single-app",
            "--profile",
            "flux",
            "--max",
            "1",
            "--step",
            "1",
            "--reps",
            "2",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("results/raw.csv").is_file());
}
