use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gssbo::harness::{summarize_dir, GridSummary};

fn gssbo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gssbo"))
        .args(args)
        .output()
        .expect("spawn gssbo")
}

fn write_grid(dir: &Path, body: &str) -> String {
    let p = dir.join("grid.json");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL_GRID: &str = r#"{
  "objectives": ["levy_2"],
  "strategies": ["gssbo"],
  "seeds": [0, 1],
  "run": { "n0": 5, "budget": 25, "fixed_m": 8, "acquisition": { "n_candidates": 128 } }
}"#;

/// Trace text with the wall-clock column blanked out.
fn strip_timing(text: &str) -> String {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "iter_time_ms").unwrap();
    lines
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f[col] = "";
            f.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn grid_writes_traces_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_grid(tmp.path(), SMALL_GRID);
    let out = tmp.path().join("out");
    let o = gssbo(&["grid", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for seed in [0, 1] {
        let text = fs::read_to_string(out.join(format!("levy_2_gssbo_seed{seed}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 26);
    }
    let summary: GridSummary =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary.failures.is_empty());
    assert_eq!(summary.rows.len(), 1);
    assert_eq!(summary.rows[0].seeds, 2);

    // The summary is a pure function of the traces on disk.
    let again = summarize_dir(&out, 0.01).unwrap();
    assert_eq!(again, summary.rows);
}

#[test]
fn rerun_is_identical_except_timing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_grid(tmp.path(), SMALL_GRID);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        assert!(gssbo(&["grid", "--config", &cfg, "--out", dir.to_str().unwrap()])
            .status
            .success());
    }
    for seed in [0, 1] {
        let name = format!("levy_2_gssbo_seed{seed}.csv");
        let ta = fs::read_to_string(a.join(&name)).unwrap();
        let tb = fs::read_to_string(b.join(&name)).unwrap();
        assert_eq!(strip_timing(&ta), strip_timing(&tb));
    }
}

#[test]
fn empty_strategy_list_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_grid(
        tmp.path(),
        r#"{"objectives": ["levy_2"], "strategies": [], "seeds": [0]}"#,
    );
    let o = gssbo(&[
        "grid",
        "--config",
        &cfg,
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no strategies"));
}

#[test]
fn bad_inputs_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(
        gssbo(&["run", "--objective", "nope", "--out", out]).status.code(),
        Some(1)
    );
    assert_eq!(
        gssbo(&["run", "--objective", "levy_2", "--beta", "sideways", "--out", out])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(gssbo(&["frobnicate"]).status.code(), Some(1));
    let cfg = write_grid(tmp.path(), "{ not json");
    let o = gssbo(&["grid", "--config", &cfg, "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
    assert_eq!(gssbo(&["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("plain");
    fs::write(&file, "x").unwrap();
    let out = file.join("sub");
    let o = gssbo(&[
        "run",
        "--objective",
        "levy_2",
        "--budget",
        "8",
        "--n0",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn subset_dump_has_one_row_per_selected_iteration() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = gssbo(&[
        "run",
        "--objective",
        "levy_2",
        "--budget",
        "200",
        "--fixed-m",
        "--n-candidates",
        "64",
        "--trace-subsets",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("levy_2_gssbo_seed0.subsets.csv")).unwrap();
    let rows: Vec<Vec<usize>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 100);
    for r in &rows {
        let newest = r[1];
        let idx = &r[2..];
        assert_eq!(idx.len(), 100);
        assert!(idx.contains(&newest));
    }
}

#[test]
fn nystrom_writes_json_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("n.json");
    let o = gssbo(&[
        "nystrom",
        "--n",
        "30",
        "--m",
        "6",
        "--seed",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["greedy"]["selected"].as_array().unwrap().len(), 6);
    assert!(v["greedy"]["spectral_error"].as_f64().unwrap() >= 0.0);
    assert!(v["min_subset_greedy"].as_u64().unwrap() >= 1);
    assert_eq!(gssbo(&["nystrom", "--n", "5", "--m", "9"]).status.code(), Some(1));
}

#[test]
fn rmse_study_reports_every_strategy() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r.json");
    let o = gssbo(&[
        "rmse",
        "--objective",
        "levy_2",
        "--budget",
        "20",
        "--n0",
        "5",
        "--fixed-m",
        "8",
        "--n-candidates",
        "64",
        "--seeds",
        "0..2",
        "--grid-size",
        "64",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["series"].as_array().unwrap().len(), 6);
}
