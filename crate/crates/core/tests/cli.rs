use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use frachem::output::read_trajectory_csv;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn frachem(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frachem"))
        .args(args)
        .env("FRACHEM_OUT", out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

const SHORT: &str = "[mesh]\nn_cells = 16\n[solver]\ndt = 0.01\nt_end = 0.1\n";

#[test]
fn reference_run_matches_golden_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data("reference.toml");
    let out = frachem(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let got = read_trajectory_csv(&fs::read_to_string(dir.path().join("trajectory.csv")).unwrap())
        .unwrap();
    let want = read_trajectory_csv(&fs::read_to_string(data("reference_trajectory.csv")).unwrap())
        .unwrap();
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want) {
        assert_eq!(g[0], w[0]);
        // energy, squared norms and residual: relative to the row's energy scale
        for c in [1, 3, 4, 5] {
            assert!(
                (g[c] - w[c]).abs() <= 1e-9 * (1.0 + w[1].abs()),
                "t = {}, column {c}: {} vs {}",
                w[0],
                g[c],
                w[c]
            );
        }
        assert!((g[2] - w[2]).abs() <= 1e-12);
    }
    assert!(
        got.windows(2).all(|r| r[1][1] <= r[0][1] + 1e-9),
        "energy column must not increase"
    );
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("energy_stable=true"));
}

#[test]
fn identical_runs_are_bitwise_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = write_config(a.path(), SHORT);
    for d in [a.path(), b.path()] {
        assert_eq!(
            frachem(&["run", cfg.to_str().unwrap()], d).status.code(),
            Some(0)
        );
    }
    let ta = fs::read(a.path().join("trajectory.csv")).unwrap();
    let tb = fs::read(b.path().join("trajectory.csv")).unwrap();
    assert_eq!(ta, tb);
}

#[test]
fn misaligned_history_grid_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SHORT}history_mode = \"grid\"\ns_max = 40.0\nn_s = 3000\n");
    let cfg = write_config(dir.path(), &text);
    let out = frachem(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not an integer multiple"));
}

#[test]
fn mean_offset_history_exits_with_invariant_breach() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SHORT}[initial]\nmean = 0.2\nhistory = \"mean_offset\"\n");
    let cfg = write_config(dir.path(), &text);
    let out = frachem(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn bad_parameters_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[solver]\nbeta = 0.2\n");
    let out = frachem(&["validate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta must lie in (1/4, 1)"));

    let cfg = write_config(dir.path(), "[solver]\nalpha = 0.0\n");
    assert_eq!(
        frachem(&["validate", cfg.to_str().unwrap()], dir.path())
            .status
            .code(),
        Some(2)
    );

    let cfg = write_config(dir.path(), "[solver]\nunknown_key = 1\n");
    assert_eq!(
        frachem(&["validate", cfg.to_str().unwrap()], dir.path())
            .status
            .code(),
        Some(2)
    );

    let missing = dir.path().join("absent.toml");
    assert_eq!(
        frachem(&["run", missing.to_str().unwrap()], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn validate_prints_a_round_trippable_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let out = frachem(&["validate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let printed = String::from_utf8(out.stdout).unwrap();
    let a = frachem::config::RunConfig::from_toml(&printed).unwrap();
    let b = frachem::config::RunConfig::from_toml(SHORT).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dump_operators_writes_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[mesh]\nn_cells = 8\n");
    let out = frachem(&["dump-operators", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    for f in [
        "s_restricted.txt",
        "s_regional.txt",
        "v_weights.txt",
        "mass.txt",
        "eigenvalues.txt",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let eig = fs::read_to_string(dir.path().join("eigenvalues.txt")).unwrap();
    assert_eq!(eig.lines().count(), 7);
}

#[test]
fn operators_suite_passes_and_unknown_suite_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = frachem(&["suite", "operators", cfg.to_str().unwrap()], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 2);
    assert!(dir.path().join("suite_operators.txt").is_file());

    let out = frachem(&["suite", "bogus", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
