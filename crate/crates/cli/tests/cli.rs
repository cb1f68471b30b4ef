use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
seed = 5

[layout]
placement = "explicit"
n_caches = 2
positions = [[300.0, 0.0], [-250.0, 150.0]]

[value]
scenarios = 4000
learn_events = 10000

[sim]
seeds = 20

[sweep]
param = "lambda_t"
values = [1.0, 2.0, 5.0, 10.0, 20.0]

[[files]]
arrival_rate = 0.05
lifetime = 100.0
num_segments = 2
segment_bits = 14e6
"#;

fn cachecast(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("exp.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_cachecast"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

#[test]
fn empty_catalog_is_an_error() {
    let dir = TempDir::new().unwrap();
    let out = cachecast(dir.path(), "seed = 1\nfiles = []\n", &["build-tables"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_key_is_an_error() {
    let dir = TempDir::new().unwrap();
    let cfg = SMALL.replace("[sim]", "[sim]\nseed_count = 3");
    assert!(!cachecast(dir.path(), &cfg, &["simulate"]).status.success());
}

#[test]
fn tables_rebuild_byte_identical() {
    let dir = TempDir::new().unwrap();
    ok(&cachecast(dir.path(), SMALL, &["build-tables"]));
    let first = read(dir.path(), "table.csv");
    ok(&cachecast(
        dir.path(),
        SMALL,
        &["--workers", "3", "build-tables"],
    ));
    assert_eq!(first, read(dir.path(), "table.csv"));
    assert!(first.starts_with("# cachecast value-table v1\n"));
}

#[test]
fn bound_check_passes_and_reports_every_state() {
    let dir = TempDir::new().unwrap();
    ok(&cachecast(dir.path(), SMALL, &["bound-check"]));
    let csv = read(dir.path(), "bound_check.csv");
    // 16 states of 2 caches x 2 segments at stages 0..=5.
    assert_eq!(csv.lines().count(), 1 + 16 * 6);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn corrupted_table_fails_bound_check() {
    let dir = TempDir::new().unwrap();
    ok(&cachecast(dir.path(), SMALL, &["build-tables"]));
    let table = read(dir.path(), "table.csv");
    // Halve every v_one entry so missing bits look cheaper than none.
    let mut lines: Vec<String> = table.lines().map(String::from).collect();
    for line in lines.iter_mut().skip(3) {
        let mut f: Vec<String> = line.split(',').map(String::from).collect();
        for v in f.iter_mut().skip(2) {
            *v = (v.parse::<f64>().unwrap() * 0.5).to_string();
        }
        *line = f.join(",");
    }
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let out = cachecast(
        dir.path(),
        SMALL,
        &["bound-check", "--table", bad.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(read(dir.path(), "bound_check.csv").contains(",false"));
}

#[test]
fn simulate_emits_one_row_per_policy() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{SMALL}\n[output]\nevent_log = true\n");
    let out = cachecast(
        dir.path(),
        &cfg,
        &["--policies", "proposed,baseline1,baseline2", "simulate"],
    );
    ok(&out);
    let csv = read(dir.path(), "results.csv");
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "sweep_param,policy,mean_cost,stderr,n_seeds");
    assert_eq!(rows.len(), 4);
    for (row, name) in rows[1..].iter().zip(["proposed", "baseline1", "baseline2"]) {
        assert!(row.starts_with(&format!(",{name},")));
        assert!(row.ends_with(",20"));
    }
    let log = read(dir.path(), "events_proposed.jsonl");
    assert!(!log.is_empty());
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["policy"], "proposed");
        assert_eq!(v["kind"], "request");
    }
}

#[test]
fn sweep_emits_grid_times_policies_rows() {
    let dir = TempDir::new().unwrap();
    ok(&cachecast(dir.path(), SMALL, &["sweep"]));
    let csv = read(dir.path(), "sweep.csv");
    assert_eq!(csv.lines().count(), 1 + 5 * 3);
    assert_eq!(
        read(dir.path(), "per_seed.csv").lines().count(),
        1 + 5 * 3 * 20
    );
}

#[test]
fn seed_override_changes_results_deterministically() {
    let dir = TempDir::new().unwrap();
    let run = |seed: &str| {
        ok(&cachecast(
            dir.path(),
            SMALL,
            &["--seed", seed, "--policies", "proposed", "simulate"],
        ));
        read(dir.path(), "results.csv")
    };
    let a = run("1");
    assert_eq!(a, run("1"));
    assert_ne!(a, run("2"));
}

#[test]
fn learn_converges_on_uniform_users() {
    let dir = TempDir::new().unwrap();
    ok(&cachecast(dir.path(), SMALL, &["learn"]));
    let csv = read(dir.path(), "learn.csv");
    let last = csv.lines().last().unwrap();
    let f: Vec<&str> = last.split(',').collect();
    assert_eq!(f[0], "10000");
    let mean_err: f64 = f[2].parse().unwrap();
    assert!(mean_err < 0.02, "mean relative error {mean_err}");
    let first: f64 = csv
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!(first > mean_err);
    assert!(read(dir.path(), "learned_table.csv").starts_with("# cachecast value-table v1\n"));
}
