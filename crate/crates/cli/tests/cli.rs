use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clocksync_cli::{verify, RunManifest, MANIFEST_NAME};

fn clocksync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clocksync"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&read(&dir.join(MANIFEST_NAME))).unwrap()
}

#[test]
fn collective_writes_tables_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = clocksync(&[
        "collective",
        "--pattern",
        "broadcast",
        "--pattern",
        "ring-shift-copy",
        "--nodes",
        "8",
        "--out",
        out,
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let summary = read(&dir.path().join("summary.csv"));
    assert_eq!(
        summary,
        "pattern,N,rounds,steps,valid\nbroadcast,8,3,3,true\nring-shift-copy,8,7,14,true\n"
    );
    let table = read(&dir.path().join("schedule_broadcast_n8.csv"));
    assert_eq!(
        table.lines().next(),
        Some("round,sender,receiver,payload_bits")
    );
    assert_eq!(table.lines().count(), 1 + 7);
    let m = manifest(dir.path());
    assert_eq!(m.subcommand, "collective");
    verify(dir.path(), &m).unwrap();
}

#[test]
fn single_node_collective_has_no_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let run = clocksync(&[
        "collective",
        "--nodes",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(run.status.success());
    for line in read(&dir.path().join("summary.csv")).lines().skip(1) {
        assert!(line.contains(",1,0,0,true"), "{line}");
    }
}

#[test]
fn zero_nodes_fails() {
    let dir = tempfile::tempdir().unwrap();
    let run = clocksync(&[
        "collective",
        "--nodes",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!run.status.success());
    assert!(String::from_utf8_lossy(&run.stderr).contains("at least one node"));
}

#[test]
fn sync_reports_every_method_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = clocksync(&[
        "sync",
        "--nodes",
        "8",
        "--seeds",
        "3,5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let table = read(&dir.path().join("sync.csv"));
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some(clocksync_cli::SYNC_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        let rounds: usize = r[3].parse().unwrap();
        let expect = match r[0] {
            "leader" => 14,
            "leader-recursive" => 6,
            "distributed" => 3,
            other => panic!("method {other}"),
        };
        assert_eq!(rounds, expect);
        let pre: i64 = r[4].parse().unwrap();
        let post: i64 = r[5].parse().unwrap();
        assert!(post < pre, "{r:?}");
    }
    assert_eq!(
        read(&dir.path().join("sync_residuals.csv")).lines().count(),
        1 + 6 * 8
    );
    assert_eq!(manifest(dir.path()).seeds, vec![3, 5]);
}

#[test]
fn unstable_links_fail_the_sync() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("noisy.toml");
    fs::write(
        &cfg,
        "[sync]\nnodes = 4\n\n[sync.latency]\nbase_latency = 10000\n\n[sync.latency.jitter]\nmin = 0\nmax = 10000000\n\n[sync.thresholds]\nmax_attempts = 1\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let run = clocksync(&[
        "sync",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!run.status.success());
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("node"), "{err}");
}

const SHORT: &str = "[common]\nagent_count = 30\nduration = 2.0\n";

#[test]
fn scenario_writes_runs_metrics_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.toml");
    fs::write(&cfg, SHORT).unwrap();
    let out = dir.path().join("out");
    let run = clocksync(&[
        "scenario",
        "--config",
        cfg.to_str().unwrap(),
        "--seeds",
        "2",
        "--scenario",
        "B",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    for p in ["proposed", "baseline"] {
        for seed in 0..2 {
            let one = read(&out.join(format!("runs/B_{p}_seed{seed}.csv")));
            let mut lines = one.lines();
            assert_eq!(
                lines.next(),
                Some("scenario,protocol,seed,t_seconds,fraction_synced")
            );
            let rows: Vec<&str> = lines.collect();
            assert_eq!(rows.len(), 20);
            let mut last_t = 0.0;
            for row in rows {
                let f: Vec<&str> = row.split(',').collect();
                assert_eq!((f[0], f[1], f[2]), ("B", p, seed.to_string().as_str()));
                let t: f64 = f[3].parse().unwrap();
                let frac: f64 = f[4].parse().unwrap();
                assert!(t > last_t);
                assert!((0.0..=1.0).contains(&frac));
                last_t = t;
            }
        }
    }
    assert_eq!(read(&out.join("metrics.csv")).lines().count(), 1 + 4 * 20);
    let agg = read(&out.join("aggregate.csv"));
    assert_eq!(
        agg.lines().next(),
        Some("scenario,protocol,runs,mean,stddev,min,max")
    );
    assert_eq!(agg.lines().count(), 3);
    let m = manifest(&out);
    assert_eq!(m.files.len(), 6);
    verify(&out, &m).unwrap();
}

#[test]
fn zero_duration_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("zero.toml");
    fs::write(&cfg, "[scenario.A]\nduration = 0.0\n").unwrap();
    let out = dir.path().join("out");
    let run = clocksync(&[
        "scenario",
        "--config",
        cfg.to_str().unwrap(),
        "--seeds",
        "1",
        "--scenario",
        "A",
        "--protocol",
        "proposed",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(
        read(&out.join("runs/A_proposed_seed0.csv")),
        "scenario,protocol,seed,t_seconds,fraction_synced\n"
    );
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.toml");
    fs::write(&cfg, SHORT).unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("out{k}"));
        let run = clocksync(&[
            "scenario",
            "--config",
            cfg.to_str().unwrap(),
            "--seeds",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(run.status.success());
        outputs.push(read(&out.join("metrics.csv")));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn malformed_config_is_rejected_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[common]\nspeed = 1.0\nbroadcast_raduis = 3.0\n").unwrap();
    let run = clocksync(&[
        "scenario",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(!run.status.success());
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(
        err.contains("line 3") && err.contains("broadcast_raduis"),
        "{err}"
    );
    assert!(!dir.path().join("o").exists());
}

#[test]
fn missing_config_and_bad_flags_fail() {
    let run = clocksync(&["scenario", "--config", "/nonexistent/cfg.toml"]);
    assert!(!run.status.success());
    assert!(!clocksync(&["scenario", "--scenario", "Z"]).status.success());
    assert!(!clocksync(&["sync", "--seeds", "0"]).status.success());
}

#[test]
fn unwritable_output_fails() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let run = clocksync(&["collective", "--out", blocker.join("sub").to_str().unwrap()]);
    assert!(!run.status.success());
}
