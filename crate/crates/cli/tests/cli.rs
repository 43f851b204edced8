use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ccstress(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccstress"))
        .args(args)
        .env_remove("CCSTRESS_OUT")
        .env_remove("CCSTRESS_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: [&str; 12] = [
    "--pop",
    "6",
    "--islands",
    "2",
    "--gens",
    "2",
    "--seed",
    "7",
    "--set",
    "sim.duration_us=3000000",
    "--set",
    "ga.traffic_budget=200",
];

fn fuzz(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["fuzz", "--out", dir.to_str().unwrap()];
    args.extend(SMALL);
    args.extend(extra);
    ccstress(&args)
}

#[test]
fn fuzz_writes_artifacts_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = fuzz(&a, &["--cca", "reno"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(fuzz(&b, &["--cca", "reno", "--threads", "1"])
        .status
        .success());

    for f in [
        "config.txt",
        "scores.csv",
        "summary.txt",
        "best/island_00.json",
        "best/island_01.json",
    ] {
        assert!(a.join(f).is_file(), "missing {f}");
    }
    for g in 0..=2 {
        let name = format!("checkpoints/gen_{g:05}.json");
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name}"
        );
    }
    let config = fs::read_to_string(a.join("config.txt")).unwrap();
    assert!(config.contains("ga.seed = 7"));
    assert!(config.contains("cca.kind = reno"));
}

#[test]
fn saved_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(fuzz(&a, &[]).status.success());
    let cfg = a.join("config.txt");
    let out = ccstress(&[
        "fuzz",
        "--out",
        b.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let last = "checkpoints/gen_00002.json";
    assert_eq!(
        fs::read(a.join(last)).unwrap(),
        fs::read(b.join(last)).unwrap()
    );
}

#[test]
fn link_mode_warns_about_crossovers() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fuzz(tmp.path(), &["--mode", "link", "--crossover-frac", "0.3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("link mode does not use crossovers"));
    assert!(tmp.path().join("best/island_00.mahimahi").is_file());
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fuzz(tmp.path(), &["--set", "ga.population_size=lots"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("ga.population_size"));

    let out = fuzz(tmp.path(), &["--set", "ga.migration_fraction=2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("ga.migration_fraction"));

    assert_eq!(ccstress(&["fuzz", "--no-such-flag"]).status.code(), Some(1));
}

#[test]
fn resume_extends_and_rejects_corruption() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    assert!(fuzz(&dir, &[]).status.success());
    let d = dir.to_str().unwrap();

    let out = ccstress(&["resume", d, "--gens", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.join("checkpoints/gen_00003.json").is_file());

    let out = ccstress(&["report", d]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.join("report/throughput.csv").is_file());

    fs::write(
        dir.join("checkpoints/gen_00003.json"),
        "{\"version\": 1, \"islands\": [",
    )
    .unwrap();
    let out = ccstress(&["resume", d, "--gens", "4"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));

    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    assert_eq!(
        ccstress(&["resume", empty.to_str().unwrap()]).status.code(),
        Some(3)
    );
}

#[test]
fn export_round_trip_and_refusal() {
    let tmp = tempfile::tempdir().unwrap();
    let mm = tmp.path().join("link.txt");
    fs::write(&mm, "1\n1\n3\n").unwrap();
    let json = tmp.path().join("link.json");
    let out = ccstress(&[
        "export",
        mm.to_str().unwrap(),
        "--to",
        "json",
        "--duration-us",
        "5000",
        "-o",
        json.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let back = ccstress(&["export", json.to_str().unwrap(), "--to", "mahimahi"]);
    assert_eq!(String::from_utf8_lossy(&back.stdout), "1\n1\n3\n");

    let traffic = tmp.path().join("traffic.json");
    fs::write(
        &traffic,
        r#"{"mode":"traffic","duration_us":5000,"packet_budget":3,"timestamps_us":[10,20]}"#,
    )
    .unwrap();
    let out = ccstress(&["export", traffic.to_str().unwrap(), "--to", "mahimahi"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("traffic"));
}

#[test]
fn replay_emits_csvs_and_reports_bad_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = tmp.path().join("empty.json");
    fs::write(
        &trace,
        r#"{"mode":"traffic","duration_us":2000000,"packet_budget":0,"timestamps_us":[]}"#,
    )
    .unwrap();
    let out_dir = tmp.path().join("replay");
    let out = ccstress(&[
        "replay",
        trace.to_str().unwrap(),
        "--cca",
        "bbr-patched",
        "--set",
        "sim.duration_us=2000000",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("utilization"));
    for f in [
        "throughput.csv",
        "delay.csv",
        "queue.csv",
        "events.csv",
        "summary.txt",
        "config.txt",
    ] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
    let header = fs::read_to_string(out_dir.join("throughput.csv")).unwrap();
    assert!(header.starts_with("window_start_us,window_end_us,throughput_mbps\n"));

    let bad = tmp.path().join("bad.txt");
    fs::write(&bad, "1\n2\nx\n").unwrap();
    let out = ccstress(&["replay", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}
