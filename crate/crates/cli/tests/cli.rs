// SPDX-License-Identifier: Apache-2.0

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_procnet");

const SMALL: &str = "n_issuers = 30\nn_winners = 60\np_intra = 0.2\nweight = 2\n\
n_cpv_classes = 4\nrisk_regime = uniform\np_base = 0.3\n";

fn procnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = procnet(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

/// Synthetic market for `country`, written to `<dir>/<name>`.
fn synth(dir: &Path, name: &str, country: &str, seed: &str) {
    std::fs::write(dir.join("small.cfg"), SMALL).unwrap();
    let out = ok(dir, &["synth", "--config", "small.cfg", "--seed", seed]);
    let text = String::from_utf8(out.stdout).unwrap().replace(",XX,", &format!(",{country},"));
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, "a.csv", "HU", "1");
    assert_eq!(procnet(dir, &["stats", "--bogus"]).status.code(), Some(2));
    assert_eq!(procnet(dir, &["null", "--input", "a.csv", "--out", "n"]).status.code(), Some(2));

    let mut both = read(dir.join("a.csv"));
    let b = read(dir.join("a.csv")).replace(",HU,", ",CZ,").replace("C0", "D0");
    both.push_str(b.split_once('\n').unwrap().1);
    std::fs::write(dir.join("both.csv"), both).unwrap();
    let out = procnet(dir, &["core", "--input", "both.csv", "--out", "c"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--country"));
    ok(dir, &["core", "--input", "both.csv", "--country", "CZ", "--out", "c"]);
}

#[test]
fn data_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(procnet(dir, &["stats", "--input", "missing.csv", "--out", "s"]).status.code(), Some(1));
    std::fs::write(dir.join("bad.csv"), "just,a,header\n").unwrap();
    assert_eq!(procnet(dir, &["stats", "--input", "bad.csv", "--out", "s"]).status.code(), Some(1));
}

#[test]
fn synth_pipes_into_null() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("small.cfg"), SMALL).unwrap();
    let market = ok(dir, &["synth", "--config", "small.cfg", "--seed", "3"]).stdout;
    let mut child = Command::new(BIN)
        .current_dir(dir)
        .args(["null", "--input", "-", "--seed", "5", "--reps", "200", "--statistic", "global-sb"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&market).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["statistic"], "global_sb");
    assert_eq!(v["ratio"], 1.0);
    assert_eq!(v["n_reps"], 200);
}

#[test]
fn null_runs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, "m.csv", "HU", "4");
    let run = || {
        ok(dir, &["null", "--input", "m.csv", "--seed", "9", "--reps", "100", "--samples", "--out", "n"]);
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.join("n"))
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        std::fs::remove_dir_all(dir.join("n")).unwrap();
        files
    };
    let first = run();
    assert!(first.len() >= 3);
    assert_eq!(first, run());
}

#[test]
fn ingest_and_stats_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, "m.csv", "HU", "2");
    ok(dir, &["ingest", "--input", "m.csv", "--out", "ing"]);
    for f in ["contracts.csv", "entity_map.csv", "rejections.csv", "manifest.json"] {
        assert!(dir.join("ing").join(f).exists(), "{f}");
    }
    let n_in = read(dir.join("m.csv")).lines().count();
    assert_eq!(read(dir.join("ing/contracts.csv")).lines().count(), n_in);

    ok(dir, &["stats", "--input", "ing/contracts.csv", "--years", "2014", "--out", "st"]);
    let stats = read(dir.join("st/stats.csv"));
    assert_eq!(stats.lines().count(), 2);
    assert!(read(dir.join("st/powerlaw.csv")).lines().count() >= 2);
    let manifest: serde_json::Value = serde_json::from_str(&read(dir.join("st/manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "stats");
    assert_eq!(manifest["inputs"][0]["path"], "ing/contracts.csv");
}

#[test]
fn report_covers_each_country() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, "a.csv", "HU", "1");
    synth(dir, "b.csv", "CZ", "2");
    let mut both = read(dir.join("a.csv"));
    both.push_str(read(dir.join("b.csv")).replace("C0", "D0").split_once('\n').unwrap().1);
    std::fs::write(dir.join("both.csv"), both).unwrap();
    std::fs::write(dir.join("cpi.csv"), "country,value\nHU,43\nCZ,51\n").unwrap();

    ok(dir, &["report", "--input", "both.csv", "--seed", "1", "--reps", "50", "--out", "full"]);
    assert_eq!(read(dir.join("full/sb_rates.csv")).lines().count(), 3);
    assert!(dir.join("full/core_single_bidding.csv").exists());
    assert!(dir.join("full/sb_clustering.csv").exists());

    ok(dir, &[
        "report", "--input", "both.csv", "--seed", "1", "--no-null",
        "--indicator", "cpi:higher_is_better:cpi.csv", "--n-boot", "50", "--out", "quick",
    ]);
    assert!(!dir.join("quick/core_single_bidding.csv").exists());
    assert!(!dir.join("quick/sb_clustering.csv").exists());
    let corr = read(dir.join("quick/indicator_correlations.csv"));
    assert!(corr.starts_with("indicator,measure,year,polarity,n,r,"));
}

#[test]
fn correlate_reads_indicator_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let countries = ["AT", "BE", "CZ", "DE", "HU"];
    let mut all = String::new();
    for (k, c) in countries.iter().enumerate() {
        synth(dir, "one.csv", c, &(k + 1).to_string());
        let text = read(dir.join("one.csv")).replace("C0", &format!("{c}0"));
        if all.is_empty() {
            all = text;
        } else {
            all.push_str(text.split_once('\n').unwrap().1);
        }
    }
    std::fs::write(dir.join("all.csv"), all).unwrap();
    std::fs::write(dir.join("cpi.csv"), "country,value\nAT,75\nBE,76\nCZ,51\nDE,79\nHU,43\n").unwrap();
    ok(dir, &[
        "correlate", "--input", "all.csv", "--indicator", "cpi:higher_is_better:cpi.csv",
        "--seed", "3", "--n-boot", "200", "--out", "corr",
    ]);
    let text = read(dir.join("corr/correlations.csv"));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert!(header.contains(&"r"));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().any(|r| r.contains("cpi")));
}
