use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn leoris(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leoris")).args(args).env("MT_THREADS", "2").output().expect("binary runs")
}

fn scenario(dir: &Path, json: &str) -> PathBuf {
    let p = dir.join("scenario.json");
    std::fs::write(&p, json).unwrap();
    p
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_scenario_exits_2_naming_the_path() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = leoris(&["track", "--scenario", "/no/such/scenario.json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/scenario.json"));
}

#[test]
fn malformed_scenario_exits_2() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), r#"{"steps": "many"}"#);
    let o = leoris(&["montecarlo", "--scenario", sc.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn desk_track_writes_parseable_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let o = leoris(&["track", "--belief", "oracle", "--seed", "11", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&out.join("track.csv"));
    assert_eq!(header[..2], ["step", "segment"]);
    assert!(header.contains(&"nees".to_string()));
    assert_eq!(rows.len(), 60);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    for key in ["position_rmse", "velocity_rmse", "orientation_rmse"] {
        assert!(summary["overall"][key].as_f64().unwrap().is_finite(), "{key}");
    }
    for seg in ["rural", "suburban", "urban_invisible", "urban_visible"] {
        assert!(summary["segments"][seg]["position_rmse"].as_f64().unwrap().is_finite(), "{seg}");
    }
    assert!(summary["runtime_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn track_is_byte_identical_for_equal_seeds() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), r#"{"steps": 12}"#);
    let run = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        let o = leoris(&["track", "--scenario", sc.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out.join("track.csv")).unwrap()
    };
    assert_eq!(run("a", "3"), run("b", "3"));
    assert_ne!(run("a", "3"), run("c", "4"));
}

#[test]
fn filter_failure_exits_3_with_the_step() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), r#"{"steps": 4, "filter": {"alpha": 0.0}}"#);
    let o = leoris(&["track", "--scenario", sc.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("step 1"), "{}", stderr(&o));
    let o = leoris(&[
        "montecarlo",
        "--scenario",
        sc.to_str().unwrap(),
        "--trials",
        "2",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn crb_sweep_rows_and_trends() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("crb");
    let o = leoris(&[
        "crb-sweep",
        "--transmissions",
        "1,2",
        "--sats",
        "3",
        "--regions",
        "rural",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&out.join("crb.csv"));
    assert_eq!(header, ["G", "S", "K", "region", "crb_phi_d"]);
    assert_eq!(rows.len(), 2);

    let o =
        leoris(&["crb-sweep", "--transmissions", "2,4,8", "--regions", "rural,urban", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = read_csv(&out.join("crb.csv"));
    let crb = |g: &str, s: &str, region: &str| -> f64 {
        rows.iter().find(|r| r[0] == g && r[1] == s && r[3] == region).unwrap()[4].parse().unwrap()
    };
    for s in ["1", "2", "3"] {
        for region in ["rural", "urban"] {
            assert!(crb("4", s, region) <= crb("2", s, region));
            assert!(crb("8", s, region) <= crb("4", s, region));
        }
        for g in ["2", "4", "8"] {
            assert!(crb(g, s, "urban") >= crb(g, s, "rural"), "G={g} S={s}");
        }
    }
}

#[test]
fn empty_sweep_grid_exits_2() {
    let tmp = TempDir::new().unwrap();
    let o = leoris(&["crb-sweep", "--transmissions", "", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let sc = scenario(tmp.path(), r#"{"riss": []}"#);
    let o = leoris(&["crb-sweep", "--scenario", sc.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn montecarlo_groups_schema_and_rerun() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), r#"{"steps": 10}"#);
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = leoris(&[
            "montecarlo",
            "--scenario",
            sc.to_str().unwrap(),
            "--trials",
            "2",
            "--variant",
            "riemannian,euclidean",
            "--belief",
            "oracle",
            "--ris",
            "1",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let a = run("a");
    let (header, rows) = read_csv(&a.join("metrics.csv"));
    assert_eq!(header[..3], ["trial", "step", "variant"]);
    let groups: BTreeSet<(String, String)> = rows.iter().map(|r| (r[0].clone(), r[2].clone())).collect();
    assert_eq!(groups.len(), 4);
    assert!(rows.iter().all(|r| r[2] == "riemannian" || r[2] == "euclidean"));
    assert!(rows.iter().all(|r| ["identity", "fim_approx", "oracle"].contains(&r[3].as_str())));
    let (cdf_header, cdf) = read_csv(&a.join("cdf.csv"));
    assert_eq!(cdf_header, ["variant", "belief", "ris_count", "quantity", "trial_rmse", "cdf"]);
    assert_eq!(cdf.len(), 2 * 3 * 2);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["variants"].as_array().unwrap().len(), 2);

    let b = run("b");
    for f in ["metrics.csv", "cdf.csv", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}
