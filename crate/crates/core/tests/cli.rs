use std::path::Path;
use std::process::{Command, Output};

use mslab::{Registry, SpacePartition};

fn mslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mslab"))
        .args(args)
        .env_remove("MSLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mslab(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_sample(dir: &Path, name: &str, seed: u64) -> String {
    let data = Registry::builtin().get("trimodal-iii").unwrap().model.sample(120, seed).unwrap();
    let path = dir.join(name);
    data.write_csv(&path).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn models_list_and_show() {
    let list = ok(&["models", "list"]);
    assert_eq!(list.lines().count(), 5);
    assert!(list.contains("broken-ring\tring\t5 clusters"));
    let show: serde_json::Value = serde_json::from_str(&ok(&["models", "show", "eye"])).unwrap();
    assert_eq!(show["true_clusters"], 5);
    assert_eq!(mslab(&["models", "show", "nope"]).status.code(), Some(1));
}

#[test]
fn select_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_sample(dir.path(), "x.csv", 1);
    let r: serde_json::Value = serde_json::from_str(&ok(&["select", "--data", &data, "--selector", "ns"])).unwrap();
    assert_eq!(r["selector"], "ns");
    let dry: serde_json::Value =
        serde_json::from_str(&ok(&["select", "--data", &data, "--selector", "scvd", "--dry-run"])).unwrap();
    assert!(dry["criterion"].as_f64().is_some());
    let out = dir.path().join("sel.json");
    ok(&["--threads", "1", "select", "--data", &data, "--selector", "piu", "--output", out.to_str().unwrap()]);
    assert!(std::fs::read_to_string(out).unwrap().contains("\"piu\""));
}

#[test]
fn cluster_and_distance() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_sample(dir.path(), "x.csv", 2);
    let labels = ok(&["cluster", "--data", &data, "--h", "0.2,0,0,0.2"]);
    assert_eq!(labels.lines().next().unwrap(), "x1,x2,label");
    assert_eq!(labels.lines().count(), 121);

    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let summary = p("s.json");
    ok(&[
        "cluster", "--data", &data, "--h", "0.2,0,0,0.2", "--grid", "15",
        "--partition-out", &p("a.csv"), "--summary-out", &summary, "--labels-out", &p("l.csv"),
    ]);
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert!(s["clusters"].as_u64().unwrap() >= 1);
    let part = SpacePartition::read_csv(p("a.csv")).unwrap();
    assert_eq!(part.labels().len(), 15 * 15);

    let d: serde_json::Value = serde_json::from_str(&ok(&["distance", &p("a.csv"), &p("a.csv")])).unwrap();
    assert_eq!(d["distance"], 0.0);

    let script = ok(&["plot", &p("a.csv"), "--out", dir.path().to_str().unwrap()]);
    assert!(Path::new(script.trim()).exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mslab(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(mslab(&["select", "--data", "/no/such/file.csv", "--selector", "ns"]).status.code(), Some(1));
    let data = write_sample(dir.path(), "x.csv", 3);
    assert_eq!(mslab(&["select", "--data", &data, "--selector", "qq"]).status.code(), Some(1));
    assert_eq!(mslab(&["cluster", "--data", &data, "--h", "1,2,2,1"]).status.code(), Some(1));

    // A sample with all points equal has a singular covariance.
    let flat = dir.path().join("flat.csv");
    std::fs::write(&flat, "x1,x2\n1,1\n1,1\n1,1\n").unwrap();
    let out = mslab(&["select", "--data", flat.to_str().unwrap(), "--selector", "ns"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
