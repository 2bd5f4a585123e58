use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crowdtruth"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("crowdtruth-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn write_fixture(dir: &Path, name: &str) -> PathBuf {
    let out = run(bin().args(["fixture", name]));
    assert!(out.status.success());
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, out.stdout).unwrap();
    path
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn discover_then_auction_pipeline() {
    let dir = scratch("pipeline");
    let inst = write_fixture(&dir, "table1");
    let disc = dir.join("discover.json");
    let out = run(bin()
        .arg("discover")
        .arg(&inst)
        .args(["--sim", "edit", "--rho", "0.2", "--r", "0.8", "-o"])
        .arg(&disc));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let d: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&disc).unwrap()).unwrap();
    assert_eq!(d["truth"]["values"]["Dewitt"], "MSR");
    assert!(d["iterations"].as_u64().unwrap() <= 100);

    let out = run(bin().arg("auction").arg(&inst).arg(&disc));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = json(&out);
    assert!(!a["winners"].as_array().unwrap().is_empty());
    assert!(a["total_payment"].as_f64().unwrap() >= a["social_cost"].as_f64().unwrap() - 1e-9);
}

#[test]
fn auction_fixture_outputs() {
    let dir = scratch("auction");
    let inst = write_fixture(&dir, "auction");
    let acc = dir.join("acc.json");
    std::fs::write(&acc, r#"{"1":{"t":0.6},"2":{"t":0.5},"3":{"t":0.5}}"#).unwrap();

    let ra = json(&run(bin().arg("auction").arg(&inst).arg(&acc)));
    assert_eq!(ra["winners"], serde_json::json!(["2", "1"]));
    assert_eq!(ra["payments"]["1"], 4.0);
    assert_eq!(ra["payments"]["2"], 4.0);

    let opt = json(&run(bin().arg("auction").arg(&inst).arg(&acc).args(["--algo", "opt"])));
    assert_eq!(opt["social_cost"], 5.0);

    let out = run(bin()
        .arg("probe")
        .arg(&inst)
        .arg(&acc)
        .args(["--worker", "1", "--grid", "0.5:1.5:21"]));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 22);
    assert!(text.starts_with("factor,bid,won,payment,utility"));
}

#[test]
fn mv_and_matrix_subcommands() {
    let dir = scratch("mv");
    let inst = write_fixture(&dir, "table1");
    let mv = json(&run(bin().arg("discover").arg(&inst).args(["--algo", "mv", "--sim", "edit", "--rho", "0.5"])));
    assert_eq!(mv["truth"]["values"]["Dewitt"], "UWisc");
    let out = run(bin().arg("matrix").arg(&inst));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().nth(1), Some("1,MIT,MSR,MSR,UCI,Google"));
}

#[test]
fn simulate_writes_rows_and_summary() {
    let dir = scratch("simulate");
    let spec = dir.join("spec.json");
    std::fs::write(
        &spec,
        r#"{"generator":{"n":10,"m":12,"copier_count":2,"seed":3},"algorithms":["DATE","MV","RA"],"seeds":1}"#,
    )
    .unwrap();
    let rows = dir.join("rows.csv");
    let summary = dir.join("summary.csv");
    let out = run(bin()
        .arg("simulate")
        .arg(&spec)
        .args(["--seeds", "2", "--out"])
        .arg(&rows)
        .arg("--summary")
        .arg(&summary));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&rows).unwrap().lines().count(), 7);
    assert_eq!(std::fs::read_to_string(&summary).unwrap().lines().count(), 4);
}

#[test]
fn exit_codes() {
    let dir = scratch("exit");
    let bad = dir.join("bad.json");
    std::fs::write(
        &bad,
        r#"{"tasks":[{"task_id":"t","theta":-1}],"workers":[{"worker_id":1,"task_set":["t"],"bid_price":1,"values":{"t":["x"]}}]}"#,
    )
    .unwrap();
    assert_eq!(run(bin().arg("discover").arg(&bad)).status.code(), Some(2));
    assert_eq!(run(bin().args(["discover", "--alpha", "1.5"]).arg(&bad)).status.code(), Some(2));

    let inst = write_fixture(&dir, "auction");
    let acc = dir.join("weak.json");
    std::fs::write(&acc, r#"{"1":{"t":0.2},"2":{"t":0.2},"3":{"t":0.2}}"#).unwrap();
    assert_eq!(run(bin().arg("auction").arg(&inst).arg(&acc)).status.code(), Some(3));

    let big = dir.join("big.json");
    let workers: Vec<String> = (1..=21)
        .map(|i| format!(r#"{{"worker_id":{i},"task_set":["t"],"bid_price":{i},"values":{{"t":["x"]}}}}"#))
        .collect();
    std::fs::write(&big, format!(r#"{{"tasks":[{{"task_id":"t","theta":1}}],"workers":[{}]}}"#, workers.join(","))).unwrap();
    let big_acc = dir.join("big_acc.json");
    let entries: Vec<String> = (1..=21).map(|i| format!(r#""{i}":{{"t":0.5}}"#)).collect();
    std::fs::write(&big_acc, format!("{{{}}}", entries.join(","))).unwrap();
    assert_eq!(run(bin().arg("auction").arg(&big).arg(&big_acc).args(["--algo", "opt"])).status.code(), Some(4));
    assert_eq!(run(bin().arg("discover").arg(&big).args(["--algo", "ed"])).status.code(), Some(4));
}
