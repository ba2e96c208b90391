use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

const MODEL: &str = r#"{"input_len": 3, "layers": [
  {"kind": "fully_connected", "d_in": 3, "d_out": 4, "weights": [1, -2, 0, 3, 1, 1, -1, 0, 2, 0, -3, 1]},
  {"kind": "relu"},
  {"kind": "fully_connected", "d_in": 4, "d_out": 2, "weights": [1, 0, -1, 2, -2, 1, 1, 0]}]}"#;

// Plaintext pass:
//   ( 1, 2, 3): hidden (-3, 8, 5,-3) relu (0, 8, 5, 0) logits (-5, 13) -> 1, label 1
//   ( 2, 0, 1): hidden ( 2, 7, 0, 1) relu (2, 7, 0, 1) logits ( 4,  3) -> 0, label 0
//   (-1, 1, 0): hidden (-3,-2, 1,-3) relu (0, 0, 1, 0) logits (-1,  1) -> 1, label 0
//   ( 0, 1, 1): hidden (-2, 2, 2,-2) relu (0, 2, 2, 0) logits (-2,  4) -> 1, label 1
// Group a: 0 errors of 2; group b: 1 of 2; gap 1/2.
const DATA: &str = "x1,x2,x3,label,group\n1,2,3,1,a\n2,0,1,0,a\n-1,1,0,0,b\n0,1,1,1,b\n";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_auditml"));
    c.env_remove("AUDITML_SEED");
    c
}

fn endpoint() -> String {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().to_string()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("model.json"), MODEL).unwrap();
    fs::write(dir.path().join("data.csv"), DATA).unwrap();
    dir
}

fn holder(dir: &Path, stage: &str, ep: &str, extra: &[&str]) -> Child {
    bin()
        .args(["holder", stage, "--model"])
        .arg(dir.join("model.json"))
        .args(["--listen", ep, "--state-dir"])
        .arg(dir.join("h"))
        .args(extra)
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap()
}

fn client(dir: &Path, stage: &str, ep: &str, extra: &[&str]) -> Output {
    bin()
        .args(["client", stage, "--dataset"])
        .arg(dir.join("data.csv"))
        .args(["--connect", ep, "--epsilon", "0.25", "--state-dir"])
        .arg(dir.join("c"))
        .arg("--report")
        .arg(dir.join("report.json"))
        .args(extra)
        .output()
        .unwrap()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn honest_audit_reports_exact_gap() {
    let dir = setup();
    let ep = endpoint();
    let mut h = holder(dir.path(), "all", &ep, &[]);
    let c = client(dir.path(), "all", &ep, &[]);
    assert_eq!(c.status.code(), Some(0), "{}", String::from_utf8_lossy(&c.stderr));
    assert_eq!(h.wait().unwrap().code(), Some(0));
    let r = report(dir.path());
    assert_eq!(r["aborted"], false);
    assert_eq!(r["efg"], "1/2");
    assert_eq!(r["fair"], false);
    assert!(String::from_utf8_lossy(&c.stdout).contains("EFG 1/2"));
}

#[test]
fn staged_audit_matches() {
    let dir = setup();
    for stage in ["offline", "online", "check"] {
        let ep = endpoint();
        let mut h = holder(dir.path(), stage, &ep, &[]);
        let c = client(dir.path(), stage, &ep, &[]);
        assert_eq!(c.status.code(), Some(0), "{stage}: {}", String::from_utf8_lossy(&c.stderr));
        assert_eq!(h.wait().unwrap().code(), Some(0), "{stage}");
    }
    assert_eq!(report(dir.path())["efg"], "1/2");
}

#[test]
fn tampered_holder_exits_with_abort_status() {
    let dir = setup();
    let ep = endpoint();
    let mut h = holder(dir.path(), "all", &ep, &["--tamper", "linear_share(2),delta=1"]);
    let c = client(dir.path(), "all", &ep, &[]);
    assert_eq!(c.status.code(), Some(2));
    assert_eq!(h.wait().unwrap().code(), Some(2));
    let r = report(dir.path());
    assert_eq!(r["aborted"], true);
    assert!(r["efg"].is_null() && r["fair"].is_null());
}

#[test]
fn parse_errors_exit_three() {
    let dir = setup();
    fs::write(dir.path().join("bad.json"), "{\"input_len\": 3, \"layers\": [}").unwrap();
    let out = bin()
        .args(["holder", "all", "--model"])
        .arg(dir.path().join("bad.json"))
        .args(["--listen", &endpoint()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json:1:"));

    let out = bin()
        .args(["holder", "all", "--model", "m.json", "--tamper", "linear_share(x)"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    let out = bin()
        .args(["holder", "all", "--model"])
        .arg(dir.path().join("model.json"))
        .args(["--tamper", "linear_share(1),delta=1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "layer 1 is a ReLU");

    let out = bin().args(["client", "sideways"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));

    fs::write(dir.path().join("bad.csv"), "1,2,3,0,a\n1,oops,3,0,a\n").unwrap();
    let out = bin()
        .args(["client", "all", "--dataset"])
        .arg(dir.path().join("bad.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv:2: field 2"));
}

#[test]
fn seed_override_must_be_numeric() {
    let dir = setup();
    let out = bin()
        .env("AUDITML_SEED", "soon")
        .args(["holder", "all", "--model"])
        .arg(dir.path().join("model.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("holder"));
}
