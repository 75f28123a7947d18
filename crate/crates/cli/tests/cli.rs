use assert_cmd::Command;

fn gelfand() -> Command {
    Command::cargo_bin("gelfand").unwrap()
}

const SHORT: &str = r#"
name = "short"
domain = "disk"
V = "1"
m = 1
solver = "1d"

[schedule]
start = 10.0
end = 20.0
step = 2.0

[grid]
n = 512

[eigen]
count = 4

[checks.exact_branch]
[checks.band_gap]

[output]
jsonl = "short.jsonl"
"#;

#[test]
fn green_prints_disk_values() {
    let out = gelfand().args(["green", "--x", "0.5,0", "--y", "0.1,0.2"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["R_x"].as_f64().unwrap() - 0.75f64.ln() / (2.0 * std::f64::consts::PI)).abs() < 1e-12);
}

#[test]
fn verify_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.toml");
    std::fs::write(&cfg, SHORT).unwrap();
    gelfand().arg("verify").arg(&cfg).assert().code(0);
    let jsonl = dir.path().join("short.jsonl");
    assert!(jsonl.exists());
    let csv = dir.path().join("short.csv");
    let out = gelfand().arg("report").arg(&jsonl).arg("--csv").arg(&csv).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("6 rows, 2/2 checks passed"));
    assert!(std::fs::read_to_string(csv).unwrap().starts_with("schema_v1,config_hash"));
}

#[test]
fn failed_check_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.toml");
    std::fs::write(&cfg, SHORT.replace("[checks.band_gap]", "[checks.band_gap]\nband = 5.0")).unwrap();
    gelfand().arg("verify").arg(&cfg).assert().code(2);
}

#[test]
fn malformed_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, SHORT.replace("count = 4", "count = 2")).unwrap();
    gelfand().arg("verify").arg(&cfg).assert().code(1);
    gelfand().args(["verify", "/nonexistent.toml"]).assert().code(1);
    gelfand().args(["eigs", "--V", "exp(x1)", "--s", "2"]).assert().code(1);
}
