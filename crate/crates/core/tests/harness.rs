use std::path::PathBuf;

use gelfand_core::harness::*;
use proptest::prelude::*;

fn config(name: &str) -> StudyConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.toml"));
    StudyConfig::load(path).unwrap()
}

/// A short V ≡ 1 study that still fills every rate fit.
fn short_v1() -> StudyConfig {
    let mut cfg = config("disk_m1_V1");
    cfg.schedule = ScheduleConfig {
        start: 14.0,
        end: 24.0,
        step: 2.0,
    };
    cfg.grid.n = Some(512);
    cfg.checks.retain(|k, _| ["exact_branch", "band_gap", "orthogonality"].contains(&k.as_str()));
    cfg
}

fn jsonl(report: &StudyReport) -> Vec<u8> {
    let mut out = Vec::new();
    write_jsonl(report, &mut out).unwrap();
    out
}

#[test]
fn bundled_configs_validate() {
    for name in ["disk_m1_V1", "disk_m1_Va1", "disk_m1_Va2", "disk_m2_sym"] {
        let cfg = config(name);
        assert_eq!(cfg.name, name);
        assert_eq!(cfg.hash().len(), 16);
    }
}

#[test]
fn malformed_configs_are_rejected() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/malformed");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let err = StudyConfig::load(&path).expect_err(&path.display().to_string());
        assert!(matches!(err, HarnessError::Config(_) | HarnessError::Io { .. }), "{}: {err}", path.display());
        seen += 1;
    }
    assert!(seen >= 15);
}

#[test]
fn hash_ignores_output_paths() {
    let a = config("disk_m1_V1");
    let mut b = a.clone();
    b.output.jsonl = Some("elsewhere.jsonl".into());
    assert_eq!(a.hash(), b.hash());
    b.seed += 1;
    assert_ne!(a.hash(), b.hash());
}

#[test]
fn reports_are_deterministic_and_round_trip() {
    let cfg = short_v1();
    let a = run_study(&cfg).unwrap();
    let b = run_study(&cfg).unwrap();
    assert_eq!(jsonl(&a), jsonl(&b));
    assert!(a.passed(), "{:#?}", a.assertions);
    assert_eq!(a.exit_code(), 0);
    assert!(a.assertions.iter().all(|x| x.config_hash == a.config_hash && x.measured.is_some()));

    let back = read_jsonl(&jsonl(&a)[..]).unwrap();
    assert_eq!(back, a);

    let mut csv = Vec::new();
    write_csv(&a, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with(&format!("schema_v{SCHEMA_VERSION},config_hash,s,lambda")));
    assert_eq!(lines.count(), a.rows.len());

    let mut empty = a.clone();
    empty.rows.clear();
    let mut csv = Vec::new();
    write_csv(&empty, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1);

    let dir = std::env::temp_dir().join(format!("gelfand-emit-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    emit(&a, dir.join("r.jsonl"), Format::Jsonl).unwrap();
    emit(&a, dir.join("r.csv"), Format::Csv).unwrap();
    let file = std::io::BufReader::new(std::fs::File::open(dir.join("r.jsonl")).unwrap());
    assert_eq!(read_jsonl(file).unwrap(), a);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn schema_token_is_checked() {
    let report = run_study(&short_v1()).unwrap();
    let text = String::from_utf8(jsonl(&report)).unwrap();
    assert!(text.starts_with(&format!("{{\"record\":\"header\",\"schema\":\"gelfand-report/{SCHEMA_VERSION}\"")));
    let bumped = text.replacen(
        &format!("gelfand-report/{SCHEMA_VERSION}"),
        &format!("gelfand-report/{}", SCHEMA_VERSION + 1),
        1,
    );
    assert!(matches!(read_jsonl(bumped.as_bytes()), Err(HarnessError::Parse(_))));
    assert!(matches!(read_jsonl(&b""[..]), Err(HarnessError::Parse(_))));
}

#[test]
fn failed_assertion_sets_exit_code() {
    let mut cfg = short_v1();
    cfg.checks.insert(
        "exact_branch".into(),
        CheckParams {
            band: Some(1e-30),
            min_s: None,
        },
    );
    let report = run_study(&cfg).unwrap();
    assert_eq!(report.exit_code(), 2);
}

#[test]
fn weighted_study_shifts_the_second_order_constant() {
    let constant = |name: &str| {
        let mut cfg = config(name);
        cfg.checks.clear();
        run_study(&cfg).unwrap().rates.mu_constant.unwrap().value
    };
    let shift = constant("disk_m1_Va2") - constant("disk_m1_V1");
    assert!((shift - 1.0).abs() <= 0.15, "{shift}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
        let _ = StudyConfig::from_toml(&text);
    }

    #[test]
    fn mutated_lines_never_panic(line in 0usize..40, junk in "[a-z0-9 =.\\[\\]\"-]{0,20}") {
        let base = std::fs::read_to_string(
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/disk_m1_V1.toml"),
        ).unwrap();
        let mut lines: Vec<&str> = base.lines().collect();
        let k = line % lines.len();
        lines[k] = &junk;
        let _ = StudyConfig::from_toml(&lines.join("\n"));
    }

    #[test]
    fn power_fit_recovers_exponent(p in 0.2f64..3.0, c in 0.1f64..10.0) {
        let series: Vec<(f64, f64)> = (3..9).map(|k| { let l = 10f64.powi(-k); (l, c * l.powf(p)) }).collect();
        let fit = fit_rate(&series, FitModel::Power).unwrap();
        prop_assert!((fit.value - p).abs() < 1e-9);
    }
}
