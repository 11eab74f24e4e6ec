use std::path::Path;
use std::process::{Command, Output};

use kaya_core::dbdl::format_dbdl;
use kaya_core::minisol::format_source;
use kaya_testkit::{fixtures_dir, gen, reference_expectations_pass, reference_runs, rng};
use proptest::prelude::*;
use serde_json::Value;

fn kaya(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kaya_cmd"))
        .args(args)
        .current_dir(fixtures_dir())
        .env_remove("KAYA_PORT")
        .output()
        .unwrap()
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/schema")
        .join(name);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&v).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn analyze_lists_variables() {
    let o = kaya(&["analyze", "snailthrone.msol"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("hatcherySnail") && text.contains("playerEarnings"));
    let o = kaya(&["analyze", "snailthrone.msol", "--format", "json"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let first = &v["variables"][0];
    assert_eq!(
        (
            first["name"].as_str(),
            first["type"].as_str(),
            first["slot"].as_str()
        ),
        (Some("marketSnail"), Some("uint256"), Some("0x0"))
    );
}

#[test]
fn analyze_syntax_error_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.msol");
    std::fs::write(&bad, "contract C {\n  uint256 x\n}").unwrap();
    let o = kaya(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(o.stdout.is_empty());
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("3:1"), "{err}");
    let o = kaya(&["analyze", bad.to_str().unwrap(), "--format", "json"]);
    let v: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(schema("error.schema.json").is_valid(&v));
    assert_eq!(v["diagnostics"][0]["line"], 3);
}

#[test]
fn run_exit_codes_and_schema() {
    let report = schema("report.schema.json");
    let ok = kaya(&[
        "run",
        "-c",
        "counter.msol",
        "-t",
        "counter.dbdl",
        "--format",
        "json",
    ]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let v: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert!(report.is_valid(&v), "{v}");

    let bad = kaya(&[
        "run",
        "-c",
        "counter.msol",
        "-t",
        "counter_failing.dbdl",
        "--format",
        "json",
    ]);
    assert_eq!(code(&bad), 1);
    let v: Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert!(report.is_valid(&v));
    let failing: Vec<&Value> = v["cases"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|c| c["expectations"].as_array().unwrap())
        .filter(|e| e["pass"] == false)
        .collect();
    assert_eq!(failing.len(), 1);
    assert_eq!(failing[0]["expr"], "Counter.count == 3");

    let text = kaya(&["run", "-c", "counter.msol", "-t", "counter_failing.dbdl"]);
    assert_eq!(code(&text), 1);
    assert!(String::from_utf8(text.stdout)
        .unwrap()
        .contains("FAIL Counter.count == 3"));
}

#[test]
fn input_errors_exit_2() {
    let errors = schema("error.schema.json");
    for args in [
        vec![
            "run",
            "-c",
            "missing.msol",
            "-t",
            "counter.dbdl",
            "--format",
            "json",
        ],
        vec![
            "run",
            "-c",
            "counter.msol",
            "-t",
            "counter.dbdl",
            "--format",
            "json",
            "--threshold",
            "1.5",
        ],
        vec![
            "run",
            "-c",
            "counter.msol",
            "-t",
            "counter.dbdl",
            "--format",
            "json",
            "--jobs",
            "0",
        ],
        vec![
            "run",
            "-c",
            "counter.msol",
            "-t",
            "snailthrone_sweep.dbdl",
            "--format",
            "json",
        ],
    ] {
        let o = kaya(&args);
        assert_eq!(code(&o), 2, "{args:?}");
        assert!(o.stdout.is_empty());
        let v: Value = serde_json::from_slice(&o.stderr).unwrap();
        assert!(errors.is_valid(&v), "{v}");
    }
    assert_eq!(
        code(&kaya(&[
            "run",
            "-c",
            "counter.msol",
            "-t",
            "counter.dbdl",
            "--format",
            "xml"
        ])),
        2
    );
    assert_eq!(code(&kaya(&["frobnicate"])), 2);
    assert_eq!(code(&kaya(&["--help"])), 0);
}

#[test]
fn output_is_deterministic_and_independent_of_jobs() {
    let base = [
        "run",
        "-c",
        "snailthrone.msol",
        "-t",
        "snailthrone_sweep.dbdl",
        "--format",
        "json",
    ];
    let a = kaya(&base);
    let b = kaya(&[&base[..], &["--jobs", "4"]].concat());
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let stamped = kaya(&[&base[..], &["--timestamps"]].concat());
    let v: Value = serde_json::from_slice(&stamped.stdout).unwrap();
    assert!(v["generated_at"].as_str().unwrap().ends_with('Z'));
    assert!(!String::from_utf8_lossy(&a.stdout).contains("generated_at"));
}

#[test]
fn out_and_results_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let results = dir.path().join("raw.json");
    let o = kaya(&[
        "run",
        "-c",
        "counter.msol",
        "-t",
        "counter.dbdl",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
        "--results",
        results.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let stdout = kaya(&[
        "run",
        "-c",
        "counter.msol",
        "-t",
        "counter.dbdl",
        "--format",
        "json",
    ])
    .stdout;
    assert_eq!(std::fs::read(&out).unwrap(), stdout);
    let raw: Value = serde_json::from_slice(&std::fs::read(&results).unwrap()).unwrap();
    assert_eq!(raw.as_array().unwrap().len(), 2);
    assert!(raw[0]["traces"].as_array().is_some_and(|t| !t.is_empty()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Exit status follows the reference interpreter's verdict on the
    /// expectations: 0 when all hold, 1 otherwise.
    #[test]
    fn exit_code_matches_reference_verdict(seed in any::<u64>()) {
        let mut r = rng(seed);
        let unit = gen::source(&mut r);
        let suite = gen::suite(&mut r, &unit.contracts);
        let limit = 20_000;
        let runs = reference_runs(&suite, &unit.contracts, limit);
        let expected = if reference_expectations_pass(&suite, &unit.contracts, &runs) { 0 } else { 1 };
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("g.msol");
        let dbdl = dir.path().join("g.dbdl");
        std::fs::write(&src, format_source(&unit)).unwrap();
        std::fs::write(&dbdl, format_dbdl(&suite)).unwrap();
        let o = kaya(&["run", "-c", src.to_str().unwrap(), "-t", dbdl.to_str().unwrap(), "--format", "json", "--step-limit", "20000"]);
        prop_assert_eq!(code(&o), expected, "{}", String::from_utf8_lossy(&o.stderr));
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        prop_assert!(schema("report.schema.json").is_valid(&v));
    }
}
