use std::path::{Path, PathBuf};

use concord_cli::bench::REPORT_COLUMNS;
use concord_cli::cli::{run, EXIT_INFEASIBLE, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION};

fn panem() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/panem")
}

struct Output {
    code: i32,
    out: String,
    err: String,
}

fn concord(args: &[&str]) -> Output {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("concord").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Output {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn line<'a>(text: &'a str, prefix: &str) -> Vec<&'a str> {
    text.lines()
        .filter_map(|l| l.strip_prefix(prefix))
        .map(str::trim)
        .collect()
}

fn error_block(text: &str) -> serde_json::Value {
    let v: serde_json::Value = serde_json::from_str(text).unwrap_or_else(|e| panic!("{e}: {text}"));
    v["error"].clone()
}

#[test]
fn check_accepts_the_fixture_and_rejects_unknown_columns() {
    let dir = panem();
    let ok = concord(&["check", path(&dir.join("panem.spec"))]);
    assert_eq!(ok.code, EXIT_OK, "{}", ok.err);
    assert!(ok.out.contains("3 tables, 2 views"), "{}", ok.out);

    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.spec");
    std::fs::write(&bad, "table T(k: int | a);\nview V := projaway(b)(T);\n").unwrap();
    let r = concord(&["check", path(&bad)]);
    assert_eq!(r.code, EXIT_VALIDATION);
    let e = error_block(&r.err);
    assert_eq!(e["kind"], "validation");
    assert_eq!(e["exit_code"], EXIT_VALIDATION);

    std::fs::write(&bad, "table T(k: int | a)\n").unwrap();
    let r = concord(&["check", path(&bad)]);
    assert_eq!(r.code, EXIT_VALIDATION);
    assert!(error_block(&r.err)["message"].as_str().unwrap().contains("2:1"), "{}", r.err);
}

#[test]
fn panem_discord_under_both_weightings() {
    let dir = panem();
    let spec = dir.join("panem.spec");
    let default = concord(&["run", path(&spec), "--data", path(&dir), "--backend", "both"]);
    assert_eq!(default.code, EXIT_OK, "{}", default.err);
    assert_eq!(line(&default.out, "discord:"), ["0.040000000", "0.040000000"]);
    assert_eq!(line(&default.out, "status:"), ["discordant", "discordant"]);

    let c1 = dir.join("c1.weights");
    let r = concord(&["run", path(&spec), "--data", path(&dir), "--weights", path(&c1)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert_eq!(line(&r.out, "discord:"), ["0.108409797"]);

    let c2 = dir.join("c2.weights");
    let r = concord(&["run", path(&spec), "--data", path(&dir), "--weights", path(&c2)]);
    assert_eq!(line(&r.out, "discord:"), ["0.040000000"]);
}

#[test]
fn exports_are_deterministic_and_match_the_oracle() {
    let dir = panem();
    let spec = dir.join("panem.spec");
    let tmp = tempfile::tempdir().unwrap();
    let mut exports = Vec::new();
    for i in 0..2 {
        let qp = tmp.path().join(format!("{i}.qp"));
        let report = tmp.path().join(format!("{i}.csv"));
        let r = concord(&[
            "run",
            path(&spec),
            "--data",
            path(&dir),
            "--export-qp",
            path(&qp),
            "--report",
            path(&report),
        ]);
        assert_eq!(r.code, EXIT_OK, "{}", r.err);
        let report = std::fs::read_to_string(report).unwrap();
        assert!(report.starts_with("id,kind,label,weight,value\n"));
        assert_eq!(report.lines().count(), 1 + 17);
        exports.push(std::fs::read(&qp).unwrap());
    }
    assert_eq!(exports[0], exports[1]);

    let r = concord(&["oracle", path(&tmp.path().join("0.qp"))]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let d: f64 = line(&r.out, "oracle_discord:")[0].parse().unwrap();
    assert!((d - 0.04).abs() < 1e-9, "{d}");
}

#[test]
fn contradictory_ground_data_is_infeasible() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(panem().join("panem.spec")).unwrap();
    let exact: String = text
        .lines()
        .filter(|l| !l.starts_with("policy"))
        .map(|l| format!("{l}\n"))
        .collect();
    let spec = tmp.path().join("ground.spec");
    std::fs::write(&spec, exact).unwrap();
    for f in ["ReportedCountry.csv", "Census.csv"] {
        std::fs::copy(panem().join(f), tmp.path().join(f)).unwrap();
    }
    let districts = std::fs::read_to_string(panem().join("ReportedDistrict.csv")).unwrap();
    let present: String = districts
        .lines()
        .filter(|l| !l.starts_with("XIII"))
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(tmp.path().join("ReportedDistrict.csv"), present).unwrap();

    let data = path(tmp.path());
    let r = concord(&["run", path(&spec), "--data", data]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert_eq!(line(&r.out, "status:"), ["infeasible"]);
    let r = concord(&["run", path(&spec), "--data", data, "--fail-on-infeasible"]);
    assert_eq!(r.code, EXIT_INFEASIBLE);
}

#[test]
fn runtime_and_usage_errors() {
    let dir = panem();
    let tmp = tempfile::tempdir().unwrap();
    let r = concord(&["run", path(&dir.join("panem.spec")), "--data", path(tmp.path())]);
    assert_eq!(r.code, EXIT_RUNTIME);
    assert_eq!(error_block(&r.err)["kind"], "runtime");
    assert_eq!(concord(&["frobnicate"]).code, EXIT_VALIDATION);
    assert_eq!(concord(&["bench", "--null-prob", "2"]).code, EXIT_VALIDATION);
    assert_eq!(concord(&["--help"]).code, EXIT_OK);
}

#[test]
fn bench_writes_the_report_columns() {
    let r = concord(&["bench", "--n", "10", "--queries", "q1,T4", "--backend", "both"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let mut rdr = csv::Reader::from_reader(r.out.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, REPORT_COLUMNS);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][9], rows[1][9], "backends disagree on discord");
}
