use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sskg::bounds::{sk_bounds, SkBounds};
use sskg::degrade::{factorization_residual, DegradednessVerdict, OrderReport, VerdictKind};
use sskg::protocol::ProtocolReport;
use sskg::sources::bsc_cascade;
use sskg::{Channel, FiniteDist, JointDist3};
use tempfile::TempDir;

fn sskg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sskg"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn result<T: serde::de::DeserializeOwned>(v: &Value) -> T {
    serde_json::from_value(v["result"].clone()).expect("result parses into its type")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_joint(dir: &Path, name: &str, j: &JointDist3) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(j).unwrap()).unwrap();
    p
}

fn h2(p: f64) -> f64 {
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// `X` uniform, `Y = BSC(0.1)`, `Z` an independent `BSC(0.26)` observation,
/// which is `BSC(0.1)` followed by `BSC(0.2)` in law only.
fn stochastic_fixture() -> JointDist3 {
    JointDist3::from_conditionals(
        &FiniteDist::uniform(2).unwrap(),
        &Channel::bsc(0.1).unwrap(),
        &Channel::bsc(0.26).unwrap(),
    )
    .unwrap()
}

#[test]
fn bounds_of_the_cascade() {
    let dir = TempDir::new().unwrap();
    let j = bsc_cascade(0.1, 0.2).unwrap();
    write_joint(dir.path(), "cascade.json", &j);
    let v = ok_json(&sskg(dir.path(), &["bounds", "cascade.json"]));
    let b: SkBounds = result(&v);
    let oracle = h2(0.1 * 0.8 + 0.9 * 0.2) - h2(0.1);
    assert!((b.lower - oracle).abs() < 1e-9 && (b.upper - oracle).abs() < 1e-9);
    assert_eq!(b, sk_bounds(&j), "round trip is bit-exact");
    assert_eq!(v["config"]["seed"], 0);
    assert_eq!(v["command"], "bounds");
}

#[test]
fn bounds_rejects_unnormalized_tensors() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"labelsX":[0,1],"labelsY":[0],"labelsZ":[0],"probs":[[[0.5]],[[0.4]]]}"#,
    )
    .unwrap();
    let out = sskg(dir.path(), &["bounds", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("sum to 0.9"), "{}", stderr(&out));

    std::fs::write(
        dir.path().join("cut.json"),
        "{\"labelsX\": [0, 1],\n \"probs\": [",
    )
    .unwrap();
    let out = sskg(dir.path(), &["bounds", "cut.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn bounds_csv_is_one_header_and_one_row() {
    let dir = TempDir::new().unwrap();
    write_joint(dir.path(), "c.json", &bsc_cascade(0.1, 0.2).unwrap());
    let out = sskg(
        dir.path(),
        &["bounds", "c.json", "--format", "csv", "--output", "b.csv"],
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "lowerXY,lowerYX,upperMI,upperCMI,lower,upper");
    assert_eq!(std::fs::read_to_string(dir.path().join("b.csv")).unwrap(), text);
    assert!(stderr(&out).contains("\"format\":\"csv\""));
}

#[test]
fn degrade_verdicts() {
    let dir = TempDir::new().unwrap();
    let cascade = bsc_cascade(0.1, 0.2).unwrap();
    write_joint(dir.path(), "cascade.json", &cascade);
    write_joint(dir.path(), "swapped.json", &cascade.swap_yz());
    let stoch = stochastic_fixture();
    write_joint(dir.path(), "stoch.json", &stoch);

    let v: DegradednessVerdict = result(&ok_json(&sskg(dir.path(), &["degrade", "cascade.json"])));
    assert_eq!(v.kind, VerdictKind::Physical);

    let v: DegradednessVerdict = result(&ok_json(&sskg(
        dir.path(),
        &["degrade", "swapped.json", "--tol", "1e-6"],
    )));
    assert_eq!(v.kind, VerdictKind::None);
    assert!(v.witness.is_none() && v.residual > 1e-6);

    let v: DegradednessVerdict = result(&ok_json(&sskg(dir.path(), &["degrade", "stoch.json"])));
    assert_eq!(v.kind, VerdictKind::Stochastic);
    let w = v.witness.expect("witness emitted");
    assert!(factorization_residual(&stoch, &w).unwrap() <= 1e-8);
}

#[test]
fn order_examples() {
    let dir = TempDir::new().unwrap();
    let run = |a: [&str; 4]| -> OrderReport {
        result(&ok_json(&sskg(
            dir.path(),
            &["order", "--mx", a[0], "--wx", a[1], "--mz", a[2], "--wz", a[3]],
        )))
    };
    let r = run(["1", "3", "1", "2"]);
    assert!(r.holds);
    assert_eq!(r.grid_points, 514);
    let r = run(["1", "2", "1", "3"]);
    assert!(!r.holds);
    let fv = r.first_violation.expect("violating point reported");
    assert!(fv.x > 0.0 && fv.ccdf_dominating < fv.ccdf_dominated);
    assert!(run(["2", "1.5", "2", "1.5"]).holds);

    let r: OrderReport = result(&ok_json(&sskg(
        dir.path(),
        &[
            "order",
            "--mx",
            "1",
            "--wx",
            "3",
            "--mz",
            "1",
            "--wz",
            "2",
            "--grid",
            "0,0.5,1,4",
        ],
    )));
    assert_eq!(r.grid_points, 4);
    assert!(r.holds);
}

#[test]
fn satellite_symmetric_and_ordered_fades() {
    let dir = TempDir::new().unwrap();
    let v = ok_json(&sskg(
        dir.path(),
        &["satellite", "--n", "200000", "--raw-csv", "raw.csv"],
    ));
    let lower_xy = v["result"]["bounds"]["lowerXY"].as_f64().unwrap();
    assert!(lower_xy.abs() <= 0.02, "{lower_xy}");
    let raw = std::fs::read_to_string(dir.path().join("raw.csv")).unwrap();
    assert_eq!(raw.lines().next(), Some("x,y,z"));
    assert_eq!(raw.lines().count(), 200_001);

    let args = [
        "satellite",
        "--fade-x",
        "nakagami:1,3",
        "--fade-z",
        "nakagami:1,2",
        "--n",
        "1000000",
        "--bins",
        "16",
        "--seed",
        "11",
    ];
    let a = sskg(dir.path(), &args);
    let v = ok_json(&a);
    let lower = v["result"]["bounds"]["lower"].as_f64().unwrap();
    let se = v["result"]["stdError"]["lower"].as_f64().unwrap();
    assert!(lower > 0.0 && se > 0.0 && se < lower, "{lower} ± {se}");
    assert_eq!(a.stdout, sskg(dir.path(), &args).stdout, "fixed seed reproduces");
}

#[test]
fn simulate_exact_run_round_trips() {
    let dir = TempDir::new().unwrap();
    let v = ok_json(&sskg(
        dir.path(),
        &[
            "simulate",
            "--cascade",
            "0.1,0.2",
            "--n",
            "2",
            "--r",
            "0.5",
            "--r1",
            "0.5",
            "--sweep-csv",
            "sweep.csv",
        ],
    ));
    let run = &v["result"]["runs"][0];
    let report: ProtocolReport = serde_json::from_value(run["report"].clone()).unwrap();
    assert_eq!(report.mode, sskg::protocol::ProtocolMode::Exact);
    assert!((report.non_confusion + report.non_stealth - report.eff_secrecy).abs() < 1e-12);
    let text = serde_json::to_string(&report).unwrap();
    assert_eq!(serde_json::from_str::<ProtocolReport>(&text).unwrap(), report);
    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(sweep.starts_with("n,R,R1,codebook,seed,pe,effSecrecy,"));
    assert_eq!(sweep.lines().count(), 2);
}

#[test]
fn simulate_sweep_is_deterministic() {
    let dir = TempDir::new().unwrap();
    write_joint(dir.path(), "src.json", &bsc_cascade(0.1, 0.2).unwrap());
    let args = [
        "simulate",
        "--source",
        "src.json",
        "--n",
        "2,4",
        "--r",
        "0.25",
        "--r1=-0.25,0.25",
        "--r1-relative",
        "--codebooks",
        "3",
        "--format",
        "csv",
        "--seed",
        "9",
    ];
    let a = sskg(dir.path(), &args);
    assert!(a.status.success(), "{}", stderr(&a));
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 3);
    assert_eq!(a.stdout, sskg(dir.path(), &args).stdout);

    let json_args: Vec<&str> = args
        .iter()
        .copied()
        .filter(|a| *a != "--format" && *a != "csv")
        .collect();
    let v = ok_json(&sskg(dir.path(), &json_args));
    let means = v["result"]["means"].as_array().unwrap();
    assert_eq!(means.len(), 4);
    let runs = v["result"]["runs"].as_array().unwrap();
    let first: f64 = runs[..3]
        .iter()
        .map(|r| r["report"]["effSecrecy"].as_f64().unwrap())
        .sum::<f64>()
        / 3.0;
    assert!((means[0]["effSecrecy"].as_f64().unwrap() - first).abs() < 1e-12);
    assert_eq!(means[0]["codebooks"], 3);
}

#[test]
fn oversize_exact_request_switches_to_monte_carlo() {
    let dir = TempDir::new().unwrap();
    let out = sskg(
        dir.path(),
        &[
            "simulate",
            "--cascade",
            "0.1,0.2",
            "--n",
            "8",
            "--r",
            "0.5",
            "--r1",
            "0.5",
            "--trials",
            "500",
        ],
    );
    let v = ok_json(&out);
    assert!(stderr(&out).contains("switched to Monte Carlo"));
    let report = &v["result"]["runs"][0]["report"];
    assert_eq!(report["mode"], "monte-carlo");
    assert_eq!(report["plugIn"], true);
    assert_eq!(v["result"]["runs"][0]["requestedMode"], "exact");
    assert!(!v["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn budget_examples() {
    let dir = TempDir::new().unwrap();
    let base = ["budget", "--xi", "0.1", "--n", "10000", "--omega", "0.05"];
    let run = |extra: &[&str]| ok_json(&sskg(dir.path(), &[&base[..], extra].concat()));

    let v = run(&["--dz", "0.1", "--dy", "0.02"]);
    let bits = v["result"]["budgetBits"].as_f64().unwrap();
    assert!((bits - 0.05 * 100.0 * (1.1 * 0.1 - 0.9 * 0.02)).abs() < 1e-12);
    assert!(v["result"]["schedule"].is_null());

    let v = run(&["--dz", "0.01", "--dy", "0.5", "--cascade", "0.1,0.2"]);
    assert_eq!(v["result"]["budgetBits"].as_f64(), Some(0.0));
    assert_eq!(v["result"]["schedule"]["phase2KeyBits"].as_f64(), Some(0.0));

    let out = sskg(
        dir.path(),
        &[
            "budget", "--dz", "0.1", "--dy", "0", "--xi", "0.1", "--n", "4", "--omega", "3",
        ],
    );
    assert!(out.status.success());
    assert!(stderr(&out).contains("vanishing regime"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"seed": 5, "budget": {"dz": 0.1, "dy": 0.02, "xi": 0.1, "n": 10000, "omega": 0.05}}"#,
    )
    .unwrap();
    let v = ok_json(&sskg(
        dir.path(),
        &["budget", "--config", "cfg.json", "--omega", "0.1"],
    ));
    assert_eq!(v["config"]["seed"], 5);
    assert_eq!(v["config"]["params"]["omega"].as_f64(), Some(0.1));
    assert_eq!(v["config"]["params"]["dz"].as_f64(), Some(0.1));
    assert!((v["result"]["budgetBits"].as_f64().unwrap() - 0.92).abs() < 1e-12);

    std::fs::write(dir.path().join("typo.json"), r#"{"sede": 5}"#).unwrap();
    let out = sskg(dir.path(), &["budget", "--config", "typo.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("sede"));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(sskg(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(sskg(dir.path(), &["order", "--mx", "1"]).status.code(), Some(1));
    assert_eq!(
        sskg(
            dir.path(),
            &["budget", "--dz", "0.1", "--dy", "0", "--xi", "2", "--n", "4", "--omega", "1"]
        )
        .status
        .code(),
        Some(1)
    );
    // A codebook of 2^40 words cannot be stored.
    let out = sskg(
        dir.path(),
        &[
            "simulate",
            "--cascade",
            "0.1,0.2",
            "--n",
            "40",
            "--r",
            "0.5",
            "--r1",
            "0.5",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(sskg(dir.path(), &["--help"]).status.success());
}
