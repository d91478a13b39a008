use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(format!("{name}.json"))
}

fn phaseid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phaseid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn simulate(dir: &Path, feeder: &str, extra: &[&str]) -> Output {
    let f = fixture(feeder);
    let mut args = vec!["simulate", "--feeder", path(&f), "--out", path(dir), "--samples", "240"];
    args.extend_from_slice(extra);
    phaseid(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_lists_every_flag() {
    let expected: [(&str, &[&str]); 5] = [
        (
            "simulate",
            &[
                "--feeder",
                "--out",
                "--mode",
                "--noise",
                "--noise-model",
                "--samples",
                "--interval-min",
                "--quantize",
                "--penetration",
                "--profiles",
                "--truth",
                "--substation-phase-sd",
                "--seed",
                "--jobs",
            ],
        ),
        (
            "identify",
            &[
                "--feeder",
                "--measurements",
                "--consumption-positive",
                "--perturb",
                "--missing-branch",
                "--seed",
                "--truth",
                "--out",
                "--diagnostics",
                "--dump-matrices",
                "--matrix-format",
            ],
        ),
        ("evaluate", &["--report", "--truth"]),
        ("validate", &["--feeder", "--measurements", "--assignment", "--level", "--out"]),
        (
            "oracle-check",
            &["--feeder", "--measurements", "--samples", "--seed", "--corrupt-sensitivities"],
        ),
    ];
    for (cmd, flags) in expected {
        let out = phaseid(&[cmd, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8_lossy(&out.stdout);
        for flag in flags {
            assert!(text.contains(flag), "{cmd} --help lacks {flag}");
        }
    }
}

#[test]
fn simulate_writes_files_deterministically() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    for (dir, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let out = simulate(dir.path(), "feeder_8node", &["--noise", "0.001", "--seed", seed]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let read = |d: &TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read(&a, "measurements.csv"), read(&b, "measurements.csv"));
    assert_eq!(read(&a, "truth.json"), read(&b, "truth.json"));
    assert_ne!(read(&a, "measurements.csv"), read(&c, "measurements.csv"));
}

#[test]
fn quantized_simulation_stays_on_grid() {
    let dir = TempDir::new().unwrap();
    let out = simulate(dir.path(), "four_load", &["--noise", "0.001", "--quantize"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("measurements.csv")).unwrap();
    let on_grid = |x: f64, step: f64| ((x / step) - (x / step).round()).abs() < 1e-6;
    let mut checked = 0;
    for line in text.lines().skip(1).filter(|l| !l.contains("__substation__")) {
        let fields: Vec<&str> = line.split(',').collect();
        let [v, p, q] = [fields[2], fields[3], fields[4]].map(|s| s.parse::<f64>().unwrap());
        // Every load of this fixture hangs directly off the primary.
        assert!(on_grid(v, 1.0) && on_grid(p, 0.1) && on_grid(q, 0.1), "{line}");
        checked += 1;
    }
    assert_eq!(checked, 4 * 240);
}

#[test]
fn identify_reports_accuracy_and_diagnostics() {
    let dir = TempDir::new().unwrap();
    assert!(simulate(dir.path(), "five_load", &["--noise", "0.001"]).status.success());
    let f = fixture("five_load");
    let m = dir.path().join("measurements.csv");
    let t = dir.path().join("truth.json");
    let r = dir.path().join("report.json");
    let mats = dir.path().join("mats");
    let out = phaseid(&[
        "identify",
        "--feeder",
        path(&f),
        "--measurements",
        path(&m),
        "--truth",
        path(&t),
        "--out",
        path(&r),
        "--diagnostics",
        "full",
        "--dump-matrices",
        path(&mats),
        "--matrix-format",
        "binary",
        "--jobs",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("accuracy"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&r).unwrap()).unwrap();
    assert_eq!(report["assignments"].as_array().unwrap().len(), 5);
    assert!(report["accuracy"].is_number());
    let subs = report["subproblems"].as_array().unwrap();
    assert_eq!(subs.len(), 15);
    assert!(subs.iter().any(|s| s["trace"].as_array().is_some_and(|t| !t.is_empty())));
    // Three primary nodes: a 18x18 reduced system and 9x9 sensitivities.
    assert_eq!(std::fs::metadata(mats.join("a_reduced.bin")).unwrap().len(), 18 * 18 * 8);
    assert_eq!(std::fs::metadata(mats.join("k.bin")).unwrap().len(), 9 * 9 * 8);

    let eval = phaseid(&["evaluate", "--report", path(&r), "--truth", path(&t)]);
    assert!(eval.status.success(), "{}", stderr(&eval));
    let e: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert_eq!(e["accuracy"], report["accuracy"]);

    let v = dir.path().join("validation.json");
    let val = phaseid(&[
        "validate",
        "--feeder",
        path(&f),
        "--measurements",
        path(&m),
        "--assignment",
        path(&r),
        "--out",
        path(&v),
    ]);
    assert!(val.status.success(), "{}", stderr(&val));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&v).unwrap()).unwrap();
    assert_eq!(summary["loads"].as_array().unwrap().len(), 5);
}

#[test]
fn consumption_positive_flag_flips_power_signs() {
    let dir = TempDir::new().unwrap();
    assert!(simulate(dir.path(), "four_load", &[]).status.success());
    let m = dir.path().join("measurements.csv");
    let text = std::fs::read_to_string(&m).unwrap();
    // Rewrite the powers as consumption-positive.
    let flipped: String = text
        .lines()
        .enumerate()
        .map(|(i, line)| {
            if i == 0 || line.contains("__substation__") {
                return format!("{line}\n");
            }
            let mut f: Vec<String> = line.split(',').map(String::from).collect();
            for k in [3, 4] {
                f[k] = format!("{:?}", -f[k].parse::<f64>().unwrap());
            }
            format!("{}\n", f.join(","))
        })
        .collect();
    let c = dir.path().join("consumption.csv");
    std::fs::write(&c, flipped).unwrap();
    let f = fixture("four_load");
    let t = dir.path().join("truth.json");
    let run = |file: &Path, flag: bool| {
        let mut args = vec!["identify", "--feeder", path(&f), "--measurements", path(file), "--truth", path(&t)];
        if flag {
            args.push("--consumption-positive");
        }
        let out = phaseid(&args);
        assert!(out.status.success(), "{}", stderr(&out));
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()["assignments"].clone()
    };
    assert_eq!(run(&m, false), run(&c, true));
}

#[test]
fn oracle_check_passes_on_small_fixtures() {
    for name in ["two_node", "four_load", "five_load"] {
        let f = fixture(name);
        let out = phaseid(&["oracle-check", "--feeder", path(&f)]);
        assert!(out.status.success(), "{name}: {}", stderr(&out));
        assert!(String::from_utf8_lossy(&out.stdout).contains("passed"));
    }
}

#[test]
fn oracle_check_reports_corrupted_sensitivities() {
    let f = fixture("four_load");
    let out = phaseid(&[
        "oracle-check",
        "--feeder",
        path(&f),
        "--substation-phase-sd",
        "0",
        "--corrupt-sensitivities",
    ]);
    assert_eq!(out.status.code(), Some(5), "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("estimate") && err.contains("oracle"), "{err}");
}

#[test]
fn exit_codes_follow_the_failure_class() {
    let big = fixture("feeder_8node");
    assert_eq!(phaseid(&["oracle-check", "--feeder", path(&big)]).status.code(), Some(2));

    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"nodes": []}"#).unwrap();
    let out = simulate(dir.path(), "four_load", &[]);
    assert!(out.status.success());
    let m = dir.path().join("measurements.csv");
    let broken = phaseid(&["identify", "--feeder", path(&bad), "--measurements", path(&m)]);
    assert_eq!(broken.status.code(), Some(2), "{}", stderr(&broken));

    let sim = simulate(dir.path(), "four_load", &["--penetration", "1.5"]);
    assert_eq!(sim.status.code(), Some(3), "{}", stderr(&sim));

    let other = fixture("two_node");
    let mismatch = phaseid(&["identify", "--feeder", path(&other), "--measurements", path(&m)]);
    assert_eq!(mismatch.status.code(), Some(2), "{}", stderr(&mismatch));
}
