use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gauss-tomo"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json_file(path: PathBuf) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn csv_rows(path: PathBuf) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn vacuum_preset_writes_hundred_angles() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "simulate",
            "--state",
            "vacuum",
            "--samples",
            "10000",
            "--out",
            "v.csv",
        ],
    );
    let text = std::fs::read_to_string(dir.path().join("v.csv")).unwrap();
    assert!(text.starts_with("# gauss-tomo v1, scheme=hom, seed=2016, eta=1\n"));
    let mut angles: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    angles.dedup();
    assert_eq!(angles.len(), 100);
}

#[test]
fn thermalized_dataset_records_shuffle_seed() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "simulate",
            "--state",
            "strongly-squeezed",
            "--samples",
            "20000",
            "--thermalize",
            "--out",
            "t.csv",
        ],
    );
    let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let meta = text.lines().nth(1).unwrap();
    assert!(meta.contains("thermalized"), "{meta}");
    assert!(meta.contains("source seed=2016"), "{meta}");
    assert!(meta.contains("shuffle seed="), "{meta}");
}

#[test]
fn same_config_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    for (name, threads) in [("a.bin", "1"), ("b.bin", "1"), ("c.bin", "4")] {
        ok(
            p,
            &[
                "simulate",
                "--mu",
                "4.46",
                "--lambda",
                "6.49",
                "--scheme",
                "het",
                "--samples",
                "50000",
                "--format",
                "bin",
                "--seed",
                "9",
                "--threads",
                threads,
                "--out",
                name,
            ],
        );
    }
    let a = std::fs::read(p.join("a.bin")).unwrap();
    assert_eq!(a, std::fs::read(p.join("b.bin")).unwrap());
    assert_eq!(a, std::fs::read(p.join("c.bin")).unwrap());

    for (name, threads) in [("r1", "1"), ("r4", "4")] {
        ok(
            p,
            &[
                "benchmark",
                "--samples",
                "1000",
                "--angles",
                "5,10",
                "--reps",
                "40",
                "--threads",
                threads,
                "--out",
                name,
            ],
        );
    }
    for ext in ["json", "csv"] {
        assert_eq!(
            std::fs::read(p.join(format!("r1.{ext}"))).unwrap(),
            std::fs::read(p.join(format!("r4.{ext}"))).unwrap()
        );
    }
}

#[test]
fn heterodyne_estimate_recovers_table_state() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "simulate",
            "--mu",
            "6.54",
            "--lambda",
            "11.67",
            "--scheme",
            "het",
            "--samples",
            "1000000",
            "--format",
            "bin",
            "--out",
            "sq.bin",
        ],
    );
    let out = ok(p, &["estimate", "sq.bin", "--out", "est.json"]);
    let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
    let rec = json_file(p.join("est.json"));
    assert_eq!(printed, rec);
    assert_eq!(rec["scheme"], "het");
    let (mu, lambda) = (rec["mu"].as_f64().unwrap(), rec["lambda"].as_f64().unwrap());
    assert!((mu / 6.54 - 1.0).abs() < 0.01, "{mu}");
    assert!((lambda / 11.67 - 1.0).abs() < 0.01, "{lambda}");
    assert!(rec["provenance"]["input_sha256"].is_string());
}

#[test]
fn vacuum_homodyne_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["simulate", "--state", "vacuum", "--out", "v.csv"]);
    for method in ["ml", "wls"] {
        let out = ok(p, &["estimate", "v.csv", "--method", method]);
        let rec: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!((rec["mu"].as_f64().unwrap() - 1.0).abs() < 0.02, "{rec}");
        assert!(
            (rec["lambda"].as_f64().unwrap() - 1.0).abs() < 0.02,
            "{rec}"
        );
        assert_eq!(rec["diagnostics"]["converged"], true);
    }
}

#[test]
fn two_angle_dataset_is_underdetermined() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "simulate",
            "--angles",
            "2",
            "--samples",
            "1000",
            "--out",
            "two.csv",
        ],
    );
    let out = run(p, &["estimate", "two.csv"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("kind=validation code=2") && err.contains("underdetermined"),
        "{err}"
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&run(p, &["estimate", "missing.csv"])), 4);
    std::fs::write(p.join("empty.csv"), "").unwrap();
    assert_eq!(code(&run(p, &["gaussianity", "empty.csv"])), 2);
    assert_eq!(code(&run(p, &["simulate", "--samples", "1001"])), 2);
    assert_eq!(code(&run(p, &["simulate", "--mu", "0"])), 2);
    assert_eq!(code(&run(p, &["benchmark", "--thermalize"])), 2);
    assert_eq!(code(&run(p, &["simulate", "--format", "json"])), 2);
    assert_eq!(code(&run(p, &["simulate", "--bogus"])), 2);
    assert_eq!(
        code(&run(
            p,
            &[
                "simulate",
                "--samples",
                "1000",
                "--out",
                "no/such/dir/x.csv"
            ]
        )),
        4
    );

    ok(
        p,
        &[
            "simulate",
            "--samples",
            "300",
            "--angles",
            "3",
            "--out",
            "h.csv",
        ],
    );
    let text = std::fs::read_to_string(p.join("h.csv")).unwrap();
    let header: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
    let zeros: String = (0..12)
        .map(|i| format!("{},0\n", (i / 4) as f64 * 0.5))
        .collect();
    std::fs::write(p.join("zero.csv"), header + &zeros).unwrap();
    let out = run(p, &["estimate", "zero.csv"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));

    let mut corrupt = text.clone();
    corrupt.push_str("0.1,abc\n");
    std::fs::write(p.join("bad.csv"), corrupt).unwrap();
    let out = run(p, &["estimate", "bad.csv"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 304"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(
        p.join("run.toml"),
        "seed = 11\n[state]\nmu = 2.0\nlambda = 3.0\n[simulate]\nangles = 10\nsamples = 1000\n",
    )
    .unwrap();
    ok(
        p,
        &[
            "simulate", "--config", "run.toml", "--mu", "3", "--out", "d.csv",
        ],
    );
    let text = std::fs::read_to_string(p.join("d.csv")).unwrap();
    let meta: Value =
        serde_json::from_str(text.lines().nth(1).unwrap().trim_start_matches("# meta=")).unwrap();
    let cfg = &meta["provenance"]["config"];
    assert_eq!(cfg["seed"], 11);
    assert_eq!(cfg["state"]["mu"], 3.0);
    assert_eq!(cfg["state"]["lambda"], 3.0);
    assert_eq!(cfg["simulate"]["angles"], 10);

    std::fs::write(p.join("bad.toml"), "[state]\nsigma = 1\n").unwrap();
    assert_eq!(code(&run(p, &["simulate", "--config", "bad.toml"])), 2);
    assert_eq!(code(&run(p, &["simulate", "--config", "absent.toml"])), 4);
}

#[test]
fn verify_checks_hash_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "simulate",
            "--scheme",
            "het",
            "--samples",
            "5000",
            "--format",
            "bin",
            "--out",
            "d.bin",
        ],
    );
    ok(p, &["estimate", "d.bin", "--out", "e.json"]);
    ok(
        p,
        &["gamma-map", "--grid", "3x2", "--analytic", "--out", "g.csv"],
    );
    for f in ["d.bin", "e.json", "g.csv"] {
        let out = ok(p, &["verify", f, "--rerun"]);
        let s = String::from_utf8_lossy(&out.stdout);
        assert!(
            s.starts_with("ok config_sha256=") && s.contains("reproduced="),
            "{s}"
        );
    }

    let text = std::fs::read_to_string(p.join("g.csv")).unwrap();
    std::fs::write(
        p.join("tampered.csv"),
        text.replace("\"grid\":[3,2]", "\"grid\":[3,3]"),
    )
    .unwrap();
    let out = run(p, &["verify", "tampered.csv"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash mismatch"));

    let rows = text.lines().count();
    let edited: String = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i + 1 == rows {
                "99,99,1,,1\n".to_string()
            } else {
                format!("{l}\n")
            }
        })
        .collect();
    std::fs::write(p.join("edited.csv"), edited).unwrap();
    ok(p, &["verify", "edited.csv"]);
    assert_eq!(code(&run(p, &["verify", "edited.csv", "--rerun"])), 2);
}

#[test]
fn fig4_scaled_vacuum_has_gamma_above_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "benchmark",
            "--paper-fig4",
            "--state",
            "vacuum",
            "--scaled",
            "--out",
            "fig4",
        ],
    );
    let rows = csv_rows(p.join("fig4.csv"));
    assert_eq!(rows.len(), 18);
    let largest: Vec<&Vec<String>> = rows.iter().filter(|r| r[3] == "30000").collect();
    for r in &largest {
        let gamma: f64 = r[7].parse().unwrap();
        assert!(gamma > 1.0, "{r:?}");
    }
    // Tenfold N shrinks mean D_HS about tenfold.
    for scheme in ["hom", "het"] {
        for m in ["5", "10", "15"] {
            let d: Vec<f64> = rows
                .iter()
                .filter(|r| r[2] == scheme && r[4] == m)
                .map(|r| r[5].parse().unwrap())
                .collect();
            for w in d.windows(2) {
                let ratio = w[0] / w[1];
                assert!((7.0..=13.0).contains(&ratio), "{scheme} m={m}: {ratio}");
            }
        }
    }
    let report = json_file(p.join("fig4.json"));
    assert_eq!(report["config"]["reference_mode"], "estimated");
    assert_eq!(report["config"]["reference_size"], 3_000_000);
}

#[test]
fn fig3b_analytic_map_isolates_near_vacuum_region() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "gamma-map",
            "--paper-fig3b",
            "--grid",
            "20x20",
            "--analytic",
            "--out",
            "map.csv",
        ],
    );
    let rows = csv_rows(p.join("map.csv"));
    assert_eq!(rows.len(), 400);
    let above: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r[2].parse::<f64>().unwrap() > 1.0)
        .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap()))
        .collect();
    assert!(above.contains(&(1.0, 1.0)));
    assert!(above.len() < 40, "{}", above.len());
    for (mu, lambda) in above {
        assert!(mu < 1.25 && lambda < 3.5, "({mu}, {lambda})");
    }
}

#[test]
fn gaussianity_report_per_bin_and_axis() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "simulate",
            "--scheme",
            "het",
            "--samples",
            "100000",
            "--out",
            "het.csv",
        ],
    );
    let out = ok(p, &["gaussianity", "het.csv"]);
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    let entries = rep["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    assert_eq!(rep["all_pass_95"], true, "{rep}");

    ok(
        p,
        &[
            "simulate",
            "--angles",
            "20",
            "--samples",
            "200000",
            "--out",
            "hom.csv",
        ],
    );
    let out = ok(p, &["gaussianity", "hom.csv", "--out", "g.json"]);
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    assert!(rep.is_null());
    let rep = json_file(p.join("g.json"));
    let entries = rep["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 20);
    let passing = entries
        .iter()
        .filter(|e| e["report"]["pass_95"] == true)
        .count();
    assert!(passing >= 16, "{passing}/20");

    // Uniform values on one bin are rejected; a two-value bin reports an error.
    let text = std::fs::read_to_string(p.join("hom.csv")).unwrap();
    let header: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
    let mut state = 12345u64;
    let mut rows = String::new();
    for _ in 0..20_000 {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let u = (state >> 11) as f64 / (1u64 << 53) as f64;
        rows.push_str(&format!("0,{}\n", 2.0 * u - 1.0));
    }
    rows.push_str("1,0.5\n1,-0.3\n");
    std::fs::write(p.join("uni.csv"), header + &rows).unwrap();
    let out = ok(p, &["gaussianity", "uni.csv"]);
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["entries"][0]["report"]["pass_95"], false);
    assert!(rep["entries"][1]["error"].is_string());
    assert_eq!(rep["failed_bins"], 1);
    assert_eq!(rep["all_pass_95"], false);
}
