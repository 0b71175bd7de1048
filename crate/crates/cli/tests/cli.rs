use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn randcover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_randcover")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = randcover(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Data rows of a CSV: everything after the `#` lines and the column line.
fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn estimate_dim_uniform_near_half() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["estimate-dim", "--seeds", "16", "--alpha", "2", "--out", out]);
    let dims = read(dir.path(), "dims.csv");
    let r = rows(&dims);
    assert_eq!(r.len(), 18);
    let mean = r.iter().find(|row| row[0] == "mean").unwrap();
    let slope: f64 = mean[1].parse().unwrap();
    assert!((slope - 0.5).abs() < 0.08, "{slope}");
    let seeds: Vec<u64> = r[..16].iter().map(|row| row[0].parse().unwrap()).collect();
    assert_eq!(seeds, (0..16).collect::<Vec<_>>());
}

#[test]
fn outputs_are_deterministic_and_digested() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        run_ok(&["simulate-cover", "--seed", "3", "--alpha", "1.25", "--out", d.path().to_str().unwrap()]);
    }
    for name in ["cover.csv", "dims.csv"] {
        let (x, y) = (read(a.path(), name), read(b.path(), name));
        assert_eq!(x, y, "{name}");
        assert!(x.lines().any(|l| l.starts_with("# config_sha256: ")), "{name}");
    }
    let manifest = read(a.path(), "manifest.txt");
    for name in ["cover.csv", "dims.csv"] {
        let digest = hex::encode(Sha256::digest(read(a.path(), name).as_bytes()));
        assert!(manifest.contains(&format!("{digest}  {name}")), "{manifest}");
    }
    assert!(manifest.contains("wall_clock_s: "));
    assert!(manifest.contains("seeds: 3"));
    assert!(manifest.contains("[cover]"));
}

#[test]
fn hull_of_example_f_has_kink() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["hull", "--model", "example", "--out", dir.path().to_str().unwrap()]);
    let csv = read(dir.path(), "hull.csv");
    let (s0, gamma) = (0.386852807234542, 0.189279);
    for r in rows(&csv) {
        let v: Vec<f64> = r.iter().map(|x| x.parse().unwrap()).collect();
        let s = v[0];
        // slope 1 into s0, flat to the kink, slope 1 again up to s1
        let expected = if s < s0 {
            s
        } else if s < 0.576132 {
            s0
        } else if s < 0.820209 {
            s - gamma
        } else {
            0.630930
        };
        assert!((v[2] - expected).abs() < 1e-5, "s = {s}: hull {} vs {expected}", v[2]);
    }
}

#[test]
fn hull_from_input_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("curve.csv");
    std::fs::write(&input, "s,value\n0,0\n0.5,1\n1,0\n").unwrap();
    run_ok(&["hull", "--input", input.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let r = rows(&read(dir.path(), "hull.csv"));
    let hull: Vec<f64> = r.iter().map(|row| row[2].parse().unwrap()).collect();
    let tilde: Vec<f64> = r.iter().map(|row| row[3].parse().unwrap()).collect();
    assert_eq!(hull, vec![0.5, 1.0, 1.0]);
    assert_eq!(tilde, vec![0.5, 1.0, 0.0]);
}

#[test]
fn zero_alpha_exits_two_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = randcover(&["estimate-dim", "--alpha", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cover.alpha"), "{err}");
    assert!(!dir.path().join("manifest.txt").exists());

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[tree]\nalpha = 0.0\n").unwrap();
    let out = randcover(&["tree-certify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tree.alpha"));

    std::fs::write(&cfg, "[cover]\nalhpa = 2.0\n").unwrap();
    let out = randcover(&["estimate-dim", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alhpa"));
}

#[test]
fn module_error_exits_one_with_context() {
    let dir = tempfile::tempdir().unwrap();
    // the growing child floor cannot be met at generation 2 within the budget
    let out = randcover(&[
        "tree-certify",
        "--max-generation",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("tree-certify failed") && err.contains("growth failure"), "{err}");
}

#[test]
fn tree_certify_writes_tree_and_energy() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = run_ok(&[
        "tree-certify",
        "--max-generation",
        "2",
        "--child-floor",
        "2",
        "--t",
        "0.05",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(stdout.contains("verdict: "));
    let tree = read(dir.path(), "tree.txt");
    assert!(tree.contains("# config_sha256: "));
    let energy = read(dir.path(), "energy.csv");
    assert!(energy.lines().any(|l| l.starts_with("# verdict: ")));
    let r = rows(&energy);
    // one row per expanded generation
    assert_eq!(r.len(), 2);
    for row in &r {
        let direct: f64 = row[1].parse().unwrap();
        let bound: f64 = row[2].parse().unwrap();
        assert!(direct <= bound);
    }
}

#[test]
fn spectrum_uniform_steps_at_one() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["spectrum", "--levels", "4..10", "--out", dir.path().to_str().unwrap()]);
    let counts = rows(&read(dir.path(), "counts.csv"));
    for r in &counts {
        let (n, s, c): (u32, f64, u64) = (r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].parse().unwrap());
        let expected = if s < 1.0 - 1e-9 { 0 } else { 1u64 << n };
        assert_eq!(c, expected, "level {n}, s {s}");
    }
    assert!(dir.path().join("spectrum.csv").exists());
    assert!(dir.path().join("bounds.csv").exists());
}

#[test]
fn example_verify_small_battery() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ex.toml");
    std::fs::write(
        &cfg,
        "seeds = 2\n[model]\nname = \"example\"\n[example]\ninv_alphas = [0.3]\nj_max = 10\nmass_samples = 100000\nmass_j_max = 4\nsamples = 200000\nlocal_points = 5\n",
    )
    .unwrap();
    run_ok(&["example-verify", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let r = rows(&read(dir.path(), "example.csv"));
    let checks: Vec<&str> = r.iter().map(|row| row[0].as_str()).collect();
    assert_eq!(checks.iter().filter(|c| **c == "fattened_mass").count(), 4);
    assert!(checks.contains(&"covering_dim"));
    for row in r.iter().filter(|row| row[0] == "fattened_mass") {
        assert_eq!(row[6], "true", "{row:?}");
    }
}
