use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use loopspace_cli::config::RunManifest;
use tempfile::TempDir;

fn run(args: &[&str], config: Option<&str>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_loopspace"));
    cmd.args(args).arg("--out").arg(out).arg("--jobs").arg("1");
    if let Some(text) = config {
        let path = out.with_extension("json");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

/// Data rows of a CSV after checking the header and digest trailer.
fn rows(path: &Path, header: &str) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], header);
    let trailer = lines.last().unwrap();
    let digest = trailer.strip_prefix("# manifest-sha256: ").expect("digest trailer");
    assert_eq!(digest.len(), 64);
    lines[1..lines.len() - 1]
        .iter()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn num(cell: &str) -> f64 {
    cell.parse().unwrap()
}

#[test]
fn help_version_and_usage_exit_codes() {
    let dir = TempDir::new().unwrap();
    let bin = env!("CARGO_BIN_EXE_loopspace");
    for args in [&["--help"][..], &["--version"], &["spectrum", "--help"]] {
        assert_eq!(Command::new(bin).args(args).output().unwrap().status.code(), Some(0));
    }
    for args in [&[][..], &["bogus"], &["spectrum", "--modes", "x"], &["spectrum", "--s", "0.3"]] {
        let o = Command::new(bin).args(args).arg("--out").arg(dir.path()).output().unwrap();
        assert_eq!(o.status.code(), Some(1), "{args:?}");
    }
    let o = run(&["spectrum"], Some(r#"{"rho0": 0.9}"#), &dir.path().join("bad"));
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("rho0"));
    let o = run(&["spectrum"], Some("{ not json"), &dir.path().join("broken"));
    assert_eq!(code(&o), 1);
}

#[test]
fn straight_torus_spectrum_is_fourier() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("spec");
    let o = run(&["spectrum", "--modes", "8"], None, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = rows(&out.join("spectrum.csv"), "j,lambda_j,sup_norm_xi_j");
    assert_eq!(table.len(), 2 * 17);
    for (i, row) in table.iter().enumerate() {
        let j = if i < 2 { 0 } else { (i - 2) / 4 + 1 };
        assert!((num(&row[1]) - (TAU * j as f64).powi(2)).abs() < 1e-9);
        assert!(num(&row[2]) <= 2f64.sqrt() + 1e-6);
    }
    for f in ["spectrum.dat", "frame.json", "spectrum_summary.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn circle_loop_has_one_dimensional_kernel() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("circle");
    let config = r#"{"manifold": {"kind": "embedded-circle"}, "loop": {"winding": [3], "base": [0.0], "cos": [], "sin": []}}"#;
    let o = run(&["spectrum", "--modes", "8"], Some(config), &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("spectrum_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["kernel_dim"], 1);
}

#[test]
fn metrics_ratio_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("metrics");
    let o = run(&["metrics-compare", "--modes", "16"], None, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = rows(&out.join("metrics.csv"), "n,r,norm_r,norm_r_emb,ratio");
    assert_eq!(table.len(), 8 * 4);
    for row in &table {
        let (n, r) = (num(&row[0]), num(&row[1]));
        assert!((num(&row[2]) - 1.0).abs() < 1e-10);
        assert!((num(&row[4]) - (1.0 + (TAU * n).powi(2)).powf(r)).abs() < 1e-8);
        if r == 0.0 {
            assert!((num(&row[4]) - 1.0).abs() < 1e-12);
        }
    }
    let n1r1 = table.iter().find(|r| r[0] == "1" && num(&r[1]) == 1.0).unwrap();
    assert!((num(&n1r1[4]) - 40.478_417_604_357_43).abs() < 1e-8);
    let ratios = |r: f64| -> Vec<f64> { table.iter().filter(|x| num(&x[1]) == r).map(|x| num(&x[4])).collect() };
    for r in [0.25, 0.5, 1.0] {
        assert!(ratios(r).windows(2).all(|w| w[1] > w[0]));
    }
}

#[test]
fn empty_r_grid_writes_header_only() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("empty");
    let o = run(&["orbit-sweep"], Some(r#"{"r_grid": []}"#), &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = rows(
        &out.join("sweep.csv"),
        "r,theta,classification,action,sigma,leaf_action,grad_norm,steps",
    );
    assert!(table.is_empty());
}

#[test]
fn sweep_finds_leaf_and_replays_from_manifest() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    let config = r#"{"r_grid": [0.1, 1.0], "J": 8}"#;
    let o = run(&["orbit-sweep", "--seed", "3"], Some(config), &first);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = rows(
        &first.join("sweep.csv"),
        "r,theta,classification,action,sigma,leaf_action,grad_norm,steps",
    );
    assert_eq!(table[0][2], "closed-geodesic");
    assert!((num(&table[0][1]) - 0.4).abs() < 1e-9);
    assert_eq!(table[1][2], "on-hypersurface");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(first.join("sweep_summary.json")).unwrap()).unwrap();
    let alpha = summary["alpha"].as_f64().unwrap();
    assert!(table.iter().all(|r| (0.0..=alpha).contains(&num(&r[1]))));

    let manifest_text = fs::read_to_string(first.join("manifest.json")).unwrap();
    let manifest = RunManifest::from_json(&manifest_text).unwrap();
    assert_eq!(manifest.seed, 3);
    assert_eq!(RunManifest::from_json(&manifest.to_json()).unwrap(), manifest);
    let replay = dir.path().join("replay");
    let o = Command::new(env!("CARGO_BIN_EXE_loopspace"))
        .args(["orbit-sweep", "--jobs", "1", "--config"])
        .arg(first.join("manifest.json"))
        .arg("--out")
        .arg(&replay)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    for f in ["sweep.csv", "sweep.dat", "sweep_summary.json", "manifest.json"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(replay.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let config = r#"{"J": 8, "gradient_points": 5}"#;
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(code(&run(&["gradient-check", "--seed", "9"], Some(config), &a)), 0);
    assert_eq!(code(&run(&["gradient-check", "--seed", "9"], Some(config), &b)), 0);
    assert_eq!(code(&run(&["gradient-check", "--seed", "10"], Some(config), &c)), 0);
    let read = |d: &Path| fs::read(d.join("gradient.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    for row in rows(&a.join("gradient.csv"), "point,finite_difference,analytic,relative_error") {
        assert!(num(&row[3]) <= 1e-5);
    }
}

#[test]
fn cutoff_free_fixture_is_flagged() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("fixture");
    let config = r#"{"J": 8, "use_cutoff": false, "ps_momentum": [5.0, 0.0], "ps_seeds": 0, "ps_horizon": 20.0}"#;
    let o = run(&["ps-diagnose"], Some(config), &out);
    assert_eq!(code(&o), 2);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("ps_summary.json")).unwrap()).unwrap();
    assert!(!summary[0]["flags"].as_array().unwrap().is_empty());

    // same start with the cutoff in place stays bounded
    let out = dir.path().join("cutoff");
    let config = r#"{"J": 8, "ps_momentum": [5.0, 0.0], "ps_seeds": 0, "ps_horizon": 20.0}"#;
    assert_eq!(code(&run(&["ps-diagnose"], Some(config), &out)), 0);
}

#[test]
fn stationary_seed_gives_constant_report() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("stationary");
    let config = r#"{"J": 8, "ps_momentum": [1.0, 0.0], "ps_seeds": 0}"#;
    let o = run(&["ps-diagnose"], Some(config), &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = rows(
        &out.join("ps.csv"),
        "trajectory,t,step1,step2_ratio,step3,par_norm,tilde_norm",
    );
    assert!(!table.is_empty());
    for row in &table {
        assert!(num(&row[2]) < 1e-12);
        assert!((num(&row[3]) - 0.5).abs() < 1e-12);
        assert!((num(&row[5]) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn random_starts_stay_bounded_under_cutoff() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("random");
    let o = run(&["ps-diagnose", "--modes", "8"], Some(r#"{"ps_seeds": 3}"#), &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}
