use std::fs;
use std::path::Path;
use std::process::Command;

fn essspec() -> Command {
    Command::new(env!("CARGO_BIN_EXE_essspec"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

fn scatter_config(out: &Path) -> String {
    format!(
        r#"{{"experiment": "scattering_compare",
            "model": {{"kind": "lattice1d", "truncation_half_width": 30, "potential": [[0, 0.5], [1, -0.3]]}},
            "lambda_grid": {{"min": -1.5, "max": 1.5, "count": 7}},
            "output_dir": {:?}}}"#,
        out.display().to_string()
    )
}

#[test]
fn scatter_run_writes_manifest_and_refuses_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("scatter");
    let cfg = write_config(tmp.path(), &scatter_config(&out));

    let status = essspec()
        .args(["scatter", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    let mut rows = csv::Reader::from_path(out.join("scattering.csv")).unwrap();
    let headers = rows.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "bridge_defect").unwrap();
    let mut n = 0;
    for r in rows.records() {
        assert!(r.unwrap()[col].parse::<f64>().unwrap() < 1e-6);
        n += 1;
    }
    assert_eq!(n, 7);

    let again = essspec()
        .args(["scatter", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(again.status.code(), Some(1));
    let overwrite = essspec()
        .args(["scatter", "--overwrite", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(overwrite.code(), Some(0));
}

#[test]
fn validate_reports_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            r#"{{"experiment": "alpha_sweep",
                "model": {{"kind": "lattice1d", "truncation_half_width": 20, "potential": [[0, 0.5]]}},
                "lambda_grid": [0.0, 1.99],
                "output_dir": {:?}}}"#,
            tmp.path().join("never").display().to_string()
        ),
    );
    let out = essspec()
        .args(["validate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("band_edge"));
    assert!(!tmp.path().join("never").exists());
}

#[test]
fn subcommand_must_match_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &scatter_config(&tmp.path().join("x")));
    let out = essspec()
        .args(["alpha", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
