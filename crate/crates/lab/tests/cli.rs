use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use metalattice_lab::config::RunConfig;

const BIN: &str = env!("CARGO_BIN_EXE_metalab");

fn metalab(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).arg("--out").arg(dir).args(args).env_remove("METALAB_OUT").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect()
}

#[test]
fn every_command_succeeds_on_small_inputs() {
    let cases: [&[&str]; 9] = [
        &["build", "--spec", "rotating-squares", "--k", "2"],
        &["build", "--variant", r#"{"kind":"isosceles-kagome","apex":1.2,"s1":1,"s2":0.8}"#],
        &["energy", "--lambda", "0.9,-0.1,0.1,0.9", "--k", "2"],
        &["mechanism", "--thetas", "5", "--search", "--restarts", "4"],
        &["density-sweep", "--grid", "random:3", "--k", "1", "--restarts", "1", "--max-iter", "200"],
        &["verify-bounds", "--trials", "20", "--iso-trials", "1", "--rigidity-samples", "3000", "--cell-samples", "100"],
        &["domain-wall", "--m", "4", "--periods", "1"],
        &["soft-mode", "--eps", "1/8,1/16", "--sweeps", "20"],
        &["inequalities", "--step", "0.1", "--angle-step", "0.05"],
    ];
    for args in cases {
        let dir = tempfile::tempdir().unwrap();
        let o = metalab(dir.path(), args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let name = args[0];
        let run: RunConfig = serde_json::from_slice(&fs::read(dir.path().join(format!("{name}.run.json"))).unwrap()).unwrap();
        assert_eq!(run.command, name);
        let on_disk = files(dir.path());
        assert_eq!(run.outputs.len(), on_disk.len(), "{args:?}");
        for f in &run.outputs {
            assert!(on_disk.contains_key(f), "{f} listed but missing");
        }
    }
}

#[test]
fn csv_headers_carry_units() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&metalab(dir.path(), &["domain-wall", "--m", "2"])), 0);
    for (name, body) in files(dir.path()) {
        if name.ends_with(".csv") {
            let header = String::from_utf8(body).unwrap().lines().next().unwrap().to_string();
            assert!(header.split(',').all(|c| c.ends_with(']') && c.contains(" [")), "{name}: {header}");
        }
    }
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&metalab(d, &["energy", "--bogus"])), 1);
    assert_eq!(code(&metalab(d, &["teleport"])), 1);
    assert_eq!(code(&metalab(d, &["energy", "--spec", "no-such-lattice"])), 1);
    assert_eq!(code(&metalab(d, &["energy", "--lambda", "1,2,3"])), 1);
    assert_eq!(code(&metalab(d, &["--help"])), 0);

    let bad = d.join("bad.json");
    fs::write(&bad, "{\"name\": 3}").unwrap();
    assert_eq!(code(&metalab(d, &["energy", "--spec", bad.to_str().unwrap()])), 2);
    // Above the area threshold the isotropic bound is not asserted.
    assert_eq!(code(&metalab(d, &["verify-bounds", "--bounds", "isotropic", "--eta", "0.9"])), 2);
    assert_eq!(code(&metalab(d, &["domain-wall", "--theta1", "2.0"])), 2);
    assert_eq!(code(&metalab(d, &["soft-mode", "--target", "uniform:1.5,0"])), 2);

    let o = metalab(d, &["domain-wall", "--m", "2", "--residual-tol=-1"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("spring residual"));
    assert!(d.join("wall-summary.json").exists(), "artifacts are kept on failure");
    assert_eq!(code(&metalab(d, &["mechanism", "--thetas", "3", "--energy-tol=-1"])), 3);
}

#[test]
fn output_does_not_depend_on_worker_count() {
    let args = ["density-sweep", "--grid", "random:4", "--k", "1,2", "--restarts", "1", "--max-iter", "200", "--seed", "7"];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut one = vec!["--jobs", "1"];
    one.extend(args);
    let mut four = vec!["--jobs", "4"];
    four.extend(args);
    assert_eq!(code(&metalab(a.path(), &one)), 0);
    assert_eq!(code(&metalab(b.path(), &four)), 0);
    assert_eq!(files(a.path()), files(b.path()));
}

#[test]
fn seed_changes_random_grids() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |s: &'static str| ["density-sweep", "--grid", "random:2", "--k", "1", "--restarts", "0", "--max-iter", "50", "--seed", s];
    assert_eq!(code(&metalab(a.path(), &args("1"))), 0);
    assert_eq!(code(&metalab(b.path(), &args("2"))), 0);
    assert_ne!(fs::read(a.path().join("density.csv")).unwrap(), fs::read(b.path().join("density.csv")).unwrap());
}

#[test]
fn environment_sets_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(BIN).args(["build"]).env("METALAB_OUT", dir.path()).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("kagome.spec.json").exists());
}

#[test]
fn exported_spec_and_twist_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&metalab(d, &["build", "--spec", "general-kagome"])), 0);
    let spec = d.join("general-kagome.spec.json");
    let o = metalab(d, &["mechanism", "--spec", spec.to_str().unwrap(), "--thetas", "3", "--export-theta", "0.3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let def = d.join("twist-deformation.json");
    assert!(def.exists());
    assert_eq!(code(&metalab(d, &["energy", "--deformation", def.to_str().unwrap(), "--eta", "0.1"])), 0);
    let e: serde_json::Value = serde_json::from_slice(&fs::read(d.join("energy.json")).unwrap()).unwrap();
    assert!(e["averaged"].as_f64().unwrap() < 1e-20, "{e}");
}
