use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aerecovery"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"{"schema":1,"recovered":"lowrank:3x3:r1:R","ensemble":"gauss","n_range":[4,6],
    "trials":3,"base_seed":11,"tests":["local_rank","ae_recovery"],"solver":{"restarts":4}}"#;

const PHASE: &str = r#"{"schema":1,"recovered":"sym:4:r1:R","ensemble":"rank1sym","n_range":[3,8],
    "trials":10,"base_seed":4,"tests":["ae_recovery"]}"#;

#[test]
fn dim_reports_formula_and_numerical() {
    let o = run(&["dim", "--variety", "lowrank:4x4:r1:C"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "formula 7 (complex), numerical 7, agree\n");

    let o = run(&["dim", "--variety", "herm:3:r1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("formula 5 (real)"), "{}", stdout(&o));

    let o = run(&["dim", "--variety", "orth:3", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["formula"], 3);
    assert_eq!(v["agree"], true);
}

#[test]
fn bad_variety_is_a_usage_error() {
    let o = run(&["dim", "--variety", "lowrank:0x4:r1:C"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert_eq!(run(&["dim"]).status.code(), Some(2));
}

#[test]
fn admissible_verdicts() {
    assert_eq!(run(&["admissible", "--variety", "orth:4", "--seed", "3"]).status.code(), Some(0));

    // A skew functional pairs to zero with every symmetric matrix.
    let dir = tempfile::tempdir().unwrap();
    let skew = dir.path().join("skew.json");
    fs::write(
        &skew,
        r#"{"schema":1,"matrix":{"rows":2,"cols":2,"field":"R","entries":[[[0,0],[1,0]],[[-1,0],[0,0]]]}}"#,
    )
    .unwrap();
    let o = run(&["admissible", "--variety", "sym:2:r1:R", "--functional", skew.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("NotAdmissible"));
}

#[test]
fn generate_recover_and_counterexample() {
    let dir = tempfile::tempdir().unwrap();
    let ens = dir.path().join("ens.json");
    let o = run(&["generate", "--ensemble", "gauss:N8:3x3:R:seed5", "--out", ens.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let plant = dir.path().join("plant.json");
    fs::write(
        &plant,
        r#"{"schema":1,"matrix":{"rows":3,"cols":3,"field":"R",
            "entries":[[[1,0],[2,0],[-1,0]],[[2,0],[4,0],[-2,0]],[[0.5,0],[1,0],[-0.5,0]]]}}"#,
    )
    .unwrap();
    let (e, p) = (ens.to_str().unwrap(), plant.to_str().unwrap());

    let o = run(&["recover", "--ensemble", e, "--variety", "lowrank:3x3:r1:R", "--plant", p, "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["status"], "Converged");

    // dim lowrank:3x3:r1 = 5; eight generic measurements leave no room.
    let o = run(&["recover", "--ensemble", e, "--variety", "lowrank:3x3:r1:R", "--plant", p, "--distinct"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = run(&["counterexample", "--ensemble", e, "--variety", "lowrank:3x3:r1:R"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    // Three measurements cannot pin down a 5-dimensional family.
    let small = dir.path().join("small.json");
    run(&["generate", "--ensemble", "gauss:N3:3x3:R:seed5", "--out", small.to_str().unwrap()]);
    let o = run(&["recover", "--ensemble", small.to_str().unwrap(), "--variety", "lowrank:3x3:r1:R", "--plant", p, "--distinct"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
}

#[test]
fn recover_reads_measurement_files() {
    let dir = tempfile::tempdir().unwrap();
    let ens = dir.path().join("ens.json");
    run(&["generate", "--ensemble", "gauss:N2:2x2:R:seed1", "--out", ens.to_str().unwrap()]);
    let b = dir.path().join("b.json");
    fs::write(&b, r#"{"schema":1,"field":"R","values":[[1,0],[-2,0]]}"#).unwrap();
    let o = run(&[
        "recover", "--ensemble", ens.to_str().unwrap(), "--variety", "full:2x2:R", "--measurements", b.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    fs::write(&b, r#"{"schema":1,"field":"R","values":[[1,0]]}"#).unwrap();
    let o = run(&[
        "recover", "--ensemble", ens.to_str().unwrap(), "--variety", "full:2x2:R", "--measurements", b.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_consistent_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = run(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("schema,N,test,trial,seed,success,detail"));
    // 3 values of N, 3 trials, 2 tests.
    assert_eq!(csv.lines().count(), 1 + 3 * 3 * 2);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(summary["rates"].as_array().unwrap().len(), 3 * 2);
    for test in ["local_rank", "ae_recovery"] {
        let dat = fs::read_to_string(out.join(format!("{test}.dat"))).unwrap();
        assert_eq!(dat.lines().filter(|l| !l.starts_with('#')).count(), 3);
    }
    let names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 4, "no stray temporary files: {names:?}");
}

#[test]
fn minimal_sweep_and_single_curve_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"schema":1,"recovered":"orth:3","ensemble":"gauss","n_range":[2,4],"trials":1,"base_seed":0,"tests":["local_rank"]}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(0));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let dat = fs::read_to_string(out.join("local_rank.dat")).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(csv.lines().count() - 1, 3);
    assert_eq!(dat.lines().count() - 1, 3);
    assert_eq!(summary["rates"].as_array().unwrap().len(), 3);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("1,")));

    let rep = dir.path().join("rep");
    let json = out.join("sweep.json");
    assert_eq!(run(&["report", "--in", json.to_str().unwrap(), "--out", rep.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(fs::read_dir(&rep).unwrap().count(), 1);
}

#[test]
fn sweep_is_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&["sweep", "--config", &cfg, "--out", a.to_str().unwrap(), "--workers", "1"]);
    run(&["sweep", "--config", &cfg, "--out", b.to_str().unwrap(), "--workers", "3"]);
    for f in ["sweep.csv", "sweep.json", "local_rank.dat", "ae_recovery.dat"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn phase_retrieval_sweep_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), PHASE);
    let out = dir.path().join("out");
    let o = run(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("ae_recovery transition 5"), "{}", stdout(&o));

    let json = out.join("sweep.json");
    let rep = dir.path().join("rep");
    let o = run(&["report", "--in", json.to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("transition ae_recovery: 5 (theory 5)"), "{}", stdout(&o));

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    let curve = fs::read_to_string(rep.join("report_ae_recovery.dat")).unwrap();
    let rows: Vec<Vec<f64>> = curve
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(' ').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let rate = summary["rates"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["n"].as_f64() == Some(row[0]))
            .unwrap()["rate"]
            .as_f64()
            .unwrap();
        assert_eq!(row[1], rate);
        assert_eq!(row[2], 5.0);
    }
}

#[test]
fn malformed_inputs_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(run(&["report", "--in", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["report", "--in", "/nonexistent/sweep.json"]).status.code(), Some(2));
    let out = dir.path().join("out");
    let o = run(&["sweep", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists(), "nothing written on a rejected config");
    let cfg = write_config(dir.path(), &SMALL.replace("\"trials\":3", "\"trials\":0"));
    assert_eq!(run(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(2));
}
