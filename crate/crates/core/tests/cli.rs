use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn qc6(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qc6")).args(args).env_remove("QC6_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_examples_exit_codes() {
    let ok = qc6(&["run", "--protocol", "teleport", "--secret", "0.5,0.5,0.5,0.5", "--seed", "7"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let rsp = qc6(&["run", "--protocol", "rsp", "--phi", "1.0471975512", "--seed", "1", "--json", "-"]);
    assert_eq!(rsp.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&rsp)).unwrap();
    assert_eq!(v["cbits"], 2);
    let bad = qc6(&["run", "--protocol", "teleport", "--secret", "1,1,1"]);
    assert_eq!(bad.status.code(), Some(2));
    let unknown = qc6(&["run", "--protocol", "nope"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn verify_table_files() {
    let t1 = data().join("table1.qt");
    let o = qc6(&["verify", "--table", t1.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("16/16"), "{}", stdout(&o));
    let g = qc6(&["verify", "--table", data().join("garbage.qt").to_str().unwrap()]);
    assert_eq!(g.status.code(), Some(2));
    let missing = qc6(&["verify", "--table", "/nonexistent/table.qt"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn report_detects_injected_sign_flip() {
    let dir = tempfile::tempdir().unwrap();
    for e in std::fs::read_dir(data()).unwrap() {
        let p = e.unwrap().path();
        std::fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
    }
    let t1 = dir.path().join("table1.qt");
    let text = std::fs::read_to_string(&t1).unwrap();
    // Flip the sign of the first term on the third data row.
    let flipped: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 5 { l.replacen("+1:000000", "-1:000000", 1) } else { l.to_string() })
        .collect();
    assert_ne!(flipped.join("\n"), text.trim_end());
    std::fs::write(&t1, flipped.join("\n") + "\n").unwrap();
    let o = qc6(&["report", "--seed", "7", "--data-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("table 1 row"), "{}", stdout(&o));
}

#[test]
fn report_json_is_reproducible() {
    let a = qc6(&["report", "--seed", "7", "--json", "-"]);
    let b = qc6(&["report", "--seed", "7", "--json", "-"]);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["criteria"].as_array().unwrap().len(), 10);
}

#[test]
fn seed_falls_back_to_environment() {
    let run = |env: &str| {
        Command::new(env!("CARGO_BIN_EXE_qc6"))
            .args(["run", "--protocol", "qis1", "--json", "-"])
            .env("QC6_SEED", env)
            .output()
            .unwrap()
    };
    let a = run("123");
    let b = qc6(&["run", "--protocol", "qis1", "--seed", "123", "--json", "-"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["seed"], 123);
}
