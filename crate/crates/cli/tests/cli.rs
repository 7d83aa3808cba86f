use std::path::PathBuf;
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn dlmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlmp"))
        .args(args)
        .current_dir(root())
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn pep_writes_one_row_per_hour_and_site() {
    let dir = tempfile::tempdir().unwrap();
    let o = dlmp(&["pep", "--gamma", "0.5", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("pep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,gamma,site,v_mw"));
    assert_eq!(lines.count(), 24 * 4);
}

#[test]
fn scenario_writes_tables_and_record() {
    let dir = tempfile::tempdir().unwrap();
    let o = dlmp(&["scenario", "III+bess", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let record: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(record["scenario"], "III+bess");
    assert_eq!(record["digest"].as_str().unwrap().len(), 64);
    for name in ["dlmp.csv", "schedule.csv", "pep.csv", "record.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let prices = std::fs::read_to_string(dir.path().join("dlmp.csv")).unwrap();
    assert!(prices.starts_with("node,t,omega_p,"));
    assert_eq!(prices.lines().count(), 1 + 68 * 24);
}

#[test]
fn flags_override_the_preset() {
    let o = dlmp(&["dlmp", "--k", "0", "--load-scale", "0.5", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().count(), 1 + 68 * 24);
    assert!(stderr(&o).contains("VRE curtailed 0.0000"));
}

#[test]
fn clear_prints_the_schedule() {
    let o = dlmp(&["clear", "--gamma", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.starts_with("t,kind,unit,field,value"));
    assert!(text.lines().any(|l| l.starts_with("0,substation,")));
}

#[test]
fn sweep_tabulates_each_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let o = dlmp(&["sweep-gamma", "--gammas", "0.25,0.75", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("confidence.csv")).unwrap();
    assert!(text.starts_with("gamma,t,omega_p,omega_q"));
    assert_eq!(text.lines().count(), 1 + 2 * 24);
}

#[test]
fn failures_exit_nonzero_with_the_stage() {
    let cases: [(&[&str], &str); 5] = [
        (&["scenario", "V"], "error: scenario:"),
        (&["clear", "--case", "missing.json"], "error: case:"),
        (&["clear", "--samples", "missing.csv"], "error: samples:"),
        (&["dlmp", "--gamma", "1.5"], "error: case:"),
        (&["sweep-gamma", "--probe", "999", "--gammas", "0.5"], "error: sweep:"),
    ];
    for (args, prefix) in cases {
        let o = dlmp(args);
        assert!(!o.status.success(), "{args:?} succeeded");
        assert!(stderr(&o).starts_with(prefix), "{args:?}: {}", stderr(&o));
    }
}
