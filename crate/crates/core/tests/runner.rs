use std::path::{Path, PathBuf};

use dlmp_core::market::reprice;
use dlmp_core::pep::{read_history_csv, History};
use dlmp_core::runner::{read_case_file, read_schedule_csv, write_schedule_csv};
use dlmp_core::{load_case, run_scenario, sweep_confidence, CaseFile, Error, HighsSolver, ScenarioSpec};

const PROBE: usize = 60;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn inputs() -> (CaseFile, History) {
    (
        read_case_file(&data("ieee69.json")).unwrap(),
        read_history_csv(&data("vre_history.csv")).unwrap(),
    )
}

fn low_penetration(gamma: f64) -> ScenarioSpec {
    ScenarioSpec {
        name: "K1".into(),
        load_scale: 1.0,
        vre_scale: 1.0,
        gamma,
        bess: false,
        seed: None,
    }
}

#[test]
fn bundled_case_has_68_nodes_and_split_bids() {
    let case = load_case(&data("ieee69.json")).unwrap();
    assert_eq!(case.network.n(), 68);
    assert_eq!(case.horizon, 24);
    assert!(case.network.is_identity_numbering());
    let mut checked = 0;
    for d in &case.loads {
        for segs in &d.segments {
            let total: f64 = segs.iter().map(|s| s.cap).sum();
            if total == 0.0 {
                continue;
            }
            assert_eq!(segs.len(), 3);
            for (s, share) in segs.iter().zip([0.5, 0.25, 0.25]) {
                assert!((s.cap / total - share).abs() < 1e-12, "{}: {:?}", d.name, segs);
            }
            assert_eq!(segs[0].price, 0.0);
            checked += 1;
        }
    }
    assert!(checked > 24 * 40);
}

#[test]
fn identical_inputs_give_identical_outputs() {
    let (file, hist) = inputs();
    let spec = ScenarioSpec::preset("II").unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_scenario(&spec, &file, &hist, Some(a.path()), &HighsSolver).unwrap();
    let rb = run_scenario(&spec, &file, &hist, Some(b.path()), &HighsSolver).unwrap();
    assert_eq!(ra.record.digest, rb.record.digest);
    for name in ["dlmp.csv", "schedule.csv", "pep.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    assert!(a.path().join("record.json").exists());

    let reseeded = ScenarioSpec {
        seed: Some(7),
        ..spec
    };
    let rc = run_scenario(&reseeded, &file, &hist, None, &HighsSolver).unwrap();
    assert_ne!(ra.record.digest, rc.record.digest);
    assert_eq!(rc.record.seed, 7);
}

#[test]
fn schedule_table_reprices_to_the_objective() {
    let (file, hist) = inputs();
    let spec = ScenarioSpec::preset("III+bess").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let run = run_scenario(&spec, &file, &hist, Some(dir.path()), &HighsSolver).unwrap();
    let path = run.record.schedule_csv.clone().unwrap();
    let f = std::fs::File::open(&path).unwrap();
    let schedules = read_schedule_csv(&run.case, f, &path).unwrap();
    let offline = reprice(&run.case, &schedules);
    let obj = run.record.summary.objective;
    assert!((offline - obj).abs() <= 1e-6 * obj.abs(), "{offline} vs {obj}");

    // The table is the same when written again from what was read.
    let mut again = Vec::new();
    write_schedule_csv(&run.case, &schedules, &mut again).unwrap();
    assert_eq!(again, std::fs::read(&path).unwrap());
}

#[test]
fn single_gamma_sweep_matches_the_run() {
    let (file, hist) = inputs();
    let spec = ScenarioSpec::preset("II").unwrap();
    let rows = sweep_confidence(&spec, &file, &hist, &[spec.gamma], PROBE, &HighsSolver).unwrap();
    let run = run_scenario(&spec, &file, &hist, None, &HighsSolver).unwrap();
    assert_eq!(rows.len(), run.case.horizon);
    for r in &rows {
        let p = run.report.get(PROBE, r.t).unwrap();
        assert_eq!(r.omega_p, p.p.total);
        assert_eq!(r.omega_q, p.q.total);
    }
}

#[test]
fn sweep_rejects_bad_requests() {
    let (file, hist) = inputs();
    let spec = low_penetration(0.5);
    let err = sweep_confidence(&spec, &file, &hist, &[], PROBE, &HighsSolver).unwrap_err();
    assert!(matches!(err, Error::Validation(_)), "{err}");
    let err = sweep_confidence(&spec, &file, &hist, &[0.5], 500, &HighsSolver).unwrap_err();
    assert!(err.to_string().contains("500"), "{err}");
    let err = sweep_confidence(&spec, &file, &hist, &[1.5], PROBE, &HighsSolver).unwrap_err();
    assert!(err.to_string().contains("gamma"), "{err}");
}

#[test]
fn higher_confidence_lowers_midday_prices() {
    let (file, hist) = inputs();
    let rows = sweep_confidence(&low_penetration(0.5), &file, &hist, &[0.25, 0.75], PROBE, &HighsSolver).unwrap();
    let at = |g: f64, t: usize| rows.iter().find(|r| r.gamma == g && r.t == t).unwrap().omega_p;
    for t in 10..=14 {
        assert!(at(0.75, t) <= at(0.25, t) + 1e-9, "t {t}: {} > {}", at(0.75, t), at(0.25, t));
    }
}

#[test]
fn stage_tags_name_the_failing_step() {
    let (file, hist) = inputs();
    let mut short = hist.clone();
    short.hours.truncate(12);
    for day in &mut short.values {
        day.truncate(12);
    }
    let err = run_scenario(&low_penetration(0.5), &file, &short, None, &HighsSolver).unwrap_err();
    assert!(err.to_string().starts_with("pep:"), "{err}");

    let bad = ScenarioSpec {
        load_scale: -1.0,
        ..low_penetration(0.5)
    };
    let err = run_scenario(&bad, &file, &hist, None, &HighsSolver).unwrap_err();
    assert!(err.to_string().starts_with("case:"), "{err}");
}

#[test]
fn missing_case_file_is_an_io_error() {
    let err = load_case(Path::new("/nonexistent/case.json")).unwrap_err();
    assert!(err.to_string().contains("case.json"), "{err}");
}
