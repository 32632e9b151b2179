//! End-to-end runs of the presets on small, fast configurations.

use sklab::lab_harness::{
    concentration_experiment, moment_ratio_experiment, run_experiment, ExperimentConfig,
    ExperimentKind, ExperimentReport, OutputFormat,
};
use sklab::Error;

fn csv_bytes(report: &ExperimentReport) -> Vec<u8> {
    let mut out = Vec::new();
    report.write_csv(&mut out).unwrap();
    out
}

fn cfg(kind: ExperimentKind, beta: f64, h: f64, ns: &[usize], k: usize, replicas: usize) -> ExperimentConfig {
    ExperimentConfig::new(kind, beta, h, ns.to_vec(), k, replicas)
}

#[test]
fn reports_are_bitwise_reproducible() {
    for kind in [ExperimentKind::RecursionStats, ExperimentKind::FreeEnergy, ExperimentKind::MomentRatio] {
        let mut c = cfg(kind, 0.3, 0.5, &[10], 2, 12);
        c.base_seed = 77;
        let a = csv_bytes(&run_experiment(&c).unwrap());
        let b = csv_bytes(&run_experiment(&c).unwrap());
        assert_eq!(a, b, "{}", kind.name());
    }
}

#[test]
fn replica_seeds_are_offsets_of_the_base_seed() {
    // Replicas 1.. of base seed 10 are replicas 0.. of base seed 11.
    let mut a = cfg(ExperimentKind::Concentration, 0.3, 0.5, &[8], 0, 5);
    a.base_seed = 10;
    let mut b = a.clone();
    b.base_seed = 11;
    b.replicas = 4;
    let ra = concentration_experiment(&a).unwrap();
    let rb = concentration_experiment(&b).unwrap();
    let ma = ra.row("quenched_mean", Some(8), None).unwrap().mean;
    let mb = rb.row("quenched_mean", Some(8), None).unwrap().mean;
    assert_ne!(ma, mb);
    a.replicas = 1;
    let single = concentration_experiment(&a).unwrap().row("quenched_mean", Some(8), None).unwrap().mean;
    assert!((5.0 * ma - single - 4.0 * mb).abs() < 1e-12);
}

#[test]
fn pass_flags_follow_the_gate_rule() {
    let c = cfg(ExperimentKind::FreeEnergy, 0.3, 0.5, &[8, 10], 1, 20);
    let report = run_experiment(&c).unwrap();
    for row in &report.rows {
        let expected = match row.target {
            None => true,
            Some(t) => (row.mean - t).abs() <= row.abs_tol.max(row.z_gate * row.stderr),
        };
        assert_eq!(row.pass, expected, "{}", row.observable);
        assert_eq!(row.pass, row.recompute_pass());
    }
    assert_eq!(report.all_pass(), report.failures().next().is_none());
}

#[test]
fn csv_and_json_carry_the_same_rows() {
    let c = cfg(ExperimentKind::Sequences, 0.3, 0.5, &[], 6, 1);
    let report = run_experiment(&c).unwrap();
    let mut json = Vec::new();
    report.write(OutputFormat::Json, &mut json).unwrap();
    let parsed: ExperimentReport = serde_json::from_slice(&json).unwrap();
    assert_eq!(parsed.rows, report.rows);
    assert_eq!(parsed.metadata.config, c);
    let csv = String::from_utf8(csv_bytes(&report)).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "observable,N,k,mean,stderr,target,z,abs_tol,z_gate,pass");
    assert_eq!(lines.count(), report.rows.len());
}

#[test]
fn save_writes_the_requested_format() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let mut c = cfg(ExperimentKind::ToyModel, 0.4, 0.0, &[], 1, 1);
    c.out_path = Some(path.to_string_lossy().into_owned());
    c.format = OutputFormat::Json;
    let report = run_experiment(&c).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let parsed: ExperimentReport = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed.rows, report.rows);
}

#[test]
fn beta_zero_free_energy_is_log_cosh() {
    let c = cfg(ExperimentKind::FreeEnergy, 0.0, 0.5, &[10], 0, 8);
    let report = run_experiment(&c).unwrap();
    let lc = 0.5_f64.cosh().ln();
    let quenched = report.row("quenched_free_energy", Some(10), Some(0)).unwrap();
    let annealed = report.row("conditional_annealed", Some(10), Some(0)).unwrap();
    assert!((quenched.mean - lc).abs() < 1e-14);
    assert!(quenched.stderr < 1e-14);
    assert!((annealed.mean - lc).abs() < 1e-14);
    assert!(report.all_pass());
}

#[test]
fn beta_zero_concentration_has_no_variance() {
    let c = cfg(ExperimentKind::Concentration, 0.0, 0.5, &[6, 10], 0, 10);
    let report = concentration_experiment(&c).unwrap();
    for n in [6, 10] {
        let row = report.row("quenched_variance", Some(n), None).unwrap();
        assert!(row.mean < 1e-28);
        assert_eq!(row.target, Some(0.0));
    }
    assert!(report.all_pass());
}

#[test]
fn beta_zero_moment_ratio_has_no_deficit() {
    let c = cfg(ExperimentKind::MomentRatio, 0.0, 0.5, &[6, 8], 0, 4);
    let report = moment_ratio_experiment(&c).unwrap();
    for n in [6, 8] {
        assert!(report.row("deficit", Some(n), Some(0)).unwrap().mean.abs() < 1e-13);
    }
}

#[test]
fn sequences_preset_reports_geometric_gap_decay() {
    let c = cfg(ExperimentKind::Sequences, 0.3, 0.5, &[], 8, 1);
    let report = run_experiment(&c).unwrap();
    assert!(report.all_pass());
    let q = report.row("q", None, None).unwrap().mean;
    assert!((q - 0.2192669).abs() < 1e-6);
    let at = report.metadata.at_value.unwrap();
    let ratio = report.row("gap_decay_ratio", None, Some(8)).unwrap().mean;
    assert!((ratio / at - 1.0).abs() < 0.1, "ratio {ratio}, AT {at}");
}

#[test]
fn toy_preset_flags_the_large_m_counterexample() {
    let mut c = cfg(ExperimentKind::ToyModel, 0.0, 0.0, &[], 1, 1);
    c.m = Some(0.9);
    c.beta = 0.95 * 0.5 / (1.0 - 0.81);
    assert!(!run_experiment(&c).unwrap().all_pass());
    c.m = Some(0.5);
    c.beta = 0.95 * 0.5 / 0.75;
    assert!(run_experiment(&c).unwrap().all_pass());
}

#[test]
fn tap_preset_runs() {
    let c = cfg(ExperimentKind::TapCompare, 0.2, 0.5, &[12], 10, 6);
    let report = run_experiment(&c).unwrap();
    assert!(report.row("tap_gibbs_distance", Some(12), Some(10)).unwrap().pass);
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        cfg(ExperimentKind::FreeEnergy, 0.3, 0.5, &[], 1, 4),
        cfg(ExperimentKind::FreeEnergy, 0.3, 0.5, &[8], 1, 0),
        cfg(ExperimentKind::FreeEnergy, 0.3, 0.5, &[1], 0, 4),
        cfg(ExperimentKind::FreeEnergy, -0.3, 0.5, &[8], 1, 4),
    ];
    for c in &bad {
        assert!(run_experiment(c).is_err(), "{c:?}");
    }
    let too_deep = cfg(ExperimentKind::RecursionStats, 0.3, 0.5, &[8, 20], 8, 2);
    assert!(matches!(run_experiment(&too_deep), Err(Error::StageTooLarge { .. })));
    let too_big = cfg(ExperimentKind::SecondMoment, 0.3, 0.5, &[16], 1, 2);
    assert!(matches!(run_experiment(&too_big), Err(Error::EnumerationLimit { .. })));
    let few = cfg(ExperimentKind::ZetaCov, 0.3, 0.5, &[50], 2, 10);
    assert!(matches!(run_experiment(&few), Err(Error::InsufficientReplicas { .. })));
}

#[test]
fn config_files_reject_unknown_fields() {
    let ok = r#"{"experiment":"free-energy","beta":0.3,"h":0.5,"n_values":[8],"k":1,"replicas":3}"#;
    let c = ExperimentConfig::from_json(ok).unwrap();
    assert_eq!(c.experiment, ExperimentKind::FreeEnergy);
    assert_eq!(c.z_gate, 3.0);
    let bad = r#"{"experiment":"free-energy","beta":0.3,"h":0.5,"n_values":[8],"k":1,"replicas":3,"seed":1}"#;
    assert!(matches!(ExperimentConfig::from_json(bad), Err(Error::Json(_))));
    let unknown = r#"{"experiment":"nope","beta":0.3,"h":0.5,"k":1,"replicas":3}"#;
    assert!(ExperimentConfig::from_json(unknown).is_err());
}

#[test]
fn demo_config_passes() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/demo.json");
    let report = run_experiment(&ExperimentConfig::load(path).unwrap()).unwrap();
    let failed: Vec<_> = report.failures().map(|r| r.observable.clone()).collect();
    assert!(failed.is_empty(), "{failed:?}");
}
