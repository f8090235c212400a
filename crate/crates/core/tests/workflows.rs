use ggmech::analysis::{linear_grid, tail_ratio_curve, TAIL_CUTOFF};
use ggmech::mechanisms::{audit_privacy_loss, sanitize, MechanismKind};
use ggmech::pipeline::{
    emit_curve, load_histogram, run_experiment, DatasetSource, ExperimentConfig, SynthKind,
};
use ggmech::{Error, MechanismSpec, RngStream};
use proptest::prelude::*;

#[test]
fn json_spec_sanitizes_and_clamps() {
    let spec: MechanismSpec = serde_json::from_str(
        r#"{"kind":"laplace","epsilon":0.5,"profile":{"delta1":[1,1,1],"bounds":[[0,20],[0,20],[0,20]],"disjoint":true}}"#,
    )
    .unwrap();
    let out = sanitize(&spec, &[3.0, 0.0, 17.0], &mut RngStream::new(1, 1)).unwrap();
    assert_eq!(out.values.len(), 3);
    assert_eq!(out.scale_used, 2.0);
    let clamped = out.clamp(&[0.0], &[20.0]).unwrap().normalize(20.0).unwrap();
    assert!((clamped.values.iter().sum::<f64>() - 20.0).abs() < 1e-9);
}

#[test]
fn same_stream_same_output() {
    let spec: MechanismSpec = serde_json::from_str(
        r#"{"kind":"gg_pdp","p":3,"epsilon":1,"delta":0.05,"profile":{"delta1":[1,0.5]}}"#,
    )
    .unwrap();
    let a = sanitize(&spec, &[1.0, 2.0], &mut RngStream::new(5, 9)).unwrap();
    let b = sanitize(&spec, &[1.0, 2.0], &mut RngStream::new(5, 9)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn larger_datasets_have_smaller_relative_error() {
    let run = |kind| {
        let config = ExperimentConfig {
            mechanisms: vec![
                MechanismKind::Laplace.into(),
                MechanismKind::GaussPdp.into(),
                MechanismKind::GaussAdp.into(),
            ],
            deltas: vec![0.05],
            repeats: 100,
            ..ExperimentConfig::new(DatasetSource::Synthetic(kind), 31)
        };
        run_experiment(&config).unwrap()
    };
    let mildew = run(SynthKind::Mildew);
    let czech = run(SynthKind::Czech);
    for (m, c) in mildew.cells.iter().zip(&czech.cells) {
        assert_eq!(
            (m.mechanism, m.epsilon, m.delta),
            (c.mechanism, c.epsilon, c.delta)
        );
        assert!(c.mean_l1 / czech.metadata.n < m.mean_l1 / mildew.metadata.n);
    }
}

#[test]
fn experiment_over_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hist.csv");
    std::fs::write(&path, "label,count\nx,4\ny,0\nz,11\n").unwrap();
    let hist = load_histogram(&path).unwrap();
    assert_eq!(hist.n(), 15.0);
    let config = ExperimentConfig {
        repeats: 20,
        deltas: vec![0.1],
        ..ExperimentConfig::new(DatasetSource::File(path.clone()), 8)
    };
    let report = run_experiment(&config).unwrap();
    // laplace, gauss_pdp, gauss_adp and gg_pdp p=3, three epsilons each.
    assert_eq!(report.cells.len(), 12);
    assert_eq!(report.metadata.bins, 3);

    let missing = ExperimentConfig::new(DatasetSource::File(dir.path().join("nope.csv")), 8);
    assert_eq!(run_experiment(&missing).unwrap_err().exit_code(), 3);
}

#[test]
fn curve_csv_has_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let pts = tail_ratio_curve(1.0, 0.05, 1.0, &linear_grid(10.0, 101), TAIL_CUTOFF).unwrap();
    emit_curve(&pts, &path, false).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 102);
    assert!(matches!(
        emit_curve(&pts, &path, false),
        Err(Error::Config(_))
    ));
}

fn bounded_spec(kind: &str, p: u32, eps: f64) -> MechanismSpec {
    serde_json::from_str(&format!(
        r#"{{"kind":"{kind}","p":{p},"epsilon":{eps},"profile":{{"delta1":[1,2],"bounds":[[0,4],[-3,3]]}}}}"#
    ))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn truncated_mechanisms_respect_budget(
        p in 1u32..4,
        eps in 0.2f64..3.0,
        s0 in 0.0f64..4.0,
        s1 in -3.0f64..3.0,
        d0 in -1.0f64..1.0,
        d1 in -2.0f64..2.0,
    ) {
        let s = [s0, s1];
        let s2 = [(s0 + d0).clamp(0.0, 4.0), (s1 + d1).clamp(-3.0, 3.0)];
        let tgg = audit_privacy_loss(&bounded_spec("tgg_edp", p, eps), &s, &s2, 201).unwrap();
        prop_assert!(tgg <= eps + 1e-9);
        let exp = audit_privacy_loss(&bounded_spec("exp_gg", p, eps), &s, &s2, 201).unwrap();
        prop_assert!(exp < eps);
    }
}
