use std::path::Path;

use faddeev_core::experiments::*;
use faddeev_core::Error;

const SMALL: &str = r#"
dim = 2
t_max = 1.0
cadence = 0.25
energy_order = 1

[grid]
half_width = 5.0
spacing = 0.2

[perturbation]
epsilons = [1e-2, 5e-3]
"#;

fn small(kind: ExperimentKind) -> Resolved {
    resolve(parse_config_str(SMALL).unwrap(), Some(kind)).unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn minimal_config_gets_defaults() {
    let r = resolve(
        parse_config_str("dim = 2").unwrap(),
        Some(ExperimentKind::StabilityScaling),
    )
    .unwrap();
    assert_eq!(r.cfg.grid.half_width, 24.0);
    assert_eq!(r.cfg.grid.spacing, 0.03125);
    assert_eq!(r.cfg.t_max, 20.0);
    assert_eq!(r.cfg.perturbation.epsilons, vec![1e-2, 5e-3, 2.5e-3]);
    assert!(r.cfg.perturbation.v1.is_some());
    let echo = r.echo();
    assert!(
        echo.contains("kind = \"stability_scaling\"") && echo.contains("power = 12"),
        "{echo}"
    );
    let norms = r.norms.unwrap();
    assert!(norms.all_met());
}

#[test]
fn unknown_key_is_named() {
    let err = parse_config_str("dim = 2\n[grid]\nspaceing = 0.1\n")
        .unwrap_err()
        .to_string();
    assert!(err.contains("spaceing"), "{err}");
    let err = parse_config_str("colour = 1").unwrap_err().to_string();
    assert!(err.contains("colour"), "{err}");
}

#[test]
fn over_threshold_background_is_refused() {
    let text = "dim = 2\n[background]\namplitude = 5.0\n";
    let err = resolve(parse_config_str(text).unwrap(), Some(ExperimentKind::StabilityScaling)).unwrap_err();
    match &err {
        Error::Threshold { value, bound, .. } => {
            assert!(*value > *bound);
            assert!((bound - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        }
        other => panic!("{other}"),
    }
    assert!(err.to_string().contains("6.28"), "{err}");
    // the audit does not evolve, so it may look at any background
    assert!(resolve(parse_config_str(text).unwrap(), Some(ExperimentKind::BoundsAudit)).is_ok());
}

#[test]
fn inconsistent_configs_are_refused() {
    for text in [
        "dim = 4",
        "dim = 2\n[grid]\nradial = true",
        "dim = 2\ncadence = 0.3\nt_max = 1.0",
        "dim = 2\nt_max = 30.0",
        "dim = 2\nenergy_order = 5",
        "kind = \"decay_profile\"",
    ] {
        let cfg = parse_config_str(text).unwrap();
        assert!(resolve(cfg, Some(ExperimentKind::StabilityScaling)).is_err(), "{text}");
    }
    let radial = "dim = 3\n[grid]\nradial = true\n[perturbation]\nu0 = [{ center = [0.2, 0.0, 0.0], width = 0.5 }]";
    let err = resolve(
        parse_config_str(radial).unwrap(),
        Some(ExperimentKind::StabilityScaling),
    )
    .unwrap_err();
    assert!(err.to_string().contains("centred"), "{err}");
}

#[test]
fn resumed_run_matches_one_shot_run() {
    let r = small(ExperimentKind::StabilityScaling);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let full = run_experiment(
        &r,
        &RunOptions {
            out: Some(a.path().into()),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(!full.halted);
    assert_eq!(full.series.len(), 2);
    assert_eq!(full.series[0].1.len(), 5);

    let half = run_experiment(
        &r,
        &RunOptions {
            out: Some(b.path().into()),
            halt_at: Some(9),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(half.halted);
    assert!(half.series[0].1.len() < 5);
    let resume = Some(b.path().join("checkpoint.bin"));
    let rest = run_experiment(
        &r,
        &RunOptions {
            out: Some(b.path().into()),
            resume,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(rest.summary, full.summary);
    for name in ["series_eps_1e-2.csv", "series_eps_5e-3.csv", "summary.toml"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn corrupted_or_foreign_checkpoints_are_refused() {
    let r = small(ExperimentKind::StabilityScaling);
    let dir = tempfile::tempdir().unwrap();
    run_experiment(
        &r,
        &RunOptions {
            out: Some(dir.path().into()),
            halt_at: Some(3),
            ..Default::default()
        },
    )
    .unwrap();
    let path = dir.path().join("checkpoint.bin");
    let good = std::fs::read(&path).unwrap();

    let mut bad = good.clone();
    let n = bad.len();
    bad[n - 100] ^= 0x40;
    std::fs::write(&path, &bad).unwrap();
    let err = run_experiment(
        &r,
        &RunOptions {
            resume: Some(path.clone()),
            ..Default::default()
        },
    )
    .unwrap_err();
    assert!(
        matches!(err, Error::Checkpoint(_)) && err.to_string().contains("hash"),
        "{err}"
    );

    std::fs::write(&path, &good).unwrap();
    let mut other = parse_config_str(SMALL).unwrap();
    other.perturbation.epsilons = vec![1e-2, 4e-3];
    let other = resolve(other, Some(ExperimentKind::StabilityScaling)).unwrap();
    let err = run_experiment(
        &other,
        &RunOptions {
            resume: Some(path),
            ..Default::default()
        },
    )
    .unwrap_err();
    assert!(err.to_string().contains("configuration"), "{err}");
}

#[test]
fn summaries_reduce_from_the_csv_and_runs_repeat_bytewise() {
    let r = small(ExperimentKind::StabilityScaling);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = run_experiment(
        &r,
        &RunOptions {
            out: Some(a.path().into()),
            ..Default::default()
        },
    )
    .unwrap();
    run_experiment(
        &r,
        &RunOptions {
            out: Some(b.path().into()),
            ..Default::default()
        },
    )
    .unwrap();
    let mut series = Vec::new();
    for (label, rows) in &out.series {
        let text = String::from_utf8(read(a.path(), &format!("series_{label}.csv"))).unwrap();
        let back = from_csv(&text).unwrap();
        assert_eq!(&back, rows);
        series.push((label.clone(), back));
    }
    assert_eq!(stability_summary(&r, &series), out.summary);
    for name in ["series_eps_1e-2.csv", "series_eps_5e-3.csv", "summary.toml", "run.log"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let head = String::from_utf8(read(a.path(), "series_eps_1e-2.csv")).unwrap();
    assert!(head.starts_with("t,E1_u,E1_v,E2_u,E2_v,E3_u,E3_v,E4_u,E4_v,ghost1_u"));
}

#[test]
fn aborts_leave_a_record() {
    let mut cfg = parse_config_str(SMALL).unwrap();
    cfg.abort_margin = 0.9999;
    let r = resolve(cfg, Some(ExperimentKind::GhostIntegral)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = run_experiment(
        &r,
        &RunOptions {
            out: Some(dir.path().into()),
            ..Default::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::Hyperbolicity { .. }), "{err}");
    let summary: toml::Table = toml::from_str(&String::from_utf8(read(dir.path(), "summary.toml")).unwrap()).unwrap();
    assert_eq!(summary["pass"].as_bool(), Some(false));
    assert!(summary["abort"].as_str().unwrap().contains("hyperbolicity"));
}

#[test]
fn identity_suite_passes_quickly() {
    let text = "dim = 2\n[identity]\nsamples = 200\nfamily_size = 4\nharness_times = [0.0, 3.0]\nharness_spacings = [0.1, 0.05]\nharness_tol = 0.2\n";
    let r = resolve(parse_config_str(text).unwrap(), Some(ExperimentKind::IdentitySuite)).unwrap();
    let out = run_experiment(&r, &RunOptions::default()).unwrap();
    assert!(out.summary.pass, "{:#?}", out.summary.failed());
}
