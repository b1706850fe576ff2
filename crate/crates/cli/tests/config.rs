use trapdiff_cli::{parse_config, run_scenario, CliError, RawConfig, Scenario, ScenarioConfig};

const PAPER_1D: &str = "dx = 1e-4\nt_final = 0.05\nm = 3\nepsilon = 4e-3\nsigma = 0.1\nv0 = 1e-6\nx_m = 0.5\n";

#[test]
fn empty_config_uses_defaults_for_coeffs() {
    let cfg = parse_config(Some(Scenario::Coeffs), None, &[]).unwrap();
    assert_eq!(cfg.cutoff, 2.0);
    assert_eq!(cfg.d, 1.0);
    let art = run_scenario(&cfg).unwrap();
    let names: Vec<&str> = art.files.iter().map(|(n, _)| n.as_str()).collect();
    assert!(names.contains(&"coefficients.csv") && names.contains(&"taylor.csv") && names.contains(&"capacity.csv"));
}

#[test]
fn effective_config_round_trips() {
    let cfg = ScenarioConfig::from_raw(Some(Scenario::Full1d), &RawConfig::parse(PAPER_1D).unwrap()).unwrap();
    assert_eq!(cfg.dt, None);
    let again = ScenarioConfig::from_raw(None, &RawConfig::parse(&cfg.echo()).unwrap()).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.echo(), cfg.echo());
}

#[test]
fn flags_override_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, PAPER_1D).unwrap();
    let cfg = parse_config(Some(Scenario::Multiscale1d), Some(&path), &[("dx".into(), "2e-3".into())]).unwrap();
    assert_eq!(cfg.dx, Some(2e-3));
    assert_eq!(cfg.t_final, Some(0.05));
}

#[test]
fn peclet_violation_is_named() {
    let raw = RawConfig::parse("phi = 14\nepsilon = 1e-4\ndx = 1e-3\nt_final = 0.01\nv0 = 1e-6\nsigma = 0.1\nx_m = 0.5\n").unwrap();
    let err = ScenarioConfig::from_raw(Some(Scenario::Full1d), &raw).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, CliError::Usage(_)));
    assert!(msg.contains("mesh Peclet") && msg.contains("limit 2"), "{msg}");
}

#[test]
fn missing_and_unknown_keys_are_rejected() {
    let missing = RawConfig::parse("m = 3\ndx = 1e-3\nv0 = 1e-6\nsigma = 0.1\nx_m = 0.5\n").unwrap();
    let msg = ScenarioConfig::from_raw(Some(Scenario::Multiscale1d), &missing).unwrap_err().to_string();
    assert!(msg.contains("t_final"), "{msg}");
    let msg = RawConfig::parse("dxx = 1").unwrap_err().to_string();
    assert!(msg.contains("dxx"), "{msg}");
    let partial_ic = RawConfig::parse("m = 3\ndx = 1e-3\nt_final = 0.1\nv0 = 1e-6\n").unwrap();
    assert!(ScenarioConfig::from_raw(Some(Scenario::Multiscale1d), &partial_ic).is_err());
}

#[test]
fn two_d_scenarios_need_y_m() {
    let raw = RawConfig::parse("m = 3\ndx = 0.05\nt_final = 0.1\nv0 = 1e-6\nsigma = 0.1\nx_m = 1\n").unwrap();
    let msg = ScenarioConfig::from_raw(Some(Scenario::Multiscale2dBubble), &raw).unwrap_err().to_string();
    assert!(msg.contains("y_m"), "{msg}");
}
