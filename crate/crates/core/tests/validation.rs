use infomarket::dist::max_moment_with;
use infomarket::experiment::validate::all_passed;
use infomarket::experiment::{validate, validate_with, Suite, ValidationHooks};
use infomarket::special::ln_gamma;

#[test]
fn full_suite_passes() {
    let reports = validate(Suite::All);
    let failed: Vec<_> = reports.iter().filter(|r| !r.pass).collect();
    assert!(failed.is_empty(), "{failed:#?}");
    assert!(reports.len() > 60);
}

#[test]
fn market_suite_includes_sampling_crosscheck() {
    let reports = validate(Suite::Market);
    assert!(reports.iter().any(|r| r.name.starts_with("sampling_modes_n8")));
    assert!(reports.iter().any(|r| r.name.starts_with("sampling_modes_n64")));
}

#[test]
fn corrupted_gamma_is_caught() {
    let hooks = ValidationHooks {
        max_moment: Box::new(|spec, m| max_moment_with(spec, m, |x| ln_gamma(x) * 1.001)),
    };
    let dist = validate_with(Suite::Dist, &hooks);
    assert!(!all_passed(&dist));
    assert!(dist
        .iter()
        .filter(|r| r.name.starts_with("max_moment_vs_quadrature_pareto"))
        .any(|r| !r.pass));
    assert!(!all_passed(&validate_with(Suite::All, &hooks)));
}
