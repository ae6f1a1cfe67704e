use vanvisc::functionals::EventCase;
use vanvisc::harness::{converge, decay, functionals, ExperimentConfig};

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text).unwrap()
}

#[test]
fn merge_strictly_decreases_q_hat() {
    let r = functionals(&cfg("scenario = merge\nepsilons = 1e-3\n")).unwrap();
    let audit = &r.runs[0].audit;
    // One interaction: the weaker shock is absorbed by the one above ρ.
    assert_eq!(audit.records.len(), 1);
    assert_eq!(audit.records[0].case, EventCase::SameFamilyAbsorption);
    assert!(audit.records[0].delta_q_hat < 0.0);
    assert_eq!(r.violations, 0);
}

#[test]
fn creation_is_the_only_increase() {
    let r = functionals(&cfg("scenario = creation\nepsilons = 1e-3\n")).unwrap();
    let audit = &r.runs[0].audit;
    let up: Vec<_> = audit.records.iter().filter(|e| e.delta_q_hat > 0.0).collect();
    assert_eq!(up.len(), 1);
    assert_eq!(up[0].case, EventCase::Creation);
    assert!(up[0].creation_ratio.unwrap() > 0.0);
}

#[test]
fn lone_shock_has_an_empty_audit() {
    let r = functionals(&cfg("scenario = lone_shock\nepsilons = 1e-3\n")).unwrap();
    assert_eq!(r.runs[0].events, 0);
    assert!(r.runs[0].audit.records.is_empty());
    assert_eq!(r.runs[0].max_upsilon_increase, None);
    r.check().unwrap();
}

#[test]
fn shock_only_data_has_no_rarefaction_pairs() {
    let t = decay(&cfg("scenario = merge\ntau = 2\n")).unwrap();
    assert_eq!(t.rows.len(), 5);
    assert!(t.rows.iter().all(|(_, r)| r.integral == 0.0));
}

#[test]
fn single_rarefaction_converges_without_tracks() {
    let t = converge(&cfg("scenario = lone_rarefaction\nepsilons = 4e-3, 1e-3\n")).unwrap();
    assert!(t.rows.iter().all(|r| r.is_ok() && r.tracks == 0));
    // O(√ε) or better: quartering ε at least halves the error.
    assert!(t.rows[1].l1_error <= 0.5 * t.rows[0].l1_error, "{:?}", t.rows);
}
