//! Statistical checks of the estimator against the concrete oracle.

use amc_core::concrete::{oracle_estimate, run_concrete, NondetSpec, OracleMode, ReplaySource};
use amc_core::interp::{ChoiceKey, ChoiceTable};
use amc_core::lang::{parse, Site, Value};
use amc_core::{run, run_restricted, AnalysisConfig, RestrictionSpec, RunParams};

const CORPUS: [(&str, &str); 4] = [
    ("fig1", include_str!("../../../corpus/fig1.amc")),
    ("fig2", include_str!("../../../corpus/fig2.amc")),
    ("fig3", include_str!("../../../corpus/fig3.amc")),
    ("fig4", include_str!("../../../corpus/fig4.amc")),
];

fn var(p: f64, n: u64) -> f64 {
    p * (1.0 - p) / n as f64
}

#[test]
fn oracle_lower_bounds_analyzer() {
    let cfg = AnalysisConfig::default();
    for (name, src) in CORPUS {
        let p = parse(src).unwrap();
        let params = RunParams { trials: 10_000, seed: 11, ..RunParams::default() };
        let report = run(&p, &params, &cfg).unwrap();
        let spec = NondetSpec::infer(&p, 64).unwrap();
        let n_oracle = 20_000;
        let (v, v_var) = if name == "fig1" {
            (oracle_estimate(&p, &spec, OracleMode::ExactDiscrete, 0, 0).unwrap().estimate, 0.0)
        } else {
            let v = oracle_estimate(&p, &spec, OracleMode::Sampled, n_oracle, 5).unwrap().estimate;
            (v, var(v, n_oracle))
        };
        let sigma = (var(report.p_hat, report.n) + v_var).sqrt();
        assert!(v <= report.p_hat + 3.0 * sigma, "{name}: oracle {v} vs analyzer {}", report.p_hat);
        assert!(report.p_prime >= report.p_hat);
    }
}

#[test]
fn fig4_containment_holds() {
    // With the second uniform below 0.75 no input on the grid reaches the
    // outcome, whatever the first uniform.
    let p = parse(CORPUS[3].1).unwrap();
    let spec = NondetSpec::infer(&p, 64).unwrap();
    let grid = spec.assignments(&p.decls).unwrap();
    for k in 0..75 {
        let u2 = k as f64 / 100.0;
        for j in 0..=20 {
            let u1 = j as f64 / 20.0;
            let mut t = ChoiceTable::new();
            t.insert(ChoiceKey { site: Site(1), word: vec![] }, Value::Real(u1)).unwrap();
            t.insert(ChoiceKey { site: Site(2), word: vec![] }, Value::Real(u2)).unwrap();
            t.insert(ChoiceKey { site: Site(3), word: vec![] }, Value::Real(u2)).unwrap();
            for env in &grid {
                let r = run_concrete(&p, env, &mut ReplaySource::new(&t, 0)).unwrap();
                assert!(!r.hit, "hit with u1={u1}, u2={u2}");
            }
        }
    }
}

#[test]
fn restriction_is_consistent() {
    let p = parse(CORPUS[3].1).unwrap();
    let cfg = AnalysisConfig::default();
    let spec = RestrictionSpec::from_json(r#"{"assert_containment": true, "sites":[{"site":2,"range":[0.75,1.0]}]}"#).unwrap();
    let params = RunParams { trials: 10_000, seed: 21, ..RunParams::default() };
    let plain = run(&p, &params, &cfg).unwrap();
    let restricted = run_restricted(&p, &spec, &params, &cfg).unwrap();

    let q = restricted.hits as f64 / restricted.n as f64;
    let sigma = (var(plain.p_hat, plain.n) + 0.25 * 0.25 * var(q, restricted.n)).sqrt();
    assert!((plain.p_hat - restricted.p_hat).abs() <= 3.0 * sigma, "{} vs {}", plain.p_hat, restricted.p_hat);
    assert!((restricted.margin * 4.0 - plain.margin).abs() < 1e-12);

    let oracle = oracle_estimate(&p, &NondetSpec::infer(&p, 64).unwrap(), OracleMode::Sampled, 20_000, 8)
        .unwrap()
        .estimate;
    let sigma_o = (0.25 * 0.25 * var(q, restricted.n) + var(oracle, 20_000)).sqrt();
    assert!(oracle <= restricted.p_hat + 3.0 * sigma_o);
    assert!(restricted.p_prime >= restricted.p_hat);
}

#[test]
fn calibration_on_fig1() {
    // Pr[p' < 0.5] <= eps; allow the 3-sigma binomial slack over 200 runs.
    let p = parse(CORPUS[0].1).unwrap();
    let cfg = AnalysisConfig::default();
    let runs = 200u64;
    let eps = 0.1;
    let below = (0..runs)
        .filter(|&s| {
            let params = RunParams { trials: 500, epsilon: eps, seed: 1000 + s, jobs: 1 };
            run(&p, &params, &cfg).unwrap().p_prime < 0.5
        })
        .count() as f64;
    assert!(below / runs as f64 <= eps + 3.0 * (eps / runs as f64).sqrt());
}
