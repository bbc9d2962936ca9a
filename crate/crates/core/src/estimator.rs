//! Statistical driver: runs independent trials, averages them and attaches a
//! one-sided Chernoff-Hoeffding margin.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interp::{AnalysisConfig, Analyzer, InterpError, SamplingRange};
use crate::lang::{Generator, Program, Site};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid restriction: {0}")]
    Restriction(String),
    #[error("trial {index}: {source}")]
    Trial {
        index: u64,
        #[source]
        source: InterpError,
    },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

fn check_epsilon(eps: f64) -> Result<(), EstimatorError> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(EstimatorError::Domain(format!("epsilon must lie in (0, 1], got {eps}")))
    }
}

/// Margin `t = sqrt(ln(1/eps) / (2n))`.
pub fn margin(n: u64, eps: f64) -> Result<f64, EstimatorError> {
    if n == 0 {
        return Err(EstimatorError::Domain("trial count must be at least 1".into()));
    }
    check_epsilon(eps)?;
    Ok(((1.0 / eps).ln() / (2.0 * n as f64)).sqrt())
}

/// Upper bound `min(1, p_hat + t)` holding with probability at least `1 - eps`.
pub fn bound(p_hat: f64, n: u64, eps: f64) -> Result<f64, EstimatorError> {
    if !(0.0..=1.0).contains(&p_hat) {
        return Err(EstimatorError::Domain(format!("p_hat must lie in [0, 1], got {p_hat}")));
    }
    Ok((p_hat + margin(n, eps)?).min(1.0))
}

/// Smallest trial count whose margin at `eps` is at most `t`.
pub fn plan_trials(t: f64, eps: f64) -> Result<u64, EstimatorError> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(EstimatorError::Domain(format!("margin must lie in (0, 1], got {t}")));
    }
    check_epsilon(eps)?;
    let n = ((1.0 / eps).ln() / (2.0 * t * t)).ceil();
    if n > u64::MAX as f64 {
        return Err(EstimatorError::Domain("trial count overflows".into()));
    }
    Ok((n as u64).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub trials: u64,
    pub epsilon: f64,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            trials: 10_000,
            epsilon: 0.01,
            seed: 0,
            jobs: 1,
        }
    }
}

/// One restricted generator site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteRange {
    pub site: Site,
    pub range: [f64; 2],
}

/// Sub-ranges for generator sites outside loops. The user asserts that every
/// random input able to reach the outcome lies inside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictionSpec {
    #[serde(default)]
    pub assert_containment: bool,
    pub sites: Vec<SiteRange>,
}

/// A restriction checked against its program.
#[derive(Debug, Clone, PartialEq)]
pub struct Restriction {
    pub overrides: BTreeMap<Site, SamplingRange>,
    pub probability: f64,
}

impl RestrictionSpec {
    pub fn from_json(text: &str) -> Result<RestrictionSpec, EstimatorError> {
        serde_json::from_str(text).map_err(|e| EstimatorError::Restriction(e.to_string()))
    }

    /// Checks the spec against `p` and computes Pr(R).
    pub fn resolve(&self, p: &Program) -> Result<Restriction, EstimatorError> {
        let bad = |m: String| Err(EstimatorError::Restriction(m));
        if !self.assert_containment {
            return bad("the containment assertion must be set explicitly".into());
        }
        let sites = p.generator_sites();
        let mut overrides = BTreeMap::new();
        let mut probability = 1.0;
        for r in &self.sites {
            let Some(gs) = sites.iter().find(|s| s.site == r.site) else {
                return bad(format!("no generator site {}", r.site));
            };
            if gs.in_loop {
                return bad(format!("site {} lies inside a loop", r.site));
            }
            let [lo, hi] = r.range;
            if lo.is_nan() || hi.is_nan() || lo > hi || lo < 0.0 || hi > 1.0 {
                return bad(format!("range [{lo}, {hi}] of site {} is outside the support", r.site));
            }
            let measure = match gs.generator {
                Generator::Uniform => hi - lo,
                Generator::CoinFlip => {
                    if lo.fract() != 0.0 || hi.fract() != 0.0 {
                        return bad(format!("coin site {} needs integer bounds", r.site));
                    }
                    (hi - lo + 1.0) / 2.0
                }
            };
            if overrides.insert(r.site, SamplingRange { lo, hi }).is_some() {
                return bad(format!("site {} restricted twice", r.site));
            }
            probability *= measure;
        }
        if probability <= 0.0 {
            return bad("restriction has probability zero".into());
        }
        Ok(Restriction { overrides, probability })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictionEcho {
    pub sites: Vec<SiteRange>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    #[serde(flatten)]
    pub analysis: AnalysisConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub restriction: Option<RestrictionEcho>,
}

/// Counters that are not part of the published result.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Trials stopped by the step budget (counted as hits).
    pub aborted: u64,
    /// Loops that needed widening, summed over trials.
    pub widening_events: u64,
    /// Fixpoint computations, summed over trials.
    pub fixpoints: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub program: String,
    pub n: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub epsilon: f64,
    pub margin: f64,
    pub p_prime: f64,
    pub seed: u64,
    pub jobs: usize,
    pub elapsed_ms: u64,
    pub config: ConfigEcho,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub diagnostics: Diagnostics,
}

impl Report {
    /// Equality ignoring the scheduling fields (`jobs`, `elapsed_ms`).
    pub fn same_result(&self, other: &Report) -> bool {
        let strip = |r: &Report| Report {
            jobs: 0,
            elapsed_ms: 0,
            ..r.clone()
        };
        strip(self) == strip(other)
    }

    pub fn render_text(&self) -> String {
        let mut out = format!(
            "program   {}\ntrials    {}\nhits      {}\np_hat     {:.6}\nepsilon   {}\nmargin    {:.6}\np_prime   {:.6}\nseed      {}\njobs      {}\nelapsed   {} ms\n",
            self.program,
            self.n,
            self.hits,
            self.p_hat,
            self.epsilon,
            self.margin,
            self.p_prime,
            self.seed,
            self.jobs,
            self.elapsed_ms
        );
        if let Some(r) = &self.config.restriction {
            out.push_str(&format!("restricted Pr(R) = {}\n", r.probability));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

fn tally(
    p: &Program,
    params: &RunParams,
    cfg: &AnalysisConfig,
    overrides: Option<&BTreeMap<Site, SamplingRange>>,
) -> Result<(u64, Diagnostics), EstimatorError> {
    if params.trials == 0 {
        return Err(EstimatorError::Domain("trial count must be at least 1".into()));
    }
    if params.jobs == 0 {
        return Err(EstimatorError::Domain("jobs must be at least 1".into()));
    }
    check_epsilon(params.epsilon)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(params.jobs)
        .build()
        .map_err(|e| EstimatorError::Pool(e.to_string()))?;
    let mut analyzer = Analyzer::new(p, cfg);
    if let Some(o) = overrides {
        analyzer = analyzer.with_overrides(o);
    }
    let zero = || (0u64, Diagnostics::default());
    pool.install(|| {
        (0..params.trials)
            .into_par_iter()
            .map(|i| {
                let t = analyzer
                    .run(seed::trial_seed(params.seed, i))
                    .map_err(|source| EstimatorError::Trial { index: i, source })?;
                let d = Diagnostics {
                    aborted: u64::from(t.aborted),
                    widening_events: u64::from(t.widened_loops),
                    fixpoints: u64::from(t.fixpoints),
                };
                Ok((t.t_w(), d))
            })
            .try_reduce(zero, |(h1, d1), (h2, d2)| {
                Ok((
                    h1 + h2,
                    Diagnostics {
                        aborted: d1.aborted + d2.aborted,
                        widening_events: d1.widening_events + d2.widening_events,
                        fixpoints: d1.fixpoints + d2.fixpoints,
                    },
                ))
            })
    })
}

fn warnings_for(d: &Diagnostics) -> Vec<String> {
    let mut w = Vec::new();
    if d.aborted > 0 {
        w.push(format!("{} trial(s) exhausted the step budget and were counted as hits", d.aborted));
    }
    if d.widening_events > 0 {
        w.push(format!("widening used in {} loop summaries", d.widening_events));
    }
    w
}

/// Runs `params.trials` abstract trials and bounds the outcome probability.
/// The result does not depend on `params.jobs`.
pub fn run(p: &Program, params: &RunParams, cfg: &AnalysisConfig) -> Result<Report, EstimatorError> {
    let start = Instant::now();
    let (hits, diagnostics) = tally(p, params, cfg, None)?;
    let n = params.trials;
    let p_hat = hits as f64 / n as f64;
    let t = margin(n, params.epsilon)?;
    Ok(Report {
        program: p.name.clone(),
        n,
        hits,
        p_hat,
        epsilon: params.epsilon,
        margin: t,
        p_prime: (p_hat + t).min(1.0),
        seed: params.seed,
        jobs: params.jobs,
        elapsed_ms: start.elapsed().as_millis() as u64,
        config: ConfigEcho {
            analysis: cfg.clone(),
            restriction: None,
        },
        warnings: warnings_for(&diagnostics),
        diagnostics,
    })
}

/// Like [`run`], but samples the restricted sites conditionally on their
/// sub-ranges and rescales by Pr(R). Sound only under the user's containment
/// assertion. The reported margin is the scaled one, so that
/// `p_prime = min(1, p_hat + margin)` still holds.
pub fn run_restricted(
    p: &Program,
    spec: &RestrictionSpec,
    params: &RunParams,
    cfg: &AnalysisConfig,
) -> Result<Report, EstimatorError> {
    let start = Instant::now();
    let r = spec.resolve(p)?;
    let (hits, diagnostics) = tally(p, params, cfg, Some(&r.overrides))?;
    let n = params.trials;
    let p_hat = r.probability * (hits as f64 / n as f64);
    let t = r.probability * margin(n, params.epsilon)?;
    let mut warnings = vec!["conditionally sound on user assertion".to_string()];
    warnings.extend(warnings_for(&diagnostics));
    Ok(Report {
        program: p.name.clone(),
        n,
        hits,
        p_hat,
        epsilon: params.epsilon,
        margin: t,
        p_prime: (p_hat + t).min(1.0),
        seed: params.seed,
        jobs: params.jobs,
        elapsed_ms: start.elapsed().as_millis() as u64,
        config: ConfigEcho {
            analysis: cfg.clone(),
            restriction: Some(RestrictionEcho {
                sites: spec.sites.clone(),
                probability: r.probability,
            }),
        },
        warnings,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;
    use proptest::prelude::*;

    const FIG1: &str = include_str!("../../../corpus/fig1.amc");
    const FIG4: &str = include_str!("../../../corpus/fig4.amc");

    #[test]
    fn bound_examples() {
        assert!((bound(0.833, 10_000, 0.01).unwrap() - 0.8482).abs() < 1e-4);
        assert!((bound(0.5, 10_000, 0.01).unwrap() - 0.5152).abs() < 1e-4);
        assert_eq!(bound(0.3, 17, 1.0).unwrap(), 0.3);
        assert_eq!(bound(0.999, 10, 0.01).unwrap(), 1.0);
    }

    #[test]
    fn bound_rejects_bad_input() {
        assert!(bound(0.5, 0, 0.01).is_err());
        assert!(bound(0.5, 10, 0.0).is_err());
        assert!(bound(0.5, 10, 1.5).is_err());
        assert!(bound(-0.1, 10, 0.1).is_err());
        assert!(bound(f64::NAN, 10, 0.1).is_err());
    }

    #[test]
    fn plan_examples() {
        assert_eq!(plan_trials(0.01, 0.01).unwrap(), 23026);
        assert_eq!(plan_trials(0.1, 0.01).unwrap(), 231);
        assert_eq!(plan_trials(0.5, 1.0).unwrap(), 1);
        assert!(plan_trials(0.0, 0.01).is_err());
        assert!(plan_trials(0.1, 0.0).is_err());
    }

    #[test]
    fn constant_program() {
        let p = parse("int x; x = 1; know (x == 1);").unwrap();
        let params = RunParams {
            trials: 1,
            ..RunParams::default()
        };
        let r = run(&p, &params, &AnalysisConfig::default()).unwrap();
        assert_eq!((r.hits, r.p_hat, r.p_prime), (1, 1.0, 1.0));
    }

    #[test]
    fn jobs_do_not_change_result() {
        let p = parse(FIG1).unwrap();
        let cfg = AnalysisConfig::default();
        let base = RunParams {
            trials: 2000,
            seed: 9,
            ..RunParams::default()
        };
        let r1 = run(&p, &base, &cfg).unwrap();
        for jobs in [2, 3, 8] {
            let r = run(&p, &RunParams { jobs, ..base }, &cfg).unwrap();
            assert!(r1.same_result(&r));
        }
    }

    #[test]
    fn restriction_validation() {
        let p = parse(FIG4).unwrap();
        let ok = RestrictionSpec::from_json(r#"{"assert_containment": true, "sites":[{"site":2,"range":[0.75,1.0]}]}"#).unwrap();
        assert_eq!(ok.resolve(&p).unwrap().probability, 0.25);
        let unasserted = RestrictionSpec { assert_containment: false, ..ok.clone() };
        assert!(unasserted.resolve(&p).is_err());
        let outside = RestrictionSpec::from_json(r#"{"assert_containment": true, "sites":[{"site":2,"range":[0.5,1.5]}]}"#).unwrap();
        assert!(outside.resolve(&p).is_err());
        let missing = RestrictionSpec::from_json(r#"{"assert_containment": true, "sites":[{"site":9,"range":[0,1]}]}"#).unwrap();
        assert!(missing.resolve(&p).is_err());
        let empty = RestrictionSpec::from_json(r#"{"assert_containment": true, "sites":[{"site":2,"range":[0.5,0.5]}]}"#).unwrap();
        assert!(empty.resolve(&p).is_err());

        let fig1 = parse(FIG1).unwrap();
        let in_loop = RestrictionSpec::from_json(r#"{"assert_containment": true, "sites":[{"site":1,"range":[1,1]}]}"#).unwrap();
        assert!(in_loop.resolve(&fig1).is_err());
    }

    #[test]
    fn coin_restriction() {
        let p = parse("int x; x = coin_flip(); know (x == 1);").unwrap();
        let spec = RestrictionSpec::from_json(r#"{"assert_containment": true, "sites":[{"site":1,"range":[1,1]}]}"#).unwrap();
        assert_eq!(spec.resolve(&p).unwrap().probability, 0.5);
        let params = RunParams {
            trials: 200,
            ..RunParams::default()
        };
        let r = run_restricted(&p, &spec, &params, &AnalysisConfig::default()).unwrap();
        assert_eq!(r.hits, 200);
        assert_eq!(r.p_hat, 0.5);
        assert!(r.warnings.iter().any(|w| w.contains("conditionally sound")));
    }

    #[test]
    fn vacuous_restriction_matches_run() {
        let p = parse(FIG4).unwrap();
        let spec = RestrictionSpec::from_json(r#"{"assert_containment": true, "sites":[{"site":2,"range":[0.0,1.0]}]}"#).unwrap();
        let params = RunParams {
            trials: 500,
            seed: 3,
            ..RunParams::default()
        };
        let cfg = AnalysisConfig::default();
        let a = run(&p, &params, &cfg).unwrap();
        let b = run_restricted(&p, &spec, &params, &cfg).unwrap();
        assert_eq!(a.hits, b.hits);
        assert_eq!(a.p_hat, b.p_hat);
        assert_eq!(a.p_prime, b.p_prime);
    }

    #[test]
    fn report_json_fields() {
        let p = parse(FIG1).unwrap();
        let params = RunParams {
            trials: 10,
            ..RunParams::default()
        };
        let r = run(&p, &params, &AnalysisConfig::default()).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        let mut want = vec![
            "program", "n", "hits", "p_hat", "epsilon", "margin", "p_prime", "seed", "jobs", "elapsed_ms", "config", "warnings",
        ];
        want.sort();
        let mut got = keys.clone();
        got.sort();
        assert_eq!(got, want);
    }

    proptest! {
        #[test]
        fn margin_monotone(n in 1u64..1_000_000, dn in 1u64..1000, eps in 0.001f64..0.99, de in 0.0001f64..0.01) {
            let p = 0.3;
            prop_assert!(bound(p, n + dn, eps).unwrap() <= bound(p, n, eps).unwrap());
            let eps2 = (eps + de).min(1.0);
            prop_assert!(bound(p, n, eps2).unwrap() <= bound(p, n, eps).unwrap());
        }

        #[test]
        fn plan_meets_margin(t in 0.001f64..1.0, eps in 0.0001f64..0.999) {
            let n = plan_trials(t, eps).unwrap();
            prop_assert!(margin(n, eps).unwrap() <= t * (1.0 + 1e-12));
            if n > 1 {
                prop_assert!(margin(n - 1, eps).unwrap() > t * (1.0 - 1e-12));
            }
        }

        #[test]
        fn bound_dominates(p in 0.0f64..=1.0, n in 1u64..100_000, eps in 0.001f64..1.0) {
            let b = bound(p, n, eps).unwrap();
            prop_assert!(b >= p && b <= 1.0);
            let closed = (p + ((1.0 / eps).ln() / (2.0 * n as f64)).sqrt()).min(1.0);
            prop_assert!((b - closed).abs() <= f64::EPSILON * 2.0);
        }
    }
}
