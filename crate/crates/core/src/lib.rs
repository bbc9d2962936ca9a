//! Upper bounds on outcome probabilities of programs that mix random
//! generators with nondeterministic inputs.
//!
//! Each trial runs an interval abstract interpreter in which random
//! generators outside fixpoint computations are sampled concretely and
//! recorded, while those inside fixpoints stand for their whole range. The
//! trial answers 1 when the outcome may be reachable for some choice of the
//! nondeterministic inputs. Averaging `n` trials and adding the
//! Chernoff-Hoeffding margin gives a bound that holds with probability at
//! least `1 - epsilon`.

pub mod concrete;
pub mod estimator;
pub mod interp;
pub mod intervals;
pub mod lang;
pub mod seed;

pub use estimator::{bound, margin, plan_trials, run, run_restricted, Report, RestrictionSpec, RunParams};
pub use interp::{analyze_trial, AnalysisConfig, ChoiceTable, TrialOutcome};
pub use lang::{parse, parse_with_query, Program};
