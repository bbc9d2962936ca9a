//! Randomized abstract interpreter.
//!
//! One trial runs the program forward over interval environments. Outside
//! fixpoint computations each generator call draws a concrete value from the
//! trial's stream and records it under its [`ChoiceKey`]; inside a fixpoint
//! computation a generator stands for its whole range and nothing is
//! recorded. Loops whose guard is decided on the current environment are
//! unrolled (up to [`AnalysisConfig::unroll_limit`] iterations) with
//! sampling on; the remainder of the loop is summarized by a widened and
//! narrowed fixpoint with sampling off.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intervals::{self, AbstractEnv, DomainError, Interval};
use crate::lang::{Cond, Expr, Generator, Program, Site, Stmt, StmtKind, Value};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Maximum number of iterations unrolled with sampling on, per loop entry.
    pub unroll_limit: u32,
    /// Plain joins performed at a loop head before widening kicks in.
    pub widening_delay: u32,
    /// Descending iterations after the widened fixpoint is reached.
    pub narrowing_passes: u32,
    /// Abstract operations allowed per trial; exceeding it counts the trial
    /// as a hit.
    pub step_budget: u64,
    /// Widening thresholds (sorted ascending). Empty widens straight to
    /// infinity.
    pub widening_thresholds: Vec<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            unroll_limit: 64,
            widening_delay: 2,
            narrowing_passes: 2,
            step_budget: 1_000_000,
            widening_thresholds: Vec::new(),
        }
    }
}

/// Identifies one generator draw: the generator's site and the iteration
/// counters of the enclosing loops, outermost first, each counting from 1.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChoiceKey {
    pub site: Site,
    pub word: Vec<u32>,
}

impl fmt::Display for ChoiceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w: Vec<String> = self.word.iter().map(u32::to_string).collect();
        write!(f, "{}@({})", self.site, w.join("."))
    }
}

/// Values drawn during a trial, keyed by draw identity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChoiceTable {
    entries: BTreeMap<ChoiceKey, Value>,
}

impl ChoiceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: ChoiceKey, value: Value) -> Result<(), InterpError> {
        use std::collections::btree_map::Entry;
        match self.entries.entry(key) {
            Entry::Occupied(e) => Err(InterpError::DuplicateChoice(e.key().clone())),
            Entry::Vacant(e) => {
                e.insert(value);
                Ok(())
            }
        }
    }

    pub fn get(&self, key: &ChoiceKey) -> Option<Value> {
        self.entries.get(key).copied()
    }

    pub fn lookup(&self, site: Site, word: &[u32]) -> Option<Value> {
        self.entries
            .get(&ChoiceKey {
                site,
                word: word.to_vec(),
            })
            .copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ChoiceKey, &Value)> {
        self.entries.iter()
    }
}

/// Sub-range a generator is sampled from instead of its full support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingRange {
    pub lo: f64,
    pub hi: f64,
}

/// Draws one value of `g`, conditioned on `range` when given. A restricted
/// coin with a single admissible value still consumes a draw so that streams
/// stay aligned with unrestricted runs.
pub fn sample(g: Generator, rng: &mut ChaCha8Rng, range: Option<SamplingRange>) -> Value {
    match g {
        Generator::CoinFlip => {
            let bit = i64::from(rng.gen::<bool>());
            match range {
                Some(r) if r.lo == r.hi => Value::Int(r.lo as i64),
                _ => Value::Int(bit),
            }
        }
        Generator::Uniform => {
            let u: f64 = rng.gen();
            match range {
                Some(r) => Value::Real((r.lo + (r.hi - r.lo) * u).min(r.hi)),
                None => Value::Real(u),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("choice {0} drawn twice in one trial")]
    DuplicateChoice(ChoiceKey),
    #[error("program has no outcome")]
    MissingOutcome,
}

/// Result of one randomized abstract trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    /// The trial's T_W: the outcome may be reached for some nondeterministic
    /// choice.
    pub hit: bool,
    pub final_env: AbstractEnv,
    pub choices: ChoiceTable,
    /// Loops whose fixpoint computation needed widening.
    pub widened_loops: u32,
    /// Fixpoint computations performed (loops not fully unrolled).
    pub fixpoints: u32,
    pub seed: u64,
    /// The step budget ran out; `hit` is then forced to true.
    pub aborted: bool,
    pub trace: Vec<String>,
}

impl TrialOutcome {
    pub fn t_w(&self) -> u64 {
        u64::from(self.hit)
    }
}

#[derive(Debug)]
enum Stop {
    Budget,
    Error(InterpError),
}

impl From<DomainError> for Stop {
    fn from(e: DomainError) -> Self {
        Stop::Error(e.into())
    }
}

impl From<InterpError> for Stop {
    fn from(e: InterpError) -> Self {
        Stop::Error(e)
    }
}

/// Per-trial interpreter state.
pub struct TrialContext<'a> {
    program: &'a Program,
    cfg: &'a AnalysisConfig,
    rng: ChaCha8Rng,
    table: ChoiceTable,
    randomize: bool,
    word: Vec<u32>,
    steps: u64,
    widened_loops: u32,
    fixpoints: u32,
    overrides: Option<&'a BTreeMap<Site, SamplingRange>>,
    trace: Option<Vec<String>>,
}

impl<'a> TrialContext<'a> {
    pub fn new(program: &'a Program, cfg: &'a AnalysisConfig, seed: u64) -> Self {
        TrialContext {
            program,
            cfg,
            rng: seed::stream(seed),
            table: ChoiceTable::new(),
            randomize: true,
            word: Vec::new(),
            steps: 0,
            widened_loops: 0,
            fixpoints: 0,
            overrides: None,
            trace: None,
        }
    }

    pub fn randomize(&self) -> bool {
        self.randomize
    }

    pub fn set_randomize(&mut self, on: bool) {
        self.randomize = on;
    }

    pub fn word(&self) -> &[u32] {
        &self.word
    }

    pub fn choices(&self) -> &ChoiceTable {
        &self.table
    }

    pub fn widened_loops(&self) -> u32 {
        self.widened_loops
    }

    fn tick(&mut self) -> Result<(), Stop> {
        self.steps += 1;
        if self.steps > self.cfg.step_budget {
            Err(Stop::Budget)
        } else {
            Ok(())
        }
    }

    fn log(&mut self, line: impl FnOnce() -> String) {
        if let Some(t) = &mut self.trace {
            t.push(line());
        }
    }

    /// Interval for one generator occurrence: a recorded sample when
    /// randomizing, the whole range otherwise.
    pub fn eval_generator(&mut self, g: Generator, site: Site) -> Result<Interval, InterpError> {
        if !self.randomize {
            return Ok(Interval::full_range(g));
        }
        let range = self.overrides.and_then(|o| o.get(&site).copied());
        let v = sample(g, &mut self.rng, range);
        let key = ChoiceKey {
            site,
            word: self.word.clone(),
        };
        self.log(|| format!("  draw {key} = {v}"));
        self.table.insert(key, v)?;
        Ok(Interval::point(v))
    }

    fn draw_all(&mut self, occurrences: &[(Generator, Site)]) -> Result<Vec<(Site, Interval)>, Stop> {
        let mut out = Vec::with_capacity(occurrences.len());
        for &(g, s) in occurrences {
            out.push((s, self.eval_generator(g, s)?));
        }
        Ok(out)
    }

    fn expr_gens(e: &Expr) -> Vec<(Generator, Site)> {
        let mut v = Vec::new();
        e.for_each_generator(&mut |g, s| v.push((g, s)));
        v
    }

    fn cond_gens(c: &Cond) -> Vec<(Generator, Site)> {
        let mut v = Vec::new();
        c.for_each_generator(&mut |g, s| v.push((g, s)));
        v
    }

    fn eval_expr(&mut self, e: &Expr, env: &AbstractEnv) -> Result<Interval, Stop> {
        let drawn = self.draw_all(&Self::expr_gens(e))?;
        let lookup = |g: Generator, s: Site| lookup(&drawn, g, s);
        Ok(intervals::eval(e, env, &lookup)?)
    }

    /// Filters `env` by `c` under both polarities, drawing the condition's
    /// generators once.
    fn split(&mut self, c: &Cond, env: &AbstractEnv) -> Result<(AbstractEnv, AbstractEnv), Stop> {
        let drawn = self.draw_all(&Self::cond_gens(c))?;
        let lookup = |g: Generator, s: Site| lookup(&drawn, g, s);
        let t = intervals::filter(env, c, true, &lookup)?;
        let f = intervals::filter(env, c, false, &lookup)?;
        Ok((t, f))
    }

    fn eval_block_inner(&mut self, stmts: &[Stmt], mut env: AbstractEnv) -> Result<AbstractEnv, Stop> {
        for s in stmts {
            if env.is_bottom() {
                break;
            }
            env = self.eval_stmt_inner(s, env)?;
        }
        Ok(env)
    }

    fn eval_stmt_inner(&mut self, s: &Stmt, env: AbstractEnv) -> Result<AbstractEnv, Stop> {
        if env.is_bottom() {
            return Ok(env);
        }
        self.tick()?;
        let out = match &s.kind {
            StmtKind::Assign(v, e) | StmtKind::AddAssign(v, e) | StmtKind::SubAssign(v, e) => {
                let slot = v.slot.ok_or_else(|| DomainError::UnknownVariable(v.name.clone()))?;
                let rhs = self.eval_expr(e, &env)?;
                let value = match &s.kind {
                    StmtKind::Assign(..) => rhs,
                    StmtKind::AddAssign(..) => env.get(slot)?.add(&rhs)?,
                    _ => env.get(slot)?.sub(&rhs)?,
                };
                let mut env = env;
                env.set(slot, value)?;
                env
            }
            StmtKind::Know(c) => self.split(c, &env)?.0,
            StmtKind::If(c, then, els) => {
                let (t, f) = self.split(c, &env)?;
                let t = self.eval_block_inner(then, t)?;
                let f = self.eval_block_inner(els, f)?;
                t.join(&f)?
            }
            StmtKind::While(c, body) => {
                self.word.push(1);
                let r = self.loop_inner(c, body, env);
                self.word.pop();
                r?
            }
        };
        let decls = &self.program.decls;
        if let Some(t) = &mut self.trace {
            t.push(format!("{} {}", s.id, out.render(decls)));
        }
        Ok(out)
    }

    fn loop_inner(&mut self, guard: &Cond, body: &[Stmt], mut env: AbstractEnv) -> Result<AbstractEnv, Stop> {
        if self.randomize {
            let mut unrolled = 0;
            loop {
                if env.is_bottom() {
                    return Ok(env);
                }
                let (t, f) = self.split(guard, &env)?;
                if t.is_bottom() {
                    return Ok(f);
                }
                if !f.is_bottom() || unrolled >= self.cfg.unroll_limit {
                    break;
                }
                env = self.eval_block_inner(body, t)?;
                unrolled += 1;
                if let Some(c) = self.word.last_mut() {
                    *c += 1;
                }
                self.tick()?;
            }
        }
        self.fixpoint(guard, body, env)
    }

    fn fixpoint(&mut self, guard: &Cond, body: &[Stmt], entry: AbstractEnv) -> Result<AbstractEnv, Stop> {
        let saved = self.randomize;
        self.randomize = false;
        self.fixpoints += 1;
        let full = intervals::full_range;
        let cfg = self.cfg;
        let thresholds = &cfg.widening_thresholds;

        let mut head = entry.clone();
        let mut joins = 0;
        let mut widened = false;
        loop {
            self.tick()?;
            let inside = intervals::filter(&head, guard, true, &full)?;
            let next = entry.join(&self.eval_block_inner(body, inside)?)?;
            if next.leq(&head) {
                break;
            }
            if joins < cfg.widening_delay {
                head = head.join(&next)?;
                joins += 1;
            } else {
                head = head.widen(&head.join(&next)?, thresholds)?;
                widened = true;
            }
        }
        for _ in 0..cfg.narrowing_passes {
            self.tick()?;
            let inside = intervals::filter(&head, guard, true, &full)?;
            let next = entry.join(&self.eval_block_inner(body, inside)?)?;
            let narrowed = head.narrow(&next)?;
            if narrowed == head {
                break;
            }
            head = narrowed;
        }
        if widened {
            self.widened_loops += 1;
        }
        self.randomize = saved;
        Ok(intervals::filter(&head, guard, false, &full)?)
    }

    /// Abstract transfer of one statement.
    pub fn eval_stmt(&mut self, s: &Stmt, env: AbstractEnv) -> Result<Option<AbstractEnv>, InterpError> {
        match self.eval_stmt_inner(s, env) {
            Ok(e) => Ok(Some(e)),
            Err(Stop::Budget) => Ok(None),
            Err(Stop::Error(e)) => Err(e),
        }
    }

    /// Abstract transfer of `while (guard) { body }`. `None` means the step
    /// budget ran out.
    pub fn eval_loop(
        &mut self,
        guard: &Cond,
        body: &[Stmt],
        env: AbstractEnv,
    ) -> Result<Option<AbstractEnv>, InterpError> {
        self.word.push(1);
        let r = self.loop_inner(guard, body, env);
        self.word.pop();
        match r {
            Ok(e) => Ok(Some(e)),
            Err(Stop::Budget) => Ok(None),
            Err(Stop::Error(e)) => Err(e),
        }
    }

    #[cfg(test)]
    pub(crate) fn set_word(&mut self, word: Vec<u32>) {
        self.word = word;
    }
}

fn lookup(drawn: &[(Site, Interval)], g: Generator, s: Site) -> Interval {
    drawn
        .iter()
        .find(|(x, _)| *x == s)
        .map(|(_, iv)| *iv)
        .unwrap_or_else(|| Interval::full_range(g))
}

/// Runs trials of one program under one configuration.
pub struct Analyzer<'a> {
    program: &'a Program,
    cfg: &'a AnalysisConfig,
    overrides: Option<&'a BTreeMap<Site, SamplingRange>>,
    trace: bool,
}

impl<'a> Analyzer<'a> {
    pub fn new(program: &'a Program, cfg: &'a AnalysisConfig) -> Self {
        Analyzer {
            program,
            cfg,
            overrides: None,
            trace: false,
        }
    }

    /// Samples the given sites from sub-ranges of their support.
    pub fn with_overrides(mut self, overrides: &'a BTreeMap<Site, SamplingRange>) -> Self {
        self.overrides = Some(overrides);
        self
    }

    pub fn traced(mut self, on: bool) -> Self {
        self.trace = on;
        self
    }

    pub fn run(&self, seed: u64) -> Result<TrialOutcome, InterpError> {
        let outcome = self.program.outcome.as_ref().ok_or(InterpError::MissingOutcome)?;
        let mut ctx = TrialContext::new(self.program, self.cfg, seed);
        ctx.overrides = self.overrides;
        if self.trace {
            ctx.trace = Some(Vec::new());
        }
        let start = AbstractEnv::top(&self.program.decls);
        let result = ctx
            .eval_block_inner(&self.program.body, start)
            .and_then(|env| {
                let (hit_env, _) = ctx.split(outcome, &env)?;
                Ok((env, !hit_env.is_bottom()))
            });
        let (final_env, hit, aborted) = match result {
            Ok((env, hit)) => (env, hit, false),
            Err(Stop::Budget) => (AbstractEnv::top(&self.program.decls), true, true),
            Err(Stop::Error(e)) => return Err(e),
        };
        ctx.log(|| format!("outcome {}", u8::from(hit)));
        Ok(TrialOutcome {
            hit,
            final_env,
            choices: ctx.table,
            widened_loops: ctx.widened_loops,
            fixpoints: ctx.fixpoints,
            seed,
            aborted,
            trace: ctx.trace.unwrap_or_default(),
        })
    }
}

/// One randomized abstract trial. Deterministic in `(program, seed, cfg)`.
pub fn analyze_trial(program: &Program, seed: u64, cfg: &AnalysisConfig) -> Result<TrialOutcome, InterpError> {
    Analyzer::new(program, cfg).run(seed)
}
