//! Reference concrete semantics and the brute-force oracle.
//!
//! [`run_concrete`] executes a program on concrete values, resolving every
//! generator call through its [`ChoiceKey`]. The oracle estimates the
//! probability that *some* admissible nondeterministic input reaches the
//! outcome, maximizing over a finite grid of inputs. Because the grid is a
//! subset of the admissible inputs, the oracle is a lower bound on the true
//! probability up to statistical error.

use std::collections::BTreeSet;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interp::{sample, ChoiceKey, ChoiceTable};
use crate::intervals::{filter_full, AbstractEnv};
use crate::lang::{Cond, Decl, Expr, Generator, Kind, Program, RelOp, Site, Stmt, StmtId, StmtKind, Value};
use crate::seed;

/// Statements a concrete run may execute before it is declared divergent.
pub const STEP_BUDGET: u64 = 1_000_000;
/// Leaves the exact enumeration may visit.
pub const PATH_BUDGET: u64 = 1 << 20;
/// Longest coin sequence followed by exact enumeration.
pub const MAX_DEPTH: usize = 64;
/// Grid points (over all nondeterministic variables together) per random
/// input.
pub const MAX_GRID: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConcreteError {
    #[error("kind mismatch in `{0}`")]
    KindMismatch(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("program has no outcome")]
    MissingOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Concrete(#[from] ConcreteError),
    #[error("exact enumeration needs coin_flip generators only; site {0} is uniform()")]
    ContinuousGenerator(Site),
    #[error("exact enumeration exceeded {0} paths")]
    PathBudget(u64),
    #[error("exact enumeration reached a path with more than {0} coin flips")]
    DepthLimit(usize),
    #[error("nondeterministic input `{0}` has no bounded `know` constraint before its first assignment")]
    Unconstrained(String),
    #[error("assumptions on `{0}` are unsatisfiable")]
    Unsatisfiable(String),
    #[error("grid of {0} points exceeds the limit of {MAX_GRID}")]
    GridTooLarge(u128),
    #[error("grid resolution must be at least 1")]
    EmptyGrid,
}

/// A concrete environment: one value per declaration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcreteEnv(pub Vec<Value>);

impl ConcreteEnv {
    /// All variables zero.
    pub fn zeroed(decls: &[Decl]) -> ConcreteEnv {
        ConcreteEnv(
            decls
                .iter()
                .map(|d| match d.kind {
                    Kind::Int => Value::Int(0),
                    Kind::Real => Value::Real(0.0),
                })
                .collect(),
        )
    }
}

/// How a concrete run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStatus {
    /// Reached the end; the outcome was evaluated.
    Completed,
    /// An assumption failed at this statement; the path is discarded.
    Pruned(StmtId),
    /// The step budget ran out: a nonterminating path.
    Diverged,
    /// Integer overflow at this statement.
    Overflow(StmtId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConcreteRun {
    pub hit: bool,
    pub status: PathStatus,
}

impl ConcreteRun {
    pub fn t_w(&self) -> u64 {
        u64::from(self.hit)
    }
}

/// Supplies generator values by draw identity. `None` means the value is
/// not available yet (used by exact enumeration to branch).
pub trait ChoiceSource {
    fn draw(&mut self, g: Generator, site: Site, word: &[u32]) -> Option<Value>;
}

/// Replays a trial's recorded choices, drawing unrecorded ones from a
/// fallback stream.
pub struct ReplaySource<'a> {
    table: &'a ChoiceTable,
    fallback: ChaCha8Rng,
}

impl<'a> ReplaySource<'a> {
    pub fn new(table: &'a ChoiceTable, fallback_seed: u64) -> Self {
        ReplaySource {
            table,
            fallback: seed::stream(fallback_seed),
        }
    }
}

impl ChoiceSource for ReplaySource<'_> {
    fn draw(&mut self, g: Generator, site: Site, word: &[u32]) -> Option<Value> {
        Some(
            self.table
                .lookup(site, word)
                .unwrap_or_else(|| sample(g, &mut self.fallback, None)),
        )
    }
}

/// Draws each key at most once and remembers it, so that several runs (one
/// per grid point) see the same random input.
struct LazySource {
    rng: ChaCha8Rng,
    drawn: Vec<(Site, Vec<u32>, Value)>,
}

impl ChoiceSource for LazySource {
    fn draw(&mut self, g: Generator, site: Site, word: &[u32]) -> Option<Value> {
        if let Some((_, _, v)) = self.drawn.iter().find(|(s, w, _)| *s == site && w == word) {
            return Some(*v);
        }
        let v = sample(g, &mut self.rng, None);
        self.drawn.push((site, word.to_vec(), v));
        Some(v)
    }
}

/// A partial assignment of coin values; unassigned keys are reported.
struct PartialSource<'a> {
    assigned: &'a [(ChoiceKey, Value)],
}

impl ChoiceSource for PartialSource<'_> {
    fn draw(&mut self, _: Generator, site: Site, word: &[u32]) -> Option<Value> {
        self.assigned
            .iter()
            .find(|(k, _)| k.site == site && k.word == word)
            .map(|(_, v)| *v)
    }
}

enum Halt {
    Pruned(StmtId),
    Diverged,
    Overflow(StmtId),
    Need(ChoiceKey),
    Error(ConcreteError),
}

impl From<ConcreteError> for Halt {
    fn from(e: ConcreteError) -> Self {
        Halt::Error(e)
    }
}

enum Exec {
    Done(ConcreteRun),
    Need(ChoiceKey),
}

struct Machine<'a, S> {
    src: &'a mut S,
    vars: Vec<Value>,
    word: Vec<u32>,
    steps: u64,
    budget: u64,
    current: StmtId,
}

impl<S: ChoiceSource> Machine<'_, S> {
    fn var(&self, v: &crate::lang::VarRef) -> Result<Value, Halt> {
        v.slot
            .and_then(|s| self.vars.get(s).copied())
            .ok_or_else(|| ConcreteError::UnknownVariable(v.name.clone()).into())
    }

    fn expr(&mut self, e: &Expr) -> Result<Value, Halt> {
        let overflow = Halt::Overflow(self.current);
        match e {
            Expr::Lit(v) => Ok(*v),
            Expr::Var(v) => self.var(v),
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let x = self.expr(a)?;
                let y = self.expr(b)?;
                let add = matches!(e, Expr::Add(..));
                match (x, y) {
                    (Value::Int(x), Value::Int(y)) => {
                        let r = if add { x.checked_add(y) } else { x.checked_sub(y) };
                        r.map(Value::Int).ok_or(overflow)
                    }
                    (Value::Real(x), Value::Real(y)) => Ok(Value::Real(if add { x + y } else { x - y })),
                    _ => Err(ConcreteError::KindMismatch(e.to_string()).into()),
                }
            }
            Expr::Scale(k, a) => match (*k, self.expr(a)?) {
                (Value::Int(k), Value::Int(x)) => k.checked_mul(x).map(Value::Int).ok_or(overflow),
                (Value::Int(k), Value::Real(x)) => Ok(Value::Real(k as f64 * x)),
                (Value::Real(k), Value::Real(x)) => Ok(Value::Real(k * x)),
                _ => Err(ConcreteError::KindMismatch(e.to_string()).into()),
            },
            Expr::Random(g, site) => match self.src.draw(*g, *site, &self.word) {
                Some(v) => Ok(v),
                None => Err(Halt::Need(ChoiceKey {
                    site: *site,
                    word: self.word.clone(),
                })),
            },
        }
    }

    fn cond(&mut self, c: &Cond) -> Result<bool, Halt> {
        match c {
            Cond::And(a, b) => Ok(self.cond(a)? && self.cond(b)?),
            Cond::Or(a, b) => Ok(self.cond(a)? || self.cond(b)?),
            Cond::Cmp(a, op, b) => {
                let x = self.expr(a)?;
                let y = self.expr(b)?;
                compare(x, *op, y).ok_or_else(|| ConcreteError::KindMismatch(c.to_string()).into())
            }
        }
    }

    fn tick(&mut self) -> Result<(), Halt> {
        self.steps += 1;
        if self.steps > self.budget {
            Err(Halt::Diverged)
        } else {
            Ok(())
        }
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<(), Halt> {
        for s in stmts {
            self.stmt(s)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), Halt> {
        self.tick()?;
        self.current = s.id;
        match &s.kind {
            StmtKind::Assign(v, e) | StmtKind::AddAssign(v, e) | StmtKind::SubAssign(v, e) => {
                let slot = v.slot.ok_or_else(|| ConcreteError::UnknownVariable(v.name.clone()))?;
                let rhs = self.expr(e)?;
                let new = match &s.kind {
                    StmtKind::Assign(..) => rhs,
                    kind => {
                        let combined = if matches!(kind, StmtKind::AddAssign(..)) {
                            Expr::Add
                        } else {
                            Expr::Sub
                        };
                        let cur = self.vars[slot];
                        self.expr(&combined(Box::new(Expr::Lit(cur)), Box::new(Expr::Lit(rhs))))?
                    }
                };
                if new.kind() != self.vars[slot].kind() {
                    return Err(ConcreteError::KindMismatch(v.name.clone()).into());
                }
                self.vars[slot] = new;
                Ok(())
            }
            StmtKind::Know(c) => {
                if self.cond(c)? {
                    Ok(())
                } else {
                    Err(Halt::Pruned(s.id))
                }
            }
            StmtKind::If(c, t, e) => {
                if self.cond(c)? {
                    self.block(t)
                } else {
                    self.block(e)
                }
            }
            StmtKind::While(c, body) => {
                self.word.push(1);
                while self.cond(c)? {
                    self.block(body)?;
                    self.tick()?;
                    if let Some(n) = self.word.last_mut() {
                        *n += 1;
                    }
                }
                self.word.pop();
                Ok(())
            }
        }
    }
}

fn compare(x: Value, op: RelOp, y: Value) -> Option<bool> {
    match (x, y) {
        (Value::Int(a), Value::Int(b)) => Some(op.holds(a, b)),
        (Value::Real(a), Value::Real(b)) => Some(op.holds(a, b)),
        _ => None,
    }
}

fn execute<S: ChoiceSource>(p: &Program, init: &ConcreteEnv, src: &mut S, budget: u64) -> Result<Exec, ConcreteError> {
    let outcome = p.outcome.as_ref().ok_or(ConcreteError::MissingOutcome)?;
    let mut m = Machine {
        src,
        vars: init.0.clone(),
        word: Vec::new(),
        steps: 0,
        budget,
        current: StmtId(0),
    };
    let done = |hit, status| Ok(Exec::Done(ConcreteRun { hit, status }));
    match m.block(&p.body).and_then(|_| m.cond(outcome)) {
        Ok(hit) => done(hit, PathStatus::Completed),
        Err(Halt::Pruned(id)) => done(false, PathStatus::Pruned(id)),
        Err(Halt::Diverged) => done(false, PathStatus::Diverged),
        Err(Halt::Overflow(id)) => done(false, PathStatus::Overflow(id)),
        Err(Halt::Need(k)) => Ok(Exec::Need(k)),
        Err(Halt::Error(e)) => Err(e),
    }
}

/// Executes `p` from `init`. Generator calls read the replay table and fall
/// back to its stream for unrecorded keys. Failed assumptions and
/// nonterminating paths never reach the final state, so they yield 0.
pub fn run_concrete(p: &Program, init: &ConcreteEnv, randoms: &mut ReplaySource<'_>) -> Result<ConcreteRun, ConcreteError> {
    match execute(p, init, randoms, STEP_BUDGET)? {
        Exec::Done(r) => Ok(r),
        Exec::Need(_) => unreachable!("replay sources always supply a value"),
    }
}

/// Admissible range of one nondeterministic input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondetVar {
    pub name: String,
    pub slot: usize,
    pub kind: Kind,
    pub lo: f64,
    pub hi: f64,
    /// The bound itself is excluded by a strict comparison.
    pub lo_open: bool,
    pub hi_open: bool,
}

impl NondetVar {
    /// Grid over the admissible range, endpoints included (nudged inside
    /// when excluded by a strict comparison).
    pub fn grid(&self, resolution: usize) -> Vec<Value> {
        let resolution = resolution.max(1);
        match self.kind {
            Kind::Int => {
                let (lo, hi) = (self.lo as i64, self.hi as i64);
                let count = (hi as i128 - lo as i128 + 1) as u128;
                if count <= resolution as u128 {
                    (lo..=hi).map(Value::Int).collect()
                } else if resolution == 1 {
                    vec![Value::Int(lo)]
                } else {
                    let span = (hi as i128 - lo as i128) as f64;
                    let mut pts: Vec<i64> = (0..resolution)
                        .map(|k| {
                            if k + 1 == resolution {
                                hi
                            } else {
                                lo + (span * k as f64 / (resolution - 1) as f64).round() as i64
                            }
                        })
                        .collect();
                    pts.dedup();
                    pts.into_iter().map(Value::Int).collect()
                }
            }
            Kind::Real => {
                let a = if self.lo_open { self.lo.next_up() } else { self.lo };
                let b = if self.hi_open { self.hi.next_down() } else { self.hi };
                if resolution == 1 || a >= b {
                    return vec![Value::Real(a)];
                }
                (0..resolution)
                    .map(|k| {
                        if k + 1 == resolution {
                            Value::Real(b)
                        } else {
                            Value::Real(a + (b - a) * (k as f64 / (resolution - 1) as f64))
                        }
                    })
                    .collect()
            }
        }
    }
}

/// The nondeterministic inputs of a program (variables read before any
/// assignment) with their admissible ranges, plus the grid resolution used
/// to approximate the existential over them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondetSpec {
    pub vars: Vec<NondetVar>,
    pub resolution: usize,
}

impl NondetSpec {
    /// Extracts each input's range from the first top-level `know` that
    /// mentions it before it is assigned.
    pub fn infer(p: &Program, resolution: usize) -> Result<NondetSpec, OracleError> {
        if resolution == 0 {
            return Err(OracleError::EmptyGrid);
        }
        let mut vars = Vec::new();
        for slot in read_before_write(p) {
            vars.push(bounds_of(p, slot)?);
        }
        Ok(NondetSpec { vars, resolution })
    }

    /// Every grid assignment of the inputs; other variables are zero.
    pub fn assignments(&self, decls: &[Decl]) -> Result<Vec<ConcreteEnv>, OracleError> {
        let grids: Vec<Vec<Value>> = self.vars.iter().map(|v| v.grid(self.resolution)).collect();
        let total: u128 = grids.iter().map(|g| g.len() as u128).product();
        if total > MAX_GRID as u128 {
            return Err(OracleError::GridTooLarge(total));
        }
        let base = ConcreteEnv::zeroed(decls);
        let mut out = Vec::with_capacity(total as usize);
        for mut idx in 0..total as usize {
            let mut env = base.clone();
            for (v, g) in self.vars.iter().zip(&grids) {
                env.0[v.slot] = g[idx % g.len()];
                idx /= g.len();
            }
            out.push(env);
        }
        Ok(out)
    }
}

/// Slots of variables that some path reads before assigning, in first-read
/// order.
pub fn read_before_write(p: &Program) -> Vec<usize> {
    fn reads(found: &mut Vec<usize>, assigned: &BTreeSet<usize>, visit: impl FnOnce(&mut dyn FnMut(&crate::lang::VarRef))) {
        visit(&mut |v| {
            if let Some(s) = v.slot {
                if !assigned.contains(&s) && !found.contains(&s) {
                    found.push(s);
                }
            }
        });
    }
    fn walk(stmts: &[Stmt], assigned: &mut BTreeSet<usize>, found: &mut Vec<usize>) {
        for s in stmts {
            match &s.kind {
                StmtKind::Assign(v, e) => {
                    reads(found, assigned, |f| e.for_each_var(f));
                    if let Some(slot) = v.slot {
                        assigned.insert(slot);
                    }
                }
                StmtKind::AddAssign(v, e) | StmtKind::SubAssign(v, e) => {
                    reads(found, assigned, |f| {
                        f(v);
                        e.for_each_var(f)
                    });
                    if let Some(slot) = v.slot {
                        assigned.insert(slot);
                    }
                }
                StmtKind::Know(c) => reads(found, assigned, |f| c.for_each_var(f)),
                StmtKind::If(c, t, e) => {
                    reads(found, assigned, |f| c.for_each_var(f));
                    let mut at = assigned.clone();
                    let mut ae = assigned.clone();
                    walk(t, &mut at, found);
                    walk(e, &mut ae, found);
                    *assigned = at.intersection(&ae).copied().collect();
                }
                StmtKind::While(c, body) => {
                    reads(found, assigned, |f| c.for_each_var(f));
                    let mut inner = assigned.clone();
                    walk(body, &mut inner, found);
                }
            }
        }
    }
    let mut found = Vec::new();
    let mut assigned = BTreeSet::new();
    walk(&p.body, &mut assigned, &mut found);
    if let Some(c) = &p.outcome {
        reads(&mut found, &assigned, |f| c.for_each_var(f));
    }
    found
}

fn assigns(stmts: &[Stmt], slot: usize) -> bool {
    stmts.iter().any(|s| match &s.kind {
        StmtKind::Assign(v, _) | StmtKind::AddAssign(v, _) | StmtKind::SubAssign(v, _) => v.slot == Some(slot),
        StmtKind::Know(_) => false,
        StmtKind::If(_, t, e) => assigns(t, slot) || assigns(e, slot),
        StmtKind::While(_, b) => assigns(b, slot),
    })
}

fn mentions(c: &Cond, slot: usize) -> bool {
    let mut hit = false;
    c.for_each_var(&mut |v| hit |= v.slot == Some(slot));
    hit
}

fn bounds_of(p: &Program, slot: usize) -> Result<NondetVar, OracleError> {
    let decl = &p.decls[slot];
    let unconstrained = || OracleError::Unconstrained(decl.name.clone());
    for s in &p.body {
        if assigns(std::slice::from_ref(s), slot) {
            break;
        }
        let StmtKind::Know(c) = &s.kind else { continue };
        if !mentions(c, slot) {
            continue;
        }
        let env = filter_full(&AbstractEnv::top(&p.decls), c, true).map_err(|_| unconstrained())?;
        if env.is_bottom() {
            return Err(OracleError::Unsatisfiable(decl.name.clone()));
        }
        let (lo, hi) = env
            .get(slot)
            .ok()
            .and_then(|iv| iv.bounds())
            .ok_or_else(unconstrained)?;
        if !lo.is_finite() || !hi.is_finite() {
            return Err(unconstrained());
        }
        let (lo_open, hi_open) = strictness(c, slot, lo, hi);
        return Ok(NondetVar {
            name: decl.name.clone(),
            slot,
            kind: decl.kind,
            lo,
            hi,
            lo_open,
            hi_open,
        });
    }
    Err(unconstrained())
}

/// Whether the extracted bounds come from strict comparisons against
/// constants in the top-level conjunction of `c`.
fn strictness(c: &Cond, slot: usize, lo: f64, hi: f64) -> (bool, bool) {
    let mut atoms = Vec::new();
    fn conjuncts<'c>(c: &'c Cond, out: &mut Vec<(&'c Expr, RelOp, &'c Expr)>) {
        match c {
            Cond::And(a, b) => {
                conjuncts(a, out);
                conjuncts(b, out);
            }
            Cond::Cmp(a, op, b) => out.push((a, *op, b)),
            Cond::Or(..) => {}
        }
    }
    conjuncts(c, &mut atoms);
    let constant = |e: &Expr| -> Option<f64> {
        let mut has_var = false;
        e.for_each_var(&mut |_| has_var = true);
        let mut has_gen = false;
        e.for_each_generator(&mut |_, _| has_gen = true);
        if has_var || has_gen {
            return None;
        }
        let mut m = Machine {
            src: &mut PartialSource { assigned: &[] },
            vars: Vec::new(),
            word: Vec::new(),
            steps: 0,
            budget: 1,
            current: StmtId(0),
        };
        m.expr(e).ok().map(Value::as_f64)
    };
    let (mut lo_open, mut hi_open) = (false, false);
    for (a, op, b) in atoms {
        let (op, k) = match (a, b) {
            (Expr::Var(v), e) if v.slot == Some(slot) => (op, constant(e)),
            (e, Expr::Var(v)) if v.slot == Some(slot) => (op.flip(), constant(e)),
            _ => continue,
        };
        match (op, k) {
            (RelOp::Lt, Some(k)) if k == hi => hi_open = true,
            (RelOp::Gt, Some(k)) if k == lo => lo_open = true,
            _ => {}
        }
    }
    (lo_open, hi_open)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    /// Enumerate every coin sequence; requires `coin_flip` generators only.
    ExactDiscrete,
    /// Average over independent random inputs.
    Sampled,
}

/// Oracle result, serialized as the oracle report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub mode: OracleMode,
    pub estimate: f64,
    /// Enumerated leaves (exact) or random inputs drawn (sampled).
    pub paths_or_samples: u64,
    pub grid: usize,
    pub seed: Option<u64>,
}

/// Estimates `Pr[exists y on the grid: run reaches the outcome]`.
pub fn oracle_estimate(
    p: &Program,
    spec: &NondetSpec,
    mode: OracleMode,
    n: u64,
    seed: u64,
) -> Result<OracleReport, OracleError> {
    let grid = spec.assignments(&p.decls)?;
    match mode {
        OracleMode::ExactDiscrete => {
            if let Some(g) = p.generator_sites().iter().find(|g| g.generator == Generator::Uniform) {
                return Err(OracleError::ContinuousGenerator(g.site));
            }
            let (estimate, leaves) = enumerate(p, &grid)?;
            Ok(OracleReport {
                mode,
                estimate,
                paths_or_samples: leaves,
                grid: spec.resolution,
                seed: None,
            })
        }
        OracleMode::Sampled => {
            let hits = (0..n)
                .into_par_iter()
                .map(|i| -> Result<u64, OracleError> {
                    let mut src = LazySource {
                        rng: seed::stream(seed::trial_seed(seed, i)),
                        drawn: Vec::new(),
                    };
                    for env in &grid {
                        if let Exec::Done(r) = execute(p, env, &mut src, STEP_BUDGET)? {
                            if r.hit {
                                return Ok(1);
                            }
                        }
                    }
                    Ok(0)
                })
                .try_reduce(|| 0, |a, b| Ok(a + b))?;
            Ok(OracleReport {
                mode,
                estimate: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
                paths_or_samples: n,
                grid: spec.resolution,
                seed: Some(seed),
            })
        }
    }
}

/// Exact expectation over fair coins, branching lazily on the first
/// unassigned draw any grid point needs.
fn enumerate(p: &Program, grid: &[ConcreteEnv]) -> Result<(f64, u64), OracleError> {
    let mut stack: Vec<Vec<(ChoiceKey, Value)>> = vec![Vec::new()];
    let mut total = 0.0;
    let mut leaves = 0u64;
    while let Some(assigned) = stack.pop() {
        let mut need = None;
        let mut hit = false;
        for env in grid {
            match execute(p, env, &mut PartialSource { assigned: &assigned }, STEP_BUDGET)? {
                Exec::Done(r) if r.hit => {
                    hit = true;
                    break;
                }
                Exec::Done(_) => {}
                Exec::Need(k) => {
                    if need.is_none() {
                        need = Some(k);
                    }
                }
            }
        }
        match (hit, need) {
            (false, Some(k)) => {
                if assigned.len() >= MAX_DEPTH {
                    return Err(OracleError::DepthLimit(MAX_DEPTH));
                }
                for bit in [1, 0] {
                    let mut next = assigned.clone();
                    next.push((k.clone(), Value::Int(bit)));
                    stack.push(next);
                }
            }
            (hit, _) => {
                leaves += 1;
                if leaves > PATH_BUDGET {
                    return Err(OracleError::PathBudget(PATH_BUDGET));
                }
                if hit {
                    total += 0.5f64.powi(assigned.len() as i32);
                }
            }
        }
    }
    Ok((total, leaves))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    const FIG1: &str = include_str!("../../../corpus/fig1.amc");
    const FIG2: &str = include_str!("../../../corpus/fig2.amc");
    const FIG3: &str = include_str!("../../../corpus/fig3.amc");
    const FIG4: &str = include_str!("../../../corpus/fig4.amc");

    fn coins(flips: &[i64]) -> ChoiceTable {
        let mut t = ChoiceTable::new();
        for (i, &b) in flips.iter().enumerate() {
            t.insert(
                ChoiceKey {
                    site: Site(1),
                    word: vec![i as u32 + 1],
                },
                Value::Int(b),
            )
            .unwrap();
        }
        t
    }

    #[test]
    fn discrete_runs() {
        let p = parse(FIG1).unwrap();
        let t = coins(&[0, 0, 1, 0, 0]);
        let init = ConcreteEnv(vec![Value::Int(2), Value::Int(0)]);
        let r = run_concrete(&p, &init, &mut ReplaySource::new(&t, 0)).unwrap();
        assert_eq!((r.hit, r.status), (false, PathStatus::Completed));

        let t = coins(&[0, 1, 0, 0, 1]);
        let init = ConcreteEnv(vec![Value::Int(0), Value::Int(0)]);
        let r = run_concrete(&p, &init, &mut ReplaySource::new(&t, 0)).unwrap();
        assert!(r.hit);
    }

    #[test]
    fn empty_body() {
        let p = parse("int x; know (x < 3);").unwrap();
        let t = ChoiceTable::new();
        let r = run_concrete(&p, &ConcreteEnv(vec![Value::Int(0)]), &mut ReplaySource::new(&t, 0)).unwrap();
        assert!(r.hit);
    }

    #[test]
    fn failed_assumption_prunes() {
        let p = parse(FIG1).unwrap();
        let t = ChoiceTable::new();
        let r = run_concrete(&p, &ConcreteEnv(vec![Value::Int(7), Value::Int(0)]), &mut ReplaySource::new(&t, 0))
            .unwrap();
        assert!(!r.hit);
        assert!(matches!(r.status, PathStatus::Pruned(_)));
    }

    #[test]
    fn divergence_is_a_miss() {
        let p = parse("int x; x = 0; while (x < 1) { x = 0; } know (x < 5);").unwrap();
        let t = ChoiceTable::new();
        let r = run_concrete(&p, &ConcreteEnv::zeroed(&p.decls), &mut ReplaySource::new(&t, 0)).unwrap();
        assert_eq!((r.hit, r.status), (false, PathStatus::Diverged));
    }

    #[test]
    fn overflow_reported() {
        let p = parse("int x; x = 9223372036854775807; x += 1; know (x < 5);").unwrap();
        let t = ChoiceTable::new();
        let r = run_concrete(&p, &ConcreteEnv::zeroed(&p.decls), &mut ReplaySource::new(&t, 0)).unwrap();
        assert!(matches!(r.status, PathStatus::Overflow(_)));
    }

    #[test]
    fn nondet_inference() {
        let p = parse(FIG1).unwrap();
        let spec = NondetSpec::infer(&p, 64).unwrap();
        assert_eq!(spec.vars.len(), 1);
        assert_eq!(spec.vars[0].name, "x");
        assert_eq!(spec.vars[0].grid(64), vec![Value::Int(0), Value::Int(1), Value::Int(2)]);

        let p = parse(FIG3).unwrap();
        let spec = NondetSpec::infer(&p, 64).unwrap();
        let v = &spec.vars[0];
        assert_eq!((v.lo, v.hi, v.lo_open, v.hi_open), (-1.0, 0.0, true, true));
        let g = v.grid(64);
        assert_eq!(g.len(), 64);
        assert!(g.iter().all(|x| x.as_f64() > -1.0 && x.as_f64() < 0.0));

        let p = parse(FIG4).unwrap();
        let spec = NondetSpec::infer(&p, 64).unwrap();
        assert_eq!(spec.vars.len(), 1);
        let g = spec.vars[0].grid(64);
        assert_eq!(g.first(), Some(&Value::Real(0.0)));
        assert_eq!(g.last(), Some(&Value::Real(0.1)));

        let p = parse("int x; know (x < 3);").unwrap();
        assert_eq!(NondetSpec::infer(&p, 8), Err(OracleError::Unconstrained("x".into())));
    }

    #[test]
    fn read_before_write_cases() {
        let p = parse("int a, b, c; b = 1; if (a < 0) { c = 1; } else { b = a; } know (c < b);").unwrap();
        assert_eq!(read_before_write(&p), vec![0, 2]);
        let p = parse("int a, b; while (a < 3) { b = 1; a += b; } know (b < 1);").unwrap();
        assert_eq!(read_before_write(&p), vec![0, 1]);
    }

    #[test]
    fn large_integer_grid() {
        let v = NondetVar {
            name: "n".into(),
            slot: 0,
            kind: Kind::Int,
            lo: 0.0,
            hi: 1000.0,
            lo_open: false,
            hi_open: false,
        };
        let g = v.grid(5);
        assert_eq!(g, [0, 250, 500, 750, 1000].map(Value::Int).to_vec());
    }

    #[test]
    fn exact_discrete_value() {
        let p = parse(FIG1).unwrap();
        let spec = NondetSpec::infer(&p, 64).unwrap();
        let r = oracle_estimate(&p, &spec, OracleMode::ExactDiscrete, 0, 0).unwrap();
        assert_eq!(r.estimate, 0.5);
        assert_eq!(r.paths_or_samples, 32);
    }

    #[test]
    fn exact_handles_branch_dependent_draws() {
        // Pr[first flip 1] + Pr[first 0, then two more flips sum to 2] = 1/2 + 1/8
        let p = parse("int x; x = coin_flip(); if (x < 1) { x = coin_flip() + coin_flip(); x -= 1; } know (x == 1);")
            .unwrap();
        let spec = NondetSpec::infer(&p, 4).unwrap();
        let r = oracle_estimate(&p, &spec, OracleMode::ExactDiscrete, 0, 0).unwrap();
        assert_eq!(r.estimate, 0.625);
    }

    #[test]
    fn exact_rejects_uniform() {
        let p = parse(FIG2).unwrap();
        let spec = NondetSpec::infer(&p, 8).unwrap();
        assert!(matches!(
            oracle_estimate(&p, &spec, OracleMode::ExactDiscrete, 0, 0),
            Err(OracleError::ContinuousGenerator(Site(1)))
        ));
    }

    #[test]
    fn exact_path_budget() {
        let p = parse("int x, n; x = 0; n = 0; while (x < 1) { x = coin_flip(); n += 1; } know (n < 3);").unwrap();
        let spec = NondetSpec::infer(&p, 1).unwrap();
        assert_eq!(
            oracle_estimate(&p, &spec, OracleMode::ExactDiscrete, 0, 0),
            Err(OracleError::DepthLimit(MAX_DEPTH))
        );
        // 2^21 leaves
        let p = parse("int x, i; x = 0; i = 0; while (i < 21) { x += coin_flip(); i += 1; } know (x < 0);").unwrap();
        let spec = NondetSpec::infer(&p, 1).unwrap();
        assert_eq!(
            oracle_estimate(&p, &spec, OracleMode::ExactDiscrete, 0, 0),
            Err(OracleError::PathBudget(PATH_BUDGET))
        );
    }

    #[test]
    fn sampled_matches_exact_without_nondet() {
        // Binomial(4, 1/2) <= 1: 5/16
        let p = parse("int x, i; x = 0; i = 0; while (i < 4) { x += coin_flip(); i += 1; } know (x <= 1);").unwrap();
        let spec = NondetSpec::infer(&p, 8).unwrap();
        let exact = oracle_estimate(&p, &spec, OracleMode::ExactDiscrete, 0, 0).unwrap().estimate;
        assert_eq!(exact, 5.0 / 16.0);
        let n = 40_000;
        let sampled = oracle_estimate(&p, &spec, OracleMode::Sampled, n, 3).unwrap().estimate;
        let tol = 4.0 * (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((sampled - exact).abs() <= tol, "{sampled} vs {exact}");
    }

    #[test]
    fn sampled_is_deterministic() {
        let p = parse(FIG4).unwrap();
        let spec = NondetSpec::infer(&p, 16).unwrap();
        let a = oracle_estimate(&p, &spec, OracleMode::Sampled, 2000, 9).unwrap();
        let b = oracle_estimate(&p, &spec, OracleMode::Sampled, 2000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn report_json_fields() {
        let r = OracleReport {
            mode: OracleMode::ExactDiscrete,
            estimate: 0.5,
            paths_or_samples: 32,
            grid: 64,
            seed: None,
        };
        let v = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["estimate", "grid", "mode", "paths_or_samples", "seed"]);
        assert_eq!(v["mode"], "exact-discrete");
    }
}
