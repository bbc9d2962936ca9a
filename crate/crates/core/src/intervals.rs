//! Integer and real intervals, environments of intervals, and guard
//! filtering.
//!
//! Bounds are stored as `f64` for both kinds. Integer intervals keep
//! integral (or infinite) bounds. Real arithmetic rounds outward so that
//! every floating-point evaluation of a concrete execution stays inside the
//! computed interval.

use std::fmt;

use thiserror::Error;

use crate::lang::{Cond, Decl, Expr, Generator, Kind, RelOp, Site, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("kind mismatch: {0} and {1}")]
    KindMismatch(Kind, Kind),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("lookup in an unreachable environment")]
    Unreachable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    kind: Kind,
    bounds: Option<(f64, f64)>,
}

impl Interval {
    /// Builds `[lo, hi]`, normalizing integer bounds inward and empty
    /// ranges to bottom.
    pub fn new(kind: Kind, lo: f64, hi: f64) -> Interval {
        let (lo, hi) = match kind {
            Kind::Int => (lo.ceil(), hi.floor()),
            Kind::Real => (lo, hi),
        };
        let bounds = if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            None
        } else {
            Some((lo, hi))
        };
        Interval { kind, bounds }
    }

    pub fn int(lo: i64, hi: i64) -> Interval {
        Interval::new(Kind::Int, lo as f64, hi as f64)
    }

    pub fn real(lo: f64, hi: f64) -> Interval {
        Interval::new(Kind::Real, lo, hi)
    }

    pub fn point(v: Value) -> Interval {
        Interval::new(v.kind(), v.as_f64(), v.as_f64())
    }

    pub fn top(kind: Kind) -> Interval {
        Interval::new(kind, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn bottom(kind: Kind) -> Interval {
        Interval { kind, bounds: None }
    }

    /// The whole range of a generator: `[0, 1]` for both.
    pub fn full_range(g: Generator) -> Interval {
        Interval::new(g.kind(), 0.0, 1.0)
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn is_bottom(&self) -> bool {
        self.bounds.is_none()
    }

    pub fn lo(&self) -> Option<f64> {
        self.bounds.map(|b| b.0)
    }

    pub fn hi(&self) -> Option<f64> {
        self.bounds.map(|b| b.1)
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.bounds
    }

    pub fn is_singleton(&self) -> bool {
        matches!(self.bounds, Some((a, b)) if a == b)
    }

    pub fn contains(&self, v: f64) -> bool {
        matches!(self.bounds, Some((a, b)) if a <= v && v <= b)
    }

    /// Inclusion order: `self ⊑ other`.
    pub fn leq(&self, other: &Interval) -> bool {
        match (self.bounds, other.bounds) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some((a, b)), Some((c, d))) => c <= a && b <= d,
        }
    }

    fn same_kind(&self, other: &Interval) -> Result<Kind, DomainError> {
        if self.kind == other.kind {
            Ok(self.kind)
        } else {
            Err(DomainError::KindMismatch(self.kind, other.kind))
        }
    }

    /// Least interval containing both.
    pub fn join(&self, other: &Interval) -> Result<Interval, DomainError> {
        let kind = self.same_kind(other)?;
        Ok(match (self.bounds, other.bounds) {
            (None, _) => *other,
            (_, None) => *self,
            (Some((a, b)), Some((c, d))) => Interval::new(kind, a.min(c), b.max(d)),
        })
    }

    pub fn meet(&self, other: &Interval) -> Result<Interval, DomainError> {
        let kind = self.same_kind(other)?;
        Ok(match (self.bounds, other.bounds) {
            (Some((a, b)), Some((c, d))) => Interval::new(kind, a.max(c), b.min(d)),
            _ => Interval::bottom(kind),
        })
    }

    /// Standard widening: bounds of `other` beyond those of `self` jump to
    /// infinity.
    pub fn widen(&self, other: &Interval) -> Result<Interval, DomainError> {
        self.widen_with_thresholds(other, &[])
    }

    /// Widening that stops at the nearest threshold before going infinite.
    /// `thresholds` must be sorted ascending.
    pub fn widen_with_thresholds(&self, other: &Interval, thresholds: &[f64]) -> Result<Interval, DomainError> {
        let kind = self.same_kind(other)?;
        Ok(match (self.bounds, other.bounds) {
            (None, _) => *other,
            (_, None) => *self,
            (Some((a, b)), Some((c, d))) => {
                let lo = if c < a {
                    thresholds.iter().rev().copied().find(|&t| t <= c).unwrap_or(f64::NEG_INFINITY)
                } else {
                    a
                };
                let hi = if d > b {
                    thresholds.iter().copied().find(|&t| t >= d).unwrap_or(f64::INFINITY)
                } else {
                    b
                };
                Interval::new(kind, lo, hi)
            }
        })
    }

    /// Standard narrowing: only infinite bounds of `self` are refined.
    pub fn narrow(&self, other: &Interval) -> Result<Interval, DomainError> {
        let kind = self.same_kind(other)?;
        Ok(match (self.bounds, other.bounds) {
            (Some((a, b)), Some((c, d))) => {
                let lo = if a == f64::NEG_INFINITY { c } else { a };
                let hi = if b == f64::INFINITY { d } else { b };
                Interval::new(kind, lo, hi)
            }
            _ => Interval::bottom(kind),
        })
    }

    pub fn add(&self, other: &Interval) -> Result<Interval, DomainError> {
        let kind = self.same_kind(other)?;
        Ok(match (self.bounds, other.bounds) {
            (Some((a, b)), Some((c, d))) => Interval::new(kind, add_down(a, c), add_up(b, d)),
            _ => Interval::bottom(kind),
        })
    }

    pub fn sub(&self, other: &Interval) -> Result<Interval, DomainError> {
        let kind = self.same_kind(other)?;
        Ok(match (self.bounds, other.bounds) {
            (Some((a, b)), Some((c, d))) => Interval::new(kind, add_down(a, -d), add_up(b, -c)),
            _ => Interval::bottom(kind),
        })
    }

    /// Multiplication by a literal. An integer literal may scale a real
    /// interval; a real literal may not scale an integer one.
    pub fn scale(&self, k: Value) -> Result<Interval, DomainError> {
        if k.kind() == Kind::Real && self.kind == Kind::Int {
            return Err(DomainError::KindMismatch(Kind::Real, Kind::Int));
        }
        let k = k.as_f64();
        Ok(match self.bounds {
            None => *self,
            Some(_) if k == 0.0 => Interval::new(self.kind, 0.0, 0.0),
            Some((a, b)) => {
                let (x, y) = if k > 0.0 { (a, b) } else { (b, a) };
                Interval::new(self.kind, mul_down(k, x), mul_up(k, y))
            }
        })
    }
}

fn two_sum_err(a: f64, b: f64, s: f64) -> f64 {
    let bb = s - a;
    (a - (s - bb)) + (b - bb)
}

fn add_down(a: f64, b: f64) -> f64 {
    let s = a + b;
    if !s.is_finite() || !a.is_finite() || !b.is_finite() {
        return s;
    }
    if two_sum_err(a, b, s) < 0.0 {
        s.next_down()
    } else {
        s
    }
}

fn add_up(a: f64, b: f64) -> f64 {
    let s = a + b;
    if !s.is_finite() || !a.is_finite() || !b.is_finite() {
        return s;
    }
    if two_sum_err(a, b, s) > 0.0 {
        s.next_up()
    } else {
        s
    }
}

fn mul_down(k: f64, x: f64) -> f64 {
    let p = k * x;
    if !p.is_finite() || !x.is_finite() {
        return p;
    }
    if k.mul_add(x, -p) < 0.0 {
        p.next_down()
    } else {
        p
    }
}

fn mul_up(k: f64, x: f64) -> f64 {
    let p = k * x;
    if !p.is_finite() || !x.is_finite() {
        return p;
    }
    if k.mul_add(x, -p) > 0.0 {
        p.next_up()
    } else {
        p
    }
}

fn fmt_bound(kind: Kind, v: f64) -> String {
    match kind {
        Kind::Int => format!("{v}"),
        Kind::Real => format!("{v:?}"),
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.bounds {
            None => f.write_str("bottom"),
            Some((a, b)) => {
                if a == f64::NEG_INFINITY {
                    f.write_str("(-inf, ")?;
                } else {
                    write!(f, "[{}, ", fmt_bound(self.kind, a))?;
                }
                if b == f64::INFINITY {
                    f.write_str("+inf)")
                } else {
                    write!(f, "{}]", fmt_bound(self.kind, b))
                }
            }
        }
    }
}

/// One interval per declared variable, or bottom for unreachable code.
#[derive(Debug, Clone, PartialEq)]
pub enum AbstractEnv {
    Bottom,
    Vars(Vec<Interval>),
}

impl AbstractEnv {
    /// Every variable unconstrained.
    pub fn top(decls: &[Decl]) -> AbstractEnv {
        AbstractEnv::Vars(decls.iter().map(|d| Interval::top(d.kind)).collect())
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, AbstractEnv::Bottom)
    }

    pub fn get(&self, slot: usize) -> Result<Interval, DomainError> {
        match self {
            AbstractEnv::Bottom => Err(DomainError::Unreachable),
            AbstractEnv::Vars(v) => v.get(slot).copied().ok_or_else(|| DomainError::UnknownVariable(format!("#{slot}"))),
        }
    }

    /// Stores `iv`; a bottom interval makes the whole environment bottom.
    pub fn set(&mut self, slot: usize, iv: Interval) -> Result<(), DomainError> {
        match self {
            AbstractEnv::Bottom => Ok(()),
            AbstractEnv::Vars(v) => {
                let cell = v
                    .get_mut(slot)
                    .ok_or_else(|| DomainError::UnknownVariable(format!("#{slot}")))?;
                if cell.kind() != iv.kind() {
                    return Err(DomainError::KindMismatch(cell.kind(), iv.kind()));
                }
                if iv.is_bottom() {
                    *self = AbstractEnv::Bottom;
                } else {
                    *cell = iv;
                }
                Ok(())
            }
        }
    }

    fn pointwise(
        &self,
        other: &AbstractEnv,
        op: impl Fn(&Interval, &Interval) -> Result<Interval, DomainError>,
    ) -> Result<AbstractEnv, DomainError> {
        let (AbstractEnv::Vars(a), AbstractEnv::Vars(b)) = (self, other) else {
            unreachable!("pointwise on bottom")
        };
        let mut out = Vec::with_capacity(a.len());
        for (x, y) in a.iter().zip(b) {
            let r = op(x, y)?;
            if r.is_bottom() {
                return Ok(AbstractEnv::Bottom);
            }
            out.push(r);
        }
        Ok(AbstractEnv::Vars(out))
    }

    pub fn join(&self, other: &AbstractEnv) -> Result<AbstractEnv, DomainError> {
        match (self, other) {
            (AbstractEnv::Bottom, e) | (e, AbstractEnv::Bottom) => Ok(e.clone()),
            _ => self.pointwise(other, Interval::join),
        }
    }

    pub fn meet(&self, other: &AbstractEnv) -> Result<AbstractEnv, DomainError> {
        match (self, other) {
            (AbstractEnv::Bottom, _) | (_, AbstractEnv::Bottom) => Ok(AbstractEnv::Bottom),
            _ => self.pointwise(other, Interval::meet),
        }
    }

    pub fn widen(&self, other: &AbstractEnv, thresholds: &[f64]) -> Result<AbstractEnv, DomainError> {
        match (self, other) {
            (AbstractEnv::Bottom, e) | (e, AbstractEnv::Bottom) => Ok(e.clone()),
            _ => self.pointwise(other, |a, b| a.widen_with_thresholds(b, thresholds)),
        }
    }

    pub fn narrow(&self, other: &AbstractEnv) -> Result<AbstractEnv, DomainError> {
        match (self, other) {
            (AbstractEnv::Bottom, _) | (_, AbstractEnv::Bottom) => Ok(AbstractEnv::Bottom),
            _ => self.pointwise(other, Interval::narrow),
        }
    }

    pub fn leq(&self, other: &AbstractEnv) -> bool {
        match (self, other) {
            (AbstractEnv::Bottom, _) => true,
            (_, AbstractEnv::Bottom) => false,
            (AbstractEnv::Vars(a), AbstractEnv::Vars(b)) => a.iter().zip(b).all(|(x, y)| x.leq(y)),
        }
    }

    /// Text like `{x: [0, 2], i: [5, 5]}`, or `bottom`.
    pub fn render(&self, decls: &[Decl]) -> String {
        match self {
            AbstractEnv::Bottom => "bottom".to_string(),
            AbstractEnv::Vars(v) => {
                let parts: Vec<String> = decls.iter().zip(v).map(|(d, iv)| format!("{}: {iv}", d.name)).collect();
                format!("{{{}}}", parts.join(", "))
            }
        }
    }
}

/// Resolves the interval a generator occurrence stands for.
pub type GeneratorValues<'a> = &'a dyn Fn(Generator, Site) -> Interval;

/// Generators evaluate to their whole range.
pub fn full_range(g: Generator, _: Site) -> Interval {
    Interval::full_range(g)
}

/// Interval of `e` over a reachable environment.
pub fn eval(e: &Expr, env: &AbstractEnv, gens: GeneratorValues<'_>) -> Result<Interval, DomainError> {
    match e {
        Expr::Lit(v) => Ok(Interval::point(*v)),
        Expr::Var(v) => match v.slot {
            Some(s) => env.get(s),
            None => Err(DomainError::UnknownVariable(v.name.clone())),
        },
        Expr::Add(a, b) => eval(a, env, gens)?.add(&eval(b, env, gens)?),
        Expr::Sub(a, b) => eval(a, env, gens)?.sub(&eval(b, env, gens)?),
        Expr::Scale(k, a) => eval(a, env, gens)?.scale(*k),
        Expr::Random(g, s) => Ok(gens(*g, *s)),
    }
}

/// Whether `a op b` can hold for some members of the two intervals. Strict
/// comparisons are decided exactly here.
pub fn may_hold(a: &Interval, op: RelOp, b: &Interval) -> bool {
    let (Some((al, ah)), Some((bl, bh))) = (a.bounds(), b.bounds()) else {
        return false;
    };
    match op {
        RelOp::Lt => al < bh,
        RelOp::Le => al <= bh,
        RelOp::Gt => ah > bl,
        RelOp::Ge => ah >= bl,
        RelOp::Eq => al <= bh && bl <= ah,
        RelOp::Ne => !(al == ah && bl == bh && al == bl),
    }
}

/// Values `v` may take so that `v op e` can hold with `e` in `e_iv`. Strict
/// real comparisons are weakened to their closure.
fn constraint(op: RelOp, e_iv: &Interval, current: &Interval) -> Interval {
    let kind = current.kind();
    let (Some((lo, hi)), Some((vl, vh))) = (e_iv.bounds(), current.bounds()) else {
        return Interval::bottom(kind);
    };
    let step = if kind == Kind::Int { 1.0 } else { 0.0 };
    let inf = f64::INFINITY;
    match op {
        RelOp::Lt => Interval::new(kind, -inf, hi - step),
        RelOp::Le => Interval::new(kind, -inf, hi),
        RelOp::Gt => Interval::new(kind, lo + step, inf),
        RelOp::Ge => Interval::new(kind, lo, inf),
        RelOp::Eq => Interval::new(kind, lo, hi),
        RelOp::Ne => {
            if kind == Kind::Int && lo == hi {
                let a = if vl == lo { vl + 1.0 } else { vl };
                let b = if vh == lo { vh - 1.0 } else { vh };
                Interval::new(kind, a, b)
            } else {
                Interval::top(kind)
            }
        }
    }
}

/// Sound refinement of `env` by `c` (or by its negation when `polarity` is
/// false). Atoms `v op e` and `e op v` refine `v`; every atom that cannot
/// hold makes the result bottom.
pub fn filter(
    env: &AbstractEnv,
    c: &Cond,
    polarity: bool,
    gens: GeneratorValues<'_>,
) -> Result<AbstractEnv, DomainError> {
    if env.is_bottom() {
        return Ok(AbstractEnv::Bottom);
    }
    match (c, polarity) {
        (Cond::And(a, b), true) | (Cond::Or(a, b), false) => {
            let first = filter(env, a, polarity, gens)?;
            filter(&first, b, polarity, gens)
        }
        (Cond::Or(a, b), true) | (Cond::And(a, b), false) => {
            filter(env, a, polarity, gens)?.join(&filter(env, b, polarity, gens)?)
        }
        (Cond::Cmp(l, op, r), _) => {
            let op = if polarity { *op } else { op.negate() };
            filter_atom(env, l, op, r, gens)
        }
    }
}

fn filter_atom(
    env: &AbstractEnv,
    l: &Expr,
    op: RelOp,
    r: &Expr,
    gens: GeneratorValues<'_>,
) -> Result<AbstractEnv, DomainError> {
    let li = eval(l, env, gens)?;
    let ri = eval(r, env, gens)?;
    if li.kind() != ri.kind() {
        return Err(DomainError::KindMismatch(li.kind(), ri.kind()));
    }
    if !may_hold(&li, op, &ri) {
        return Ok(AbstractEnv::Bottom);
    }
    let mut out = env.clone();
    if let Expr::Var(v) = l {
        if let Some(s) = v.slot {
            let cur = out.get(s)?;
            out.set(s, cur.meet(&constraint(op, &ri, &cur))?)?;
        }
    }
    if let Expr::Var(w) = r {
        if let (Some(s), false) = (w.slot, out.is_bottom()) {
            let cur = out.get(s)?;
            out.set(s, cur.meet(&constraint(op.flip(), &li, &cur))?)?;
        }
    }
    Ok(out)
}

/// [`filter`] with generators standing for their whole range.
pub fn filter_full(env: &AbstractEnv, c: &Cond, polarity: bool) -> Result<AbstractEnv, DomainError> {
    filter(env, c, polarity, &full_range)
}
