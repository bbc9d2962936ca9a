use std::fmt;

use serde::{Deserialize, Serialize};

/// Scalar kind of a variable or expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Int,
    Real,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::Int => f.write_str("int"),
            Kind::Real => f.write_str("double"),
        }
    }
}

/// A concrete scalar: literal, sampled random value, or variable contents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Real(f64),
}

impl Value {
    pub fn kind(self) -> Kind {
        match self {
            Value::Int(_) => Kind::Int,
            Value::Real(_) => Kind::Real,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Value::Int(v) => v as f64,
            Value::Real(v) => v,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            // Debug gives the shortest representation that round-trips and
            // always keeps a '.' or exponent, so it re-lexes as a real.
            Value::Real(v) => write!(f, "{v:?}"),
        }
    }
}

/// Identifier of a statement (a program point). Numbered from 1 in source order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StmtId(pub u32);

impl fmt::Display for StmtId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Identifier of one random-generator occurrence. Numbered from 1 in source order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Site(pub u32);

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}", self.0)
    }
}

/// The random generators of the language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Uniform on {0, 1}.
    CoinFlip,
    /// Uniform (Lebesgue) on [0, 1].
    Uniform,
}

impl Generator {
    pub fn kind(self) -> Kind {
        match self {
            Generator::CoinFlip => Kind::Int,
            Generator::Uniform => Kind::Real,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Generator::CoinFlip => "coin_flip",
            Generator::Uniform => "uniform",
        }
    }
}

/// A reference to a declared variable. `slot` indexes [`Program::decls`];
/// it is `None` when the name was not declared.
#[derive(Debug, Clone, PartialEq)]
pub struct VarRef {
    pub name: String,
    pub slot: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Value),
    Var(VarRef),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    /// Literal coefficient times an expression.
    Scale(Value, Box<Expr>),
    Random(Generator, Site),
}

impl Expr {
    /// Calls `f` on every generator occurrence, left to right.
    pub fn for_each_generator(&self, f: &mut impl FnMut(Generator, Site)) {
        match self {
            Expr::Lit(_) | Expr::Var(_) => {}
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                a.for_each_generator(f);
                b.for_each_generator(f);
            }
            Expr::Scale(_, e) => e.for_each_generator(f),
            Expr::Random(g, s) => f(*g, *s),
        }
    }

    pub fn for_each_var(&self, f: &mut dyn FnMut(&VarRef)) {
        match self {
            Expr::Lit(_) | Expr::Random(..) => {}
            Expr::Var(v) => f(v),
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
            Expr::Scale(_, e) => e.for_each_var(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl RelOp {
    /// The operator of the complementary comparison.
    pub fn negate(self) -> RelOp {
        match self {
            RelOp::Lt => RelOp::Ge,
            RelOp::Le => RelOp::Gt,
            RelOp::Gt => RelOp::Le,
            RelOp::Ge => RelOp::Lt,
            RelOp::Eq => RelOp::Ne,
            RelOp::Ne => RelOp::Eq,
        }
    }

    /// The operator with its operands swapped: `a op b` iff `b op.flip() a`.
    pub fn flip(self) -> RelOp {
        match self {
            RelOp::Lt => RelOp::Gt,
            RelOp::Le => RelOp::Ge,
            RelOp::Gt => RelOp::Lt,
            RelOp::Ge => RelOp::Le,
            RelOp::Eq => RelOp::Eq,
            RelOp::Ne => RelOp::Ne,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
            RelOp::Eq => "==",
            RelOp::Ne => "!=",
        }
    }

    pub fn holds<T: PartialOrd>(self, a: T, b: T) -> bool {
        match self {
            RelOp::Lt => a < b,
            RelOp::Le => a <= b,
            RelOp::Gt => a > b,
            RelOp::Ge => a >= b,
            RelOp::Eq => a == b,
            RelOp::Ne => a != b,
        }
    }
}

/// Boolean condition: comparisons joined by `&&` / `||`.
#[derive(Debug, Clone, PartialEq)]
pub enum Cond {
    Cmp(Expr, RelOp, Expr),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
}

impl Cond {
    pub fn for_each_generator(&self, f: &mut impl FnMut(Generator, Site)) {
        match self {
            Cond::Cmp(a, _, b) => {
                a.for_each_generator(f);
                b.for_each_generator(f);
            }
            Cond::And(a, b) | Cond::Or(a, b) => {
                a.for_each_generator(f);
                b.for_each_generator(f);
            }
        }
    }

    pub fn for_each_var(&self, f: &mut dyn FnMut(&VarRef)) {
        match self {
            Cond::Cmp(a, _, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
            Cond::And(a, b) | Cond::Or(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub id: StmtId,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Assign(VarRef, Expr),
    AddAssign(VarRef, Expr),
    SubAssign(VarRef, Expr),
    /// Assumption: executions violating the condition are discarded.
    Know(Cond),
    If(Cond, Vec<Stmt>, Vec<Stmt>),
    While(Cond, Vec<Stmt>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decl {
    pub name: String,
    pub kind: Kind,
}

/// A parsed program: declarations, body, and the outcome event whose
/// probability is bounded.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    /// Display name used in reports (usually the source file name).
    pub name: String,
    pub decls: Vec<Decl>,
    pub body: Vec<Stmt>,
    pub outcome: Option<Cond>,
}

impl Program {
    pub fn slot_of(&self, name: &str) -> Option<usize> {
        self.decls.iter().position(|d| d.name == name)
    }

    /// Every generator occurrence in the program (body and outcome), in
    /// source order, flagged with whether it sits inside a loop.
    pub fn generator_sites(&self) -> Vec<GeneratorSite> {
        fn walk(stmts: &[Stmt], in_loop: bool, out: &mut Vec<GeneratorSite>) {
            for s in stmts {
                let mut push = |generator, site| {
                    out.push(GeneratorSite {
                        site,
                        generator,
                        in_loop,
                    })
                };
                match &s.kind {
                    StmtKind::Assign(_, e) | StmtKind::AddAssign(_, e) | StmtKind::SubAssign(_, e) => {
                        e.for_each_generator(&mut push)
                    }
                    StmtKind::Know(c) => c.for_each_generator(&mut push),
                    StmtKind::If(c, t, e) => {
                        c.for_each_generator(&mut push);
                        walk(t, in_loop, out);
                        walk(e, in_loop, out);
                    }
                    StmtKind::While(c, body) => {
                        let mut push_in = |generator, site| {
                            out.push(GeneratorSite {
                                site,
                                generator,
                                in_loop: true,
                            })
                        };
                        c.for_each_generator(&mut push_in);
                        walk(body, true, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.body, false, &mut out);
        if let Some(c) = &self.outcome {
            c.for_each_generator(&mut |generator, site| {
                out.push(GeneratorSite {
                    site,
                    generator,
                    in_loop: false,
                })
            });
        }
        out
    }

    pub fn has_generator(&self, g: Generator) -> bool {
        self.generator_sites().iter().any(|s| s.generator == g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorSite {
    pub site: Site,
    pub generator: Generator,
    pub in_loop: bool,
}
