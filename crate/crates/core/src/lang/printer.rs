//! Canonical source rendering. Parsing the output yields the same AST
//! (including statement and generator numbering).

use std::fmt::{self, Display, Formatter, Write};

use super::ast::*;

impl Display for Expr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Var(v) => f.write_str(&v.name),
            Expr::Add(a, b) => {
                write!(f, "{a} + ")?;
                write_operand(f, b, is_additive(b))
            }
            Expr::Sub(a, b) => {
                write!(f, "{a} - ")?;
                write_operand(f, b, is_additive(b))
            }
            Expr::Scale(k, e) => {
                write!(f, "{k} * ")?;
                write_operand(f, e, matches!(**e, Expr::Add(..) | Expr::Sub(..) | Expr::Scale(..)))
            }
            Expr::Random(g, _) => write!(f, "{}()", g.name()),
        }
    }
}

fn is_additive(e: &Expr) -> bool {
    matches!(e, Expr::Add(..) | Expr::Sub(..))
}

fn write_operand(f: &mut Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl Display for Cond {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Cond::Cmp(a, op, b) => write!(f, "{a} {} {b}", op.symbol()),
            Cond::And(a, b) => {
                let wrap = |c: &Cond| matches!(c, Cond::Or(..));
                if wrap(a) {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                if wrap(b) || matches!(**b, Cond::And(..)) {
                    write!(f, " && ({b})")
                } else {
                    write!(f, " && {b}")
                }
            }
            Cond::Or(a, b) => {
                if matches!(**b, Cond::Or(..)) {
                    write!(f, "{a} || ({b})")
                } else {
                    write!(f, "{a} || {b}")
                }
            }
        }
    }
}

fn write_stmts(out: &mut String, stmts: &[Stmt], depth: usize) -> fmt::Result {
    for s in stmts {
        let pad = "    ".repeat(depth);
        match &s.kind {
            StmtKind::Assign(v, e) => writeln!(out, "{pad}{} = {e};", v.name)?,
            StmtKind::AddAssign(v, e) => writeln!(out, "{pad}{} += {e};", v.name)?,
            StmtKind::SubAssign(v, e) => writeln!(out, "{pad}{} -= {e};", v.name)?,
            StmtKind::Know(c) => writeln!(out, "{pad}know ({c});")?,
            StmtKind::If(c, t, e) => {
                writeln!(out, "{pad}if ({c}) {{")?;
                write_stmts(out, t, depth + 1)?;
                if e.is_empty() {
                    writeln!(out, "{pad}}}")?;
                } else {
                    writeln!(out, "{pad}}} else {{")?;
                    write_stmts(out, e, depth + 1)?;
                    writeln!(out, "{pad}}}")?;
                }
            }
            StmtKind::While(c, body) => {
                writeln!(out, "{pad}while ({c}) {{")?;
                write_stmts(out, body, depth + 1)?;
                writeln!(out, "{pad}}}")?;
            }
        }
    }
    Ok(())
}

impl Display for Program {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        for d in &self.decls {
            writeln!(out, "{} {};", d.kind, d.name)?;
        }
        write_stmts(&mut out, &self.body, 0)?;
        if let Some(c) = &self.outcome {
            writeln!(out, "know ({c});")?;
        }
        f.write_str(&out)
    }
}
