use std::collections::HashSet;
use std::fmt;

use super::ast::*;

/// A static-check finding. `stmt` locates it when it belongs to a statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub stmt: Option<StmtId>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stmt {
            Some(id) => write!(f, "{id}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Checks every program invariant. Returns an empty list iff the program is
/// well formed.
pub fn validate(p: &Program) -> Vec<Diagnostic> {
    let mut v = Validator {
        p,
        diags: Vec::new(),
        stmt_ids: HashSet::new(),
        sites: HashSet::new(),
        current: None,
    };

    let mut seen = HashSet::new();
    for d in &p.decls {
        if !seen.insert(d.name.as_str()) {
            v.report(format!("variable `{}` declared more than once", d.name));
        }
    }
    v.stmts(&p.body);
    v.current = None;
    match &p.outcome {
        Some(c) => v.cond(c),
        None => v.report("missing outcome: the program must end with `know (...)` or a query must be given"),
    }
    v.diags
}

struct Validator<'a> {
    p: &'a Program,
    diags: Vec<Diagnostic>,
    stmt_ids: HashSet<StmtId>,
    sites: HashSet<Site>,
    current: Option<StmtId>,
}

impl Validator<'_> {
    fn report(&mut self, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            stmt: self.current,
            message: message.into(),
        });
    }

    fn var_kind(&mut self, v: &VarRef) -> Option<Kind> {
        match v.slot.and_then(|s| self.p.decls.get(s)) {
            Some(d) if d.name == v.name => Some(d.kind),
            _ => {
                self.report(format!("use of undeclared variable `{}`", v.name));
                None
            }
        }
    }

    fn stmts(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            self.current = Some(s.id);
            if !self.stmt_ids.insert(s.id) {
                self.report(format!("duplicate statement identifier {}", s.id));
            }
            match &s.kind {
                StmtKind::Assign(var, e) | StmtKind::AddAssign(var, e) | StmtKind::SubAssign(var, e) => {
                    let vk = self.var_kind(var);
                    let ek = self.expr(e);
                    if let (Some(vk), Some(ek)) = (vk, ek) {
                        if vk != ek {
                            self.report(format!(
                                "kind mismatch: cannot assign {ek} expression to {vk} variable `{}`",
                                var.name
                            ));
                        }
                    }
                }
                StmtKind::Know(c) => self.cond(c),
                StmtKind::If(c, t, e) => {
                    self.cond(c);
                    self.stmts(t);
                    self.stmts(e);
                }
                StmtKind::While(c, body) => {
                    self.cond(c);
                    self.stmts(body);
                }
            }
        }
    }

    fn cond(&mut self, c: &Cond) {
        match c {
            Cond::Cmp(a, op, b) => {
                if let (Some(ka), Some(kb)) = (self.expr(a), self.expr(b)) {
                    if ka != kb {
                        self.report(format!(
                            "kind mismatch: comparison `{a} {} {b}` mixes {ka} and {kb}",
                            op.symbol()
                        ));
                    }
                }
            }
            Cond::And(a, b) | Cond::Or(a, b) => {
                self.cond(a);
                self.cond(b);
            }
        }
    }

    /// Kind of `e`, or `None` after reporting an error inside it.
    fn expr(&mut self, e: &Expr) -> Option<Kind> {
        match e {
            Expr::Lit(v) => Some(v.kind()),
            Expr::Var(v) => self.var_kind(v),
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let (ka, kb) = (self.expr(a), self.expr(b));
                match (ka, kb) {
                    (Some(ka), Some(kb)) if ka == kb => Some(ka),
                    (Some(ka), Some(kb)) => {
                        self.report(format!("kind mismatch: `{e}` mixes {ka} and {kb}"));
                        None
                    }
                    _ => None,
                }
            }
            Expr::Scale(k, inner) => {
                let ki = self.expr(inner)?;
                // An integer coefficient may scale a real expression.
                if k.kind() == Kind::Real && ki == Kind::Int {
                    self.report(format!("kind mismatch: real coefficient on integer expression in `{e}`"));
                    return None;
                }
                Some(ki)
            }
            Expr::Random(g, site) => {
                if !self.sites.insert(*site) {
                    self.report(format!("duplicate generator site {site}"));
                }
                Some(g.kind())
            }
        }
    }
}
