use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;

/// Syntax-only parse. Names are resolved against the declarations but no
/// kind checking happens; the trailing top-level `know` becomes the outcome
/// unless `query` supplies one.
pub fn parse_unchecked(src: &str, query: Option<&str>) -> Result<Program, ParseError> {
    let mut p = Parser::new(tokenize(src)?);
    let wrapped = p.peek() == &Tok::LBrace && matches!(p.peek_at(1), Tok::Ident(w) if is_type(w));
    if wrapped {
        p.bump();
    }
    p.parse_decls()?;
    let mut body = Vec::new();
    let end = if wrapped { Tok::RBrace } else { Tok::Eof };
    while p.peek() != &end {
        if p.peek() == &Tok::Eof {
            return Err(p.error("expected `}` closing the program block"));
        }
        p.parse_stmt_into(&mut body)?;
    }
    if wrapped {
        p.bump();
        p.expect(Tok::Eof)?;
    }

    let outcome = match query {
        Some(q) => {
            let mut qp = Parser::new(tokenize(q)?);
            qp.decls = std::mem::take(&mut p.decls);
            qp.next_site = p.next_site;
            let c = qp.parse_or()?;
            qp.expect(Tok::Eof)?;
            p.decls = std::mem::take(&mut qp.decls);
            Some(c)
        }
        None => match body.last() {
            Some(Stmt {
                kind: StmtKind::Know(_),
                ..
            }) => match body.pop().map(|s| s.kind) {
                Some(StmtKind::Know(c)) => Some(c),
                _ => unreachable!(),
            },
            _ => None,
        },
    };

    Ok(Program {
        name: String::from("<input>"),
        decls: p.decls,
        body,
        outcome,
    })
}

fn is_type(w: &str) -> bool {
    w == "int" || w == "double"
}

const KEYWORDS: &[&str] = &["int", "double", "know", "if", "else", "while", "coin_flip", "uniform"];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    next_stmt: u32,
    next_site: u32,
    decls: Vec<Decl>,
}

impl Parser {
    fn new(toks: Vec<Token>) -> Self {
        Parser {
            toks,
            pos: 0,
            next_stmt: 0,
            next_site: 0,
            decls: Vec::new(),
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        let t = &self.toks[self.pos];
        ParseError::new(t.line, t.col, msg)
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if self.peek() == &want {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!("expected {}, found {}", want.describe(), self.peek().describe())))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(w) if !KEYWORDS.contains(&w.as_str()) => {
                self.bump();
                Ok(w)
            }
            other => Err(self.error(format!("expected identifier, found {}", other.describe()))),
        }
    }

    fn var_ref(&self, name: String) -> VarRef {
        let slot = self.decls.iter().position(|d| d.name == name);
        VarRef { name, slot }
    }

    fn stmt_id(&mut self) -> StmtId {
        self.next_stmt += 1;
        StmtId(self.next_stmt)
    }

    fn site(&mut self) -> Site {
        self.next_site += 1;
        Site(self.next_site)
    }

    fn parse_decls(&mut self) -> Result<(), ParseError> {
        while let Tok::Ident(w) = self.peek() {
            let kind = match w.as_str() {
                "int" => Kind::Int,
                "double" => Kind::Real,
                _ => break,
            };
            self.bump();
            loop {
                let name = self.ident()?;
                self.decls.push(Decl { name, kind });
                if self.peek() == &Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
            self.expect(Tok::Semi)?;
        }
        Ok(())
    }

    /// Parses one statement, appending to `out`. Nested blocks are spliced
    /// into the enclosing list.
    fn parse_stmt_into(&mut self, out: &mut Vec<Stmt>) -> Result<(), ParseError> {
        match self.peek().clone() {
            Tok::Semi => {
                self.bump();
                Ok(())
            }
            Tok::LBrace => {
                out.extend(self.parse_block()?);
                Ok(())
            }
            Tok::Ident(w) if is_type(&w) => Err(self.error("declarations must precede statements")),
            Tok::Ident(w) if w == "know" => {
                self.bump();
                let id = self.stmt_id();
                self.expect(Tok::LParen)?;
                let c = self.parse_or()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Semi)?;
                out.push(Stmt {
                    id,
                    kind: StmtKind::Know(c),
                });
                Ok(())
            }
            Tok::Ident(w) if w == "if" => {
                self.bump();
                let id = self.stmt_id();
                self.expect(Tok::LParen)?;
                let c = self.parse_or()?;
                self.expect(Tok::RParen)?;
                let then = self.parse_body()?;
                let els = if self.peek() == &Tok::Ident("else".into()) {
                    self.bump();
                    self.parse_body()?
                } else {
                    Vec::new()
                };
                out.push(Stmt {
                    id,
                    kind: StmtKind::If(c, then, els),
                });
                Ok(())
            }
            Tok::Ident(w) if w == "while" => {
                self.bump();
                let id = self.stmt_id();
                self.expect(Tok::LParen)?;
                let c = self.parse_or()?;
                self.expect(Tok::RParen)?;
                let body = self.parse_body()?;
                out.push(Stmt {
                    id,
                    kind: StmtKind::While(c, body),
                });
                Ok(())
            }
            Tok::Ident(w) if w == "else" => Err(self.error("`else` without `if`")),
            Tok::Ident(_) => {
                let name = self.ident()?;
                let id = self.stmt_id();
                let var = self.var_ref(name);
                let kind = match self.bump() {
                    Tok::Assign => StmtKind::Assign(var, self.parse_expr()?),
                    Tok::PlusAssign => StmtKind::AddAssign(var, self.parse_expr()?),
                    Tok::MinusAssign => StmtKind::SubAssign(var, self.parse_expr()?),
                    t @ (Tok::PlusPlus | Tok::MinusMinus) => {
                        let one = match var.slot.map(|s| self.decls[s].kind) {
                            Some(Kind::Real) => Value::Real(1.0),
                            _ => Value::Int(1),
                        };
                        if t == Tok::PlusPlus {
                            StmtKind::AddAssign(var, Expr::Lit(one))
                        } else {
                            StmtKind::SubAssign(var, Expr::Lit(one))
                        }
                    }
                    other => {
                        self.pos -= 1;
                        return Err(self.error(format!(
                            "expected assignment operator, found {}",
                            other.describe()
                        )));
                    }
                };
                self.expect(Tok::Semi)?;
                out.push(Stmt { id, kind });
                Ok(())
            }
            other => Err(self.error(format!("expected statement, found {}", other.describe()))),
        }
    }

    fn parse_block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect(Tok::LBrace)?;
        let mut stmts = Vec::new();
        while self.peek() != &Tok::RBrace {
            if self.peek() == &Tok::Eof {
                return Err(self.error("expected `}`"));
            }
            self.parse_stmt_into(&mut stmts)?;
        }
        self.bump();
        Ok(stmts)
    }

    /// A braced block or a single statement.
    fn parse_body(&mut self) -> Result<Vec<Stmt>, ParseError> {
        if self.peek() == &Tok::LBrace {
            self.parse_block()
        } else {
            let mut v = Vec::new();
            self.parse_stmt_into(&mut v)?;
            Ok(v)
        }
    }

    fn parse_or(&mut self) -> Result<Cond, ParseError> {
        let mut lhs = self.parse_and()?;
        while self.peek() == &Tok::OrOr {
            self.bump();
            let rhs = self.parse_and()?;
            lhs = Cond::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<Cond, ParseError> {
        let mut lhs = self.parse_atom()?;
        while self.peek() == &Tok::AndAnd {
            self.bump();
            let rhs = self.parse_atom()?;
            lhs = Cond::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_atom(&mut self) -> Result<Cond, ParseError> {
        if self.peek() == &Tok::LParen {
            // Either a parenthesized condition or a comparison whose left
            // operand starts with a parenthesized expression.
            let save = (self.pos, self.next_site);
            self.bump();
            if let Ok(c) = self.parse_or() {
                if self.peek() == &Tok::RParen {
                    self.bump();
                    if relop(self.peek()).is_none() {
                        return Ok(c);
                    }
                }
            }
            (self.pos, self.next_site) = save;
        }
        let lhs = self.parse_expr()?;
        let op = relop(self.peek())
            .ok_or_else(|| self.error(format!("expected comparison operator, found {}", self.peek().describe())))?;
        self.bump();
        let rhs = self.parse_expr()?;
        Ok(Cond::Cmp(lhs, op, rhs))
    }

    fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.parse_term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.parse_term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_unary()?;
        while self.peek() == &Tok::Star {
            let (line, col) = (self.toks[self.pos].line, self.toks[self.pos].col);
            self.bump();
            let rhs = self.parse_unary()?;
            lhs = match (lhs, rhs) {
                (Expr::Lit(k), e) => Expr::Scale(k, Box::new(e)),
                (e, Expr::Lit(k)) => Expr::Scale(k, Box::new(e)),
                _ => {
                    return Err(ParseError::new(
                        line,
                        col,
                        "multiplication requires a literal operand",
                    ))
                }
            };
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == &Tok::Minus {
            self.bump();
            return Ok(match self.parse_unary()? {
                Expr::Lit(Value::Int(v)) => Expr::Lit(Value::Int(
                    v.checked_neg().ok_or_else(|| self.error("integer literal out of range"))?,
                )),
                Expr::Lit(Value::Real(v)) => Expr::Lit(Value::Real(-v)),
                e => Expr::Scale(Value::Int(-1), Box::new(e)),
            });
        }
        self.parse_primary()
    }

    fn parse_primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Lit(Value::Int(v)))
            }
            Tok::Real(v) => {
                self.bump();
                Ok(Expr::Lit(Value::Real(v)))
            }
            Tok::LParen => {
                self.bump();
                let e = self.parse_expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(w) if w == "coin_flip" || w == "uniform" => {
                self.bump();
                self.expect(Tok::LParen)?;
                self.expect(Tok::RParen)?;
                let g = if w == "coin_flip" {
                    Generator::CoinFlip
                } else {
                    Generator::Uniform
                };
                Ok(Expr::Random(g, self.site()))
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                Ok(Expr::Var(self.var_ref(name)))
            }
            other => Err(self.error(format!("expected expression, found {}", other.describe()))),
        }
    }
}

fn relop(t: &Tok) -> Option<RelOp> {
    Some(match t {
        Tok::Lt => RelOp::Lt,
        Tok::Le => RelOp::Le,
        Tok::Gt => RelOp::Gt,
        Tok::Ge => RelOp::Ge,
        Tok::EqEq => RelOp::Eq,
        Tok::Ne => RelOp::Ne,
        _ => return None,
    })
}
