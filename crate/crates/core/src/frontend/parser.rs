use std::collections::BTreeMap;

use super::ast::*;
use super::builtins;
use super::lexer::{lex, Tok, Token};
use super::{ParseError, ParseErrorKind};

const KEYWORDS: &[&str] = &[
    "real",
    "int",
    "vector",
    "for",
    "in",
    "if",
    "else",
    "reject",
    "target",
    "data",
    "parameters",
    "model",
    "transformed",
    "generated",
    "quantities",
    "lower",
    "upper",
];

/// Parse and validate mini-PPL source text.
pub fn parse(src: &str) -> Result<Program, ParseError> {
    let tokens = lex(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        next_id: 0,
        info: Vec::new(),
        block: BlockKind::Data,
        enclosing: Vec::new(),
    };
    let blocks = p.program()?;
    let info = std::mem::take(&mut p.info);
    let symbols = validate(&blocks, &info)?;
    Ok(Program { blocks, symbols, info })
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    next_id: StmtId,
    info: Vec<StmtInfo>,
    block: BlockKind,
    enclosing: Vec<StmtId>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn advance(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::new(ParseErrorKind::Syntax, self.span(), msg))
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.advance();
            Ok(())
        } else {
            let found = self.peek().describe();
            self.error(format!("expected {}, found {found}", want.describe()))
        }
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == w)
    }

    fn expect_word(&mut self, w: &str) -> Result<(), ParseError> {
        if self.is_word(w) {
            self.advance();
            Ok(())
        } else {
            let found = self.peek().describe();
            self.error(format!("expected `{w}`, found {found}"))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.advance();
                Ok(s)
            }
            Tok::Ident(s) => self.error(format!("`{s}` is a reserved word")),
            other => self.error(format!("expected identifier, found {}", other.describe())),
        }
    }

    fn fresh(&mut self, span: Span) -> StmtId {
        let id = self.next_id;
        self.next_id += 1;
        self.info.push(StmtInfo {
            block: self.block,
            span,
            enclosing: self.enclosing.clone(),
        });
        id
    }

    fn program(&mut self) -> Result<Vec<Block>, ParseError> {
        let mut blocks: Vec<Block> = Vec::new();
        while *self.peek() != Tok::Eof {
            let span = self.span();
            let kind = self.block_kind()?;
            if blocks.iter().any(|b| b.kind == kind) {
                return Err(ParseError::new(
                    ParseErrorKind::DuplicateBlock,
                    span,
                    format!("duplicate `{kind}` block"),
                ));
            }
            if let Some(last) = blocks.last() {
                if last.kind > kind {
                    return Err(ParseError::new(
                        ParseErrorKind::Syntax,
                        span,
                        format!("`{kind}` block must come before `{}`", last.kind),
                    ));
                }
            }
            self.block = kind;
            self.expect(Tok::LBrace)?;
            let stmts = self.stmts_until_rbrace()?;
            blocks.push(Block { kind, stmts });
        }
        if blocks.is_empty() {
            return self.error("expected at least one block");
        }
        Ok(blocks)
    }

    fn block_kind(&mut self) -> Result<BlockKind, ParseError> {
        let word = match self.peek() {
            Tok::Ident(w) => w.clone(),
            other => return self.error(format!("expected block name, found {}", other.describe())),
        };
        let kind = match word.as_str() {
            "data" => BlockKind::Data,
            "parameters" => BlockKind::Parameters,
            "model" => BlockKind::Model,
            "transformed" => {
                self.advance();
                return match self.peek() {
                    Tok::Ident(w) if w == "data" => {
                        self.advance();
                        Ok(BlockKind::TransformedData)
                    }
                    Tok::Ident(w) if w == "parameters" => {
                        self.advance();
                        Ok(BlockKind::TransformedParameters)
                    }
                    _ => self.error("expected `data` or `parameters` after `transformed`"),
                };
            }
            "generated" => {
                self.advance();
                self.expect_word("quantities")?;
                return Ok(BlockKind::GeneratedQuantities);
            }
            "functions" => {
                return Err(ParseError::new(
                    ParseErrorKind::Unsupported,
                    self.span(),
                    "unsupported construct: `functions` block",
                ))
            }
            _ => return self.error(format!("unknown block `{word}`")),
        };
        self.advance();
        Ok(kind)
    }

    fn stmts_until_rbrace(&mut self) -> Result<Vec<Stmt>, ParseError> {
        let mut out = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return self.error("expected `}`, found end of input");
            }
            self.stmt(&mut out)?;
        }
        self.advance();
        Ok(out)
    }

    fn braced(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect(Tok::LBrace)?;
        self.stmts_until_rbrace()
    }

    fn stmt(&mut self, out: &mut Vec<Stmt>) -> Result<(), ParseError> {
        let span = self.span();
        let word = match self.peek() {
            Tok::Ident(w) => w.clone(),
            other => return self.error(format!("expected statement, found {}", other.describe())),
        };
        match word.as_str() {
            "real" | "int" | "vector" => self.declaration(span, out),
            "target" => {
                self.advance();
                self.expect(Tok::PlusAssign)?;
                let e = self.expr()?;
                self.expect(Tok::Semi)?;
                let id = self.fresh(span);
                out.push(Stmt {
                    id,
                    kind: StmtKind::TargetIncrement(e),
                });
                Ok(())
            }
            "for" => {
                self.advance();
                let id = self.fresh(span);
                self.expect(Tok::LParen)?;
                let var = self.ident()?;
                self.expect_word("in")?;
                let lo = self.expr()?;
                self.expect(Tok::Colon)?;
                let hi = self.expr()?;
                self.expect(Tok::RParen)?;
                self.enclosing.push(id);
                let body = self.braced();
                self.enclosing.pop();
                out.push(Stmt {
                    id,
                    kind: StmtKind::For {
                        var,
                        lo,
                        hi,
                        body: body?,
                    },
                });
                Ok(())
            }
            "if" => {
                self.advance();
                let id = self.fresh(span);
                self.expect(Tok::LParen)?;
                let cond = self.expr()?;
                self.expect(Tok::RParen)?;
                self.enclosing.push(id);
                let result = (|| {
                    let then_branch = self.braced()?;
                    let else_branch = if self.is_word("else") {
                        self.advance();
                        if self.is_word("if") {
                            return Err(ParseError::new(
                                ParseErrorKind::Unsupported,
                                self.span(),
                                "unsupported construct: `else if`; nest the `if` inside braces",
                            ));
                        }
                        Some(self.braced()?)
                    } else {
                        None
                    };
                    Ok((then_branch, else_branch))
                })();
                self.enclosing.pop();
                let (then_branch, else_branch) = result?;
                out.push(Stmt {
                    id,
                    kind: StmtKind::If {
                        cond,
                        then_branch,
                        else_branch,
                    },
                });
                Ok(())
            }
            "reject" => {
                self.advance();
                self.expect(Tok::LParen)?;
                let msg = match self.advance() {
                    Tok::Str(s) => s,
                    other => {
                        return Err(ParseError::new(
                            ParseErrorKind::Syntax,
                            span,
                            format!("reject expects a string literal, found {}", other.describe()),
                        ))
                    }
                };
                self.expect(Tok::RParen)?;
                self.expect(Tok::Semi)?;
                let id = self.fresh(span);
                out.push(Stmt {
                    id,
                    kind: StmtKind::Reject(msg),
                });
                Ok(())
            }
            "while" | "print" | "return" | "break" | "continue" => Err(ParseError::new(
                ParseErrorKind::Unsupported,
                span,
                format!("unsupported construct: `{word}`"),
            )),
            _ => self.simple_stmt(span, out),
        }
    }

    fn declaration(&mut self, span: Span, out: &mut Vec<Stmt>) -> Result<(), ParseError> {
        let word = match self.advance() {
            Tok::Ident(w) => w,
            _ => unreachable!(),
        };
        let sized = |p: &mut Parser| -> Result<Expr, ParseError> {
            p.expect(Tok::LBracket)?;
            let e = p.expr()?;
            p.expect(Tok::RBracket)?;
            Ok(e)
        };
        let mut spelling = match word.as_str() {
            "int" => TypeSpelling::Int,
            "vector" => TypeSpelling::Vector(Expr::Int(0)),
            _ => TypeSpelling::Real,
        };
        let bounds = self.bounds()?;
        match spelling {
            TypeSpelling::Vector(_) => spelling = TypeSpelling::Vector(sized(self)?),
            TypeSpelling::Real if *self.peek() == Tok::LBracket => spelling = TypeSpelling::RealArray(sized(self)?),
            _ => {}
        }
        loop {
            let name = self.ident()?;
            let dims = if *self.peek() == Tok::LBracket {
                if !matches!(spelling, TypeSpelling::Real | TypeSpelling::Int) {
                    return Err(ParseError::new(
                        ParseErrorKind::Unsupported,
                        self.span(),
                        "unsupported construct: multi-dimensional variable",
                    ));
                }
                Some(sized(self)?)
            } else {
                None
            };
            if *self.peek() == Tok::Assign {
                return Err(ParseError::new(
                    ParseErrorKind::Unsupported,
                    self.span(),
                    "unsupported construct: declaration with initializer; assign in a separate statement",
                ));
            }
            let id = self.fresh(span);
            out.push(Stmt {
                id,
                kind: StmtKind::Decl(Decl {
                    spelling: spelling.clone(),
                    bounds: bounds.clone(),
                    name,
                    dims,
                }),
            });
            if *self.peek() == Tok::Comma {
                self.advance();
                continue;
            }
            break;
        }
        self.expect(Tok::Semi)
    }

    fn bounds(&mut self) -> Result<Bounds, ParseError> {
        let mut b = Bounds {
            lower: None,
            upper: None,
        };
        if *self.peek() != Tok::Lt {
            return Ok(b);
        }
        self.advance();
        loop {
            let which = self.ident_or_keyword()?;
            self.expect(Tok::Assign)?;
            // Comparisons are excluded so that `>` closes the bound list.
            let e = self.binary(BinOp::Add.precedence())?;
            match which.as_str() {
                "lower" if b.lower.is_none() => b.lower = Some(e),
                "upper" if b.upper.is_none() => b.upper = Some(e),
                _ => return self.error(format!("unexpected bound `{which}`")),
            }
            if *self.peek() == Tok::Comma {
                self.advance();
                continue;
            }
            break;
        }
        self.expect(Tok::Gt)?;
        Ok(b)
    }

    fn ident_or_keyword(&mut self) -> Result<String, ParseError> {
        match self.advance() {
            Tok::Ident(s) => Ok(s),
            other => self.error(format!("expected identifier, found {}", other.describe())),
        }
    }

    fn simple_stmt(&mut self, span: Span, out: &mut Vec<Stmt>) -> Result<(), ParseError> {
        let name = self.ident()?;
        let index = if *self.peek() == Tok::LBracket {
            self.advance();
            let e = self.expr()?;
            self.expect(Tok::RBracket)?;
            Some(e)
        } else {
            None
        };
        match self.peek().clone() {
            Tok::Assign => {
                self.advance();
                let value = self.expr()?;
                self.expect(Tok::Semi)?;
                let id = self.fresh(span);
                out.push(Stmt {
                    id,
                    kind: StmtKind::Assign {
                        target: LValue { name, index },
                        value,
                    },
                });
                Ok(())
            }
            Tok::Tilde => {
                self.advance();
                let dist = self.ident()?;
                self.expect(Tok::LParen)?;
                let mut args = vec![self.expr()?];
                while *self.peek() == Tok::Comma {
                    self.advance();
                    args.push(self.expr()?);
                }
                self.expect(Tok::RParen)?;
                self.expect(Tok::Semi)?;
                let variate = match index {
                    Some(i) => Expr::Index(name, Box::new(i)),
                    None => Expr::Var(name),
                };
                let id = self.fresh(span);
                out.push(Stmt {
                    id,
                    kind: StmtKind::Tilde { variate, dist, args },
                });
                Ok(())
            }
            Tok::LParen => Err(ParseError::new(
                ParseErrorKind::Unsupported,
                span,
                "unsupported construct: function call statement",
            )),
            other => self.error(format!("expected `=` or `~`, found {}", other.describe())),
        }
    }

    pub fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        Some(match self.peek() {
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Slash => BinOp::Div,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::EqEq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::AndAnd => BinOp::And,
            Tok::OrOr => BinOp::Or,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.advance();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Minus => {
                self.advance();
                Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary()?)))
            }
            Tok::Bang => {
                self.advance();
                Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)))
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Caret {
            self.advance();
            // Right associative; the exponent may carry a sign.
            let exp = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Int(i) => {
                self.advance();
                Ok(Expr::Int(i))
            }
            Tok::Real(r) => {
                self.advance();
                Ok(Expr::Real(r))
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) if name == "target" => Err(ParseError::new(
                ParseErrorKind::Unsupported,
                self.span(),
                "`target` is a reserved accumulator and cannot be read",
            )),
            Tok::Ident(_) => {
                let name = self.ident()?;
                match self.peek() {
                    Tok::LParen => {
                        self.advance();
                        let mut args = Vec::new();
                        if *self.peek() != Tok::RParen {
                            args.push(self.expr()?);
                            let mut first = true;
                            while matches!(self.peek(), Tok::Comma | Tok::Bar) {
                                if *self.peek() == Tok::Bar && !(first && builtins::uses_bar(&name)) {
                                    return self.error("`|` may only follow the variate of a distribution function");
                                }
                                first = false;
                                self.advance();
                                args.push(self.expr()?);
                            }
                        }
                        self.expect(Tok::RParen)?;
                        Ok(Expr::Call(name, args))
                    }
                    Tok::LBracket => {
                        self.advance();
                        let i = self.expr()?;
                        self.expect(Tok::RBracket)?;
                        Ok(Expr::Index(name, Box::new(i)))
                    }
                    _ => Ok(Expr::Var(name)),
                }
            }
            other => self.error(format!("expected expression, found {}", other.describe())),
        }
    }
}

/// Scope-check a parsed program and build its symbol table.
fn validate(blocks: &[Block], info: &[StmtInfo]) -> Result<BTreeMap<String, Symbol>, ParseError> {
    let mut v = Validator {
        symbols: BTreeMap::new(),
        loop_vars: Vec::new(),
        info,
    };
    for b in blocks {
        for s in &b.stmts {
            v.stmt(s, b.kind, true)?;
        }
    }
    let has_density = blocks.iter().flat_map(|b| b.stmts.iter()).any(|s| {
        let mut found = false;
        s.walk(&mut |x| found |= x.is_density());
        found
    });
    if has_density && !blocks.iter().any(|b| b.kind == BlockKind::Model) {
        return Err(ParseError::new(
            ParseErrorKind::Misplaced,
            Span::default(),
            "density statements require a `model` block",
        ));
    }
    Ok(v.symbols)
}

struct Validator<'a> {
    symbols: BTreeMap<String, Symbol>,
    loop_vars: Vec<String>,
    info: &'a [StmtInfo],
}

impl Validator<'_> {
    fn span(&self, id: StmtId) -> Span {
        self.info[id].span
    }

    fn err<T>(&self, kind: ParseErrorKind, id: StmtId, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::new(kind, self.span(id), msg))
    }

    fn known(&self, name: &str) -> bool {
        self.symbols.contains_key(name) || self.loop_vars.iter().any(|v| v == name)
    }

    fn expr(&self, e: &Expr, block: BlockKind, id: StmtId) -> Result<(), ParseError> {
        match e {
            Expr::Int(_) | Expr::Real(_) => Ok(()),
            Expr::Var(n) => {
                if self.known(n) {
                    Ok(())
                } else {
                    self.err(ParseErrorKind::Undeclared, id, format!("undeclared identifier `{n}`"))
                }
            }
            Expr::Index(n, i) => {
                if !self.symbols.contains_key(n) {
                    return self.err(ParseErrorKind::Undeclared, id, format!("undeclared identifier `{n}`"));
                }
                self.expr(i, block, id)
            }
            Expr::Unary(_, a) => self.expr(a, block, id),
            Expr::Binary(_, a, b) => {
                self.expr(a, block, id)?;
                self.expr(b, block, id)
            }
            Expr::Call(name, args) => {
                let Some(arity) = builtins::call_arity(name) else {
                    return self.err(
                        ParseErrorKind::Unsupported,
                        id,
                        format!("unsupported construct: unknown function `{name}`"),
                    );
                };
                if args.len() != arity {
                    return self.err(
                        ParseErrorKind::Arity,
                        id,
                        format!("`{name}` expects {arity} argument(s), found {}", args.len()),
                    );
                }
                if builtins::is_rng(name) && !block.allows_rng() {
                    return self.err(
                        ParseErrorKind::Misplaced,
                        id,
                        format!("`{name}` is only allowed in transformed data or generated quantities"),
                    );
                }
                args.iter().try_for_each(|a| self.expr(a, block, id))
            }
        }
    }

    fn stmt(&mut self, s: &Stmt, block: BlockKind, top: bool) -> Result<(), ParseError> {
        let id = s.id;
        if matches!(block, BlockKind::Data | BlockKind::Parameters) && !matches!(s.kind, StmtKind::Decl(_)) {
            return self.err(
                ParseErrorKind::Misplaced,
                id,
                format!("only declarations are allowed in the `{block}` block"),
            );
        }
        if s.is_density() && block != BlockKind::Model {
            return self.err(
                ParseErrorKind::Misplaced,
                id,
                format!("density statement outside the model block (found in `{block}`)"),
            );
        }
        match &s.kind {
            StmtKind::Decl(d) => {
                if !top {
                    return self.err(
                        ParseErrorKind::Unsupported,
                        id,
                        "unsupported construct: declaration inside a loop or conditional",
                    );
                }
                if self.known(&d.name) {
                    return self.err(
                        ParseErrorKind::Duplicate,
                        id,
                        format!("`{}` is declared more than once", d.name),
                    );
                }
                for e in [d.length(), d.bounds.lower.as_ref(), d.bounds.upper.as_ref()]
                    .into_iter()
                    .flatten()
                {
                    self.expr(e, block, id)?;
                }
                self.symbols.insert(
                    d.name.clone(),
                    Symbol {
                        decl: d.clone(),
                        block,
                        decl_id: id,
                        span: self.span(id),
                    },
                );
                Ok(())
            }
            StmtKind::Assign { target, value } => {
                if self.loop_vars.contains(&target.name) {
                    return self.err(
                        ParseErrorKind::Misplaced,
                        id,
                        format!("cannot assign to loop index `{}`", target.name),
                    );
                }
                match self.symbols.get(&target.name) {
                    None => {
                        return self.err(
                            ParseErrorKind::Undeclared,
                            id,
                            format!("undeclared identifier `{}`", target.name),
                        )
                    }
                    Some(sym) if sym.block != block => {
                        return self.err(
                            ParseErrorKind::Misplaced,
                            id,
                            format!(
                                "`{}` is declared in `{}` and cannot be assigned in `{block}`",
                                target.name, sym.block
                            ),
                        )
                    }
                    _ => {}
                }
                if let Some(i) = &target.index {
                    self.expr(i, block, id)?;
                }
                self.expr(value, block, id)
            }
            StmtKind::TargetIncrement(e) => self.expr(e, block, id),
            StmtKind::Tilde { variate, dist, args } => {
                self.expr(variate, block, id)?;
                let Some(info) = builtins::distribution(dist) else {
                    return self.err(
                        ParseErrorKind::Unsupported,
                        id,
                        format!("unsupported construct: unknown distribution `{dist}`"),
                    );
                };
                if args.len() != info.params.len() {
                    return self.err(
                        ParseErrorKind::Arity,
                        id,
                        format!(
                            "`{dist}` expects {} argument(s), found {}",
                            info.params.len(),
                            args.len()
                        ),
                    );
                }
                args.iter().try_for_each(|a| self.expr(a, block, id))
            }
            StmtKind::For { var, lo, hi, body } => {
                self.expr(lo, block, id)?;
                self.expr(hi, block, id)?;
                if self.known(var) {
                    return self.err(
                        ParseErrorKind::Duplicate,
                        id,
                        format!("loop index `{var}` shadows an existing name"),
                    );
                }
                self.loop_vars.push(var.clone());
                let r = body.iter().try_for_each(|c| self.stmt(c, block, false));
                self.loop_vars.pop();
                r
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                self.expr(cond, block, id)?;
                then_branch
                    .iter()
                    .chain(else_branch.iter().flatten())
                    .try_for_each(|c| self.stmt(c, block, false))
            }
            StmtKind::Reject(_) => Ok(()),
        }
    }
}

/// Parse a standalone expression (used by tests and tooling).
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let tokens = lex(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        next_id: 0,
        info: Vec::new(),
        block: BlockKind::Model,
        enclosing: Vec::new(),
    };
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {}", p.peek().describe()));
    }
    Ok(e)
}

/// Parse one statement as if it appeared in the model block, without
/// checking declarations. Used to read factor statements back from text.
pub fn parse_stmt(src: &str) -> Result<Stmt, ParseError> {
    let tokens = lex(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        next_id: 0,
        info: Vec::new(),
        block: BlockKind::Model,
        enclosing: Vec::new(),
    };
    let mut out = Vec::new();
    p.stmt(&mut out)?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {}", p.peek().describe()));
    }
    match out.len() {
        1 => Ok(out.pop().unwrap()),
        _ => p.error("expected a single statement"),
    }
}
