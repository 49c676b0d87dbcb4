//! Recursive-descent parser for VPL.

use super::ast::*;
use super::error::VplError;
use super::lexer::{tokenize, Tok, Token};

/// Name of the optional wrapper function programs may be written in.
pub const WRAPPER_NAME: &str = "execute_command";
const MAX_WRAPPER_PARAMS: usize = 3;
const MAX_NESTING: usize = 100;

pub fn parse(source: &str) -> Result<Program, VplError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, pos: 0, loop_depth: 0, nesting: 0 };
    let body = p.statements_until_eof()?;
    let (wrapper, body) = unwrap_wrapper(body)?;
    Ok(Program { source: source.to_string(), wrapper, body })
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    loop_depth: usize,
    nesting: usize,
}

/// Top-level parse result before the wrapper is recognised.
enum TopItem {
    Stmt(Stmt),
    Def(FunctionDef, Vec<Stmt>),
}

fn unwrap_wrapper(items: Vec<TopItem>) -> Result<(Option<FunctionDef>, Vec<Stmt>), VplError> {
    let has_def = items.iter().any(|i| matches!(i, TopItem::Def(..)));
    if has_def && items.len() > 1 {
        let span = items
            .iter()
            .skip(1)
            .map(|i| match i {
                TopItem::Def(d, _) => d.span,
                TopItem::Stmt(s) => s.span,
            })
            .next()
            .unwrap_or_default();
        return Err(not_allowed("statements outside execute_command", span));
    }
    let mut wrapper = None;
    let mut body = Vec::new();
    for item in items {
        match item {
            TopItem::Stmt(s) => body.push(s),
            TopItem::Def(def, stmts) => {
                wrapper = Some(def);
                body = stmts;
            }
        }
    }
    Ok((wrapper, body))
}

fn not_allowed(what: &str, span: Span) -> VplError {
    VplError::parse(format!("construct not allowed: {what}"), span)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let i = (self.pos + ahead).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(self.peek(), Tok::Op(o) if *o == op)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Kw(k) if *k == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        let hit = self.is_op(op);
        if hit {
            self.advance();
        }
        hit
    }

    fn expect_op(&mut self, op: &str) -> Result<(), VplError> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{op}'")))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), VplError> {
        if self.is_kw(kw) {
            self.advance();
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{kw}'")))
        }
    }

    fn expect_name(&mut self) -> Result<String, VplError> {
        match self.peek().clone() {
            Tok::Name(n) => {
                self.advance();
                Ok(n)
            }
            _ => Err(self.unexpected("a name")),
        }
    }

    fn unexpected(&self, wanted: &str) -> VplError {
        let found = match self.peek() {
            Tok::Name(n) => format!("name '{n}'"),
            Tok::Kw(k) => format!("'{k}'"),
            Tok::Int(i) => format!("number {i}"),
            Tok::Float(f) => format!("number {f}"),
            Tok::Str(_) => "string".to_string(),
            Tok::Op(o) => format!("'{o}'"),
            Tok::Newline => "end of line".to_string(),
            Tok::Indent => "indent".to_string(),
            Tok::Dedent => "dedent".to_string(),
            Tok::Eof => "end of input".to_string(),
        };
        VplError::parse(format!("expected {wanted}, found {found}"), self.span())
    }

    fn enter(&mut self) -> Result<(), VplError> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return Err(VplError::parse("nesting too deep", self.span()));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.nesting -= 1;
    }

    fn statements_until_eof(&mut self) -> Result<Vec<TopItem>, VplError> {
        let mut items = Vec::new();
        while !matches!(self.peek(), Tok::Eof) {
            if matches!(self.peek(), Tok::Newline) {
                self.advance();
                continue;
            }
            if matches!(self.peek(), Tok::Indent) {
                return Err(VplError::parse("unexpected indent", self.span()));
            }
            if self.is_kw("def") {
                items.push(self.wrapper_def()?);
            } else {
                items.push(TopItem::Stmt(self.statement()?));
            }
        }
        Ok(items)
    }

    fn wrapper_def(&mut self) -> Result<TopItem, VplError> {
        let span = self.span();
        self.advance();
        let name = self.expect_name()?;
        if name != WRAPPER_NAME {
            return Err(not_allowed("user-defined function", span));
        }
        self.expect_op("(")?;
        let mut params = Vec::new();
        while !self.is_op(")") {
            params.push(self.expect_name()?);
            if self.eat_op(":") {
                // type annotation
                self.expression()?;
            }
            if self.is_op("=") {
                return Err(not_allowed("default parameter values", self.span()));
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        if self.eat_op("->") {
            self.expression()?;
        }
        if params.is_empty() || params.len() > MAX_WRAPPER_PARAMS {
            return Err(VplError::parse(
                format!("{WRAPPER_NAME} takes the input as its first parameter (at most {MAX_WRAPPER_PARAMS})"),
                span,
            ));
        }
        self.expect_op(":")?;
        let body = self.suite()?;
        Ok(TopItem::Def(FunctionDef { name, params, span }, body))
    }

    fn suite(&mut self) -> Result<Vec<Stmt>, VplError> {
        self.enter()?;
        let out = if matches!(self.peek(), Tok::Newline) {
            self.advance();
            if !matches!(self.peek(), Tok::Indent) {
                return Err(self.unexpected("an indented block"));
            }
            self.advance();
            let mut body = Vec::new();
            while !matches!(self.peek(), Tok::Dedent | Tok::Eof) {
                if matches!(self.peek(), Tok::Newline) {
                    self.advance();
                    continue;
                }
                if self.is_kw("def") {
                    return Err(not_allowed("user-defined function", self.span()));
                }
                body.push(self.statement()?);
            }
            if matches!(self.peek(), Tok::Dedent) {
                self.advance();
            }
            body
        } else {
            vec![self.simple_statement()?]
        };
        self.leave();
        Ok(out)
    }

    fn statement(&mut self) -> Result<Stmt, VplError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Kw("if") => {
                self.advance();
                let mut branches = Vec::new();
                let cond = self.expression()?;
                self.expect_op(":")?;
                branches.push((cond, self.suite()?));
                let mut orelse = None;
                loop {
                    if self.is_kw("elif") {
                        self.advance();
                        let cond = self.expression()?;
                        self.expect_op(":")?;
                        branches.push((cond, self.suite()?));
                    } else if self.is_kw("else") {
                        self.advance();
                        self.expect_op(":")?;
                        orelse = Some(self.suite()?);
                        break;
                    } else {
                        break;
                    }
                }
                Ok(Stmt { kind: StmtKind::If { branches, orelse }, span })
            }
            Tok::Kw("for") => {
                self.advance();
                let var = self.expect_name()?;
                if self.is_op(",") {
                    return Err(not_allowed("tuple unpacking", self.span()));
                }
                self.expect_kw("in")?;
                let iter = self.expression()?;
                self.expect_op(":")?;
                self.loop_depth += 1;
                let body = self.suite();
                self.loop_depth -= 1;
                let body = body?;
                if self.is_kw("else") {
                    return Err(not_allowed("for-else", self.span()));
                }
                Ok(Stmt { kind: StmtKind::For { var, iter, body }, span })
            }
            Tok::Kw(kw @ ("elif" | "else")) => Err(VplError::parse(format!("'{kw}' without 'if'"), span)),
            _ => self.simple_statement(),
        }
    }

    fn simple_statement(&mut self) -> Result<Stmt, VplError> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::Kw("return") => {
                self.advance();
                if matches!(self.peek(), Tok::Newline | Tok::Eof) {
                    StmtKind::Return(None)
                } else {
                    StmtKind::Return(Some(self.expression()?))
                }
            }
            Tok::Kw("pass") => {
                self.advance();
                StmtKind::Pass
            }
            Tok::Kw(kw @ ("break" | "continue")) => {
                self.advance();
                if self.loop_depth == 0 {
                    return Err(VplError::parse(format!("'{kw}' outside loop"), span));
                }
                if kw == "break" {
                    StmtKind::Break
                } else {
                    StmtKind::Continue
                }
            }
            Tok::Kw(kw @ ("import" | "from")) => {
                let _ = kw;
                return Err(not_allowed("import", span));
            }
            Tok::Kw("while") => return Err(not_allowed("while loop", span)),
            Tok::Kw("def") => return Err(not_allowed("user-defined function", span)),
            Tok::Kw(
                kw @ ("class" | "with" | "try" | "except" | "finally" | "raise" | "yield" | "async"
                | "await" | "global" | "nonlocal" | "del" | "assert"),
            ) => return Err(not_allowed(kw, span)),
            _ => {
                let expr = self.expression()?;
                if self.is_op(",") {
                    return Err(not_allowed("tuple", self.span()));
                }
                if self.is_op("=") {
                    let eq_span = self.span();
                    self.advance();
                    let target = match expr.kind {
                        ExprKind::Name(n) => n,
                        ExprKind::Attr { .. } => return Err(not_allowed("attribute assignment", eq_span)),
                        ExprKind::Index { .. } | ExprKind::Slice { .. } => {
                            return Err(not_allowed("index assignment", eq_span))
                        }
                        _ => return Err(VplError::parse("cannot assign to expression", eq_span)),
                    };
                    let value = self.expression()?;
                    if self.is_op("=") {
                        return Err(not_allowed("chained assignment", self.span()));
                    }
                    StmtKind::Assign { target, value }
                } else if let Some(op) = self.aug_op() {
                    let op_span = self.span();
                    self.advance();
                    let target = match expr.kind {
                        ExprKind::Name(n) => n,
                        ExprKind::Attr { .. } => return Err(not_allowed("attribute assignment", op_span)),
                        _ => return Err(VplError::parse("cannot assign to expression", op_span)),
                    };
                    let value = self.expression()?;
                    StmtKind::AugAssign { target, op, value }
                } else {
                    StmtKind::Expr(expr)
                }
            }
        };
        match self.peek() {
            Tok::Newline => {
                self.advance();
            }
            Tok::Eof | Tok::Dedent => {}
            Tok::Op(";") => return Err(not_allowed("';' statement separator", self.span())),
            _ => return Err(self.unexpected("end of line")),
        }
        Ok(Stmt { kind, span })
    }

    fn aug_op(&self) -> Option<BinOp> {
        match self.peek() {
            Tok::Op("+=") => Some(BinOp::Add),
            Tok::Op("-=") => Some(BinOp::Sub),
            Tok::Op("*=") => Some(BinOp::Mul),
            Tok::Op("/=") => Some(BinOp::Div),
            Tok::Op("//=") => Some(BinOp::FloorDiv),
            Tok::Op("%=") => Some(BinOp::Mod),
            Tok::Op("**=") => Some(BinOp::Pow),
            _ => None,
        }
    }

    pub fn expression(&mut self) -> Result<Expr, VplError> {
        self.enter()?;
        let e = self.or_expr();
        self.leave();
        let e = e?;
        if self.is_kw("if") {
            return Err(not_allowed("conditional expression", self.span()));
        }
        Ok(e)
    }

    fn or_expr(&mut self) -> Result<Expr, VplError> {
        let mut left = self.and_expr()?;
        let mut chain = 0;
        while self.is_kw("or") {
            self.enter()?;
            chain += 1;
            let span = self.span();
            self.advance();
            let right = self.and_expr()?;
            left = Expr {
                kind: ExprKind::BoolOp { op: BoolOp::Or, left: Box::new(left), right: Box::new(right) },
                span,
            };
        }
        self.nesting -= chain;
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, VplError> {
        let mut left = self.not_expr()?;
        let mut chain = 0;
        while self.is_kw("and") {
            self.enter()?;
            chain += 1;
            let span = self.span();
            self.advance();
            let right = self.not_expr()?;
            left = Expr {
                kind: ExprKind::BoolOp { op: BoolOp::And, left: Box::new(left), right: Box::new(right) },
                span,
            };
        }
        self.nesting -= chain;
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<Expr, VplError> {
        if self.is_kw("not") {
            let span = self.span();
            self.advance();
            self.enter()?;
            let operand = self.not_expr();
            self.leave();
            return Ok(Expr {
                kind: ExprKind::Unary { op: UnaryOp::Not, operand: Box::new(operand?) },
                span,
            });
        }
        self.comparison()
    }

    fn cmp_op(&self) -> Option<(CmpOp, usize)> {
        match self.peek() {
            Tok::Op("==") => Some((CmpOp::Eq, 1)),
            Tok::Op("!=") => Some((CmpOp::NotEq, 1)),
            Tok::Op("<") => Some((CmpOp::Lt, 1)),
            Tok::Op("<=") => Some((CmpOp::LtE, 1)),
            Tok::Op(">") => Some((CmpOp::Gt, 1)),
            Tok::Op(">=") => Some((CmpOp::GtE, 1)),
            Tok::Kw("in") => Some((CmpOp::In, 1)),
            Tok::Kw("not") if matches!(self.peek_at(1), Tok::Kw("in")) => Some((CmpOp::NotIn, 2)),
            _ => None,
        }
    }

    fn comparison(&mut self) -> Result<Expr, VplError> {
        let span = self.span();
        let left = self.arith()?;
        let mut rest = Vec::new();
        while let Some((op, width)) = self.cmp_op() {
            for _ in 0..width {
                self.advance();
            }
            rest.push((op, self.arith()?));
        }
        if self.is_kw("is") {
            return Err(not_allowed("is", self.span()));
        }
        if rest.is_empty() {
            Ok(left)
        } else {
            Ok(Expr { kind: ExprKind::Compare { left: Box::new(left), rest }, span })
        }
    }

    fn arith(&mut self) -> Result<Expr, VplError> {
        let mut chain = 0;
        let mut left = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op("+") => BinOp::Add,
                Tok::Op("-") => BinOp::Sub,
                _ => break,
            };
            self.enter()?;
            chain += 1;
            let span = self.span();
            self.advance();
            let right = self.term()?;
            left = Expr { kind: ExprKind::Binary { op, left: Box::new(left), right: Box::new(right) }, span };
        }
        self.nesting -= chain;
        Ok(left)
    }

    fn term(&mut self) -> Result<Expr, VplError> {
        let mut chain = 0;
        let mut left = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Op("*") => BinOp::Mul,
                Tok::Op("/") => BinOp::Div,
                Tok::Op("//") => BinOp::FloorDiv,
                Tok::Op("%") => BinOp::Mod,
                _ => break,
            };
            self.enter()?;
            chain += 1;
            let span = self.span();
            if op == BinOp::Mod && matches!(left.kind, ExprKind::Str(_)) {
                return Err(not_allowed("string formatting", span));
            }
            self.advance();
            let right = self.factor()?;
            left = Expr { kind: ExprKind::Binary { op, left: Box::new(left), right: Box::new(right) }, span };
        }
        self.nesting -= chain;
        Ok(left)
    }

    fn factor(&mut self) -> Result<Expr, VplError> {
        if self.is_op("-") {
            let span = self.span();
            self.advance();
            self.enter()?;
            let operand = self.factor();
            self.leave();
            return Ok(Expr {
                kind: ExprKind::Unary { op: UnaryOp::Neg, operand: Box::new(operand?) },
                span,
            });
        }
        if self.is_op("+") {
            return Err(not_allowed("unary '+'", self.span()));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, VplError> {
        let base = self.postfix()?;
        if self.is_op("**") {
            let span = self.span();
            self.advance();
            self.enter()?;
            let exp = self.factor();
            self.leave();
            return Ok(Expr {
                kind: ExprKind::Binary { op: BinOp::Pow, left: Box::new(base), right: Box::new(exp?) },
                span,
            });
        }
        Ok(base)
    }

    fn postfix(&mut self) -> Result<Expr, VplError> {
        let mut e = self.atom()?;
        let mut chain = 0;
        loop {
            self.enter()?;
            chain += 1;
            let span = self.span();
            if self.eat_op("(") {
                let (args, kwargs) = self.call_args()?;
                e = Expr { kind: ExprKind::Call { func: Box::new(e), args, kwargs }, span };
            } else if self.eat_op(".") {
                let attr = self.expect_name()?;
                if attr == "format" {
                    return Err(not_allowed("string formatting", span));
                }
                e = Expr { kind: ExprKind::Attr { value: Box::new(e), attr }, span };
            } else if self.eat_op("[") {
                e = self.subscript(e, span)?;
            } else {
                self.nesting -= chain;
                return Ok(e);
            }
        }
    }

    fn call_args(&mut self) -> Result<(Vec<Expr>, Vec<(String, Expr)>), VplError> {
        let mut args = Vec::new();
        let mut kwargs: Vec<(String, Expr)> = Vec::new();
        while !self.is_op(")") {
            if self.is_op("*") || self.is_op("**") {
                return Err(not_allowed("argument unpacking", self.span()));
            }
            if let (Tok::Name(name), Tok::Op("=")) = (self.peek().clone(), self.peek_at(1).clone()) {
                let span = self.span();
                self.advance();
                self.advance();
                if kwargs.iter().any(|(k, _)| *k == name) {
                    return Err(VplError::parse(format!("repeated keyword argument '{name}'"), span));
                }
                kwargs.push((name, self.expression()?));
            } else {
                if !kwargs.is_empty() {
                    return Err(VplError::parse("positional argument follows keyword argument", self.span()));
                }
                args.push(self.expression()?);
            }
            if self.is_kw("for") {
                return Err(not_allowed("comprehension", self.span()));
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        Ok((args, kwargs))
    }

    fn subscript(&mut self, value: Expr, span: Span) -> Result<Expr, VplError> {
        let mut parts: [Option<Box<Expr>>; 3] = [None, None, None];
        let mut colons = 0;
        loop {
            if self.is_op("]") {
                break;
            }
            if self.is_op(":") {
                colons += 1;
                if colons > 2 {
                    return Err(self.unexpected("']'"));
                }
                self.advance();
                continue;
            }
            if parts[colons].is_some() {
                return Err(self.unexpected("':' or ']'"));
            }
            if self.is_op(",") {
                return Err(not_allowed("tuple", self.span()));
            }
            parts[colons] = Some(Box::new(self.expression()?));
        }
        self.expect_op("]")?;
        let [lower, upper, step] = parts;
        if colons == 0 {
            let Some(index) = lower else {
                return Err(VplError::parse("empty index", span));
            };
            return Ok(Expr { kind: ExprKind::Index { value: Box::new(value), index }, span });
        }
        Ok(Expr { kind: ExprKind::Slice { value: Box::new(value), lower, upper, step }, span })
    }

    fn atom(&mut self) -> Result<Expr, VplError> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::Int(i) => {
                self.advance();
                ExprKind::Int(i)
            }
            Tok::Float(f) => {
                self.advance();
                ExprKind::Float(f)
            }
            Tok::Str(s) => {
                self.advance();
                let mut s = s;
                // implicit concatenation of adjacent literals
                while let Tok::Str(more) = self.peek().clone() {
                    self.advance();
                    s.push_str(&more);
                }
                ExprKind::Str(s)
            }
            Tok::Kw("True") => {
                self.advance();
                ExprKind::Bool(true)
            }
            Tok::Kw("False") => {
                self.advance();
                ExprKind::Bool(false)
            }
            Tok::Kw("None") => {
                self.advance();
                ExprKind::None
            }
            Tok::Kw("lambda") => return Err(not_allowed("lambda", span)),
            Tok::Kw("yield") => return Err(not_allowed("yield", span)),
            Tok::Kw("await") => return Err(not_allowed("await", span)),
            Tok::Name(n) => {
                self.advance();
                ExprKind::Name(n)
            }
            Tok::Op("(") => {
                self.advance();
                if self.is_op(")") {
                    return Err(not_allowed("tuple", span));
                }
                let inner = self.expression()?;
                if self.is_op(",") {
                    return Err(not_allowed("tuple", self.span()));
                }
                if self.is_kw("for") {
                    return Err(not_allowed("comprehension", self.span()));
                }
                self.expect_op(")")?;
                return Ok(inner);
            }
            Tok::Op("[") => {
                self.advance();
                let mut items = Vec::new();
                while !self.is_op("]") {
                    items.push(self.expression()?);
                    if self.is_kw("for") {
                        return Err(not_allowed("comprehension", self.span()));
                    }
                    if !self.eat_op(",") {
                        break;
                    }
                }
                self.expect_op("]")?;
                ExprKind::List(items)
            }
            Tok::Op("{") => return Err(not_allowed("dict or set literal", span)),
            _ => return Err(self.unexpected("an expression")),
        };
        Ok(Expr { kind, span })
    }
}
