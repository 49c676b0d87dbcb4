use serde::{Deserialize, Serialize};

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Self { line, col }
    }
}

/// A parsed program. `wrapper` is set when the source was written as
/// `def execute_command(image, ...):`.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub source: String,
    pub wrapper: Option<FunctionDef>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<String>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Assign { target: String, value: Expr },
    AugAssign { target: String, op: BinOp, value: Expr },
    If { branches: Vec<(Expr, Vec<Stmt>)>, orelse: Option<Vec<Stmt>> },
    For { var: String, iter: Expr, body: Vec<Stmt> },
    Return(Option<Expr>),
    Expr(Expr),
    Pass,
    Break,
    Continue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    None,
    List(Vec<Expr>),
    Name(String),
    Attr { value: Box<Expr>, attr: String },
    Index { value: Box<Expr>, index: Box<Expr> },
    Slice {
        value: Box<Expr>,
        lower: Option<Box<Expr>>,
        upper: Option<Box<Expr>>,
        step: Option<Box<Expr>>,
    },
    Call { func: Box<Expr>, args: Vec<Expr>, kwargs: Vec<(String, Expr)> },
    Unary { op: UnaryOp, operand: Box<Expr> },
    Binary { op: BinOp, left: Box<Expr>, right: Box<Expr> },
    Compare { left: Box<Expr>, rest: Vec<(CmpOp, Expr)> },
    BoolOp { op: BoolOp, left: Box<Expr>, right: Box<Expr> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    FloorDiv,
    Mod,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::FloorDiv => "//",
            BinOp::Mod => "%",
            BinOp::Pow => "**",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    NotEq,
    Lt,
    LtE,
    Gt,
    GtE,
    In,
    NotIn,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::NotEq => "!=",
            CmpOp::Lt => "<",
            CmpOp::LtE => "<=",
            CmpOp::Gt => ">",
            CmpOp::GtE => ">=",
            CmpOp::In => "in",
            CmpOp::NotIn => "not in",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoolOp {
    And,
    Or,
}

impl Program {
    /// Copy with every span zeroed, for structural comparison.
    pub fn without_spans(&self) -> Program {
        Program {
            source: String::new(),
            wrapper: self.wrapper.as_ref().map(|w| FunctionDef {
                name: w.name.clone(),
                params: w.params.clone(),
                span: Span::default(),
            }),
            body: self.body.iter().map(Stmt::without_spans).collect(),
        }
    }

    /// Structural equality ignoring spans and source text.
    pub fn same_structure(&self, other: &Program) -> bool {
        self.without_spans() == other.without_spans()
    }
}

impl Stmt {
    fn without_spans(&self) -> Stmt {
        let block = |b: &[Stmt]| b.iter().map(Stmt::without_spans).collect::<Vec<_>>();
        let kind = match &self.kind {
            StmtKind::Assign { target, value } => {
                StmtKind::Assign { target: target.clone(), value: value.without_spans() }
            }
            StmtKind::AugAssign { target, op, value } => StmtKind::AugAssign {
                target: target.clone(),
                op: *op,
                value: value.without_spans(),
            },
            StmtKind::If { branches, orelse } => StmtKind::If {
                branches: branches.iter().map(|(c, b)| (c.without_spans(), block(b))).collect(),
                orelse: orelse.as_deref().map(block),
            },
            StmtKind::For { var, iter, body } => StmtKind::For {
                var: var.clone(),
                iter: iter.without_spans(),
                body: block(body),
            },
            StmtKind::Return(v) => StmtKind::Return(v.as_ref().map(Expr::without_spans)),
            StmtKind::Expr(e) => StmtKind::Expr(e.without_spans()),
            k @ (StmtKind::Pass | StmtKind::Break | StmtKind::Continue) => k.clone(),
        };
        Stmt { kind, span: Span::default() }
    }
}

impl Expr {
    fn without_spans(&self) -> Expr {
        let bx = |e: &Expr| Box::new(e.without_spans());
        let opt = |e: &Option<Box<Expr>>| e.as_deref().map(bx);
        let kind = match &self.kind {
            ExprKind::List(items) => ExprKind::List(items.iter().map(Expr::without_spans).collect()),
            ExprKind::Attr { value, attr } => ExprKind::Attr { value: bx(value), attr: attr.clone() },
            ExprKind::Index { value, index } => ExprKind::Index { value: bx(value), index: bx(index) },
            ExprKind::Slice { value, lower, upper, step } => ExprKind::Slice {
                value: bx(value),
                lower: opt(lower),
                upper: opt(upper),
                step: opt(step),
            },
            ExprKind::Call { func, args, kwargs } => ExprKind::Call {
                func: bx(func),
                args: args.iter().map(Expr::without_spans).collect(),
                kwargs: kwargs.iter().map(|(k, v)| (k.clone(), v.without_spans())).collect(),
            },
            ExprKind::Unary { op, operand } => ExprKind::Unary { op: *op, operand: bx(operand) },
            ExprKind::Binary { op, left, right } => {
                ExprKind::Binary { op: *op, left: bx(left), right: bx(right) }
            }
            ExprKind::Compare { left, rest } => ExprKind::Compare {
                left: bx(left),
                rest: rest.iter().map(|(op, e)| (*op, e.without_spans())).collect(),
            },
            ExprKind::BoolOp { op, left, right } => {
                ExprKind::BoolOp { op: *op, left: bx(left), right: bx(right) }
            }
            leaf => leaf.clone(),
        };
        Expr { kind, span: Span::default() }
    }
}
