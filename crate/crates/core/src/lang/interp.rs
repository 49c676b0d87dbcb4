//! Tree-walking interpreter with step, loop, collection and wall-clock limits.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::error::{Limit, VplError};
use super::value::{format_float, range_get, range_len, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutionLimits {
    pub max_steps: u64,
    pub max_loop_iterations: u64,
    pub max_collection_length: usize,
    #[serde(with = "millis")]
    pub wall_clock: Duration,
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        Self {
            max_steps: 100_000,
            max_loop_iterations: 10_000,
            max_collection_length: 10_000,
            wall_clock: Duration::from_secs(30),
        }
    }
}

impl ExecutionLimits {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_steps == 0
            || self.max_loop_iterations == 0
            || self.max_collection_length == 0
            || self.wall_clock.is_zero()
        {
            return Err("execution limits must all be positive".into());
        }
        Ok(())
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

/// Result of running a program: a value or a classified failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionOutcome {
    Result(Value),
    Failure(VplError),
}

impl ExecutionOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, ExecutionOutcome::Result(_))
    }

    pub fn error(&self) -> Option<&VplError> {
        match self {
            ExecutionOutcome::Failure(e) => Some(e),
            ExecutionOutcome::Result(_) => None,
        }
    }

    pub fn value(&self) -> Option<&Value> {
        match self {
            ExecutionOutcome::Result(v) => Some(v),
            ExecutionOutcome::Failure(_) => None,
        }
    }
}

impl From<Result<Value, VplError>> for ExecutionOutcome {
    fn from(r: Result<Value, VplError>) -> Self {
        match r {
            Ok(v) => ExecutionOutcome::Result(v),
            Err(e) => ExecutionOutcome::Failure(e),
        }
    }
}

impl From<ExecutionOutcome> for Result<Value, VplError> {
    fn from(o: ExecutionOutcome) -> Self {
        match o {
            ExecutionOutcome::Result(v) => Ok(v),
            ExecutionOutcome::Failure(e) => Err(e),
        }
    }
}

/// The program input: an image patch or a video segment, plus the query
/// text and answer options when the task has them.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramInput {
    pub value: Value,
    pub query: Option<String>,
    pub options: Option<Vec<String>>,
}

impl ProgramInput {
    pub fn new(value: Value) -> Self {
        Self { value, query: None, options: None }
    }

    fn default_name(&self) -> &'static str {
        match self.value {
            Value::Video(_) => "video",
            _ => "image",
        }
    }
}

/// Table of tool functions callable from programs, either as `f(x, ...)`
/// or as a method `x.f(...)` with the receiver passed first.
pub trait ToolDispatch {
    fn has_tool(&self, name: &str) -> bool;
    fn call_tool(
        &self,
        name: &str,
        args: Vec<Value>,
        kwargs: Vec<(String, Value)>,
    ) -> Result<Value, VplError>;
}

/// Names resolvable as builtin functions.
pub const BUILTINS: [&str; 8] = ["len", "abs", "min", "max", "range", "round", "str", "int"];
const FLOAT_BUILTIN: &str = "float";

fn is_builtin(name: &str) -> bool {
    BUILTINS.contains(&name) || name == FLOAT_BUILTIN
}

pub fn execute(
    program: &Program,
    input: &ProgramInput,
    tools: &dyn ToolDispatch,
    limits: &ExecutionLimits,
) -> ExecutionOutcome {
    let mut interp = Interpreter {
        tools,
        limits,
        steps: 0,
        started: Instant::now(),
        env: HashMap::new(),
    };
    match &program.wrapper {
        Some(w) => {
            let mut params = w.params.iter();
            if let Some(p) = params.next() {
                interp.env.insert(p.clone(), input.value.clone());
            }
            if let Some(p) = params.next() {
                interp.env.insert(p.clone(), input.query.clone().map_or(Value::None, Value::Str));
            }
            if let Some(p) = params.next() {
                interp.env.insert(p.clone(), options_value(input));
            }
        }
        None => {
            interp.env.insert(input.default_name().to_string(), input.value.clone());
            if let Some(q) = &input.query {
                interp.env.insert("query".into(), Value::Str(q.clone()));
            }
            if input.options.is_some() {
                interp.env.insert("possible_answers".into(), options_value(input));
            }
        }
    }
    let outcome = match interp.block(&program.body) {
        Ok(Flow::Return(v)) => Ok(v),
        Ok(_) => Err(VplError::ReturnType { expected: "value".into(), actual: "none".into() }),
        Err(e) => Err(e),
    };
    outcome.into()
}

fn options_value(input: &ProgramInput) -> Value {
    match &input.options {
        Some(opts) => Value::List(opts.iter().cloned().map(Value::Str).collect()),
        None => Value::None,
    }
}

enum Flow {
    Normal,
    Return(Value),
    Break,
    Continue,
}

struct Interpreter<'a> {
    tools: &'a dyn ToolDispatch,
    limits: &'a ExecutionLimits,
    steps: u64,
    started: Instant,
    env: HashMap<String, Value>,
}

type Eval<T> = Result<T, VplError>;

fn limit(limit: Limit) -> VplError {
    VplError::LimitExceeded { limit, span: None }
}

fn type_err(msg: impl Into<String>) -> VplError {
    VplError::type_error(msg)
}

fn finite(f: f64) -> Eval<Value> {
    if f.is_finite() {
        Ok(Value::Float(f))
    } else {
        Err(type_err("numeric result is not finite"))
    }
}

fn overflow() -> VplError {
    type_err("integer overflow")
}

impl<'a> Interpreter<'a> {
    fn tick(&mut self) -> Eval<()> {
        self.steps += 1;
        if self.steps > self.limits.max_steps {
            return Err(limit(Limit::Steps));
        }
        if self.steps % 64 == 0 && self.started.elapsed() > self.limits.wall_clock {
            return Err(limit(Limit::WallClock));
        }
        Ok(())
    }

    fn check_len(&self, len: usize) -> Eval<()> {
        if len > self.limits.max_collection_length {
            Err(limit(Limit::CollectionLength))
        } else {
            Ok(())
        }
    }

    fn block(&mut self, body: &[Stmt]) -> Eval<Flow> {
        for s in body {
            match self.stmt(s).map_err(|e| e.at(s.span))? {
                Flow::Normal => {}
                other => return Ok(other),
            }
        }
        Ok(Flow::Normal)
    }

    fn stmt(&mut self, s: &Stmt) -> Eval<Flow> {
        self.tick()?;
        match &s.kind {
            StmtKind::Assign { target, value } => {
                let v = self.expr(value)?;
                self.env.insert(target.clone(), v);
            }
            StmtKind::AugAssign { target, op, value } => {
                let current = self.lookup(target)?;
                let rhs = self.expr(value)?;
                let v = self.binary(*op, current, rhs)?;
                self.env.insert(target.clone(), v);
            }
            StmtKind::If { branches, orelse } => {
                for (cond, body) in branches {
                    if self.expr(cond)?.truthy() {
                        return self.block(body);
                    }
                }
                if let Some(body) = orelse {
                    return self.block(body);
                }
            }
            StmtKind::For { var, iter, body } => {
                let iterable = self.expr(iter)?;
                let len = match &iterable {
                    Value::List(items) => items.len(),
                    Value::Range { .. } => range_len(&iterable),
                    Value::Str(s) => s.chars().count(),
                    other => return Err(type_err(format!("cannot iterate over {}", other.type_name()))),
                };
                let chars: Vec<char> = match &iterable {
                    Value::Str(s) => s.chars().collect(),
                    _ => Vec::new(),
                };
                for i in 0..len {
                    if i as u64 >= self.limits.max_loop_iterations {
                        return Err(limit(Limit::LoopIterations));
                    }
                    let item = match &iterable {
                        Value::List(items) => items[i].clone(),
                        Value::Range { .. } => Value::Int(range_get(&iterable, i).unwrap_or_default()),
                        _ => Value::Str(chars[i].to_string()),
                    };
                    self.env.insert(var.clone(), item);
                    match self.block(body)? {
                        Flow::Break => break,
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        Flow::Normal | Flow::Continue => {}
                    }
                }
            }
            StmtKind::Return(v) => {
                let v = match v {
                    Some(e) => self.expr(e)?,
                    None => Value::None,
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::Expr(e) => {
                self.expr(e)?;
            }
            StmtKind::Pass => {}
            StmtKind::Break => return Ok(Flow::Break),
            StmtKind::Continue => return Ok(Flow::Continue),
        }
        Ok(Flow::Normal)
    }

    fn lookup(&self, name: &str) -> Eval<Value> {
        match self.env.get(name) {
            Some(v) => Ok(v.clone()),
            None if is_builtin(name) || self.tools.has_tool(name) => {
                Err(type_err(format!("function '{name}' cannot be used as a value")))
            }
            None => Err(VplError::Name { name: name.to_string(), span: None }),
        }
    }

    fn expr(&mut self, e: &Expr) -> Eval<Value> {
        self.expr_inner(e).map_err(|err| err.at(e.span))
    }

    fn expr_inner(&mut self, e: &Expr) -> Eval<Value> {
        self.tick()?;
        match &e.kind {
            ExprKind::Int(i) => Ok(Value::Int(*i)),
            ExprKind::Float(f) => Ok(Value::Float(*f)),
            ExprKind::Str(s) => Ok(Value::Str(s.clone())),
            ExprKind::Bool(b) => Ok(Value::Bool(*b)),
            ExprKind::None => Ok(Value::None),
            ExprKind::List(items) => {
                self.check_len(items.len())?;
                let vals = items.iter().map(|i| self.expr(i)).collect::<Eval<Vec<_>>>()?;
                Ok(Value::List(vals))
            }
            ExprKind::Name(n) => self.lookup(n),
            ExprKind::Attr { value, attr } => {
                let v = self.expr(value)?;
                attribute(&v, attr)
            }
            ExprKind::Index { value, index } => {
                let v = self.expr(value)?;
                let i = self.expr(index)?;
                index_value(&v, &i)
            }
            ExprKind::Slice { value, lower, upper, step } => {
                let v = self.expr(value)?;
                let mut bound = |b: &Option<Box<Expr>>| -> Eval<Option<i64>> {
                    match b {
                        None => Ok(None),
                        Some(e) => match self.expr(e)? {
                            Value::None => Ok(None),
                            other => as_int(&other).map(Some),
                        },
                    }
                };
                let (lo, hi, st) = (bound(lower)?, bound(upper)?, bound(step)?);
                slice_value(&v, lo, hi, st)
            }
            ExprKind::Call { func, args, kwargs } => self.call(func, args, kwargs),
            ExprKind::Unary { op, operand } => {
                let v = self.expr(operand)?;
                match op {
                    UnaryOp::Not => Ok(Value::Bool(!v.truthy())),
                    UnaryOp::Neg => match v {
                        Value::Int(i) => i.checked_neg().map(Value::Int).ok_or_else(overflow),
                        Value::Bool(b) => Ok(Value::Int(-(b as i64))),
                        Value::Float(f) => Ok(Value::Float(-f)),
                        other => Err(type_err(format!("bad operand for unary -: {}", other.type_name()))),
                    },
                }
            }
            ExprKind::Binary { op, left, right } => {
                let l = self.expr(left)?;
                let r = self.expr(right)?;
                self.binary(*op, l, r)
            }
            ExprKind::Compare { left, rest } => {
                let mut l = self.expr(left)?;
                for (op, re) in rest {
                    let r = self.expr(re)?;
                    if !compare(*op, &l, &r)? {
                        return Ok(Value::Bool(false));
                    }
                    l = r;
                }
                Ok(Value::Bool(true))
            }
            ExprKind::BoolOp { op, left, right } => {
                let l = self.expr(left)?;
                match (op, l.truthy()) {
                    (BoolOp::And, false) | (BoolOp::Or, true) => Ok(l),
                    _ => self.expr(right),
                }
            }
        }
    }

    fn call(&mut self, func: &Expr, args: &[Expr], kwargs: &[(String, Expr)]) -> Eval<Value> {
        match &func.kind {
            ExprKind::Name(name) => {
                if let Some(v) = self.env.get(name) {
                    return Err(type_err(format!("{} is not callable", v.type_name())));
                }
                let argv = args.iter().map(|a| self.expr(a)).collect::<Eval<Vec<_>>>()?;
                let kwv = kwargs
                    .iter()
                    .map(|(k, v)| Ok((k.clone(), self.expr(v)?)))
                    .collect::<Eval<Vec<_>>>()?;
                if is_builtin(name) {
                    if !kwv.is_empty() {
                        return Err(type_err(format!("{name}() takes no keyword arguments")));
                    }
                    return self.builtin(name, argv);
                }
                if self.tools.has_tool(name) {
                    return self.tool(name, argv, kwv);
                }
                Err(VplError::Name { name: name.clone(), span: Some(func.span) })
            }
            ExprKind::Attr { value, attr } => {
                if attr == "append" {
                    return self.append(value, args, kwargs);
                }
                let receiver = self.expr(value)?;
                let mut argv = vec![receiver];
                for a in args {
                    argv.push(self.expr(a)?);
                }
                let kwv = kwargs
                    .iter()
                    .map(|(k, v)| Ok((k.clone(), self.expr(v)?)))
                    .collect::<Eval<Vec<_>>>()?;
                self.method(attr, argv, kwv)
            }
            _ => {
                let v = self.expr(func)?;
                Err(type_err(format!("{} is not callable", v.type_name())))
            }
        }
    }

    fn method(&mut self, name: &str, mut argv: Vec<Value>, kwv: Vec<(String, Value)>) -> Eval<Value> {
        match (&argv[0], name) {
            (Value::Str(s), "lower" | "upper" | "strip") if argv.len() == 1 && kwv.is_empty() => {
                Ok(Value::Str(match name {
                    "lower" => s.to_lowercase(),
                    "upper" => s.to_uppercase(),
                    _ => s.trim().to_string(),
                }))
            }
            (Value::Patch(_) | Value::Video(_), _) if self.tools.has_tool(name) => self.tool(name, argv, kwv),
            _ => {
                let recv = argv.swap_remove(0);
                Err(VplError::Name {
                    name: format!("{}.{name}", recv.type_name()),
                    span: None,
                })
            }
        }
    }

    fn append(&mut self, target: &Expr, args: &[Expr], kwargs: &[(String, Expr)]) -> Eval<Value> {
        let ExprKind::Name(var) = &target.kind else {
            let v = self.expr(target)?;
            return Err(type_err(format!("cannot append to {}", v.type_name())));
        };
        if args.len() != 1 || !kwargs.is_empty() {
            return Err(type_err("append() takes exactly one argument"));
        }
        let item = self.expr(&args[0])?;
        let max = self.limits.max_collection_length;
        match self.env.get_mut(var) {
            Some(Value::List(items)) => {
                if items.len() + 1 > max {
                    return Err(limit(Limit::CollectionLength));
                }
                items.push(item);
                Ok(Value::None)
            }
            Some(other) => Err(VplError::Name { name: format!("{}.append", other.type_name()), span: None }),
            None => Err(VplError::Name { name: var.clone(), span: Some(target.span) }),
        }
    }

    fn tool(&mut self, name: &str, argv: Vec<Value>, kwv: Vec<(String, Value)>) -> Eval<Value> {
        let out = self.tools.call_tool(name, argv, kwv)?;
        if let Value::List(items) = &out {
            self.check_len(items.len())?;
        }
        if self.started.elapsed() > self.limits.wall_clock {
            return Err(limit(Limit::WallClock));
        }
        Ok(out)
    }

    fn builtin(&mut self, name: &str, args: Vec<Value>) -> Eval<Value> {
        let arity = |lo: usize, hi: usize| -> Eval<()> {
            if args.len() < lo || args.len() > hi {
                Err(type_err(format!("{name}() takes {lo}..{hi} arguments, got {}", args.len())))
            } else {
                Ok(())
            }
        };
        match name {
            "len" => {
                arity(1, 1)?;
                match &args[0] {
                    Value::List(v) => Ok(Value::Int(v.len() as i64)),
                    Value::Str(s) => Ok(Value::Int(s.chars().count() as i64)),
                    r @ Value::Range { .. } => Ok(Value::Int(range_len(r) as i64)),
                    other => Err(type_err(format!("{} has no len()", other.type_name()))),
                }
            }
            "abs" => {
                arity(1, 1)?;
                match &args[0] {
                    Value::Int(i) => i.checked_abs().map(Value::Int).ok_or_else(overflow),
                    Value::Bool(b) => Ok(Value::Int(*b as i64)),
                    Value::Float(f) => Ok(Value::Float(f.abs())),
                    other => Err(type_err(format!("bad operand for abs(): {}", other.type_name()))),
                }
            }
            "min" | "max" => {
                let items: Vec<Value> = match args.as_slice() {
                    [] => return Err(type_err(format!("{name}() expects at least one argument"))),
                    [Value::List(v)] => v.clone(),
                    [r @ Value::Range { .. }] => {
                        self.check_len(range_len(r))?;
                        (0..range_len(r)).filter_map(|i| range_get(r, i)).map(Value::Int).collect()
                    }
                    [single] => return Err(type_err(format!("{} is not iterable", single.type_name()))),
                    many => many.to_vec(),
                };
                let mut best: Option<(f64, Value)> = None;
                for item in items {
                    let Some(x) = item.as_f64() else {
                        return Err(type_err(format!("{name}() of {}", item.type_name())));
                    };
                    let better = match &best {
                        None => true,
                        Some((b, _)) => (name == "min" && x < *b) || (name == "max" && x > *b),
                    };
                    if better {
                        best = Some((x, item));
                    }
                }
                best.map(|(_, v)| v)
                    .ok_or_else(|| VplError::index(format!("{name}() arg is an empty sequence")))
            }
            "range" => {
                arity(1, 3)?;
                let ints = args.iter().map(as_int).collect::<Eval<Vec<_>>>()?;
                let (start, stop, step) = match ints.as_slice() {
                    [stop] => (0, *stop, 1),
                    [start, stop] => (*start, *stop, 1),
                    [start, stop, step] => (*start, *stop, *step),
                    _ => unreachable!(),
                };
                if step == 0 {
                    return Err(type_err("range() step must not be zero"));
                }
                Ok(Value::Range { start, stop, step })
            }
            "round" => {
                arity(1, 2)?;
                let x = args[0]
                    .as_f64()
                    .ok_or_else(|| type_err(format!("round() of {}", args[0].type_name())))?;
                if args.len() == 1 {
                    if let Value::Int(i) = args[0] {
                        return Ok(Value::Int(i));
                    }
                    return float_to_int(x.round_ties_even());
                }
                let digits = as_int(&args[1])?.clamp(-30, 30) as i32;
                let scale = 10f64.powi(digits);
                finite((x * scale).round_ties_even() / scale)
            }
            "str" => {
                arity(1, 1)?;
                let s = args[0].display();
                self.check_len(s.len())?;
                Ok(Value::Str(s))
            }
            "int" => {
                arity(1, 1)?;
                match &args[0] {
                    Value::Int(i) => Ok(Value::Int(*i)),
                    Value::Bool(b) => Ok(Value::Int(*b as i64)),
                    Value::Float(f) => float_to_int(f.trunc()),
                    Value::Str(s) => s
                        .trim()
                        .parse::<i64>()
                        .map(Value::Int)
                        .map_err(|_| type_err(format!("invalid literal for int(): {s:?}"))),
                    other => Err(type_err(format!("int() of {}", other.type_name()))),
                }
            }
            "float" => {
                arity(1, 1)?;
                match &args[0] {
                    Value::Str(s) => match s.trim().parse::<f64>() {
                        Ok(f) => finite(f),
                        Err(_) => Err(type_err(format!("could not convert string to float: {s:?}"))),
                    },
                    other => other
                        .as_f64()
                        .map(Value::Float)
                        .ok_or_else(|| type_err(format!("float() of {}", other.type_name()))),
                }
            }
            _ => Err(VplError::Name { name: name.to_string(), span: None }),
        }
    }

    fn binary(&mut self, op: BinOp, l: Value, r: Value) -> Eval<Value> {
        match (&l, &r) {
            (Value::Str(a), Value::Str(b)) if op == BinOp::Add => {
                self.check_len(a.len() + b.len())?;
                return Ok(Value::Str(format!("{a}{b}")));
            }
            (Value::List(a), Value::List(b)) if op == BinOp::Add => {
                self.check_len(a.len() + b.len())?;
                let mut out = a.clone();
                out.extend(b.iter().cloned());
                return Ok(Value::List(out));
            }
            (Value::Str(_) | Value::List(_), Value::Int(_) | Value::Bool(_)) if op == BinOp::Mul => {
                return self.repeat(&l, as_int(&r)?);
            }
            (Value::Int(_) | Value::Bool(_), Value::Str(_) | Value::List(_)) if op == BinOp::Mul => {
                return self.repeat(&r, as_int(&l)?);
            }
            _ => {}
        }
        let bad = || {
            type_err(format!(
                "unsupported operand types for {}: {} and {}",
                op.symbol(),
                l.type_name(),
                r.type_name()
            ))
        };
        let int_of = |v: &Value| match v {
            Value::Int(i) => Some(*i),
            Value::Bool(b) => Some(*b as i64),
            _ => None,
        };
        if let (Some(a), Some(b)) = (int_of(&l), int_of(&r)) {
            return int_binary(op, a, b);
        }
        let (Some(a), Some(b)) = (l.as_f64(), r.as_f64()) else {
            return Err(bad());
        };
        let v = match op {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => {
                if b == 0.0 {
                    return Err(type_err("division by zero"));
                }
                a / b
            }
            BinOp::FloorDiv => {
                if b == 0.0 {
                    return Err(type_err("division by zero"));
                }
                (a / b).floor()
            }
            BinOp::Mod => {
                if b == 0.0 {
                    return Err(type_err("division by zero"));
                }
                let m = a % b;
                if m != 0.0 && (m < 0.0) != (b < 0.0) {
                    m + b
                } else {
                    m
                }
            }
            BinOp::Pow => a.powf(b),
        };
        finite(v)
    }

    fn repeat(&mut self, v: &Value, n: i64) -> Eval<Value> {
        let n = n.max(0) as usize;
        match v {
            Value::Str(s) => {
                self.check_len(s.len().saturating_mul(n))?;
                Ok(Value::Str(s.repeat(n)))
            }
            Value::List(items) => {
                self.check_len(items.len().saturating_mul(n))?;
                let mut out = Vec::with_capacity(items.len() * n);
                for _ in 0..n {
                    out.extend(items.iter().cloned());
                }
                Ok(Value::List(out))
            }
            _ => unreachable!(),
        }
    }
}

fn int_binary(op: BinOp, a: i64, b: i64) -> Eval<Value> {
    let zero = || type_err("division by zero");
    let v = match op {
        BinOp::Add => a.checked_add(b),
        BinOp::Sub => a.checked_sub(b),
        BinOp::Mul => a.checked_mul(b),
        BinOp::Div => {
            if b == 0 {
                return Err(zero());
            }
            return finite(a as f64 / b as f64);
        }
        BinOp::FloorDiv => {
            if b == 0 {
                return Err(zero());
            }
            a.checked_div(b).map(|q| if (a % b != 0) && ((a < 0) != (b < 0)) { q - 1 } else { q })
        }
        BinOp::Mod => {
            if b == 0 {
                return Err(zero());
            }
            a.checked_rem(b).map(|m| if m != 0 && ((m < 0) != (b < 0)) { m + b } else { m })
        }
        BinOp::Pow => {
            if b < 0 {
                return finite((a as f64).powf(b as f64));
            }
            u32::try_from(b).ok().and_then(|e| a.checked_pow(e))
        }
    };
    v.map(Value::Int).ok_or_else(overflow)
}

fn float_to_int(f: f64) -> Eval<Value> {
    if f.is_finite() && f >= -9.2e18 && f <= 9.2e18 {
        Ok(Value::Int(f as i64))
    } else {
        Err(overflow())
    }
}

fn as_int(v: &Value) -> Eval<i64> {
    match v {
        Value::Int(i) => Ok(*i),
        Value::Bool(b) => Ok(*b as i64),
        other => Err(type_err(format!("expected an integer, got {}", other.type_name()))),
    }
}

fn compare(op: CmpOp, l: &Value, r: &Value) -> Eval<bool> {
    match op {
        CmpOp::Eq => Ok(l.loose_eq(r)),
        CmpOp::NotEq => Ok(!l.loose_eq(r)),
        CmpOp::In | CmpOp::NotIn => {
            let found = match (l, r) {
                (_, Value::List(items)) => items.iter().any(|i| i.loose_eq(l)),
                (Value::Str(needle), Value::Str(hay)) => hay.contains(needle.as_str()),
                (x, range @ Value::Range { start, stop, step }) => match x {
                    Value::Int(i) => {
                        let (i, start, step) = (*i as i128, *start as i128, *step as i128);
                        let inside = if step > 0 {
                            i >= start && i < *stop as i128
                        } else {
                            i <= start && i > *stop as i128
                        };
                        let _ = range;
                        inside && (i - start) % step == 0
                    }
                    _ => false,
                },
                _ => {
                    return Err(type_err(format!(
                        "'in' requires a list or text on the right, got {}",
                        r.type_name()
                    )))
                }
            };
            Ok(found == (op == CmpOp::In))
        }
        _ => {
            let (Some(a), Some(b)) = (l.as_f64(), r.as_f64()) else {
                return Err(type_err(format!(
                    "'{}' not supported between {} and {}",
                    op.symbol(),
                    l.type_name(),
                    r.type_name()
                )));
            };
            Ok(match op {
                CmpOp::Lt => a < b,
                CmpOp::LtE => a <= b,
                CmpOp::Gt => a > b,
                _ => a >= b,
            })
        }
    }
}

fn attribute(v: &Value, attr: &str) -> Eval<Value> {
    let f = match (v, attr) {
        (Value::Patch(p), "left") => p.left(),
        (Value::Patch(p), "right") => p.right(),
        (Value::Patch(p), "upper") => p.upper(),
        (Value::Patch(p), "lower") => p.lower(),
        (Value::Patch(p), "width") => p.width(),
        (Value::Patch(p), "height") => p.height(),
        (Value::Patch(p), "horizontal_center") => p.horizontal_center(),
        (Value::Patch(p), "vertical_center") => p.vertical_center(),
        (Value::Video(s), "start_frame") => return Ok(Value::Int(s.start_frame as i64)),
        (Value::Video(s), "end_frame") => return Ok(Value::Int(s.end_frame as i64)),
        _ => {
            return Err(VplError::Name { name: format!("{}.{attr}", v.type_name()), span: None });
        }
    };
    Ok(Value::Float(f))
}

fn resolve_index(i: i64, len: usize) -> Option<usize> {
    let idx = if i < 0 { len as i64 + i } else { i };
    (0..len as i64).contains(&idx).then_some(idx as usize)
}

fn index_value(v: &Value, i: &Value) -> Eval<Value> {
    let i = as_int(i)?;
    let oob = |len: usize| VplError::index(format!("index {i} out of range for length {len}"));
    match v {
        Value::List(items) => resolve_index(i, items.len())
            .map(|k| items[k].clone())
            .ok_or_else(|| oob(items.len())),
        Value::Str(s) => {
            let chars: Vec<char> = s.chars().collect();
            resolve_index(i, chars.len())
                .map(|k| Value::Str(chars[k].to_string()))
                .ok_or_else(|| oob(chars.len()))
        }
        r @ Value::Range { .. } => {
            let len = range_len(r);
            resolve_index(i, len)
                .and_then(|k| range_get(r, k))
                .map(Value::Int)
                .ok_or_else(|| oob(len))
        }
        other => Err(type_err(format!("{} is not subscriptable", other.type_name()))),
    }
}

/// Python slice index arithmetic.
fn slice_indices(len: usize, lo: Option<i64>, hi: Option<i64>, step: Option<i64>) -> Eval<Vec<usize>> {
    let step = step.unwrap_or(1);
    if step == 0 {
        return Err(type_err("slice step cannot be zero"));
    }
    let len = len as i64;
    let clamp = |v: i64, lower: i64, upper: i64| {
        let v = if v < 0 { v + len } else { v };
        v.clamp(lower, upper)
    };
    let mut out = Vec::new();
    if step > 0 {
        let start = lo.map_or(0, |v| clamp(v, 0, len));
        let stop = hi.map_or(len, |v| clamp(v, 0, len));
        let mut i = start;
        while i < stop {
            out.push(i as usize);
            i += step;
        }
    } else {
        let start = lo.map_or(len - 1, |v| clamp(v, -1, len - 1));
        let stop = hi.map_or(-1, |v| clamp(v, -1, len - 1));
        let mut i = start;
        while i > stop {
            out.push(i as usize);
            i += step;
        }
    }
    Ok(out)
}

fn slice_value(v: &Value, lo: Option<i64>, hi: Option<i64>, step: Option<i64>) -> Eval<Value> {
    match v {
        Value::List(items) => {
            let idx = slice_indices(items.len(), lo, hi, step)?;
            Ok(Value::List(idx.into_iter().map(|i| items[i].clone()).collect()))
        }
        Value::Str(s) => {
            let chars: Vec<char> = s.chars().collect();
            let idx = slice_indices(chars.len(), lo, hi, step)?;
            Ok(Value::Str(idx.into_iter().map(|i| chars[i]).collect()))
        }
        other => Err(type_err(format!("{} cannot be sliced", other.type_name()))),
    }
}

/// Stringification used when a number must become an answer.
pub fn number_text(v: &Value) -> Option<String> {
    match v {
        Value::Int(i) => Some(i.to_string()),
        Value::Float(f) => Some(format_float(*f)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::super::parser::parse;
    use super::*;
    use crate::scene::{BBox, ImagePatch};

    struct NoTools;

    impl ToolDispatch for NoTools {
        fn has_tool(&self, name: &str) -> bool {
            name == "echo"
        }
        fn call_tool(&self, _: &str, args: Vec<Value>, _: Vec<(String, Value)>) -> Result<Value, VplError> {
            Ok(Value::List(args))
        }
    }

    fn image() -> ProgramInput {
        ProgramInput::new(Value::Patch(ImagePatch::new("s", BBox::new(0., 0., 100., 50.).unwrap())))
    }

    fn run(src: &str) -> ExecutionOutcome {
        run_with(src, &ExecutionLimits::default())
    }

    fn run_with(src: &str, limits: &ExecutionLimits) -> ExecutionOutcome {
        let p = parse(src).unwrap();
        execute(&p, &image(), &NoTools, limits)
    }

    fn val(src: &str) -> Value {
        match run(src) {
            ExecutionOutcome::Result(v) => v,
            ExecutionOutcome::Failure(e) => panic!("{src}: {e:?}"),
        }
    }

    fn fail(src: &str) -> VplError {
        run(src).error().cloned().unwrap_or_else(|| panic!("{src} should fail"))
    }

    #[test]
    fn arithmetic() {
        assert_eq!(val("return 1 + 2"), Value::Int(3));
        assert_eq!(val("return 7 / 2"), Value::Float(3.5));
        assert_eq!(val("return 7 // 2"), Value::Int(3));
        assert_eq!(val("return -7 // 2"), Value::Int(-4));
        assert_eq!(val("return -7 % 3"), Value::Int(2));
        assert_eq!(val("return 2 ** 10"), Value::Int(1024));
        assert_eq!(val("return 2 ** -1"), Value::Float(0.5));
        assert_eq!(val("return 1 + 0.5"), Value::Float(1.5));
        assert_eq!(val("return 'a' + 'b'"), Value::Str("ab".into()));
        assert_eq!(val("return [1] + [2]"), Value::List(vec![Value::Int(1), Value::Int(2)]));
    }

    #[test]
    fn undeclared_name() {
        let err = fail("return foo(image)");
        assert_eq!(err, VplError::Name { name: "foo".into(), span: Some(crate::lang::Span::new(1, 8)) });
        assert!(matches!(fail("return y"), VplError::Name { .. }));
    }

    #[test]
    fn loop_limit() {
        let err = fail("for i in range(0, 10**9): x = i");
        assert!(matches!(err, VplError::LimitExceeded { limit: Limit::LoopIterations, .. }), "{err:?}");
    }

    #[test]
    fn step_limit() {
        let limits = ExecutionLimits { max_steps: 50, ..Default::default() };
        let out = run_with("x = 0\nfor i in range(100):\n    x = x + 1\nreturn x", &limits);
        assert!(matches!(out.error(), Some(VplError::LimitExceeded { limit: Limit::Steps, .. })));
    }

    #[test]
    fn collection_limit() {
        let err = fail("return [1] * 100000");
        assert!(matches!(err, VplError::LimitExceeded { limit: Limit::CollectionLength, .. }));
    }

    #[test]
    fn missing_return() {
        assert_eq!(
            fail("x = 1"),
            VplError::ReturnType { expected: "value".into(), actual: "none".into() }
        );
    }

    #[test]
    fn negative_indexing_and_slicing() {
        assert_eq!(val("xs = [1, 2, 3, 4]\nreturn xs[-2]"), Value::Int(3));
        assert_eq!(val("xs = [1, 2, 3, 4]\nreturn xs[::-1][0]"), Value::Int(4));
        assert_eq!(val("xs = [1, 2, 3, 4]\nreturn len(xs[1:-1])"), Value::Int(2));
        assert!(matches!(fail("xs = [1]\nreturn xs[5]"), VplError::Index { .. }));
        assert_eq!(val("return range(10)[-1]"), Value::Int(9));
    }

    #[test]
    fn control_flow() {
        let src = "n = 0\nfor i in range(10):\n    if i == 3:\n        continue\n    if i > 5:\n        break\n    n += i\nreturn n";
        assert_eq!(val(src), Value::Int(1 + 2 + 4 + 5));
    }

    #[test]
    fn append_and_builtins() {
        let src = "xs = []\nfor i in range(4):\n    xs.append(i * 2)\nreturn [len(xs), max(xs), min(3, 1, 2), abs(-2), round(2.5), int('7'), float(1), str(3)]";
        assert_eq!(
            val(src),
            Value::List(vec![
                Value::Int(4),
                Value::Int(6),
                Value::Int(1),
                Value::Int(2),
                Value::Int(2),
                Value::Int(7),
                Value::Float(1.0),
                Value::Str("3".into())
            ])
        );
    }

    #[test]
    fn patch_attributes() {
        assert_eq!(val("return image.horizontal_center"), Value::Float(50.0));
        assert!(matches!(fail("return image.colour"), VplError::Name { .. }));
    }

    #[test]
    fn wrapper_rebinds_input() {
        let p = parse("def execute_command(img):\n    return img.width").unwrap();
        assert_eq!(
            execute(&p, &image(), &NoTools, &ExecutionLimits::default()),
            ExecutionOutcome::Result(Value::Float(100.0))
        );
    }

    #[test]
    fn tool_method_dispatch() {
        assert_eq!(
            val("return image.echo(1)"),
            Value::List(vec![image().value, Value::Int(1)])
        );
    }

    #[test]
    fn type_errors() {
        assert!(matches!(fail("return 'a' < 'b'"), VplError::Type { .. }));
        assert!(matches!(fail("return 1 / 0"), VplError::Type { .. }));
        assert!(matches!(fail("return 'a' + 1"), VplError::Type { .. }));
        assert!(matches!(fail("return 9223372036854775807 + 1"), VplError::Type { .. }));
        assert!(matches!(fail("x = 3\nreturn x(1)"), VplError::Type { .. }));
    }

    #[test]
    fn short_circuit() {
        assert_eq!(val("return 0 or 'x'"), Value::Str("x".into()));
        assert_eq!(val("return [] and undefined_name"), Value::List(vec![]));
    }

    #[test]
    fn membership() {
        assert_eq!(val("return 2 in [1, 2]"), Value::Bool(true));
        assert_eq!(val("return 'at' in 'cat'"), Value::Bool(true));
        assert_eq!(val("return 5 not in range(0, 10, 2)"), Value::Bool(true));
    }
}
