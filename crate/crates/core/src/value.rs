//! Base types, cell values and the scalar operator table.
//!
//! Natural numbers are stored as `Value::Int` and categorical labels as
//! `Value::Str`; the column's [`BaseType`] carries the distinction.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BaseType {
    Real,
    PosReal,
    Ranged { lo: f64, hi: f64 },
    Int,
    Nat,
    Bool,
    Str,
    Categorical { labels: Vec<String> },
}

impl BaseType {
    pub fn is_continuous(&self) -> bool {
        matches!(self, BaseType::Real | BaseType::PosReal | BaseType::Ranged { .. })
    }

    pub fn is_numeric(&self) -> bool {
        self.is_continuous() || self.is_integral()
    }

    pub fn is_integral(&self) -> bool {
        matches!(self, BaseType::Int | BaseType::Nat)
    }

    pub fn is_textual(&self) -> bool {
        matches!(self, BaseType::Str | BaseType::Categorical { .. })
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            BaseType::Ranged { lo, hi } if !(lo < hi) => {
                Err(format!("ranged type needs lo < hi, got [{lo}, {hi}]"))
            }
            BaseType::Categorical { labels } => {
                if labels.is_empty() {
                    return Err("categorical type needs at least one label".into());
                }
                let mut seen = std::collections::BTreeSet::new();
                for l in labels {
                    if !seen.insert(l) {
                        return Err(format!("duplicate categorical label {l:?}"));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Whether `v` is a well-typed cell for this type. Null always is.
    pub fn admits(&self, v: &Value) -> bool {
        match (self, v) {
            (_, Value::Null) => true,
            (BaseType::Real, Value::Real(x)) => !x.is_nan(),
            (BaseType::PosReal, Value::Real(x)) => *x >= 0.0,
            (BaseType::Ranged { lo, hi }, Value::Real(x)) => *x >= *lo && *x <= *hi,
            (BaseType::Int, Value::Int(_)) => true,
            (BaseType::Nat, Value::Int(n)) => *n >= 0,
            (BaseType::Bool, Value::Bool(_)) => true,
            (BaseType::Str, Value::Str(_)) => true,
            (BaseType::Categorical { labels }, Value::Str(s)) => labels.iter().any(|l| l == s),
            _ => false,
        }
    }

    /// Convert a value into this type's representation where that is lossless
    /// (integers into continuous columns).
    pub fn coerce(&self, v: Value) -> Value {
        match (self, v) {
            (t, Value::Int(n)) if t.is_continuous() => Value::Real(n as f64),
            (_, v) => v,
        }
    }

    /// Numeric subtyping: Nat ≤ Int ≤ Real, PosReal ≤ Real, Ranged ≤ Real.
    pub fn is_subtype_of(&self, other: &BaseType) -> bool {
        if self == other {
            return true;
        }
        matches!(
            (self, other),
            (BaseType::Nat, BaseType::Int)
                | (BaseType::Nat | BaseType::Int, BaseType::Real)
                | (BaseType::PosReal | BaseType::Ranged { .. }, BaseType::Real)
        )
    }
}

impl fmt::Display for BaseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseType::Real => write!(f, "real"),
            BaseType::PosReal => write!(f, "posreal"),
            BaseType::Ranged { lo, hi } => write!(f, "ranged({lo},{hi})"),
            BaseType::Int => write!(f, "int"),
            BaseType::Nat => write!(f, "nat"),
            BaseType::Bool => write!(f, "bool"),
            BaseType::Str => write!(f, "str"),
            BaseType::Categorical { labels } => write!(f, "categorical({})", labels.join("|")),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Real(f64),
    Str(String),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(n) => Some(*n as f64),
            Value::Real(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn real(x: f64) -> Value {
        if x.is_nan() {
            Value::Null
        } else {
            Value::Real(x)
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Bool(_) => 1,
            Value::Int(_) => 2,
            Value::Real(_) => 3,
            Value::Str(_) => 4,
        }
    }

    /// Cell text used by CSV output. Null renders as the empty string.
    pub fn render(&self) -> String {
        match self {
            Value::Null => String::new(),
            other => other.to_string(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => write!(f, "NULL"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Real(x) => write!(f, "{x:?}"),
            Value::Str(s) => write!(f, "{s}"),
        }
    }
}

// Reals compare bitwise so values can key hash maps; -0.0 is folded into 0.0.
fn real_bits(x: f64) -> u64 {
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Null, Value::Null) => true,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Real(a), Value::Real(b)) => real_bits(*a) == real_bits(*b),
            (Value::Str(a), Value::Str(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Null => {}
            Value::Bool(b) => b.hash(state),
            Value::Int(n) => n.hash(state),
            Value::Real(x) => real_bits(*x).hash(state),
            Value::Str(s) => s.hash(state),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Real(a), Value::Real(b)) => {
                if real_bits(*a) == real_bits(*b) {
                    Ordering::Equal
                } else {
                    a.total_cmp(b)
                }
            }
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Log,
    Exp,
    Sqrt,
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    And,
    Or,
}

impl Op {
    pub fn symbol(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
            Op::Neg => "-",
            Op::Log => "LOG",
            Op::Exp => "EXP",
            Op::Sqrt => "SQRT",
            Op::Eq => "=",
            Op::Ne => "<>",
            Op::Lt => "<",
            Op::Gt => ">",
            Op::Le => "<=",
            Op::Ge => ">=",
            Op::And => "AND",
            Op::Or => "OR",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Op::Neg | Op::Log | Op::Exp | Op::Sqrt => 1,
            _ => 2,
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, Op::Eq | Op::Ne | Op::Lt | Op::Gt | Op::Le | Op::Ge)
    }

    pub fn function_name(name: &str) -> Option<Op> {
        match name.to_ascii_uppercase().as_str() {
            "LOG" | "LN" => Some(Op::Log),
            "EXP" => Some(Op::Exp),
            "SQRT" => Some(Op::Sqrt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("operator {op}: {message}")]
pub struct OpError {
    pub op: &'static str,
    pub message: String,
}

fn op_err(op: Op, message: impl Into<String>) -> OpError {
    OpError {
        op: op.symbol(),
        message: message.into(),
    }
}

/// Apply a scalar operator with Null lifting. Division by zero and results
/// outside a function's domain (NaN) are Null.
pub fn op_apply(op: Op, args: &[Value]) -> Result<Value, OpError> {
    if args.len() != op.arity() {
        return Err(op_err(op, format!("expected {} arguments, got {}", op.arity(), args.len())));
    }
    if args.iter().any(Value::is_null) {
        return Ok(Value::Null);
    }
    match op {
        Op::Neg => match &args[0] {
            Value::Int(n) => n
                .checked_neg()
                .map(Value::Int)
                .ok_or_else(|| op_err(op, "integer overflow")),
            Value::Real(x) => Ok(Value::Real(-x)),
            v => Err(op_err(op, format!("non-numeric argument {v}"))),
        },
        Op::Log | Op::Exp | Op::Sqrt => {
            let x = args[0]
                .as_f64()
                .ok_or_else(|| op_err(op, format!("non-numeric argument {}", args[0])))?;
            let y = match op {
                Op::Log => x.ln(),
                Op::Exp => x.exp(),
                _ => x.sqrt(),
            };
            Ok(Value::real(y))
        }
        Op::Add | Op::Sub | Op::Mul => arith(op, &args[0], &args[1]),
        Op::Div => {
            let (a, b) = numeric_pair(op, &args[0], &args[1])?;
            if b == 0.0 {
                Ok(Value::Null)
            } else {
                Ok(Value::real(a / b))
            }
        }
        Op::And | Op::Or => {
            let (a, b) = match (&args[0], &args[1]) {
                (Value::Bool(a), Value::Bool(b)) => (*a, *b),
                (a, b) => return Err(op_err(op, format!("non-boolean arguments {a}, {b}"))),
            };
            Ok(Value::Bool(if op == Op::And { a && b } else { a || b }))
        }
        Op::Eq | Op::Ne => {
            let eq = values_equal(&args[0], &args[1])
                .ok_or_else(|| op_err(op, format!("cannot compare {} with {}", args[0], args[1])))?;
            Ok(Value::Bool(if op == Op::Eq { eq } else { !eq }))
        }
        Op::Lt | Op::Gt | Op::Le | Op::Ge => {
            let ord = match (&args[0], &args[1]) {
                (Value::Int(x), Value::Int(y)) => x.cmp(y),
                (a, b) => {
                    let (x, y) = numeric_pair(op, a, b)?;
                    x.total_cmp(&y)
                }
            };
            let r = match op {
                Op::Lt => ord == Ordering::Less,
                Op::Gt => ord == Ordering::Greater,
                Op::Le => ord != Ordering::Greater,
                _ => ord != Ordering::Less,
            };
            Ok(Value::Bool(r))
        }
    }
}

/// Equality across compatible tags; `None` when the tags cannot be compared.
pub fn values_equal(a: &Value, b: &Value) -> Option<bool> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Some(x == y),
        (Value::Int(_) | Value::Real(_), Value::Int(_) | Value::Real(_)) => {
            Some(a.as_f64() == b.as_f64())
        }
        (Value::Bool(x), Value::Bool(y)) => Some(x == y),
        (Value::Str(x), Value::Str(y)) => Some(x == y),
        _ => None,
    }
}

fn numeric_pair(op: Op, a: &Value, b: &Value) -> Result<(f64, f64), OpError> {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => Ok((x, y)),
        _ => Err(op_err(op, format!("non-numeric arguments {a}, {b}"))),
    }
}

fn arith(op: Op, a: &Value, b: &Value) -> Result<Value, OpError> {
    if let (Value::Int(x), Value::Int(y)) = (a, b) {
        let r = match op {
            Op::Add => x.checked_add(*y),
            Op::Sub => x.checked_sub(*y),
            _ => x.checked_mul(*y),
        };
        return r.map(Value::Int).ok_or_else(|| op_err(op, "integer overflow"));
    }
    let (x, y) = numeric_pair(op, a, b)?;
    let r = match op {
        Op::Add => x + y,
        Op::Sub => x - y,
        _ => x * y,
    };
    Ok(Value::real(r))
}

/// Static result type of an operator. `None` stands for the type of a bare
/// Null literal, which unifies with anything.
pub fn op_result_type(op: Op, args: &[Option<BaseType>]) -> Result<Option<BaseType>, String> {
    let numeric = |t: &Option<BaseType>| t.as_ref().is_none_or(BaseType::is_numeric);
    let integral = |t: &Option<BaseType>| t.as_ref().is_some_and(BaseType::is_integral);
    let nat = |t: &Option<BaseType>| matches!(t, Some(BaseType::Nat));
    let show = |t: &Option<BaseType>| t.as_ref().map_or("null".to_string(), |t| t.to_string());
    match op {
        Op::Add | Op::Mul | Op::Sub => {
            if !args.iter().all(numeric) {
                return Err(format!("{} needs numeric arguments, got {}, {}", op.symbol(), show(&args[0]), show(&args[1])));
            }
            Ok(Some(if args.iter().all(nat) && op != Op::Sub {
                BaseType::Nat
            } else if args.iter().all(integral) {
                BaseType::Int
            } else {
                BaseType::Real
            }))
        }
        Op::Div | Op::Log | Op::Sqrt | Op::Exp | Op::Neg => {
            if !args.iter().all(numeric) {
                return Err(format!("{} needs numeric arguments, got {}", op.symbol(), show(&args[0])));
            }
            Ok(Some(match op {
                Op::Exp => BaseType::PosReal,
                Op::Neg if integral(&args[0]) => BaseType::Int,
                _ => BaseType::Real,
            }))
        }
        Op::Lt | Op::Gt | Op::Le | Op::Ge => {
            if !args.iter().all(numeric) {
                return Err(format!(
                    "{} is defined on numeric types only, got {}, {}",
                    op.symbol(),
                    show(&args[0]),
                    show(&args[1])
                ));
            }
            Ok(Some(BaseType::Bool))
        }
        Op::Eq | Op::Ne => {
            if let (Some(a), Some(b)) = (&args[0], &args[1]) {
                if !comparable(a, b) {
                    return Err(format!("cannot compare {a} with {b}"));
                }
            }
            Ok(Some(BaseType::Bool))
        }
        Op::And | Op::Or => {
            if !args.iter().all(|t| t.as_ref().is_none_or(|t| *t == BaseType::Bool)) {
                return Err(format!("{} needs boolean arguments, got {}, {}", op.symbol(), show(&args[0]), show(&args[1])));
            }
            Ok(Some(BaseType::Bool))
        }
    }
}

/// Whether two types may be compared for equality.
pub fn comparable(a: &BaseType, b: &BaseType) -> bool {
    (a.is_numeric() && b.is_numeric())
        || (a.is_textual() && b.is_textual())
        || (*a == BaseType::Bool && *b == BaseType::Bool)
}
