//! Surface syntax tree. Every node carries a source span; spans are ignored
//! by structural equality.

use crate::value::{Op, Value};

#[derive(Debug, Clone, Copy, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Span {
    pub fn to(self, other: Span) -> Span {
        Span { end: other.end.max(self.end), ..self }
    }
}

impl std::fmt::Display for Span {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    Table(TableExpr),
    Scalar(ScalarExpr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableExpr {
    pub kind: TableKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableKind {
    Id(String),
    Union(Box<TableExpr>, Box<TableExpr>),
    Join(Box<TableExpr>, Box<TableExpr>),
    Rename(Box<TableExpr>, String),
    Dedup(Box<TableExpr>),
    Duplicate(Box<TableExpr>, ScalarExpr),
    Where(Box<TableExpr>, ScalarExpr),
    With { binding: Box<Binding>, name: String, body: Box<TableExpr> },
    Select { items: Vec<SelectItem>, from: Option<Box<TableExpr>> },
    GroupBy { source: Box<TableExpr>, keys: Vec<(ScalarExpr, String)>, aggs: Vec<AggItem> },
    Generate { model: ModelExpr, limit: ScalarExpr },
    GenerativeJoin { table: Box<TableExpr>, model: ModelExpr },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Binding {
    Table(TableExpr),
    Model(ModelExpr),
    /// A bare identifier; resolved against the catalog during desugaring.
    Ident(String, Span),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Star { except: Vec<ColRef>, span: Span },
    Expr { expr: ScalarExpr, alias: Option<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggregate {
    Sum,
    Avg,
    Max,
    Min,
    Count,
    CountDistinct,
    Concat,
}

impl Aggregate {
    pub fn from_name(name: &str) -> Option<Aggregate> {
        Some(match name.to_ascii_uppercase().as_str() {
            "SUM" => Aggregate::Sum,
            "AVG" => Aggregate::Avg,
            "MAX" => Aggregate::Max,
            "MIN" => Aggregate::Min,
            "COUNT" => Aggregate::Count,
            "COUNT_DISTINCT" | "COUNTDISTINCT" => Aggregate::CountDistinct,
            "CONCAT" => Aggregate::Concat,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Aggregate::Sum => "SUM",
            Aggregate::Avg => "AVG",
            Aggregate::Max => "MAX",
            Aggregate::Min => "MIN",
            Aggregate::Count => "COUNT",
            Aggregate::CountDistinct => "COUNT_DISTINCT",
            Aggregate::Concat => "CONCAT",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggItem {
    pub agg: Aggregate,
    /// `None` is `COUNT(*)`.
    pub arg: Option<ScalarExpr>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelExpr {
    pub kind: ModelKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Id(String),
    Given(Box<ModelExpr>, Cond),
    Rename(Box<ModelExpr>, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Lt,
    Gt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
        }
    }
}

/// Events and events-0 share one tree; the level is decided by shape
/// (a conjunction of equalities is an event-0).
#[derive(Debug, Clone, PartialEq)]
pub struct Cond {
    pub kind: CondKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CondKind {
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
    Atom { model: Option<String>, col: String, op: CmpOp, rhs: Box<ScalarExpr> },
    /// Shorthand `col`: the model column equals the same-named table column.
    Bare { qual: Option<String>, col: String },
    Star { except: Vec<ColRef> },
    /// Internal sentinel of the normalizer; never parsed or printed.
    True,
}

impl Cond {
    pub fn and(a: Cond, b: Cond) -> Cond {
        let span = a.span.to(b.span);
        Cond { kind: CondKind::And(Box::new(a), Box::new(b)), span }
    }

    /// Top-level conjuncts, left to right.
    pub fn conjuncts(&self) -> Vec<&Cond> {
        match &self.kind {
            CondKind::And(a, b) => {
                let mut v = a.conjuncts();
                v.extend(b.conjuncts());
                v
            }
            _ => vec![self],
        }
    }

    /// Left-nested conjunction of `parts`; `None` when empty.
    pub fn conjoin(parts: Vec<Cond>) -> Option<Cond> {
        parts.into_iter().reduce(Cond::and)
    }

    /// An event-0 is a conjunction of equality atoms.
    pub fn is_event0(&self) -> bool {
        match &self.kind {
            CondKind::And(a, b) => a.is_event0() && b.is_event0(),
            CondKind::Atom { op, .. } => *op == CmpOp::Eq,
            CondKind::True => true,
            _ => false,
        }
    }

    /// Model columns mentioned by atoms at this level (not inside scalars).
    pub fn vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match &self.kind {
            CondKind::And(a, b) | CondKind::Or(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            CondKind::Atom { col, .. } | CondKind::Bare { col, .. } => {
                if !out.contains(col) {
                    out.push(col.clone());
                }
            }
            CondKind::Star { .. } | CondKind::True => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColRef {
    pub qual: Option<String>,
    pub col: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarExpr {
    pub kind: ScalarKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScalarKind {
    Const(Value),
    Col(ColRef),
    Op(Op, Vec<ScalarExpr>),
    Probability { event: Cond, model: ModelExpr, density: bool },
    MutualInfo { a: Vec<ColRef>, b: Vec<ColRef>, cond: Option<Cond>, model: ModelExpr },
    /// Aggregate call in a SELECT list; removed when the parser rewrites the
    /// legacy GROUP BY form.
    Agg(Aggregate, Option<Box<ScalarExpr>>),
}

impl ScalarExpr {
    pub fn constant(v: Value, span: Span) -> Self {
        ScalarExpr { kind: ScalarKind::Const(v), span }
    }

    pub fn col(qual: Option<&str>, col: &str, span: Span) -> Self {
        ScalarExpr {
            kind: ScalarKind::Col(ColRef { qual: qual.map(str::to_string), col: col.to_string(), span }),
            span,
        }
    }

    pub fn contains_agg(&self) -> bool {
        match &self.kind {
            ScalarKind::Agg(..) => true,
            ScalarKind::Op(_, args) => args.iter().any(ScalarExpr::contains_agg),
            _ => false,
        }
    }
}

impl TableExpr {
    pub fn new(kind: TableKind, span: Span) -> Self {
        TableExpr { kind, span }
    }
}

impl ModelExpr {
    pub fn new(kind: ModelKind, span: Span) -> Self {
        ModelExpr { kind, span }
    }

    /// The identifier rows of this model are referred to by.
    pub fn ident(&self) -> &str {
        match &self.kind {
            ModelKind::Id(id) => id,
            ModelKind::Given(m, _) => m.ident(),
            ModelKind::Rename(_, id) => id,
        }
    }

    /// The catalog model at the bottom of the expression.
    pub fn base(&self) -> &str {
        match &self.kind {
            ModelKind::Id(id) => id,
            ModelKind::Given(m, _) | ModelKind::Rename(m, _) => m.base(),
        }
    }
}

/// A parsed statement: the query plus result-level ORDER BY / LIMIT
/// directives applied by the session after evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub query: Query,
    pub order_by: Vec<OrderKey>,
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderKey {
    pub column: String,
    pub descending: bool,
}
