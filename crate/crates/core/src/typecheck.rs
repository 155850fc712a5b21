//! Type checking under a global context (catalog tables and models plus
//! WITH bindings) and an ordered local context of row scopes.
//!
//! Two modes. `Permissive` accepts nested event-0 conditioning and
//! probability targets on conditioned columns; normalization removes both.
//! `Strict` enforces the formal rules and is run again after normalizing.

use std::collections::BTreeSet;

use crate::parser::ast::*;
use crate::table::{Catalog, Column, EntryKind};
use crate::value::{op_result_type, BaseType, Op, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Permissive,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    UnknownIdentifier,
    UnknownColumn,
    QualifierMismatch,
    JoinDisjointness,
    UnionSchema,
    DuplicateColumn,
    Linearity,
    ContinuousEquality,
    CondvarOverlap,
    RepeatedEvent0,
    WhereNotBool,
    LimitNotNat,
    Operator,
    Aggregate,
    MutualInfo,
    Desugar,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("type error [{rule:?}] at {span}: {message}")]
pub struct TypeError {
    pub rule: Rule,
    pub message: String,
    pub span: Span,
}

fn fail<T>(rule: Rule, span: Span, message: impl Into<String>) -> Result<T, TypeError> {
    Err(TypeError { rule, message: message.into(), span })
}

pub type TResult<T> = Result<T, TypeError>;

#[derive(Debug, Clone, PartialEq)]
pub struct TableTy {
    pub id: Option<String>,
    pub columns: Vec<Column>,
}

impl TableTy {
    pub fn column(&self, name: &str) -> Option<(usize, &Column)> {
        self.columns.iter().enumerate().find(|(_, c)| c.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelTy {
    /// Identifier rows of the model are referred to by (after RENAME).
    pub id: String,
    /// Catalog model underneath.
    pub base: String,
    pub columns: Vec<Column>,
    pub condvars: BTreeSet<String>,
}

impl ModelTy {
    pub fn column(&self, name: &str) -> Option<(usize, &Column)> {
        self.columns.iter().enumerate().find(|(_, c)| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryType {
    Table(TableTy),
    Model(ModelTy),
    Event { level: u8, columns: Vec<String> },
    /// `None` is the type of a bare Null literal.
    Scalar(Option<BaseType>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypedQuery {
    pub query: Query,
    pub ty: QueryType,
}

pub fn typecheck(q: &Query, catalog: &Catalog, mode: Mode) -> TResult<TypedQuery> {
    let mut c = Checker::new(catalog, mode);
    let ty = match q {
        Query::Table(t) => QueryType::Table(c.table(t, &[])?),
        Query::Scalar(e) => QueryType::Scalar(c.scalar(e, &[])?),
    };
    Ok(TypedQuery { query: q.clone(), ty })
}

/// Columns an event or event-0 constrains.
pub fn vars(c: &Cond) -> BTreeSet<String> {
    c.vars().into_iter().collect()
}

/// Columns fixed by event-0 conditioning somewhere in `m`.
pub fn condvars(m: &ModelExpr) -> BTreeSet<String> {
    match &m.kind {
        ModelKind::Id(_) => BTreeSet::new(),
        ModelKind::Rename(m, _) => condvars(m),
        ModelKind::Given(m, c) => {
            let mut s = condvars(m);
            if c.is_event0() {
                s.extend(vars(c));
            }
            s
        }
    }
}

/// Result type of an aggregate applied to a column of type `arg`.
pub fn aggregate_type(agg: Aggregate, arg: Option<&BaseType>) -> Result<BaseType, String> {
    use BaseType as B;
    let Some(arg) = arg else {
        return match agg {
            Aggregate::Count | Aggregate::CountDistinct => Ok(B::Nat),
            _ => Err(format!("{} needs an argument", agg.name())),
        };
    };
    let bad = || Err(format!("{} is not defined on {arg}", agg.name()));
    match agg {
        Aggregate::Sum => match arg {
            B::Int | B::Nat => Ok(arg.clone()),
            t if t.is_continuous() => Ok(B::Real),
            _ => bad(),
        },
        Aggregate::Avg => match arg {
            B::Int | B::Nat => Ok(B::Real),
            t if t.is_continuous() => Ok(arg.clone()),
            _ => bad(),
        },
        Aggregate::Max | Aggregate::Min => match arg {
            B::Int | B::Nat | B::Bool => Ok(arg.clone()),
            t if t.is_continuous() => Ok(arg.clone()),
            _ => bad(),
        },
        Aggregate::Count | Aggregate::CountDistinct => Ok(B::Nat),
        Aggregate::Concat => match arg {
            t if t.is_textual() => Ok(B::Str),
            _ => bad(),
        },
    }
}

/// Typing state: the catalog, WITH bindings in scope and the mode. Local
/// row scopes are passed explicitly, innermost last.
pub struct Checker<'a> {
    catalog: &'a Catalog,
    mode: Mode,
    bindings: Vec<(String, Vec<Column>)>,
}

impl<'a> Checker<'a> {
    pub fn new(catalog: &'a Catalog, mode: Mode) -> Self {
        Checker { catalog, mode, bindings: Vec::new() }
    }

    pub fn push_binding(&mut self, name: &str, columns: Vec<Column>) {
        self.bindings.push((name.to_string(), columns));
    }

    pub fn pop_binding(&mut self) {
        self.bindings.pop();
    }

    fn table_columns(&self, name: &str) -> Option<Vec<Column>> {
        if let Some((_, c)) = self.bindings.iter().rev().find(|(n, _)| n == name) {
            return Some(c.clone());
        }
        self.catalog.table(name).map(<[Column]>::to_vec)
    }

    pub fn table(&mut self, t: &TableExpr, delta: &[TableTy]) -> TResult<TableTy> {
        let span = t.span;
        match &t.kind {
            TableKind::Id(n) => match self.table_columns(n) {
                Some(columns) => Ok(TableTy { id: Some(n.clone()), columns }),
                None => fail(Rule::UnknownIdentifier, span, format!("unknown table {n}")),
            },
            TableKind::Union(a, b) => {
                let ta = self.table(a, delta)?;
                let tb = self.table(b, delta)?;
                if ta.columns != tb.columns {
                    return fail(
                        Rule::UnionSchema,
                        span,
                        format!("UNION of [{}] and [{}]", ta.names().join(", "), tb.names().join(", ")),
                    );
                }
                Ok(TableTy { id: None, columns: ta.columns })
            }
            TableKind::Join(a, b) => {
                let ta = self.table(a, delta)?;
                let tb = self.table(b, delta)?;
                let columns = disjoint_concat(&ta.columns, &tb.columns, span, "JOIN")?;
                Ok(TableTy { id: None, columns })
            }
            TableKind::Rename(a, n) => {
                let ta = self.table(a, delta)?;
                Ok(TableTy { id: Some(n.clone()), columns: ta.columns })
            }
            TableKind::Dedup(a) => self.table(a, delta),
            TableKind::Duplicate(a, e) => {
                let ta = self.table(a, delta)?;
                self.expect_nat(e, delta, "DUPLICATE count")?;
                Ok(ta)
            }
            TableKind::Where(a, e) => {
                let ta = self.table(a, delta)?;
                match self.scalar(e, &push(delta, &ta))? {
                    None | Some(BaseType::Bool) => Ok(ta),
                    Some(t) => fail(Rule::WhereNotBool, e.span, format!("WHERE predicate has type {t}, expected bool")),
                }
            }
            TableKind::With { binding, name, body } => {
                let tb = match binding.as_ref() {
                    Binding::Table(b) => self.table(b, delta)?,
                    Binding::Model(_) | Binding::Ident(..) => {
                        return fail(Rule::Desugar, span, "WITH binding must be desugared first")
                    }
                };
                self.push_binding(name, tb.columns);
                let r = self.table(body, delta);
                self.pop_binding();
                r
            }
            TableKind::Select { items, from } => {
                let tf = match from {
                    Some(f) => self.table(f, delta)?,
                    None => TableTy { id: None, columns: Vec::new() },
                };
                let inner = push(delta, &tf);
                let mut columns: Vec<Column> = Vec::new();
                for item in items {
                    let SelectItem::Expr { expr, alias: Some(alias) } = item else {
                        return fail(Rule::Desugar, span, "select items must be desugared first");
                    };
                    let ty = self.scalar(expr, &inner)?.unwrap_or(BaseType::Real);
                    if columns.iter().any(|c| &c.name == alias) {
                        return fail(Rule::DuplicateColumn, expr.span, format!("duplicate output column {alias}"));
                    }
                    columns.push(Column::new(alias.clone(), ty));
                }
                Ok(TableTy { id: tf.id, columns })
            }
            TableKind::GroupBy { source, keys, aggs } => {
                let ts = self.table(source, delta)?;
                let inner = push(delta, &ts);
                let mut columns: Vec<Column> = Vec::new();
                for (e, n) in keys {
                    let ty = self.scalar(e, &inner)?.unwrap_or(BaseType::Real);
                    columns.push(Column::new(n.clone(), ty));
                }
                for a in aggs {
                    let arg = match &a.arg {
                        Some(e) => Some(self.scalar(e, &inner)?.unwrap_or(BaseType::Real)),
                        None => None,
                    };
                    let ty = aggregate_type(a.agg, arg.as_ref())
                        .or_else(|m| fail(Rule::Aggregate, a.arg.as_ref().map_or(span, |e| e.span), m))?;
                    columns.push(Column::new(a.name.clone(), ty));
                }
                for (i, c) in columns.iter().enumerate() {
                    if columns[..i].iter().any(|d| d.name == c.name) {
                        return fail(Rule::DuplicateColumn, span, format!("duplicate output column {}", c.name));
                    }
                }
                Ok(TableTy { id: None, columns })
            }
            TableKind::Generate { model, limit } => {
                let tm = self.model(model, delta)?;
                self.expect_nat(limit, delta, "LIMIT")?;
                Ok(TableTy { id: None, columns: tm.columns })
            }
            TableKind::GenerativeJoin { table, model } => {
                let tt = self.table(table, delta)?;
                let tm = self.model(model, &push(delta, &tt))?;
                let columns = disjoint_concat(&tt.columns, &tm.columns, span, "GENERATIVE JOIN")?;
                Ok(TableTy { id: tt.id, columns })
            }
        }
    }

    fn expect_nat(&mut self, e: &ScalarExpr, delta: &[TableTy], what: &str) -> TResult<()> {
        if let ScalarKind::Const(Value::Int(n)) = e.kind {
            if n < 0 {
                return fail(Rule::LimitNotNat, e.span, format!("{what} must be a natural number, got {n}"));
            }
        }
        match self.scalar(e, delta)? {
            Some(BaseType::Nat | BaseType::Int) => Ok(()),
            other => fail(
                Rule::LimitNotNat,
                e.span,
                format!("{what} must be a natural number, got {}", other.map_or("null".into(), |t| t.to_string())),
            ),
        }
    }

    pub fn model(&mut self, m: &ModelExpr, delta: &[TableTy]) -> TResult<ModelTy> {
        match &m.kind {
            ModelKind::Id(n) => match self.catalog.get(n) {
                Some((EntryKind::Model, cols)) => Ok(ModelTy {
                    id: n.clone(),
                    base: n.clone(),
                    columns: cols.to_vec(),
                    condvars: BTreeSet::new(),
                }),
                Some((EntryKind::Table, _)) => fail(Rule::UnknownIdentifier, m.span, format!("{n} is a table, not a model")),
                None => fail(Rule::UnknownIdentifier, m.span, format!("unknown model {n}")),
            },
            ModelKind::Rename(inner, n) => {
                let t = self.model(inner, delta)?;
                Ok(ModelTy { id: n.clone(), ..t })
            }
            ModelKind::Given(inner, c) => {
                let mut t = self.model(inner, delta)?;
                let level = if c.is_event0() { 0 } else { 1 };
                self.cond(c, &t, delta, level)?;
                if level == 0 {
                    let v = vars(c);
                    if self.mode == Mode::Strict && !t.condvars.is_empty() {
                        return fail(
                            Rule::RepeatedEvent0,
                            c.span,
                            format!("model {} is already conditioned on an event-0", t.id),
                        );
                    }
                    t.condvars.extend(v);
                }
                Ok(t)
            }
        }
    }

    /// Checks `c` as a condition on model `m` at the given level and returns
    /// its columns.
    pub fn cond(&mut self, c: &Cond, m: &ModelTy, delta: &[TableTy], level: u8) -> TResult<Vec<String>> {
        let mut cols = Vec::new();
        self.cond_inner(c, m, delta, level, &mut cols)?;
        if level == 0 {
            let mut seen = BTreeSet::new();
            for col in &cols {
                if !seen.insert(col) {
                    return fail(Rule::Linearity, c.span, format!("event-0 constrains {col} more than once"));
                }
            }
        }
        Ok(cols)
    }

    fn cond_inner(
        &mut self,
        c: &Cond,
        m: &ModelTy,
        delta: &[TableTy],
        level: u8,
        cols: &mut Vec<String>,
    ) -> TResult<()> {
        match &c.kind {
            CondKind::And(a, b) | CondKind::Or(a, b) => {
                self.cond_inner(a, m, delta, level, cols)?;
                self.cond_inner(b, m, delta, level, cols)
            }
            CondKind::True => Ok(()),
            CondKind::Bare { .. } | CondKind::Star { .. } => fail(Rule::Desugar, c.span, "condition must be desugared first"),
            CondKind::Atom { model, col, op, rhs } => {
                let Some(q) = model else {
                    return fail(Rule::Desugar, c.span, "condition must be desugared first");
                };
                if *q != m.id {
                    return fail(
                        Rule::QualifierMismatch,
                        c.span,
                        format!("condition refers to {q}.{col} but the model is {}", m.id),
                    );
                }
                let Some((_, column)) = m.column(col) else {
                    return fail(Rule::UnknownColumn, c.span, format!("model {} has no column {col}", m.id));
                };
                let ty = column.ty.clone();
                let rt = self.scalar(rhs, delta)?;
                match op {
                    CmpOp::Eq => {
                        if level == 1 && ty.is_continuous() {
                            return fail(
                                Rule::ContinuousEquality,
                                c.span,
                                format!("{q}.{col} is continuous; equality is only allowed in an event-0"),
                            );
                        }
                        op_result_type(Op::Eq, &[Some(ty), rt]).or_else(|e| fail(Rule::Operator, c.span, e))?;
                    }
                    CmpOp::Lt | CmpOp::Gt => {
                        op_result_type(Op::Lt, &[Some(ty), rt]).or_else(|e| fail(Rule::Operator, c.span, e))?;
                    }
                }
                cols.push(col.clone());
                Ok(())
            }
        }
    }

    pub fn scalar(&mut self, e: &ScalarExpr, delta: &[TableTy]) -> TResult<Option<BaseType>> {
        match &e.kind {
            ScalarKind::Const(v) => Ok(match v {
                Value::Null => None,
                Value::Bool(_) => Some(BaseType::Bool),
                Value::Int(n) if *n >= 0 => Some(BaseType::Nat),
                Value::Int(_) => Some(BaseType::Int),
                Value::Real(_) => Some(BaseType::Real),
                Value::Str(_) => Some(BaseType::Str),
            }),
            ScalarKind::Col(c) => resolve(c, delta).map(|(_, _, col)| Some(col.ty.clone())),
            ScalarKind::Op(op, args) => {
                let tys = args.iter().map(|a| self.scalar(a, delta)).collect::<TResult<Vec<_>>>()?;
                op_result_type(*op, &tys).or_else(|m| fail(Rule::Operator, e.span, m))
            }
            ScalarKind::Probability { event, model, .. } => {
                let tm = self.model(model, delta)?;
                let level = if event.is_event0() { 0 } else { 1 };
                let cols = self.cond(event, &tm, delta, level)?;
                if level == 0 {
                    if self.mode == Mode::Strict {
                        if let Some(c) = cols.iter().find(|c| tm.condvars.contains(*c)) {
                            return fail(
                                Rule::CondvarOverlap,
                                event.span,
                                format!("{c} is conditioned by an event-0 of the model and cannot be a target"),
                            );
                        }
                    }
                    Ok(Some(BaseType::PosReal))
                } else {
                    Ok(Some(BaseType::Ranged { lo: 0.0, hi: 1.0 }))
                }
            }
            ScalarKind::MutualInfo { a, b, cond, model } => {
                if cond.is_some() {
                    return fail(Rule::Desugar, e.span, "MUTUAL INFO condition must be desugared first");
                }
                let tm = self.model(model, delta)?;
                let mut seen = BTreeSet::new();
                for (side, cols) in [("first", a), ("second", b)] {
                    if cols.is_empty() {
                        return fail(Rule::MutualInfo, e.span, format!("{side} column set is empty"));
                    }
                    for c in cols {
                        if c.qual.as_deref() != Some(tm.id.as_str()) {
                            return fail(Rule::QualifierMismatch, c.span, format!("column {} is not of model {}", c.col, tm.id));
                        }
                        if tm.column(&c.col).is_none() {
                            return fail(Rule::UnknownColumn, c.span, format!("model {} has no column {}", tm.id, c.col));
                        }
                        if tm.condvars.contains(&c.col) {
                            return fail(Rule::MutualInfo, c.span, format!("{} is conditioned by an event-0", c.col));
                        }
                        if !seen.insert(c.col.clone()) {
                            return fail(Rule::MutualInfo, c.span, format!("column sets overlap on {}", c.col));
                        }
                    }
                }
                Ok(Some(BaseType::Real))
            }
            ScalarKind::Agg(..) => fail(Rule::Aggregate, e.span, "aggregate outside GROUP BY"),
        }
    }
}

/// Finds a column reference in the local context: qualified references
/// search scopes innermost first, bare ones look at the innermost scope.
/// Returns (scope index, column index, column).
pub fn resolve<'d>(c: &ColRef, delta: &'d [TableTy]) -> TResult<(usize, usize, &'d Column)> {
    let show = || match &c.qual {
        Some(q) => format!("{q}.{}", c.col),
        None => c.col.clone(),
    };
    match &c.qual {
        Some(q) => {
            for (d, t) in delta.iter().enumerate().rev() {
                if t.id.as_deref() == Some(q.as_str()) {
                    if let Some((i, col)) = t.column(&c.col) {
                        return Ok((d, i, col));
                    }
                    return fail(Rule::UnknownColumn, c.span, format!("unknown column {}", show()));
                }
            }
            fail(Rule::UnknownIdentifier, c.span, format!("no table {q} in scope for {}", show()))
        }
        None => match delta.last().and_then(|t| t.column(&c.col)) {
            Some((i, col)) => Ok((delta.len() - 1, i, col)),
            None => fail(Rule::UnknownColumn, c.span, format!("unknown column {}", show())),
        },
    }
}

fn push(delta: &[TableTy], t: &TableTy) -> Vec<TableTy> {
    let mut v = delta.to_vec();
    v.push(t.clone());
    v
}

fn disjoint_concat(a: &[Column], b: &[Column], span: Span, what: &str) -> TResult<Vec<Column>> {
    if let Some(c) = b.iter().find(|c| a.iter().any(|d| d.name == c.name)) {
        return fail(Rule::JoinDisjointness, span, format!("{what} operands share column {}", c.name));
    }
    let mut cols = a.to_vec();
    cols.extend(b.iter().cloned());
    Ok(cols)
}
