//! Typing of lowered terms, used as an assertion after lowering.

use std::collections::BTreeSet;

use super::{AmiCall, Event0L, EventL, Term};
use crate::parser::ast::CmpOp;
use crate::table::{Catalog, Column};
use crate::typecheck::aggregate_type;
use crate::value::{comparable, op_result_type, BaseType, Value};

/// `None` entries are the type of a bare Null.
#[derive(Debug, Clone, PartialEq)]
pub enum LType {
    Scalar(Option<BaseType>),
    Tuple(Vec<Option<BaseType>>),
    Bag(Vec<Option<BaseType>>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("lowered term ill-typed: {message} in {term}")]
pub struct LoweredTypeError {
    pub message: String,
    pub term: String,
}

type R<T> = Result<T, LoweredTypeError>;

fn fail<T>(t: &Term, message: impl Into<String>) -> R<T> {
    let mut term = super::print_term(t).lines().next().unwrap_or("").trim().to_string();
    if term.len() > 80 {
        term.truncate(80);
    }
    Err(LoweredTypeError { message: message.into(), term })
}

pub fn lowered_typecheck(t: &Term, catalog: &Catalog) -> R<LType> {
    Ctx { catalog, vars: Vec::new(), tables: Vec::new() }.term(t)
}

struct Ctx<'a> {
    catalog: &'a Catalog,
    vars: Vec<(String, Vec<Option<BaseType>>)>,
    tables: Vec<(String, Vec<Option<BaseType>>)>,
}

fn some(cols: &[Column]) -> Vec<Option<BaseType>> {
    cols.iter().map(|c| Some(c.ty.clone())).collect()
}

fn compatible(a: &Option<BaseType>, b: &Option<BaseType>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a == b || (a.is_numeric() && b.is_numeric()) || (a.is_textual() && b.is_textual()),
        _ => true,
    }
}

impl Ctx<'_> {
    fn scalar(&mut self, t: &Term) -> R<Option<BaseType>> {
        match self.term(t)? {
            LType::Scalar(s) => Ok(s),
            other => fail(t, format!("expected a scalar, got {other:?}")),
        }
    }

    fn bag(&mut self, t: &Term) -> R<Vec<Option<BaseType>>> {
        match self.term(t)? {
            LType::Bag(s) => Ok(s),
            other => fail(t, format!("expected a bag, got {other:?}")),
        }
    }

    fn with_var<T>(&mut self, var: &str, ty: Vec<Option<BaseType>>, f: impl FnOnce(&mut Self) -> R<T>) -> R<T> {
        self.vars.push((var.to_string(), ty));
        let r = f(self);
        self.vars.pop();
        r
    }

    fn term(&mut self, t: &Term) -> R<LType> {
        Ok(match t {
            Term::Const(v) => LType::Scalar(match v {
                Value::Null => None,
                Value::Bool(_) => Some(BaseType::Bool),
                Value::Int(n) if *n >= 0 => Some(BaseType::Nat),
                Value::Int(_) => Some(BaseType::Int),
                Value::Real(_) => Some(BaseType::Real),
                Value::Str(_) => Some(BaseType::Str),
            }),
            Term::Var(x) => match self.vars.iter().rev().find(|(n, _)| n == x) {
                Some((_, ty)) => LType::Tuple(ty.clone()),
                None => return fail(t, format!("unbound variable {x}")),
            },
            Term::Table(n) => match self.tables.iter().rev().find(|(m, _)| m == n) {
                Some((_, ty)) => LType::Bag(ty.clone()),
                None => match self.catalog.table(n) {
                    Some(cols) => LType::Bag(some(cols)),
                    None => return fail(t, format!("unknown table {n}")),
                },
            },
            Term::Tuple(fields) => LType::Tuple(fields.iter().map(|f| self.scalar(f)).collect::<R<_>>()?),
            Term::Proj(inner, i) => match self.term(inner)? {
                LType::Tuple(ty) if *i < ty.len() => LType::Scalar(ty[*i].clone()),
                LType::Tuple(ty) => return fail(t, format!("projection {i} of a {}-tuple", ty.len())),
                other => return fail(t, format!("projection of non-tuple {other:?}")),
            },
            Term::Op(op, args) => {
                let tys = args.iter().map(|a| self.scalar(a)).collect::<R<Vec<_>>>()?;
                match op_result_type(*op, &tys) {
                    Ok(ty) => LType::Scalar(ty),
                    Err(m) => return fail(t, m),
                }
            }
            Term::Exp(inner) => {
                let ty = self.scalar(inner)?;
                if !ty.as_ref().is_none_or(BaseType::is_numeric) {
                    return fail(t, "exp of a non-numeric value");
                }
                LType::Scalar(Some(BaseType::PosReal))
            }
            Term::Singleton(inner) => match self.term(inner)? {
                LType::Tuple(ty) => LType::Bag(ty),
                other => return fail(t, format!("singleton of non-tuple {other:?}")),
            },
            Term::Map { var, body, src } => {
                let s = self.bag(src)?;
                match self.with_var(var, s, |c| c.term(body))? {
                    LType::Tuple(ty) => LType::Bag(ty),
                    other => return fail(t, format!("map body must be a tuple, got {other:?}")),
                }
            }
            Term::Filter { var, pred, src } => {
                let s = self.bag(src)?;
                let p = self.with_var(var, s.clone(), |c| c.scalar(pred))?;
                if !matches!(p, None | Some(BaseType::Bool)) {
                    return fail(t, "filter predicate must be boolean");
                }
                LType::Bag(s)
            }
            Term::MapReduce { var, body, src } => {
                let s = self.bag(src)?;
                LType::Bag(self.with_var(var, s, |c| c.bag(body))?)
            }
            Term::Replicate(n, b) => {
                if !matches!(self.scalar(n)?, None | Some(BaseType::Nat | BaseType::Int)) {
                    return fail(t, "replicate count must be a natural number");
                }
                LType::Bag(self.bag(b)?)
            }
            Term::Join(a, b) => {
                let mut s = self.bag(a)?;
                s.extend(self.bag(b)?);
                LType::Bag(s)
            }
            Term::Union(a, b) => {
                let (x, y) = (self.bag(a)?, self.bag(b)?);
                if x.len() != y.len() || !x.iter().zip(&y).all(|(p, q)| compatible(p, q)) {
                    return fail(t, "union of bags with different row types");
                }
                LType::Bag(x)
            }
            Term::Dedup(a) => LType::Bag(self.bag(a)?),
            Term::Duplicate(a, n) => {
                if !matches!(self.scalar(n)?, None | Some(BaseType::Nat | BaseType::Int)) {
                    return fail(t, "duplicate count must be a natural number");
                }
                LType::Bag(self.bag(a)?)
            }
            Term::Let { name, bound, body } => {
                let b = self.bag(bound)?;
                self.tables.push((name.clone(), b));
                let r = self.term(body);
                self.tables.pop();
                r?
            }
            Term::GroupBy { var, src, keys, aggs } => {
                let s = self.bag(src)?;
                self.with_var(var, s, |c| {
                    let mut out = Vec::new();
                    for k in keys {
                        out.push(c.scalar(k)?);
                    }
                    for (agg, arg) in aggs {
                        let a = match arg {
                            Some(e) => Some(c.scalar(e)?.unwrap_or(BaseType::Real)),
                            None => None,
                        };
                        match aggregate_type(*agg, a.as_ref()) {
                            Ok(ty) => out.push(Some(ty)),
                            Err(m) => return fail(t, m),
                        }
                    }
                    Ok(LType::Bag(out))
                })?
            }
            Term::Simulate(call) => LType::Tuple(some(&self.call(t, call)?)),
            Term::Logpdf(call, target) => {
                let cols = self.call(t, call)?;
                self.event0(t, target, &cols)?;
                LType::Scalar(Some(BaseType::Real))
            }
            Term::Prob(call, target) => {
                let cols = self.call(t, call)?;
                self.event(t, target, &cols)?;
                LType::Scalar(Some(BaseType::Ranged { lo: 0.0, hi: 1.0 }))
            }
            Term::MutualInfo(call, a, b) => {
                let cols = self.call(t, call)?;
                if a.is_empty() || b.is_empty() || a.iter().any(|i| b.contains(i)) {
                    return fail(t, "mutual information needs two disjoint nonempty column sets");
                }
                if a.iter().chain(b).any(|i| *i >= cols.len()) {
                    return fail(t, "mutual information column out of range");
                }
                LType::Scalar(Some(BaseType::Real))
            }
        })
    }

    fn call(&mut self, t: &Term, call: &AmiCall) -> R<Vec<Column>> {
        let Some(cols) = self.catalog.model(&call.model) else {
            return fail(t, format!("unknown model {}", call.model));
        };
        let cols = cols.to_vec();
        self.event0(t, &call.c0, &cols)?;
        self.event(t, &call.c1, &cols)?;
        Ok(cols)
    }

    fn atom(&mut self, t: &Term, col: usize, op: CmpOp, v: &Term, cols: &[Column]) -> R<()> {
        let Some(c) = cols.get(col) else { return fail(t, format!("column position {col} out of range")) };
        let vt = self.scalar(v)?;
        let ok = match (&vt, op) {
            (None, _) => true,
            (Some(v), CmpOp::Eq) => comparable(&c.ty, v),
            (Some(v), _) => c.ty.is_numeric() && v.is_numeric(),
        };
        if !ok {
            return fail(t, format!("condition on {} compares with {}", c.name, vt.map_or("null".into(), |v| v.to_string())));
        }
        Ok(())
    }

    fn event0(&mut self, t: &Term, e: &Event0L, cols: &[Column]) -> R<()> {
        let mut seen = BTreeSet::new();
        for (i, v) in &e.0 {
            if !seen.insert(*i) {
                return fail(t, "event-0 constrains a column twice");
            }
            self.atom(t, *i, CmpOp::Eq, v, cols)?;
        }
        Ok(())
    }

    fn event(&mut self, t: &Term, e: &EventL, cols: &[Column]) -> R<()> {
        match e {
            EventL::True => Ok(()),
            EventL::And(a, b) | EventL::Or(a, b) => {
                self.event(t, a, cols)?;
                self.event(t, b, cols)
            }
            EventL::Atom(i, op, v) => self.atom(t, *i, *op, v, cols),
        }
    }
}

/// Variables occurring free in `t`.
pub fn free_vars(t: &Term) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    collect(t, &mut Vec::new(), &mut out);
    out
}

fn collect(t: &Term, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    let under = |var: &str, body: &Term, bound: &mut Vec<String>, out: &mut BTreeSet<String>| {
        bound.push(var.to_string());
        collect(body, bound, out);
        bound.pop();
    };
    match t {
        Term::Const(_) | Term::Table(_) => {}
        Term::Var(x) => {
            if !bound.contains(x) {
                out.insert(x.clone());
            }
        }
        Term::Tuple(ts) | Term::Op(_, ts) => ts.iter().for_each(|x| collect(x, bound, out)),
        Term::Proj(a, _) | Term::Exp(a) | Term::Singleton(a) | Term::Dedup(a) => collect(a, bound, out),
        Term::Replicate(a, b) | Term::Join(a, b) | Term::Union(a, b) | Term::Duplicate(a, b) => {
            collect(a, bound, out);
            collect(b, bound, out);
        }
        Term::Let { bound: b, body, .. } => {
            collect(b, bound, out);
            collect(body, bound, out);
        }
        Term::Map { var, body, src } | Term::Filter { var, pred: body, src } | Term::MapReduce { var, body, src } => {
            collect(src, bound, out);
            under(var, body, bound, out);
        }
        Term::GroupBy { var, src, keys, aggs } => {
            collect(src, bound, out);
            bound.push(var.clone());
            keys.iter().for_each(|k| collect(k, bound, out));
            aggs.iter().filter_map(|(_, a)| a.as_ref()).for_each(|a| collect(a, bound, out));
            bound.pop();
        }
        Term::Simulate(c) => call_vars(c, bound, out),
        Term::Logpdf(c, e) => {
            call_vars(c, bound, out);
            e.0.iter().for_each(|(_, v)| collect(v, bound, out));
        }
        Term::Prob(c, e) => {
            call_vars(c, bound, out);
            event_vars(e, bound, out);
        }
        Term::MutualInfo(c, _, _) => call_vars(c, bound, out),
    }
}

fn call_vars(c: &AmiCall, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    c.c0.0.iter().for_each(|(_, v)| collect(v, bound, out));
    event_vars(&c.c1, bound, out);
}

fn event_vars(e: &EventL, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match e {
        EventL::True => {}
        EventL::And(a, b) | EventL::Or(a, b) => {
            event_vars(a, bound, out);
            event_vars(b, bound, out);
        }
        EventL::Atom(_, _, v) => collect(v, bound, out),
    }
}

impl LType {
    /// Whether a lowered bag type matches the columns the source typing gave.
    pub fn matches_columns(&self, cols: &[Column]) -> bool {
        match self {
            LType::Bag(tys) => {
                tys.len() == cols.len()
                    && tys.iter().zip(cols).all(|(t, c)| match t {
                        Some(t) => *t == c.ty,
                        None => c.ty == BaseType::Real,
                    })
            }
            _ => false,
        }
    }
}
