//! The lowered combinator language and the translation of normalized
//! queries into it. Column references become projections of bound row
//! variables and model conditions refer to columns by position.

mod check;
mod print;

pub use check::{free_vars, lowered_typecheck, LType, LoweredTypeError};
pub use print::print_term;

use crate::normalize::NormalModel;
use crate::parser::ast::*;
use crate::table::{Catalog, Column};
use crate::typecheck::{resolve, Checker, Mode, TableTy, TypeError};
use crate::value::{Op, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Const(Value),
    Var(String),
    /// A catalog table or a WITH-bound table.
    Table(String),
    Tuple(Vec<Term>),
    Proj(Box<Term>, usize),
    Op(Op, Vec<Term>),
    Exp(Box<Term>),
    Singleton(Box<Term>),
    Map { var: String, body: Box<Term>, src: Box<Term> },
    Filter { var: String, pred: Box<Term>, src: Box<Term> },
    /// Bag union of `body` over the rows of `src`.
    MapReduce { var: String, body: Box<Term>, src: Box<Term> },
    /// Evaluates its bag argument `n` times.
    Replicate(Box<Term>, Box<Term>),
    Join(Box<Term>, Box<Term>),
    Union(Box<Term>, Box<Term>),
    Dedup(Box<Term>),
    Duplicate(Box<Term>, Box<Term>),
    Let { name: String, bound: Box<Term>, body: Box<Term> },
    GroupBy { var: String, src: Box<Term>, keys: Vec<Term>, aggs: Vec<(Aggregate, Option<Term>)> },
    Simulate(AmiCall),
    Logpdf(AmiCall, Event0L),
    Prob(AmiCall, EventL),
    MutualInfo(AmiCall, Vec<usize>, Vec<usize>),
}

/// The model and its normal-form conditions. `site` numbers the call site.
#[derive(Debug, Clone, PartialEq)]
pub struct AmiCall {
    pub model: String,
    pub c0: Event0L,
    pub c1: EventL,
    pub site: u32,
}

/// Column position and value term of each equality.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Event0L(pub Vec<(usize, Term)>);

#[derive(Debug, Clone, PartialEq)]
pub enum EventL {
    True,
    And(Box<EventL>, Box<EventL>),
    Or(Box<EventL>, Box<EventL>),
    Atom(usize, CmpOp, Box<Term>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LowerError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("model is not in normal form at {0}")]
    NotNormal(Span),
}

pub struct LoweredProgram {
    pub term: Term,
    /// Output columns for table queries.
    pub columns: Option<Vec<Column>>,
    pub sites: u32,
}

/// Lowers a normalized, typechecked query.
pub fn lower(q: &Query, catalog: &Catalog) -> Result<LoweredProgram, LowerError> {
    let mut l = Lowerer { checker: Checker::new(catalog, Mode::Permissive), catalog, scopes: Vec::new(), next_var: 0, sites: 0 };
    let (term, columns) = match q {
        Query::Table(t) => {
            let ty = l.checker.table(t, &[])?;
            (l.table(t)?, Some(ty.columns))
        }
        Query::Scalar(e) => (l.scalar(e)?, None),
    };
    Ok(LoweredProgram { term, columns, sites: l.sites })
}

struct Lowerer<'a> {
    checker: Checker<'a>,
    catalog: &'a Catalog,
    /// Row scopes in force, innermost last, with their variables.
    scopes: Vec<(TableTy, String)>,
    next_var: usize,
    sites: u32,
}

impl Lowerer<'_> {
    fn delta(&self) -> Vec<TableTy> {
        self.scopes.iter().map(|(t, _)| t.clone()).collect()
    }

    fn fresh(&mut self) -> String {
        self.next_var += 1;
        format!("r{}", self.next_var)
    }

    fn site(&mut self) -> u32 {
        self.sites += 1;
        self.sites
    }

    /// Lowers `f` with a fresh row variable bound to rows of `t`.
    fn bind<T>(
        &mut self,
        t: &TableExpr,
        f: impl FnOnce(&mut Self, &str) -> Result<T, LowerError>,
    ) -> Result<(String, T), LowerError> {
        let ty = self.checker.table(t, &self.delta())?;
        let var = self.fresh();
        self.scopes.push((ty, var.clone()));
        let r = f(self, &var);
        self.scopes.pop();
        Ok((var, r?))
    }

    fn table(&mut self, t: &TableExpr) -> Result<Term, LowerError> {
        Ok(match &t.kind {
            TableKind::Id(n) => Term::Table(n.clone()),
            TableKind::Rename(a, _) => self.table(a)?,
            TableKind::Union(a, b) => Term::Union(Box::new(self.table(a)?), Box::new(self.table(b)?)),
            TableKind::Join(a, b) => Term::Join(Box::new(self.table(a)?), Box::new(self.table(b)?)),
            TableKind::Dedup(a) => Term::Dedup(Box::new(self.table(a)?)),
            TableKind::Duplicate(a, e) => Term::Duplicate(Box::new(self.table(a)?), Box::new(self.scalar(e)?)),
            TableKind::Where(a, e) => {
                let src = self.table(a)?;
                let (var, pred) = self.bind(a, |l, _| l.scalar(e))?;
                Term::Filter { var, pred: Box::new(pred), src: Box::new(src) }
            }
            TableKind::With { binding, name, body } => {
                let Binding::Table(b) = binding.as_ref() else {
                    return Err(LowerError::NotNormal(t.span));
                };
                let bound = self.table(b)?;
                let cols = self.checker.table(b, &self.delta())?.columns;
                self.checker.push_binding(name, cols);
                let body = self.table(body);
                self.checker.pop_binding();
                Term::Let { name: name.clone(), bound: Box::new(bound), body: Box::new(body?) }
            }
            TableKind::Select { items, from } => {
                let exprs: Vec<&ScalarExpr> = items
                    .iter()
                    .map(|i| match i {
                        SelectItem::Expr { expr, .. } => Ok(expr),
                        SelectItem::Star { span, .. } => Err(LowerError::NotNormal(*span)),
                    })
                    .collect::<Result<_, _>>()?;
                match from {
                    None => {
                        let fields = exprs.iter().map(|e| self.scalar(e)).collect::<Result<_, _>>()?;
                        Term::Singleton(Box::new(Term::Tuple(fields)))
                    }
                    Some(f) => {
                        let src = self.table(f)?;
                        let (var, fields) =
                            self.bind(f, |l, _| exprs.iter().map(|e| l.scalar(e)).collect::<Result<Vec<_>, _>>())?;
                        Term::Map { var, body: Box::new(Term::Tuple(fields)), src: Box::new(src) }
                    }
                }
            }
            TableKind::GroupBy { source, keys, aggs } => {
                let src = self.table(source)?;
                let (var, (keys, aggs)) = self.bind(source, |l, _| {
                    let keys = keys.iter().map(|(e, _)| l.scalar(e)).collect::<Result<Vec<_>, _>>()?;
                    let aggs = aggs
                        .iter()
                        .map(|a| Ok((a.agg, a.arg.as_ref().map(|e| l.scalar(e)).transpose()?)))
                        .collect::<Result<Vec<_>, LowerError>>()?;
                    Ok((keys, aggs))
                })?;
                Term::GroupBy { var, src: Box::new(src), keys, aggs }
            }
            TableKind::Generate { model, limit } => {
                let call = self.call(model)?;
                Term::Replicate(Box::new(self.scalar(limit)?), Box::new(Term::Singleton(Box::new(Term::Simulate(call)))))
            }
            TableKind::GenerativeJoin { table, model } => {
                let src = self.table(table)?;
                let (var, call) = self.bind(table, |l, _| l.call(model))?;
                let body = Term::Join(
                    Box::new(Term::Singleton(Box::new(Term::Var(var.clone())))),
                    Box::new(Term::Singleton(Box::new(Term::Simulate(call)))),
                );
                Term::MapReduce { var, body: Box::new(body), src: Box::new(src) }
            }
        })
    }

    fn model_columns(&self, base: &str) -> Vec<Column> {
        self.catalog.model(base).map(<[Column]>::to_vec).unwrap_or_default()
    }

    fn call(&mut self, m: &ModelExpr) -> Result<AmiCall, LowerError> {
        let nm = NormalModel::from_model(m).ok_or(LowerError::NotNormal(m.span))?;
        if nm.rename.is_some() {
            return Err(LowerError::NotNormal(m.span));
        }
        let cols = self.model_columns(&nm.base);
        let c0 = match &nm.event0 {
            Some(c) => self.event0(c, &cols)?,
            None => Event0L::default(),
        };
        let c1 = match &nm.event1 {
            Some(c) => self.event(c, &cols)?,
            None => EventL::True,
        };
        Ok(AmiCall { model: nm.base, c0, c1, site: self.site() })
    }

    fn position(&self, cols: &[Column], col: &str, span: Span) -> Result<usize, LowerError> {
        cols.iter().position(|c| c.name == col).ok_or(LowerError::NotNormal(span))
    }

    fn event0(&mut self, c: &Cond, cols: &[Column]) -> Result<Event0L, LowerError> {
        let mut out = Vec::new();
        for atom in c.conjuncts() {
            match &atom.kind {
                CondKind::Atom { col, op: CmpOp::Eq, rhs, .. } => {
                    out.push((self.position(cols, col, atom.span)?, self.scalar(rhs)?));
                }
                CondKind::True => {}
                _ => return Err(LowerError::NotNormal(atom.span)),
            }
        }
        Ok(Event0L(out))
    }

    fn event(&mut self, c: &Cond, cols: &[Column]) -> Result<EventL, LowerError> {
        Ok(match &c.kind {
            CondKind::And(a, b) => EventL::And(Box::new(self.event(a, cols)?), Box::new(self.event(b, cols)?)),
            CondKind::Or(a, b) => EventL::Or(Box::new(self.event(a, cols)?), Box::new(self.event(b, cols)?)),
            CondKind::Atom { col, op, rhs, .. } => EventL::Atom(self.position(cols, col, c.span)?, *op, Box::new(self.scalar(rhs)?)),
            CondKind::True => EventL::True,
            CondKind::Bare { .. } | CondKind::Star { .. } => return Err(LowerError::NotNormal(c.span)),
        })
    }

    fn scalar(&mut self, e: &ScalarExpr) -> Result<Term, LowerError> {
        Ok(match &e.kind {
            ScalarKind::Const(v) => Term::Const(v.clone()),
            ScalarKind::Col(c) => {
                let delta = self.delta();
                let (d, i, _) = resolve(c, &delta)?;
                Term::Proj(Box::new(Term::Var(self.scopes[d].1.clone())), i)
            }
            ScalarKind::Op(op, args) => Term::Op(*op, args.iter().map(|a| self.scalar(a)).collect::<Result<_, _>>()?),
            ScalarKind::Probability { event, model, .. } => {
                let call = self.call(model)?;
                let cols = self.model_columns(&call.model);
                if event.is_event0() {
                    let target = self.event0(event, &cols)?;
                    Term::Exp(Box::new(Term::Logpdf(call, target)))
                } else {
                    let target = self.event(event, &cols)?;
                    Term::Prob(call, target)
                }
            }
            ScalarKind::MutualInfo { a, b, model, .. } => {
                let call = self.call(model)?;
                let cols = self.model_columns(&call.model);
                let pos = |l: &Self, cs: &[ColRef]| cs.iter().map(|c| l.position(&cols, &c.col, c.span)).collect::<Result<Vec<_>, _>>();
                let (a, b) = (pos(self, a)?, pos(self, b)?);
                Term::MutualInfo(call, a, b)
            }
            ScalarKind::Agg(..) => return Err(LowerError::NotNormal(e.span)),
        })
    }
}
