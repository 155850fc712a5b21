//! Sugar expansion: `SELECT *`, `PROBABILITY OF *`, `GIVEN *`, `EXCEPT`,
//! the bare-column shorthand, WITH-bound models, and mixed conditions.
//!
//! Afterwards every event atom names its model and every select item has
//! an alias.

use std::collections::BTreeSet;

use super::ast::*;
use crate::table::{Catalog, EntryKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message} (at {span})")]
pub struct DesugarError {
    pub message: String,
    pub span: Span,
}

fn err<T>(span: Span, message: impl Into<String>) -> Result<T, DesugarError> {
    Err(DesugarError { message: message.into(), span })
}

type DResult<T> = Result<T, DesugarError>;

/// Output shape of a table expression, as far as sugar expansion needs it.
#[derive(Debug, Clone, Default)]
struct Frame {
    id: Option<String>,
    cols: Vec<String>,
}

#[derive(Clone)]
enum Bound {
    Table(Vec<String>),
    Model(ModelExpr, Vec<String>),
}

struct Ctx<'a> {
    catalog: &'a Catalog,
    bindings: Vec<(String, Bound)>,
}

pub fn desugar(q: &Query, catalog: &Catalog) -> Result<Query, DesugarError> {
    let mut ctx = Ctx { catalog, bindings: Vec::new() };
    let none = BTreeSet::new();
    Ok(match q {
        Query::Table(t) => Query::Table(ctx.table(t, &[], &none)?.0),
        Query::Scalar(e) => Query::Scalar(ctx.scalar(e, &[], &none)?),
    })
}

impl Ctx<'_> {
    fn lookup(&self, name: &str) -> Option<Bound> {
        if let Some((_, b)) = self.bindings.iter().rev().find(|(n, _)| n == name) {
            return Some(b.clone());
        }
        match self.catalog.get(name) {
            Some((EntryKind::Table, cols)) => Some(Bound::Table(cols.iter().map(|c| c.name.clone()).collect())),
            Some((EntryKind::Model, cols)) => Some(Bound::Model(
                ModelExpr::new(ModelKind::Id(name.to_string()), Span::default()),
                cols.iter().map(|c| c.name.clone()).collect(),
            )),
            None => None,
        }
    }

    /// `excl` holds the names used by an enclosing SELECT list; only a
    /// GENERATIVE JOIN directly under that SELECT's FROM consults it.
    fn table(&mut self, t: &TableExpr, frames: &[Frame], excl: &BTreeSet<String>) -> DResult<(TableExpr, Frame)> {
        let none = BTreeSet::new();
        let span = t.span;
        let mk = |kind| TableExpr::new(kind, span);
        Ok(match &t.kind {
            TableKind::Id(n) => match self.lookup(n) {
                Some(Bound::Table(cols)) => (t.clone(), Frame { id: Some(n.clone()), cols }),
                Some(Bound::Model(..)) => return err(span, format!("{n} is a model, not a table")),
                None => return err(span, format!("unknown table {n}")),
            },
            TableKind::Union(a, b) => {
                let (a, fa) = self.table(a, frames, &none)?;
                let (b, _) = self.table(b, frames, &none)?;
                (mk(TableKind::Union(Box::new(a), Box::new(b))), Frame { id: None, cols: fa.cols })
            }
            TableKind::Join(a, b) => {
                let (a, fa) = self.table(a, frames, &none)?;
                let (b, fb) = self.table(b, frames, &none)?;
                let mut cols = fa.cols;
                cols.extend(fb.cols);
                (mk(TableKind::Join(Box::new(a), Box::new(b))), Frame { id: None, cols })
            }
            TableKind::Rename(a, n) => {
                let (a, fa) = self.table(a, frames, excl)?;
                (mk(TableKind::Rename(Box::new(a), n.clone())), Frame { id: Some(n.clone()), cols: fa.cols })
            }
            TableKind::Dedup(a) => {
                let (a, fa) = self.table(a, frames, &none)?;
                (mk(TableKind::Dedup(Box::new(a))), fa)
            }
            TableKind::Duplicate(a, e) => {
                let (a, fa) = self.table(a, frames, &none)?;
                let e = self.scalar(e, frames, &none)?;
                (mk(TableKind::Duplicate(Box::new(a), e)), fa)
            }
            TableKind::Where(a, e) => {
                let (a, fa) = self.table(a, frames, &none)?;
                let e = self.scalar(e, &push(frames, &fa), &none)?;
                (mk(TableKind::Where(Box::new(a), e)), fa)
            }
            TableKind::With { binding, name, body } => {
                let binding = match binding.as_ref() {
                    Binding::Ident(n, s) => match self.lookup(n) {
                        Some(Bound::Table(_)) => Binding::Table(TableExpr::new(TableKind::Id(n.clone()), *s)),
                        Some(Bound::Model(..)) => Binding::Model(ModelExpr::new(ModelKind::Id(n.clone()), *s)),
                        None => return err(*s, format!("unknown identifier {n}")),
                    },
                    other => other.clone(),
                };
                match binding {
                    Binding::Table(bt) => {
                        let (bt, fb) = self.table(&bt, frames, &none)?;
                        self.bindings.push((name.clone(), Bound::Table(fb.cols)));
                        let r = self.table(body, frames, excl);
                        self.bindings.pop();
                        let (body, fbody) = r?;
                        let kind = TableKind::With {
                            binding: Box::new(Binding::Table(bt)),
                            name: name.clone(),
                            body: Box::new(body),
                        };
                        (mk(kind), fbody)
                    }
                    Binding::Model(m) => {
                        let (m, cols, _) = self.model(&m, frames, &none)?;
                        let renamed = ModelExpr::new(ModelKind::Rename(Box::new(m), name.clone()), span);
                        self.bindings.push((name.clone(), Bound::Model(renamed, cols)));
                        let r = self.table(body, frames, excl);
                        self.bindings.pop();
                        r?
                    }
                    Binding::Ident(..) => unreachable!("resolved above"),
                }
            }
            TableKind::Select { items, from } => {
                let names = select_names(items);
                let (from, f) = match from {
                    Some(f) => {
                        let (f, ff) = self.table(f, frames, &names)?;
                        (Some(Box::new(f)), Some(ff))
                    }
                    None => (None, None),
                };
                let inner = push(frames, f.as_ref().unwrap_or(&Frame::default()));
                let mut out = Vec::new();
                let mut cols = Vec::new();
                for item in items {
                    match item {
                        SelectItem::Star { except, span } => {
                            let Some(f) = &f else {
                                return err(*span, "* needs a FROM table");
                            };
                            let keep = except_filter(&f.cols, except)?;
                            for c in keep {
                                let expr = ScalarExpr::col(f.id.as_deref(), &c, *span);
                                cols.push(c.clone());
                                out.push(SelectItem::Expr { expr, alias: Some(c) });
                            }
                        }
                        SelectItem::Expr { expr, alias } => {
                            let e = self.scalar(expr, &inner, &names)?;
                            let alias = alias.clone().unwrap_or_else(|| match &e.kind {
                                ScalarKind::Col(c) => c.col.clone(),
                                _ => format!("column{}", out.len() + 1),
                            });
                            cols.push(alias.clone());
                            out.push(SelectItem::Expr { expr: e, alias: Some(alias) });
                        }
                    }
                }
                let id = f.and_then(|f| f.id);
                (mk(TableKind::Select { items: out, from }), Frame { id, cols })
            }
            TableKind::GroupBy { source, keys, aggs } => {
                let (source, fs) = self.table(source, frames, &none)?;
                let inner = push(frames, &fs);
                let mut cols = Vec::new();
                let mut nk = Vec::new();
                for (e, n) in keys {
                    nk.push((self.scalar(e, &inner, &none)?, n.clone()));
                    cols.push(n.clone());
                }
                let mut na = Vec::new();
                for a in aggs {
                    let arg = match &a.arg {
                        Some(e) => Some(self.scalar(e, &inner, &none)?),
                        None => None,
                    };
                    na.push(AggItem { agg: a.agg, arg, name: a.name.clone() });
                    cols.push(a.name.clone());
                }
                (mk(TableKind::GroupBy { source: Box::new(source), keys: nk, aggs: na }), Frame { id: None, cols })
            }
            TableKind::Generate { model, limit } => {
                let (model, cols, _) = self.model(model, frames, &none)?;
                let limit = self.scalar(limit, frames, &none)?;
                (mk(TableKind::Generate { model, limit }), Frame { id: None, cols })
            }
            TableKind::GenerativeJoin { table, model } => {
                let (table, ft) = self.table(table, frames, &none)?;
                let (model, mcols, _) = self.model(model, &push(frames, &ft), excl)?;
                let mut cols = ft.cols.clone();
                cols.extend(mcols);
                (mk(TableKind::GenerativeJoin { table: Box::new(table), model }), Frame { id: ft.id, cols })
            }
        })
    }

    /// Returns the desugared model, its columns and its row identifier.
    fn model(
        &mut self,
        m: &ModelExpr,
        frames: &[Frame],
        excl: &BTreeSet<String>,
    ) -> DResult<(ModelExpr, Vec<String>, String)> {
        match &m.kind {
            ModelKind::Id(n) => match self.lookup(n) {
                Some(Bound::Model(bound, cols)) => {
                    let bound = match bound.kind {
                        ModelKind::Id(_) => ModelExpr::new(ModelKind::Id(n.clone()), m.span),
                        _ => bound,
                    };
                    Ok((bound, cols, n.clone()))
                }
                Some(Bound::Table(_)) => err(m.span, format!("{n} is a table, not a model")),
                None => err(m.span, format!("unknown model {n}")),
            },
            ModelKind::Rename(inner, n) => {
                let (inner, cols, _) = self.model(inner, frames, excl)?;
                Ok((ModelExpr::new(ModelKind::Rename(Box::new(inner), n.clone()), m.span), cols, n.clone()))
            }
            ModelKind::Given(inner, c) => {
                let (inner, cols, id) = self.model(inner, frames, excl)?;
                let Some(c) = self.cond(c, &id, &cols, frames, excl, true)? else {
                    return Ok((inner, cols, id));
                };
                Ok((given_split(inner, c, m.span), cols, id))
            }
        }
    }

    /// `None` when the condition expands to nothing (`GIVEN *` with no
    /// shared columns).
    fn cond(
        &mut self,
        c: &Cond,
        mid: &str,
        mcols: &[String],
        frames: &[Frame],
        excl: &BTreeSet<String>,
        given: bool,
    ) -> DResult<Option<Cond>> {
        let none = BTreeSet::new();
        let span = c.span;
        Ok(match &c.kind {
            CondKind::And(a, b) => {
                let a = self.cond(a, mid, mcols, frames, excl, given)?;
                let b = self.cond(b, mid, mcols, frames, excl, given)?;
                match (a, b) {
                    (Some(a), Some(b)) => Some(Cond::and(a, b)),
                    (a, b) => a.or(b),
                }
            }
            CondKind::Or(a, b) => {
                let a = self.cond(a, mid, mcols, frames, excl, given)?;
                let b = self.cond(b, mid, mcols, frames, excl, given)?;
                match (a, b) {
                    (Some(a), Some(b)) => Some(Cond { kind: CondKind::Or(Box::new(a), Box::new(b)), span }),
                    _ => return err(span, "* expanded to nothing inside OR"),
                }
            }
            CondKind::Atom { model, col, op, rhs } => Some(Cond {
                kind: CondKind::Atom {
                    model: Some(model.clone().unwrap_or_else(|| mid.to_string())),
                    col: col.clone(),
                    op: *op,
                    rhs: Box::new(self.scalar(rhs, frames, &none)?),
                },
                span,
            }),
            CondKind::Bare { qual, col } => {
                let Some(f) = frames.last() else {
                    return err(span, format!("shorthand {col} needs an enclosing table"));
                };
                let rhs_qual = match qual {
                    Some(q) if q != mid => Some(q.as_str()),
                    _ => f.id.as_deref(),
                };
                Some(eq_atom(mid, col, rhs_qual, span))
            }
            CondKind::Star { except } => {
                let Some(f) = frames.last() else {
                    return err(span, "* needs an enclosing table");
                };
                let shared: Vec<String> = f.cols.iter().filter(|c| mcols.contains(c)).cloned().collect();
                let mut keep = except_filter(&shared, except)?;
                if given {
                    keep.retain(|c| !excl.contains(c));
                }
                if keep.is_empty() && !given {
                    return err(span, format!("* shares no columns with model {mid}"));
                }
                Cond::conjoin(keep.iter().map(|c| eq_atom(mid, c, f.id.as_deref(), span)).collect())
            }
            CondKind::True => Some(c.clone()),
        })
    }

    fn scalar(&mut self, e: &ScalarExpr, frames: &[Frame], excl: &BTreeSet<String>) -> DResult<ScalarExpr> {
        let span = e.span;
        let kind = match &e.kind {
            ScalarKind::Const(_) | ScalarKind::Col(_) => return Ok(e.clone()),
            ScalarKind::Op(op, args) => {
                ScalarKind::Op(*op, args.iter().map(|a| self.scalar(a, frames, excl)).collect::<DResult<_>>()?)
            }
            ScalarKind::Probability { event, model, density } => {
                let (model, cols, id) = self.model(model, frames, excl)?;
                let Some(event) = self.cond(event, &id, &cols, frames, excl, false)? else {
                    return err(event.span, "empty event");
                };
                ScalarKind::Probability { event, model, density: *density }
            }
            ScalarKind::MutualInfo { a, b, cond, model } => {
                let (mut model, cols, id) = self.model(model, frames, excl)?;
                if let Some(c) = cond {
                    if let Some(c) = self.cond(c, &id, &cols, frames, excl, true)? {
                        model = given_split(model, c, span);
                    }
                }
                let fill = |cs: &[ColRef]| -> Vec<ColRef> {
                    cs.iter().map(|c| ColRef { qual: Some(c.qual.clone().unwrap_or_else(|| id.clone())), ..c.clone() }).collect()
                };
                ScalarKind::MutualInfo { a: fill(a), b: fill(b), cond: None, model }
            }
            ScalarKind::Agg(agg, arg) => ScalarKind::Agg(
                *agg,
                match arg {
                    Some(a) => Some(Box::new(self.scalar(a, frames, excl)?)),
                    None => None,
                },
            ),
        };
        Ok(ScalarExpr { kind, span })
    }
}

fn push(frames: &[Frame], f: &Frame) -> Vec<Frame> {
    let mut v = frames.to_vec();
    v.push(f.clone());
    v
}

fn eq_atom(mid: &str, col: &str, rhs_qual: Option<&str>, span: Span) -> Cond {
    Cond {
        kind: CondKind::Atom {
            model: Some(mid.to_string()),
            col: col.to_string(),
            op: CmpOp::Eq,
            rhs: Box::new(ScalarExpr::col(rhs_qual, col, span)),
        },
        span,
    }
}

fn except_filter(cols: &[String], except: &[ColRef]) -> DResult<Vec<String>> {
    for e in except {
        if !cols.contains(&e.col) {
            return err(e.span, format!("EXCEPT names column {} which is not in [{}]", e.col, cols.join(", ")));
        }
    }
    Ok(cols.iter().filter(|c| !except.iter().any(|e| &e.col == *c)).cloned().collect())
}

/// `m GIVEN (eqs AND rest)` with a mix of equalities and other conjuncts
/// becomes `(m GIVEN eqs) GIVEN rest`.
fn given_split(m: ModelExpr, c: Cond, span: Span) -> ModelExpr {
    if c.is_event0() || !matches!(c.kind, CondKind::And(..)) {
        return ModelExpr::new(ModelKind::Given(Box::new(m), c), span);
    }
    let (eqs, rest): (Vec<&Cond>, Vec<&Cond>) = c.conjuncts().into_iter().partition(|x| x.is_event0());
    let rest = Cond::conjoin(rest.into_iter().cloned().collect()).expect("non-event0 conjunct present");
    let inner = match Cond::conjoin(eqs.into_iter().cloned().collect()) {
        Some(e0) => ModelExpr::new(ModelKind::Given(Box::new(m), e0), span),
        None => m,
    };
    ModelExpr::new(ModelKind::Given(Box::new(inner), rest), span)
}

/// Column names a SELECT list mentions; `GIVEN *` leaves these out.
fn select_names(items: &[SelectItem]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for i in items {
        if let SelectItem::Expr { expr, .. } = i {
            scalar_names(expr, &mut out);
        }
    }
    out
}

fn scalar_names(e: &ScalarExpr, out: &mut BTreeSet<String>) {
    match &e.kind {
        ScalarKind::Col(c) => {
            out.insert(c.col.clone());
        }
        ScalarKind::Op(_, args) => args.iter().for_each(|a| scalar_names(a, out)),
        ScalarKind::Probability { event, .. } => cond_names(event, out),
        ScalarKind::Agg(_, Some(a)) => scalar_names(a, out),
        _ => {}
    }
}

fn cond_names(c: &Cond, out: &mut BTreeSet<String>) {
    match &c.kind {
        CondKind::And(a, b) | CondKind::Or(a, b) => {
            cond_names(a, out);
            cond_names(b, out);
        }
        CondKind::Atom { col, rhs, .. } => {
            out.insert(col.clone());
            scalar_names(rhs, out);
        }
        CondKind::Bare { col, .. } => {
            out.insert(col.clone());
        }
        _ => {}
    }
}

/// True if any sugar node survives: stars, EXCEPT, bare shorthand,
/// unqualified atoms, unresolved WITH identifiers or unaliased items.
pub fn has_sugar(q: &Query) -> bool {
    match q {
        Query::Table(t) => table_sugar(t),
        Query::Scalar(e) => scalar_sugar(e),
    }
}

fn table_sugar(t: &TableExpr) -> bool {
    match &t.kind {
        TableKind::Id(_) => false,
        TableKind::Union(a, b) | TableKind::Join(a, b) => table_sugar(a) || table_sugar(b),
        TableKind::Rename(a, _) | TableKind::Dedup(a) => table_sugar(a),
        TableKind::Duplicate(a, e) | TableKind::Where(a, e) => table_sugar(a) || scalar_sugar(e),
        TableKind::With { binding, body, .. } => {
            let b = match binding.as_ref() {
                Binding::Table(t) => table_sugar(t),
                Binding::Model(m) => model_sugar(m),
                Binding::Ident(..) => true,
            };
            b || table_sugar(body)
        }
        TableKind::Select { items, from } => {
            from.as_ref().is_some_and(|f| table_sugar(f))
                || items.iter().any(|i| match i {
                    SelectItem::Star { .. } => true,
                    SelectItem::Expr { expr, alias } => alias.is_none() || scalar_sugar(expr),
                })
        }
        TableKind::GroupBy { source, keys, aggs } => {
            table_sugar(source)
                || keys.iter().any(|(e, _)| scalar_sugar(e))
                || aggs.iter().any(|a| a.arg.as_ref().is_some_and(scalar_sugar))
        }
        TableKind::Generate { model, limit } => model_sugar(model) || scalar_sugar(limit),
        TableKind::GenerativeJoin { table, model } => table_sugar(table) || model_sugar(model),
    }
}

fn model_sugar(m: &ModelExpr) -> bool {
    match &m.kind {
        ModelKind::Id(_) => false,
        ModelKind::Rename(m, _) => model_sugar(m),
        ModelKind::Given(m, c) => model_sugar(m) || cond_sugar(c),
    }
}

fn cond_sugar(c: &Cond) -> bool {
    match &c.kind {
        CondKind::And(a, b) | CondKind::Or(a, b) => cond_sugar(a) || cond_sugar(b),
        CondKind::Atom { model, rhs, .. } => model.is_none() || scalar_sugar(rhs),
        CondKind::Bare { .. } | CondKind::Star { .. } => true,
        CondKind::True => false,
    }
}

fn scalar_sugar(e: &ScalarExpr) -> bool {
    match &e.kind {
        ScalarKind::Const(_) | ScalarKind::Col(_) => false,
        ScalarKind::Op(_, args) => args.iter().any(scalar_sugar),
        ScalarKind::Probability { event, model, .. } => cond_sugar(event) || model_sugar(model),
        ScalarKind::MutualInfo { a, b, cond, model } => {
            cond.is_some() || a.iter().chain(b).any(|c| c.qual.is_none()) || model_sugar(model)
        }
        ScalarKind::Agg(..) => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse, print_query};
    use crate::table::Column;
    use crate::value::BaseType;

    fn catalog() -> Catalog {
        let mut c = Catalog::new();
        c.add_table("t", vec![Column::new("a", BaseType::Int), Column::new("b", BaseType::Int)]);
        c.add_model("m", vec![Column::new("a", BaseType::Int), Column::new("b", BaseType::Int)]);
        c
    }

    fn ds(q: &str) -> String {
        let q = desugar(&parse(q).unwrap(), &catalog()).unwrap();
        assert!(!has_sugar(&q));
        print_query(&q)
    }

    fn same(a: &str, b: &str) {
        assert_eq!(ds(a), print_query(&parse(b).unwrap()));
    }

    #[test]
    fn select_star() {
        same("SELECT * FROM t", "SELECT t.a AS a, t.b AS b FROM t");
        same("SELECT * EXCEPT t.a FROM t", "SELECT t.b AS b FROM t");
    }

    #[test]
    fn given_star_skips_selected_columns() {
        same(
            "SELECT t.a, PROBABILITY OF m.a > 0 UNDER m GIVEN * AS p FROM t",
            "SELECT t.a AS a, PROBABILITY OF m.a > 0 UNDER m GIVEN m.b = t.b AS p FROM t",
        );
    }

    #[test]
    fn probability_star_and_bare() {
        same(
            "SELECT PROBABILITY OF * UNDER m AS p FROM t",
            "SELECT PROBABILITY OF m.a = t.a AND m.b = t.b UNDER m AS p FROM t",
        );
        same("SELECT PROBABILITY OF a UNDER m AS p FROM t", "SELECT PROBABILITY OF m.a = t.a UNDER m AS p FROM t");
    }

    #[test]
    fn mixed_condition_split() {
        same(
            "SELECT PROBABILITY OF a > 1 UNDER m GIVEN b > 0 AND a = 2 AS p FROM t",
            "SELECT PROBABILITY OF m.a > 1 UNDER (m GIVEN m.a = 2) GIVEN m.b > 0 AS p FROM t",
        );
    }

    #[test]
    fn with_model_becomes_rename() {
        same(
            "WITH m GIVEN a > 0 AS c: GENERATE UNDER c LIMIT 3",
            "GENERATE UNDER RENAME (m GIVEN m.a > 0) AS c LIMIT 3",
        );
    }

    #[test]
    fn errors() {
        let c = catalog();
        assert!(desugar(&parse("SELECT * EXCEPT t.z FROM t").unwrap(), &c).is_err());
        assert!(desugar(&parse("GENERATE UNDER m GIVEN * LIMIT 3").unwrap(), &c).is_err());
        assert!(desugar(&parse("SELECT * FROM nope").unwrap(), &c).is_err());
    }
}
