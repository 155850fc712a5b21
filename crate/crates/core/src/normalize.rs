//! Model-expression normalization.
//!
//! Phase one pushes RENAME outward and off use sites, merges stacked
//! event-0 conditions (later bindings of a bound column are dropped with a
//! warning), conjoins stacked events and moves events after event-0s.
//! Phase two removes probability targets on columns an event-0 already
//! fixes. The result has every model use site in the shape
//! `id [GIVEN c0] [GIVEN c1]`.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::parser::ast::*;
use crate::parser::print_cond;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewriteRule {
    RenameGiven,
    RenameRename,
    MergeEvent0,
    MergeEvent,
    SwapEvent,
    UseSiteRename,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub rule: RewriteRule,
    /// Valuation of the use site before and after the rewrite.
    pub before: u64,
    pub after: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub message: String,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct Normalized {
    pub query: Query,
    pub warnings: Vec<Diagnostic>,
    pub trace: Vec<Step>,
}

/// Picks which of `n` available redexes to rewrite next. Redexes are
/// listed innermost first; the use-site rename, if any, is last.
pub trait RuleChooser {
    fn choose(&mut self, n: usize) -> usize;
}

pub struct Innermost;

impl RuleChooser for Innermost {
    fn choose(&mut self, _n: usize) -> usize {
        0
    }
}

pub struct RandomOrder(ChaCha8Rng);

impl RandomOrder {
    pub fn new(seed: u64) -> Self {
        RandomOrder(ChaCha8Rng::seed_from_u64(seed))
    }
}

impl RuleChooser for RandomOrder {
    fn choose(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }
}

pub fn valuation(m: &ModelExpr) -> u64 {
    match &m.kind {
        ModelKind::Id(_) => 1,
        ModelKind::Rename(m, _) => 1 + valuation(m),
        ModelKind::Given(m, c) if c.is_event0() => 2 * valuation(m),
        ModelKind::Given(m, _) => 2 * valuation(m) + 1,
    }
}

pub fn normalize(q: &Query) -> Normalized {
    normalize_with(q, &mut Innermost)
}

pub fn normalize_with(q: &Query, chooser: &mut dyn RuleChooser) -> Normalized {
    let mut n = Normalizer { chooser, warnings: Vec::new(), trace: Vec::new() };
    let query = match q {
        Query::Table(t) => Query::Table(n.table(t)),
        Query::Scalar(e) => Query::Scalar(n.scalar(e)),
    };
    Normalized { query, warnings: n.warnings, trace: n.trace }
}

/// A model in normal form, split into its parts.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalModel {
    pub base: String,
    pub event0: Option<Cond>,
    pub event1: Option<Cond>,
    pub rename: Option<String>,
}

impl NormalModel {
    /// `None` unless `m` has the shape `[RENAME] (id [GIVEN c0] [GIVEN c1]) [AS j]`.
    pub fn from_model(m: &ModelExpr) -> Option<NormalModel> {
        let (rename, m) = match &m.kind {
            ModelKind::Rename(inner, j) => (Some(j.clone()), inner.as_ref()),
            _ => (None, m),
        };
        let (event1, m) = match &m.kind {
            ModelKind::Given(inner, c) if !c.is_event0() => (Some(c.clone()), inner.as_ref()),
            _ => (None, m),
        };
        let (event0, m) = match &m.kind {
            ModelKind::Given(inner, c) if c.is_event0() => (Some(c.clone()), inner.as_ref()),
            _ => (None, m),
        };
        match &m.kind {
            ModelKind::Id(base) => Some(NormalModel { base: base.clone(), event0, event1, rename }),
            _ => None,
        }
    }
}

/// Structural check of the normal form over a whole query: no RENAME on
/// use-site models, at most one event-0 then one event, and no event-0
/// probability target on a conditioned column.
pub fn check_normal(q: &Query) -> Result<(), String> {
    let mut errs = Vec::new();
    match q {
        Query::Table(t) => visit_table(t, &mut |m, target| shape(m, target, &mut errs)),
        Query::Scalar(e) => visit_scalar(e, &mut |m, target| shape(m, target, &mut errs)),
    }
    match errs.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn shape(m: &ModelExpr, target: Option<&Cond>, errs: &mut Vec<String>) {
    match NormalModel::from_model(m) {
        None => errs.push(format!("model not in normal form: {}", crate::parser::print_model(m))),
        Some(nm) if nm.rename.is_some() => errs.push("RENAME left on a use site".to_string()),
        Some(nm) => {
            if let (Some(t), Some(c0)) = (target, &nm.event0) {
                if t.is_event0() {
                    let fixed: BTreeSet<String> = c0.vars().into_iter().collect();
                    if let Some(v) = t.vars().iter().find(|v| fixed.contains(*v)) {
                        errs.push(format!("probability target on conditioned column {v}"));
                    }
                }
            }
        }
    }
}

fn visit_table(t: &TableExpr, f: &mut dyn FnMut(&ModelExpr, Option<&Cond>)) {
    match &t.kind {
        TableKind::Id(_) => {}
        TableKind::Union(a, b) | TableKind::Join(a, b) => {
            visit_table(a, f);
            visit_table(b, f);
        }
        TableKind::Rename(a, _) | TableKind::Dedup(a) => visit_table(a, f),
        TableKind::Duplicate(a, e) | TableKind::Where(a, e) => {
            visit_table(a, f);
            visit_scalar(e, f);
        }
        TableKind::With { binding, body, .. } => {
            match binding.as_ref() {
                Binding::Table(b) => visit_table(b, f),
                Binding::Model(m) => visit_model(m, f),
                Binding::Ident(..) => {}
            }
            visit_table(body, f);
        }
        TableKind::Select { items, from } => {
            if let Some(fr) = from {
                visit_table(fr, f);
            }
            for i in items {
                if let SelectItem::Expr { expr, .. } = i {
                    visit_scalar(expr, f);
                }
            }
        }
        TableKind::GroupBy { source, keys, aggs } => {
            visit_table(source, f);
            keys.iter().for_each(|(e, _)| visit_scalar(e, f));
            aggs.iter().filter_map(|a| a.arg.as_ref()).for_each(|e| visit_scalar(e, f));
        }
        TableKind::Generate { model, limit } => {
            visit_model(model, f);
            f(model, None);
            visit_scalar(limit, f);
        }
        TableKind::GenerativeJoin { table, model } => {
            visit_table(table, f);
            visit_model(model, f);
            f(model, None);
        }
    }
}

fn visit_model(m: &ModelExpr, f: &mut dyn FnMut(&ModelExpr, Option<&Cond>)) {
    match &m.kind {
        ModelKind::Id(_) => {}
        ModelKind::Rename(m, _) => visit_model(m, f),
        ModelKind::Given(m, c) => {
            visit_model(m, f);
            visit_cond(c, f);
        }
    }
}

fn visit_cond(c: &Cond, f: &mut dyn FnMut(&ModelExpr, Option<&Cond>)) {
    match &c.kind {
        CondKind::And(a, b) | CondKind::Or(a, b) => {
            visit_cond(a, f);
            visit_cond(b, f);
        }
        CondKind::Atom { rhs, .. } => visit_scalar(rhs, f),
        _ => {}
    }
}

fn visit_scalar(e: &ScalarExpr, f: &mut dyn FnMut(&ModelExpr, Option<&Cond>)) {
    match &e.kind {
        ScalarKind::Op(_, args) => args.iter().for_each(|a| visit_scalar(a, f)),
        ScalarKind::Probability { event, model, .. } => {
            visit_cond(event, f);
            visit_model(model, f);
            f(model, Some(event));
        }
        ScalarKind::MutualInfo { model, .. } => {
            visit_model(model, f);
            f(model, None);
        }
        ScalarKind::Agg(_, Some(a)) => visit_scalar(a, f),
        _ => {}
    }
}

/// What a use site lets a rename be substituted into.
enum Target<'a> {
    Event(&'a mut Cond),
    Cols(&'a mut Vec<ColRef>, &'a mut Vec<ColRef>),
    Nothing,
}

struct Normalizer<'c> {
    chooser: &'c mut dyn RuleChooser,
    warnings: Vec<Diagnostic>,
    trace: Vec<Step>,
}

impl Normalizer<'_> {
    fn table(&mut self, t: &TableExpr) -> TableExpr {
        let span = t.span;
        let kind = match &t.kind {
            TableKind::Id(_) => return t.clone(),
            TableKind::Union(a, b) => TableKind::Union(Box::new(self.table(a)), Box::new(self.table(b))),
            TableKind::Join(a, b) => TableKind::Join(Box::new(self.table(a)), Box::new(self.table(b))),
            TableKind::Rename(a, n) => TableKind::Rename(Box::new(self.table(a)), n.clone()),
            TableKind::Dedup(a) => TableKind::Dedup(Box::new(self.table(a))),
            TableKind::Duplicate(a, e) => TableKind::Duplicate(Box::new(self.table(a)), self.scalar(e)),
            TableKind::Where(a, e) => TableKind::Where(Box::new(self.table(a)), self.scalar(e)),
            TableKind::With { binding, name, body } => {
                let binding = match binding.as_ref() {
                    Binding::Table(b) => Binding::Table(self.table(b)),
                    other => other.clone(),
                };
                TableKind::With { binding: Box::new(binding), name: name.clone(), body: Box::new(self.table(body)) }
            }
            TableKind::Select { items, from } => TableKind::Select {
                items: items
                    .iter()
                    .map(|i| match i {
                        SelectItem::Expr { expr, alias } => SelectItem::Expr { expr: self.scalar(expr), alias: alias.clone() },
                        star => star.clone(),
                    })
                    .collect(),
                from: from.as_ref().map(|f| Box::new(self.table(f))),
            },
            TableKind::GroupBy { source, keys, aggs } => TableKind::GroupBy {
                source: Box::new(self.table(source)),
                keys: keys.iter().map(|(e, n)| (self.scalar(e), n.clone())).collect(),
                aggs: aggs
                    .iter()
                    .map(|a| AggItem { agg: a.agg, arg: a.arg.as_ref().map(|e| self.scalar(e)), name: a.name.clone() })
                    .collect(),
            },
            TableKind::Generate { model, limit } => {
                let model = self.use_site(model, Target::Nothing);
                TableKind::Generate { model, limit: self.scalar(limit) }
            }
            TableKind::GenerativeJoin { table, model } => {
                let table = Box::new(self.table(table));
                TableKind::GenerativeJoin { table, model: self.use_site(model, Target::Nothing) }
            }
        };
        TableExpr::new(kind, span)
    }

    fn scalar(&mut self, e: &ScalarExpr) -> ScalarExpr {
        let span = e.span;
        let kind = match &e.kind {
            ScalarKind::Const(_) | ScalarKind::Col(_) => return e.clone(),
            ScalarKind::Op(op, args) => ScalarKind::Op(*op, args.iter().map(|a| self.scalar(a)).collect()),
            ScalarKind::Probability { event, model, density } => {
                let mut event = self.cond_scalars(event);
                let model = self.use_site(model, Target::Event(&mut event));
                if event.is_event0() {
                    if let Some(c0) = NormalModel::from_model(&model).and_then(|nm| nm.event0) {
                        match drop_conditioned(&event, &c0) {
                            Some(t) => event = t,
                            None => return ScalarExpr::constant(Value::Real(1.0), span),
                        }
                    }
                }
                ScalarKind::Probability { event, model, density: *density }
            }
            ScalarKind::MutualInfo { a, b, cond, model } => {
                let (mut a, mut b) = (a.clone(), b.clone());
                let model = self.use_site(model, Target::Cols(&mut a, &mut b));
                ScalarKind::MutualInfo { a, b, cond: cond.clone(), model }
            }
            ScalarKind::Agg(agg, arg) => ScalarKind::Agg(*agg, arg.as_ref().map(|a| Box::new(self.scalar(a)))),
        };
        ScalarExpr { kind, span }
    }

    fn cond_scalars(&mut self, c: &Cond) -> Cond {
        let kind = match &c.kind {
            CondKind::And(a, b) => CondKind::And(Box::new(self.cond_scalars(a)), Box::new(self.cond_scalars(b))),
            CondKind::Or(a, b) => CondKind::Or(Box::new(self.cond_scalars(a)), Box::new(self.cond_scalars(b))),
            CondKind::Atom { model, col, op, rhs } => CondKind::Atom {
                model: model.clone(),
                col: col.clone(),
                op: *op,
                rhs: Box::new(self.scalar(rhs)),
            },
            other => other.clone(),
        };
        Cond { kind, span: c.span }
    }

    fn model_scalars(&mut self, m: &ModelExpr) -> ModelExpr {
        let kind = match &m.kind {
            ModelKind::Id(_) => return m.clone(),
            ModelKind::Rename(inner, j) => ModelKind::Rename(Box::new(self.model_scalars(inner)), j.clone()),
            ModelKind::Given(inner, c) => ModelKind::Given(Box::new(self.model_scalars(inner)), self.cond_scalars(c)),
        };
        ModelExpr::new(kind, m.span)
    }

    fn use_site(&mut self, m: &ModelExpr, mut target: Target<'_>) -> ModelExpr {
        let mut m = self.model_scalars(m);
        loop {
            let mut redexes = Vec::new();
            collect_redexes(&m, 0, &mut redexes);
            redexes.reverse();
            if matches!(m.kind, ModelKind::Rename(..)) {
                redexes.push((usize::MAX, RewriteRule::UseSiteRename));
            }
            if redexes.is_empty() {
                return m;
            }
            let (depth, rule) = redexes[self.chooser.choose(redexes.len())];
            let before = valuation(&m);
            m = if rule == RewriteRule::UseSiteRename {
                let ModelKind::Rename(inner, j) = m.kind else { unreachable!() };
                let i = inner.ident().to_string();
                match &mut target {
                    Target::Event(c) => **c = subst(c, &j, &i),
                    Target::Cols(a, b) => {
                        for c in a.iter_mut().chain(b.iter_mut()) {
                            if c.qual.as_deref() == Some(j.as_str()) {
                                c.qual = Some(i.clone());
                            }
                        }
                    }
                    Target::Nothing => {}
                }
                *inner
            } else {
                self.rewrite_at(m, depth)
            };
            self.trace.push(Step { rule, before, after: valuation(&m) });
        }
    }

    fn rewrite_at(&mut self, m: ModelExpr, depth: usize) -> ModelExpr {
        let span = m.span;
        if depth > 0 {
            let kind = match m.kind {
                ModelKind::Rename(inner, j) => ModelKind::Rename(Box::new(self.rewrite_at(*inner, depth - 1)), j),
                ModelKind::Given(inner, c) => ModelKind::Given(Box::new(self.rewrite_at(*inner, depth - 1)), c),
                ModelKind::Id(_) => unreachable!("redex depth beyond chain"),
            };
            return ModelExpr::new(kind, span);
        }
        let ModelKind::Given(inner, c_out) = m.kind else {
            let ModelKind::Rename(inner, k) = m.kind else { unreachable!() };
            let ModelKind::Rename(inner2, _) = inner.kind else { unreachable!() };
            return ModelExpr::new(ModelKind::Rename(inner2, k), span);
        };
        let inner_span = inner.span;
        match inner.kind {
            ModelKind::Rename(m2, j) => {
                let c = subst(&c_out, &j, m2.ident());
                let given = ModelExpr::new(ModelKind::Given(m2, c), inner_span);
                ModelExpr::new(ModelKind::Rename(Box::new(given), j), span)
            }
            ModelKind::Given(m2, c_in) => match (c_in.is_event0(), c_out.is_event0()) {
                (true, true) => {
                    let merged = self.merge_event0(&c_in, &c_out);
                    ModelExpr::new(ModelKind::Given(m2, merged), span)
                }
                (false, false) => {
                    let mut parts: Vec<Cond> = c_in.conjuncts().into_iter().cloned().collect();
                    parts.extend(c_out.conjuncts().into_iter().cloned());
                    let merged = Cond::conjoin(parts).expect("nonempty");
                    ModelExpr::new(ModelKind::Given(m2, merged), span)
                }
                (false, true) => {
                    let swapped = ModelExpr::new(ModelKind::Given(m2, c_out), inner_span);
                    ModelExpr::new(ModelKind::Given(Box::new(swapped), c_in), span)
                }
                (true, false) => unreachable!("not a redex"),
            },
            ModelKind::Id(_) => unreachable!("not a redex"),
        }
    }

    fn merge_event0(&mut self, first: &Cond, later: &Cond) -> Cond {
        let mut bound: BTreeSet<String> = first.vars().into_iter().collect();
        let mut parts: Vec<Cond> = first.conjuncts().into_iter().cloned().collect();
        for atom in later.conjuncts() {
            let CondKind::Atom { col, .. } = &atom.kind else { continue };
            if bound.insert(col.clone()) {
                parts.push(atom.clone());
            } else {
                self.warnings.push(Diagnostic {
                    message: format!("dropping {}: column {col} is already conditioned", print_cond(atom)),
                    span: atom.span,
                });
            }
        }
        Cond::conjoin(parts).expect("nonempty")
    }
}

/// Redexes of the model chain below the use site, outermost first.
fn collect_redexes(m: &ModelExpr, depth: usize, out: &mut Vec<(usize, RewriteRule)>) {
    match &m.kind {
        ModelKind::Id(_) => {}
        ModelKind::Rename(inner, _) => {
            if matches!(inner.kind, ModelKind::Rename(..)) {
                out.push((depth, RewriteRule::RenameRename));
            }
            collect_redexes(inner, depth + 1, out);
        }
        ModelKind::Given(inner, c) => {
            match &inner.kind {
                ModelKind::Rename(..) => out.push((depth, RewriteRule::RenameGiven)),
                ModelKind::Given(_, ci) => match (ci.is_event0(), c.is_event0()) {
                    (true, true) => out.push((depth, RewriteRule::MergeEvent0)),
                    (false, false) => out.push((depth, RewriteRule::MergeEvent)),
                    (false, true) => out.push((depth, RewriteRule::SwapEvent)),
                    (true, false) => {}
                },
                ModelKind::Id(_) => {}
            }
            collect_redexes(inner, depth + 1, out);
        }
    }
}

/// Replaces the model qualifier `from` by `to` in the atoms of `c`.
fn subst(c: &Cond, from: &str, to: &str) -> Cond {
    let kind = match &c.kind {
        CondKind::And(a, b) => CondKind::And(Box::new(subst(a, from, to)), Box::new(subst(b, from, to))),
        CondKind::Or(a, b) => CondKind::Or(Box::new(subst(a, from, to)), Box::new(subst(b, from, to))),
        CondKind::Atom { model, col, op, rhs } => CondKind::Atom {
            model: match model {
                Some(m) if m == from => Some(to.to_string()),
                other => other.clone(),
            },
            col: col.clone(),
            op: *op,
            rhs: rhs.clone(),
        },
        other => other.clone(),
    };
    Cond { kind, span: c.span }
}

/// Target conjuncts on columns `c0` leaves free; `None` when none remain.
fn drop_conditioned(target: &Cond, c0: &Cond) -> Option<Cond> {
    let fixed: BTreeSet<String> = c0.vars().into_iter().collect();
    let kept: Vec<Cond> = target
        .conjuncts()
        .into_iter()
        .filter(|a| match &a.kind {
            CondKind::Atom { col, .. } => !fixed.contains(col),
            _ => true,
        })
        .cloned()
        .collect();
    if kept.len() == target.conjuncts().len() {
        return Some(target.clone());
    }
    Cond::conjoin(kept)
}
