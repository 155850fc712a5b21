//! Interpreter for lowered programs.
//!
//! Every AMI call draws from its own ChaCha stream, seeded from the query
//! seed, the call site and the indices of the enclosing rows and
//! repetitions, so results do not depend on evaluation order or on which
//! calls the cache answers.

pub mod aggregate;
mod cache;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use cache::{QueryCache, Stats, StatsSnapshot};

use crate::ami::{AmiCtx, AmiError, Assign, Event, EventExpr, Independence, RowModel};
use crate::lower::{AmiCall, Event0L, EventL, LoweredProgram, Term};
use crate::table::{dedup_rows, duplicate_rows, join_rows, Catalog, Column, Row, Schema, Table, TableError};
use crate::value::{op_apply, BaseType, OpError, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub cache: bool,
    pub indep_opt: bool,
    pub particles: usize,
    pub seed: u64,
    pub mi_samples: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { cache: true, indep_opt: true, particles: 1000, seed: 0, mi_samples: 1000 }
    }
}

/// Data tables and row models by identifier.
#[derive(Debug, Clone, Default)]
pub struct Env {
    pub tables: BTreeMap<String, Table>,
    pub models: BTreeMap<String, Arc<dyn RowModel>>,
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_table(&mut self, name: impl Into<String>, t: Table) {
        self.tables.insert(name.into(), t);
    }

    pub fn add_model(&mut self, name: impl Into<String>, m: Arc<dyn RowModel>) {
        self.models.insert(name.into(), m);
    }

    pub fn catalog(&self) -> Catalog {
        let mut c = Catalog::new();
        for (n, t) in &self.tables {
            c.add_table(n.clone(), t.schema.columns.clone());
        }
        for (n, m) in &self.models {
            c.add_model(n.clone(), m.columns().to_vec());
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound identifier {0}")]
    Unbound(String),
    #[error("call site {site} on model {model}: {source}")]
    Ami {
        site: u32,
        model: String,
        #[source]
        source: AmiError,
    },
    #[error(transparent)]
    Op(#[from] OpError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("{0}")]
    Runtime(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EVal {
    Scalar(Value),
    Row(Row),
    Bag(Vec<Row>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Table(Table),
    Scalar(Value),
}

type R<T> = Result<T, EvalError>;

pub struct Evaluator<'e> {
    env: &'e Env,
    opts: EvalOptions,
    cache: QueryCache,
    stats: Stats,
}

#[derive(Default)]
struct Frame {
    vars: Vec<(String, Row)>,
    lets: Vec<(String, Vec<Row>)>,
    path: Vec<u64>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Numeric representation expected by a column of type `ty`.
pub fn coerce(ty: &BaseType, v: Value) -> Value {
    match (ty, v) {
        (t, Value::Int(n)) if t.is_continuous() => Value::Real(n as f64),
        (t, Value::Real(x)) if t.is_integral() && x.fract() == 0.0 && x.abs() < 9.0e15 => Value::Int(x as i64),
        (_, v) => v,
    }
}

/// A call with its conditions evaluated.
struct Prepared {
    model: Arc<dyn RowModel>,
    c0: Assign,
    /// Top-level conjuncts of the event condition.
    c1: Vec<EventExpr>,
}

fn conjuncts(e: EventExpr, out: &mut Vec<EventExpr>) {
    match e {
        EventExpr::And(a, b) => {
            conjuncts(*a, out);
            conjuncts(*b, out);
        }
        EventExpr::True => {}
        e => out.push(e),
    }
}

fn expr_columns(e: &EventExpr, out: &mut BTreeSet<usize>) {
    match e {
        EventExpr::True => {}
        EventExpr::And(a, b) | EventExpr::Or(a, b) => {
            expr_columns(a, out);
            expr_columns(b, out);
        }
        EventExpr::Atom(i, _, _) => {
            out.insert(*i);
        }
    }
}

fn event_of(conj: &[EventExpr]) -> Event {
    conj.iter().fold(Event::full(), |e, c| e.intersect(&Event::from_expr(c)))
}

impl<'e> Evaluator<'e> {
    pub fn new(env: &'e Env, opts: EvalOptions) -> Self {
        Evaluator { env, opts, cache: QueryCache::default(), stats: Stats::default() }
    }

    pub fn options(&self) -> &EvalOptions {
        &self.opts
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    /// Evaluates a lowered program. Table results are coerced to `columns`.
    pub fn run(&self, p: &LoweredProgram) -> R<Output> {
        match (self.eval(&p.term)?, &p.columns) {
            (EVal::Bag(rows), Some(cols)) => {
                let rows = rows
                    .into_iter()
                    .map(|r| r.into_iter().zip(cols).map(|(v, c)| fit(&c.ty, v)).collect())
                    .collect();
                let schema = Schema::new(cols.clone())?;
                Ok(Output::Table(Table { schema, rows }))
            }
            (EVal::Scalar(v), None) => Ok(Output::Scalar(v)),
            (other, _) => Err(EvalError::Runtime(format!("unexpected program result {other:?}"))),
        }
    }

    pub fn eval(&self, t: &Term) -> R<EVal> {
        self.term(t, &mut Frame::default())
    }

    fn scalar(&self, t: &Term, f: &mut Frame) -> R<Value> {
        match self.term(t, f)? {
            EVal::Scalar(v) => Ok(v),
            other => Err(EvalError::Runtime(format!("expected a scalar, got {other:?}"))),
        }
    }

    fn bag(&self, t: &Term, f: &mut Frame) -> R<Vec<Row>> {
        match self.term(t, f)? {
            EVal::Bag(v) => Ok(v),
            other => Err(EvalError::Runtime(format!("expected a bag, got {other:?}"))),
        }
    }

    fn row(&self, t: &Term, f: &mut Frame) -> R<Row> {
        match self.term(t, f)? {
            EVal::Row(v) => Ok(v),
            other => Err(EvalError::Runtime(format!("expected a row, got {other:?}"))),
        }
    }

    fn count(&self, t: &Term, f: &mut Frame) -> R<usize> {
        match self.scalar(t, f)? {
            Value::Null => Ok(0),
            Value::Int(n) if n >= 0 => Ok(n as usize),
            v => Err(EvalError::Runtime(format!("count must be a natural number, got {v}"))),
        }
    }

    /// Evaluates `body` once per row of `src`, with the row bound to `var`.
    fn each<T>(&self, var: &str, src: Vec<Row>, f: &mut Frame, mut body: impl FnMut(&Self, Row, &mut Frame) -> R<T>) -> R<Vec<T>> {
        let mut out = Vec::with_capacity(src.len());
        for (i, row) in src.into_iter().enumerate() {
            f.vars.push((var.to_string(), row.clone()));
            f.path.push(i as u64);
            let r = body(self, row, f);
            f.path.pop();
            f.vars.pop();
            out.push(r?);
        }
        Ok(out)
    }

    fn term(&self, t: &Term, f: &mut Frame) -> R<EVal> {
        Ok(match t {
            Term::Const(v) => EVal::Scalar(v.clone()),
            Term::Var(x) => match f.vars.iter().rev().find(|(n, _)| n == x) {
                Some((_, r)) => EVal::Row(r.clone()),
                None => return Err(EvalError::Unbound(x.clone())),
            },
            Term::Table(n) => match f.lets.iter().rev().find(|(m, _)| m == n) {
                Some((_, rows)) => EVal::Bag(rows.clone()),
                None => match self.env.tables.get(n) {
                    Some(t) => EVal::Bag(t.rows.clone()),
                    None => return Err(EvalError::Unbound(n.clone())),
                },
            },
            Term::Tuple(fs) => EVal::Row(fs.iter().map(|x| self.scalar(x, f)).collect::<R<_>>()?),
            Term::Proj(x, i) => {
                let r = self.row(x, f)?;
                EVal::Scalar(r.get(*i).cloned().ok_or_else(|| EvalError::Runtime(format!("projection {i} out of range")))?)
            }
            Term::Op(op, args) => {
                let vs = args.iter().map(|a| self.scalar(a, f)).collect::<R<Vec<_>>>()?;
                EVal::Scalar(op_apply(*op, &vs)?)
            }
            Term::Exp(x) => EVal::Scalar(match self.scalar(x, f)? {
                Value::Null => Value::Null,
                v => Value::real(v.as_f64().unwrap_or(f64::NAN).exp()),
            }),
            Term::Singleton(x) => EVal::Bag(vec![self.row(x, f)?]),
            Term::Map { var, body, src } => {
                let src = self.bag(src, f)?;
                EVal::Bag(self.each(var, src, f, |s, _, f| s.row(body, f))?)
            }
            Term::Filter { var, pred, src } => {
                let src = self.bag(src, f)?;
                let keep = self.each(var, src, f, |s, row, f| Ok((s.scalar(pred, f)? == Value::Bool(true), row)))?;
                EVal::Bag(keep.into_iter().filter(|(k, _)| *k).map(|(_, r)| r).collect())
            }
            Term::MapReduce { var, body, src } => {
                let src = self.bag(src, f)?;
                EVal::Bag(self.each(var, src, f, |s, _, f| s.bag(body, f))?.into_iter().flatten().collect())
            }
            Term::Replicate(n, b) => {
                let n = self.count(n, f)?;
                let mut out = Vec::new();
                for j in 0..n {
                    f.path.push(j as u64);
                    let r = self.bag(b, f);
                    f.path.pop();
                    out.extend(r?);
                }
                EVal::Bag(out)
            }
            Term::Join(a, b) => EVal::Bag(join_rows(&self.bag(a, f)?, &self.bag(b, f)?)),
            Term::Union(a, b) => {
                let mut x = self.bag(a, f)?;
                x.extend(self.bag(b, f)?);
                EVal::Bag(x)
            }
            Term::Dedup(a) => EVal::Bag(dedup_rows(&self.bag(a, f)?)),
            Term::Duplicate(a, n) => {
                let rows = self.bag(a, f)?;
                EVal::Bag(duplicate_rows(&rows, self.count(n, f)?))
            }
            Term::Let { name, bound, body } => {
                let rows = self.bag(bound, f)?;
                f.lets.push((name.clone(), rows));
                let r = self.term(body, f);
                f.lets.pop();
                r?
            }
            Term::GroupBy { var, src, keys, aggs } => {
                let src = self.bag(src, f)?;
                let rows = self.each(var, src, f, |s, _, f| {
                    let k = keys.iter().map(|k| s.scalar(k, f)).collect::<R<Row>>()?;
                    let a = aggs.iter().map(|(_, a)| a.as_ref().map(|a| s.scalar(a, f)).transpose()).collect::<R<Vec<_>>>()?;
                    Ok((k, a))
                })?;
                let kinds: Vec<_> = aggs.iter().map(|(a, _)| *a).collect();
                EVal::Bag(aggregate::group(&kinds, rows))
            }
            Term::Simulate(call) => EVal::Row(self.simulate(call, f)?),
            Term::Logpdf(call, target) => EVal::Scalar(self.logpdf(call, target, f)?),
            Term::Prob(call, target) => EVal::Scalar(self.prob(call, target, f)?),
            Term::MutualInfo(call, a, b) => EVal::Scalar(self.mutual_info(call, a, b, f)?),
        })
    }

    fn rng(&self, site: u32, f: &Frame) -> ChaCha8Rng {
        let mut h = splitmix64(self.opts.seed ^ splitmix64(site as u64));
        for p in &f.path {
            h = splitmix64(h ^ splitmix64(p.wrapping_add(0x5851_f42d_4c95_7f2d)));
        }
        ChaCha8Rng::seed_from_u64(h)
    }

    fn model(&self, call: &AmiCall) -> R<Arc<dyn RowModel>> {
        self.env.models.get(&call.model).cloned().ok_or_else(|| EvalError::Unbound(call.model.clone()))
    }

    fn ami_err(&self, call: &AmiCall, source: AmiError) -> EvalError {
        EvalError::Ami { site: call.site, model: call.model.clone(), source }
    }

    fn assign(&self, e: &Event0L, cols: &[Column], f: &mut Frame) -> R<Assign> {
        let mut out = Vec::new();
        for (i, t) in &e.0 {
            let v = self.scalar(t, f)?;
            if !v.is_null() {
                out.push((*i, coerce(&cols[*i].ty, v)));
            }
        }
        out.sort_by_key(|(i, _)| *i);
        Ok(out)
    }

    fn event_expr(&self, e: &EventL, cols: &[Column], f: &mut Frame) -> R<EventExpr> {
        Ok(match e {
            EventL::True => EventExpr::True,
            EventL::And(a, b) => EventExpr::And(Box::new(self.event_expr(a, cols, f)?), Box::new(self.event_expr(b, cols, f)?)),
            EventL::Or(a, b) => EventExpr::Or(Box::new(self.event_expr(a, cols, f)?), Box::new(self.event_expr(b, cols, f)?)),
            EventL::Atom(i, op, t) => EventExpr::Atom(*i, *op, coerce(&cols[*i].ty, self.scalar(t, f)?)),
        })
    }

    fn prepare(&self, call: &AmiCall, f: &mut Frame) -> R<Prepared> {
        Stats::bump(&self.stats.site_executions);
        let model = self.model(call)?;
        let c0 = self.assign(&call.c0, model.columns(), f)?;
        let mut c1 = Vec::new();
        conjuncts(self.event_expr(&call.c1, model.columns(), f)?, &mut c1);
        Ok(Prepared { model, c0, c1 })
    }

    /// Drops condition conjuncts the model certifies independent of the
    /// target and of the remaining conditions.
    fn simplify(&self, p: &mut Prepared, target: &BTreeSet<usize>) {
        if !self.opts.indep_opt {
            return;
        }
        let mut i = 0;
        while i < p.c0.len() {
            let others = self.condition_columns(p, Some(i), None, target);
            if p.model.independence(&[p.c0[i].0].into(), &others) == Independence::Independent {
                p.c0.remove(i);
                Stats::bump(&self.stats.dropped_conditions);
            } else {
                i += 1;
            }
        }
        let mut j = 0;
        while j < p.c1.len() {
            let mut own = BTreeSet::new();
            expr_columns(&p.c1[j], &mut own);
            let others = self.condition_columns(p, None, Some(j), target);
            if !own.is_empty() && p.model.independence(&own, &others) == Independence::Independent {
                p.c1.remove(j);
                Stats::bump(&self.stats.dropped_conditions);
            } else {
                j += 1;
            }
        }
    }

    fn condition_columns(&self, p: &Prepared, skip0: Option<usize>, skip1: Option<usize>, target: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut cols = target.clone();
        for (k, (c, _)) in p.c0.iter().enumerate() {
            if Some(k) != skip0 {
                cols.insert(*c);
            }
        }
        for (k, e) in p.c1.iter().enumerate() {
            if Some(k) != skip1 {
                expr_columns(e, &mut cols);
            }
        }
        cols
    }

    /// The conditioned model, or `None` for a null-measure condition.
    fn conditioned(&self, call: &AmiCall, p: &Prepared, c1: &Event, rng: &mut ChaCha8Rng) -> R<Option<Arc<dyn RowModel>>> {
        if p.c0.is_empty() && c1.is_full() {
            return Ok(Some(p.model.clone()));
        }
        let k = cache::key(&call.model, "condition", &p.c0, c1, "");
        if self.opts.cache {
            if let Some(m) = self.cache.model(&k) {
                Stats::bump(&self.stats.cache_hits);
                return Ok(Some(m));
            }
        }
        Stats::bump(&self.stats.conditionings);
        let mut ctx = AmiCtx { rng, particles: self.opts.particles };
        match p.model.condition(&p.c0, c1, &mut ctx) {
            Ok(m) => {
                if self.opts.cache {
                    self.cache.put_model(k, m.clone());
                }
                Ok(Some(m))
            }
            Err(AmiError::NullMeasure) => Ok(None),
            Err(e) => Err(self.ami_err(call, e)),
        }
    }

    fn simulate(&self, call: &AmiCall, f: &mut Frame) -> R<Row> {
        let p = self.prepare(call, f)?;
        let mut rng = self.rng(call.site, f);
        let c1 = event_of(&p.c1);
        let n = p.model.columns().len();
        let Some(m) = self.conditioned(call, &p, &c1, &mut rng)? else {
            return Ok(crate::ami::null_row(n));
        };
        Stats::bump(&self.stats.backend_calls);
        let mut ctx = AmiCtx { rng: &mut rng, particles: self.opts.particles };
        match m.sample(&mut ctx) {
            Ok(r) => Ok(r),
            Err(AmiError::NullMeasure) => Ok(crate::ami::null_row(n)),
            Err(e) => Err(self.ami_err(call, e)),
        }
    }

    /// Shared path of the scalar queries: simplification, then the scalar
    /// cache, then conditioning and `query` on the conditioned model.
    fn scalar_call(
        &self,
        call: &AmiCall,
        mut p: Prepared,
        target: &BTreeSet<usize>,
        method: &str,
        extra: String,
        f: &mut Frame,
        query: impl FnOnce(&dyn RowModel, &mut AmiCtx<'_>) -> Result<f64, AmiError>,
    ) -> R<Option<f64>> {
        self.simplify(&mut p, target);
        let c1 = event_of(&p.c1);
        let k = cache::key(&call.model, method, &p.c0, &c1, &extra);
        if self.opts.cache {
            if let Some(x) = self.cache.scalar(&k) {
                Stats::bump(&self.stats.cache_hits);
                return Ok(x);
            }
        }
        let mut rng = self.rng(call.site, f);
        let out = match self.conditioned(call, &p, &c1, &mut rng)? {
            None => None,
            Some(m) => {
                Stats::bump(&self.stats.backend_calls);
                let mut ctx = AmiCtx { rng: &mut rng, particles: self.opts.particles };
                match query(m.as_ref(), &mut ctx) {
                    Ok(x) => Some(x),
                    Err(AmiError::NullMeasure) => None,
                    Err(e) => return Err(self.ami_err(call, e)),
                }
            }
        };
        if self.opts.cache {
            self.cache.put_scalar(k, out);
        }
        Ok(out)
    }

    fn logpdf(&self, call: &AmiCall, target: &Event0L, f: &mut Frame) -> R<Value> {
        let p = self.prepare(call, f)?;
        let x = self.assign(target, p.model.columns(), f)?;
        let cols: BTreeSet<usize> = x.iter().map(|(i, _)| *i).collect();
        let extra = format!("{x:?}");
        let r = self.scalar_call(call, p, &cols, "logpdf", extra, f, |m, ctx| m.logpdf(&x, ctx))?;
        Ok(r.map_or(Value::Null, |v| if v.is_nan() { Value::Null } else { Value::Real(v) }))
    }

    fn prob(&self, call: &AmiCall, target: &EventL, f: &mut Frame) -> R<Value> {
        let p = self.prepare(call, f)?;
        let e = self.event_expr(target, p.model.columns(), f)?;
        let mut cols = BTreeSet::new();
        expr_columns(&e, &mut cols);
        let ev = Event::from_expr(&e);
        let extra = format!("{:?}", ev.rects);
        let r = self.scalar_call(call, p, &cols, "prob", extra, f, |m, ctx| m.prob(&ev, ctx))?;
        Ok(r.map_or(Value::Null, |v| Value::real(v.clamp(0.0, 1.0))))
    }

    /// Monte Carlo estimate of I(A; B) under the conditioned model.
    fn mutual_info(&self, call: &AmiCall, a: &[usize], b: &[usize], f: &mut Frame) -> R<Value> {
        let p = self.prepare(call, f)?;
        let target: BTreeSet<usize> = a.iter().chain(b).copied().collect();
        let n = self.opts.mi_samples.max(1);
        let extra = format!("{a:?}{b:?}{n}");
        let r = self.scalar_call(call, p, &target, "mi", extra, f, |m, ctx| {
            let mut total = 0.0;
            let mut used = 0usize;
            for _ in 0..n {
                let row = m.sample(ctx)?;
                let pick = |cols: &[usize]| -> Assign { cols.iter().map(|i| (*i, row[*i].clone())).collect() };
                let (xa, xb) = (pick(a), pick(b));
                if xa.iter().chain(&xb).any(|(_, v)| v.is_null()) {
                    continue;
                }
                let mut xab = xa.clone();
                xab.extend(xb.iter().cloned());
                xab.sort_by_key(|(i, _)| *i);
                let d = m.logpdf(&xab, ctx)? - m.logpdf(&xa, ctx)? - m.logpdf(&xb, ctx)?;
                if d.is_finite() {
                    total += d;
                    used += 1;
                }
            }
            if used == 0 {
                return Err(AmiError::NullMeasure);
            }
            Ok(total / used as f64)
        })?;
        match r {
            Some(x) => Ok(Value::real(x)),
            None => Err(self.ami_err(call, AmiError::NullMeasure)),
        }
    }
}

/// Brings a computed value into the declared column type.
fn fit(ty: &BaseType, v: Value) -> Value {
    match (ty, coerce(ty, v)) {
        (BaseType::Ranged { lo, hi }, Value::Real(x)) => Value::Real(x.clamp(*lo, *hi)),
        (BaseType::PosReal, Value::Real(x)) => Value::Real(x.max(0.0)),
        (_, v) => v,
    }
}
