//! The safe/exact/continuous macros deciding whether a query's result
//! converges when approximate backends are given more compute.
//!
//! Clauses not covered by the original macros (UNION, DEDUP, DUPLICATE,
//! WITH, GROUP BY, GENERATE, MUTUAL INFO) are extended compositionally.

use crate::parser::ast::*;
use crate::parser::{print_scalar, print_table};
use crate::value::Op;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flags {
    pub safe: bool,
    pub exact: bool,
    pub continuous: bool,
}

impl Flags {
    const ALL: Flags = Flags { safe: true, exact: true, continuous: true };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Table,
    Model,
    Event,
    Scalar,
}

#[derive(Debug, Clone)]
pub struct NodeReport {
    pub kind: NodeKind,
    pub label: String,
    pub span: Span,
    pub flags: Flags,
}

#[derive(Debug, Clone)]
pub struct Offense {
    pub span: Span,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct SafetyReport {
    pub safe: bool,
    /// Every analyzed node in post-order.
    pub nodes: Vec<NodeReport>,
    /// Nodes that are unsafe on their own account, not merely through a child.
    pub offenses: Vec<Offense>,
}

impl SafetyReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for o in &self.offenses {
            out.push_str(&format!("unsafe at {}: {}\n", o.span, o.reason));
        }
        out
    }
}

pub fn analyze(q: &Query) -> SafetyReport {
    let mut a = Analyzer { nodes: Vec::new(), offenses: Vec::new() };
    let safe = match q {
        Query::Table(t) => a.table(t),
        Query::Scalar(e) => a.scalar(e).safe,
    };
    SafetyReport { safe, nodes: a.nodes, offenses: a.offenses }
}

pub fn scalar_flags(e: &ScalarExpr) -> Flags {
    Analyzer { nodes: Vec::new(), offenses: Vec::new() }.scalar(e)
}

pub fn table_safe(t: &TableExpr) -> bool {
    Analyzer { nodes: Vec::new(), offenses: Vec::new() }.table(t)
}

pub fn cond_safe(c: &Cond) -> bool {
    Analyzer { nodes: Vec::new(), offenses: Vec::new() }.cond(c)
}

/// Operator continuity; division only with a nonzero constant denominator.
pub fn op_continuous(op: Op, args: &[ScalarExpr]) -> bool {
    match op {
        Op::Add | Op::Sub | Op::Mul | Op::Neg | Op::Log | Op::Exp | Op::Sqrt | Op::And | Op::Or => true,
        Op::Div => match &args[1].kind {
            ScalarKind::Const(v) => v.as_f64().is_some_and(|x| x != 0.0),
            _ => false,
        },
        Op::Eq | Op::Ne | Op::Lt | Op::Gt | Op::Le | Op::Ge => false,
    }
}

struct Analyzer {
    nodes: Vec<NodeReport>,
    offenses: Vec<Offense>,
}

impl Analyzer {
    fn record(&mut self, kind: NodeKind, label: String, span: Span, flags: Flags) -> Flags {
        self.nodes.push(NodeReport { kind, label, span, flags });
        flags
    }

    fn offend(&mut self, span: Span, reason: String) {
        self.offenses.push(Offense { span, reason });
    }

    fn table(&mut self, t: &TableExpr) -> bool {
        let safe = match &t.kind {
            TableKind::Id(_) => true,
            TableKind::Rename(a, _) | TableKind::Dedup(a) => self.table(a),
            TableKind::Union(a, b) | TableKind::Join(a, b) => {
                let (x, y) = (self.table(a), self.table(b));
                x && y
            }
            TableKind::Duplicate(a, e) => {
                let x = self.table(a);
                self.scalar(e).safe && x
            }
            TableKind::Where(a, e) => {
                self.table(a);
                self.scalar(e);
                self.offend(t.span, "WHERE is never safe".into());
                false
            }
            TableKind::With { binding, body, .. } => {
                let b = match binding.as_ref() {
                    Binding::Table(b) => self.table(b),
                    Binding::Model(m) => self.model(m),
                    Binding::Ident(..) => true,
                };
                self.table(body) && b
            }
            TableKind::Select { items, from } => {
                let mut safe = from.as_ref().is_none_or(|f| self.table(f));
                for item in items {
                    if let SelectItem::Expr { expr, .. } = item {
                        let f = self.scalar(expr);
                        if !f.continuous {
                            self.offend(expr.span, format!("projection {} is not continuous", print_scalar(expr)));
                            safe = false;
                        }
                    }
                }
                safe
            }
            TableKind::GroupBy { source, keys, aggs } => {
                let mut safe = self.table(source);
                let exprs = keys.iter().map(|(e, _)| e).chain(aggs.iter().filter_map(|a| a.arg.as_ref()));
                for e in exprs {
                    if !self.scalar(e).continuous {
                        self.offend(e.span, format!("grouping expression {} is not continuous", print_scalar(e)));
                        safe = false;
                    }
                }
                safe
            }
            TableKind::Generate { model, limit } => {
                let m = self.model(model);
                self.scalar(limit).safe && m
            }
            TableKind::GenerativeJoin { table, model } => {
                let x = self.table(table);
                self.model(model) && x
            }
        };
        let label = short(&print_table(t));
        self.record(NodeKind::Table, label, t.span, Flags { safe, exact: false, continuous: false }).safe
    }

    fn model(&mut self, m: &ModelExpr) -> bool {
        let safe = match &m.kind {
            ModelKind::Id(_) => true,
            ModelKind::Rename(inner, _) => self.model(inner),
            ModelKind::Given(inner, c) => {
                let x = self.model(inner);
                self.cond(c) && x
            }
        };
        let label = short(&crate::parser::print_model(m));
        self.record(NodeKind::Model, label, m.span, Flags { safe, exact: false, continuous: false }).safe
    }

    fn cond(&mut self, c: &Cond) -> bool {
        let safe = match &c.kind {
            CondKind::And(a, b) | CondKind::Or(a, b) => {
                let x = self.cond(a);
                self.cond(b) && x
            }
            CondKind::Atom { rhs, .. } => {
                let exact = self.scalar(rhs).exact;
                if !exact {
                    self.offend(rhs.span, format!("condition value {} is not exact", print_scalar(rhs)));
                }
                exact
            }
            CondKind::True => true,
            // Sugar is gone after desugaring; a bare column is a column
            // reference, which is not exact.
            CondKind::Bare { .. } | CondKind::Star { .. } => false,
        };
        let label = short(&crate::parser::print_cond(c));
        self.record(NodeKind::Event, label, c.span, Flags { safe, exact: false, continuous: false }).safe
    }

    fn scalar(&mut self, e: &ScalarExpr) -> Flags {
        let flags = match &e.kind {
            ScalarKind::Const(_) => Flags::ALL,
            ScalarKind::Col(_) => Flags { safe: true, exact: false, continuous: true },
            ScalarKind::Op(op, args) => {
                let fs: Vec<Flags> = args.iter().map(|a| self.scalar(a)).collect();
                Flags {
                    safe: fs.iter().all(|f| f.safe),
                    exact: fs.iter().all(|f| f.exact),
                    continuous: op_continuous(*op, args) && fs.iter().all(|f| f.continuous),
                }
            }
            ScalarKind::Probability { event, model, .. } => {
                let ok = self.cond(event) & self.model(model);
                Flags { safe: ok, exact: false, continuous: ok }
            }
            ScalarKind::MutualInfo { cond, model, .. } => {
                let c = cond.as_ref().is_none_or(|c| self.cond(c));
                let ok = self.model(model) && c;
                Flags { safe: ok, exact: false, continuous: ok }
            }
            ScalarKind::Agg(_, arg) => {
                let f = arg.as_ref().map_or(Flags::ALL, |a| self.scalar(a));
                Flags { safe: f.safe, exact: false, continuous: false }
            }
        };
        self.record(NodeKind::Scalar, short(&print_scalar(e)), e.span, flags)
    }
}

fn short(s: &str) -> String {
    if s.chars().count() <= 60 {
        s.to_string()
    } else {
        format!("{}...", s.chars().take(57).collect::<String>())
    }
}
