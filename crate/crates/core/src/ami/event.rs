//! Events as finite disjoint unions of hyper-rectangles over column
//! positions. A rectangle constrains each mentioned column to a [`ColSet`]
//! and leaves the others free.

use std::collections::{BTreeMap, BTreeSet};

use crate::parser::ast::CmpOp;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl Interval {
    pub const FULL: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY, lo_open: true, hi_open: true };

    pub fn below(x: f64) -> Interval {
        Interval { hi: x, hi_open: true, ..Interval::FULL }
    }

    pub fn above(x: f64) -> Interval {
        Interval { lo: x, lo_open: true, ..Interval::FULL }
    }

    pub fn is_full(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && (self.lo_open || self.hi_open))
    }

    pub fn contains(&self, x: f64) -> bool {
        let lo_ok = if self.lo_open { x > self.lo } else { x >= self.lo };
        let hi_ok = if self.hi_open { x < self.hi } else { x <= self.hi };
        lo_ok && hi_ok
    }

    pub fn intersect(&self, o: &Interval) -> Interval {
        let (lo, lo_open) = match self.lo.partial_cmp(&o.lo) {
            Some(std::cmp::Ordering::Greater) => (self.lo, self.lo_open),
            Some(std::cmp::Ordering::Less) => (o.lo, o.lo_open),
            _ => (self.lo, self.lo_open || o.lo_open),
        };
        let (hi, hi_open) = match self.hi.partial_cmp(&o.hi) {
            Some(std::cmp::Ordering::Less) => (self.hi, self.hi_open),
            Some(std::cmp::Ordering::Greater) => (o.hi, o.hi_open),
            _ => (self.hi, self.hi_open || o.hi_open),
        };
        Interval { lo, hi, lo_open, hi_open }
    }

    /// The complement as at most two disjoint intervals.
    pub fn complement(&self) -> Vec<Interval> {
        let mut out = Vec::new();
        if self.lo > f64::NEG_INFINITY {
            out.push(Interval { hi: self.lo, hi_open: !self.lo_open, ..Interval::FULL });
        }
        if self.hi < f64::INFINITY {
            out.push(Interval { lo: self.hi, lo_open: !self.hi_open, ..Interval::FULL });
        }
        out
    }
}

/// A set of values for one column: either an explicit finite set, or an
/// interval with finitely many points removed. Non-numeric values belong
/// to an interval only when it is the full line.
#[derive(Debug, Clone, PartialEq)]
pub enum ColSet {
    Finite(BTreeSet<Value>),
    Co { iv: Interval, excl: BTreeSet<Value> },
}

impl ColSet {
    pub fn full() -> ColSet {
        ColSet::Co { iv: Interval::FULL, excl: BTreeSet::new() }
    }

    pub fn point(v: Value) -> ColSet {
        ColSet::Finite([v].into_iter().collect())
    }

    pub fn interval(iv: Interval) -> ColSet {
        ColSet::Co { iv, excl: BTreeSet::new() }
    }

    pub fn contains(&self, v: &Value) -> bool {
        match self {
            ColSet::Finite(s) => s.contains(v),
            ColSet::Co { iv, excl } => {
                !excl.contains(v)
                    && (iv.is_full() || v.as_f64().is_some_and(|x| iv.contains(x)))
            }
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, ColSet::Co { iv, excl } if iv.is_full() && excl.is_empty())
    }

    pub fn is_empty(&self) -> bool {
        match self {
            ColSet::Finite(s) => s.is_empty(),
            ColSet::Co { iv, .. } => iv.is_empty(),
        }
    }

    pub fn intersect(&self, o: &ColSet) -> ColSet {
        match (self, o) {
            (ColSet::Finite(s), other) | (other, ColSet::Finite(s)) => {
                ColSet::Finite(s.iter().filter(|v| other.contains(v)).cloned().collect())
            }
            (ColSet::Co { iv: a, excl: ea }, ColSet::Co { iv: b, excl: eb }) => {
                let iv = a.intersect(b);
                let excl = ea.union(eb).filter(|v| iv.is_full() || v.as_f64().is_some_and(|x| iv.contains(x))).cloned().collect();
                ColSet::Co { iv, excl }
            }
        }
    }

    /// The complement as a list of pairwise disjoint sets.
    pub fn complement(&self) -> Vec<ColSet> {
        match self {
            ColSet::Finite(s) => vec![ColSet::Co { iv: Interval::FULL, excl: s.clone() }],
            ColSet::Co { iv, excl } => {
                let mut out: Vec<ColSet> = iv.complement().into_iter().map(ColSet::interval).collect();
                if !excl.is_empty() {
                    out.push(ColSet::Finite(excl.clone()));
                }
                out
            }
        }
    }
}

/// A product of per-column sets; unmentioned columns are unconstrained.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Rect(pub BTreeMap<usize, ColSet>);

impl Rect {
    pub fn full() -> Rect {
        Rect(BTreeMap::new())
    }

    pub fn get(&self, col: usize) -> Option<&ColSet> {
        self.0.get(&col)
    }

    pub fn is_empty(&self) -> bool {
        self.0.values().any(ColSet::is_empty)
    }

    pub fn contains(&self, row: &[Value]) -> bool {
        self.0.iter().all(|(c, s)| s.contains(&row[*c]))
    }

    pub fn intersect(&self, o: &Rect) -> Rect {
        let mut m = self.0.clone();
        for (c, s) in &o.0 {
            let merged = match m.get(c) {
                Some(t) => t.intersect(s),
                None => s.clone(),
            };
            m.insert(*c, merged);
        }
        Rect(m)
    }

    /// `self \ o` as disjoint rectangles.
    pub fn minus(&self, o: &Rect) -> Vec<Rect> {
        let mut out = Vec::new();
        let mut prefix = self.clone();
        for (c, s) in &o.0 {
            for piece in s.complement() {
                let mut r = prefix.clone();
                let merged = match r.0.get(c) {
                    Some(t) => t.intersect(&piece),
                    None => piece,
                };
                r.0.insert(*c, merged);
                if !r.is_empty() {
                    out.push(r);
                }
            }
            let merged = match prefix.0.get(c) {
                Some(t) => t.intersect(s),
                None => s.clone(),
            };
            prefix.0.insert(*c, merged);
            if prefix.is_empty() {
                break;
            }
        }
        out
    }

    pub fn columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.keys().copied()
    }
}

/// A disjoint union of rectangles. No rectangles is the empty event.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub rects: Vec<Rect>,
}

/// Event syntax with values already evaluated and columns resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum EventExpr {
    True,
    And(Box<EventExpr>, Box<EventExpr>),
    Or(Box<EventExpr>, Box<EventExpr>),
    Atom(usize, CmpOp, Value),
}

impl Event {
    pub fn full() -> Event {
        Event { rects: vec![Rect::full()] }
    }

    pub fn empty() -> Event {
        Event { rects: Vec::new() }
    }

    pub fn is_full(&self) -> bool {
        self.rects.len() == 1 && self.rects[0].0.values().all(ColSet::is_full)
    }

    /// Builds the event of `e`. An atom against Null is the whole space.
    pub fn from_expr(e: &EventExpr) -> Event {
        match e {
            EventExpr::True => Event::full(),
            EventExpr::Atom(_, _, Value::Null) => Event::full(),
            EventExpr::Atom(c, op, v) => {
                let set = match op {
                    CmpOp::Eq => ColSet::point(v.clone()),
                    CmpOp::Lt | CmpOp::Gt => match v.as_f64() {
                        Some(x) if *op == CmpOp::Lt => ColSet::interval(Interval::below(x)),
                        Some(x) => ColSet::interval(Interval::above(x)),
                        None => ColSet::Finite(BTreeSet::new()),
                    },
                };
                Event { rects: vec![Rect([(*c, set)].into_iter().collect())] }
            }
            EventExpr::And(a, b) => Event::from_expr(a).intersect(&Event::from_expr(b)),
            EventExpr::Or(a, b) => Event::from_expr(a).union(&Event::from_expr(b)),
        }
    }

    pub fn intersect(&self, o: &Event) -> Event {
        let mut rects = Vec::new();
        for a in &self.rects {
            for b in &o.rects {
                let r = a.intersect(b);
                if !r.is_empty() {
                    rects.push(r);
                }
            }
        }
        Event { rects }
    }

    pub fn union(&self, o: &Event) -> Event {
        let mut rects = self.rects.clone();
        for b in &o.rects {
            let mut pieces = vec![b.clone()];
            for a in &self.rects {
                pieces = pieces.iter().flat_map(|p| p.minus(a)).collect();
            }
            rects.extend(pieces);
        }
        Event { rects }
    }

    pub fn contains(&self, row: &[Value]) -> bool {
        self.rects.iter().any(|r| r.contains(row))
    }

    pub fn columns(&self) -> BTreeSet<usize> {
        self.rects.iter().flat_map(|r| r.columns()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn atom(c: usize, op: CmpOp, v: i64) -> EventExpr {
        EventExpr::Atom(c, op, Value::Int(v))
    }

    fn or(a: EventExpr, b: EventExpr) -> EventExpr {
        EventExpr::Or(Box::new(a), Box::new(b))
    }

    fn and(a: EventExpr, b: EventExpr) -> EventExpr {
        EventExpr::And(Box::new(a), Box::new(b))
    }

    fn expr() -> impl Strategy<Value = EventExpr> {
        let leaf = (0usize..2, prop_oneof![Just(CmpOp::Eq), Just(CmpOp::Lt), Just(CmpOp::Gt)], 0i64..4)
            .prop_map(|(c, op, v)| atom(c, op, v));
        leaf.prop_recursive(4, 16, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| and(a, b)),
                (inner.clone(), inner).prop_map(|(a, b)| or(a, b)),
            ]
        })
    }

    fn truth(e: &EventExpr, row: &[Value]) -> bool {
        match e {
            EventExpr::True => true,
            EventExpr::And(a, b) => truth(a, row) && truth(b, row),
            EventExpr::Or(a, b) => truth(a, row) || truth(b, row),
            EventExpr::Atom(c, op, v) => {
                let (x, y) = (row[*c].as_f64().unwrap(), v.as_f64().unwrap());
                match op {
                    CmpOp::Eq => x == y,
                    CmpOp::Lt => x < y,
                    CmpOp::Gt => x > y,
                }
            }
        }
    }

    proptest! {
        // Each grid point lies in exactly as many rectangles as the
        // predicate says: one or zero.
        #[test]
        fn rects_partition_the_event(e in expr()) {
            let ev = Event::from_expr(&e);
            for x in -1..5 {
                for y in -1..5 {
                    let row = [Value::Int(x), Value::Int(y)];
                    let hits = ev.rects.iter().filter(|r| r.contains(&row)).count();
                    prop_assert_eq!(hits, truth(&e, &row) as usize);
                }
            }
        }
    }

    #[test]
    fn null_atom_is_everything() {
        assert!(Event::from_expr(&EventExpr::Atom(0, CmpOp::Eq, Value::Null)).is_full());
    }

    #[test]
    fn interval_edges() {
        let e = Event::from_expr(&or(atom(0, CmpOp::Lt, 1), atom(0, CmpOp::Eq, 1)));
        assert!(e.contains(&[Value::Int(1)]));
        assert!(!e.contains(&[Value::Int(2)]));
        assert_eq!(Event::from_expr(&and(atom(0, CmpOp::Gt, 1), atom(0, CmpOp::Lt, 1))).rects.len(), 0);
    }
}
