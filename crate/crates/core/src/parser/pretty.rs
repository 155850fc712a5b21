//! Printer producing fully parenthesized query text that reparses to the
//! same tree.

use super::ast::*;
use crate::value::{Op, Value};

pub fn print_statement(s: &Statement) -> String {
    let mut out = print_query(&s.query);
    if !s.order_by.is_empty() {
        let keys: Vec<String> = s
            .order_by
            .iter()
            .map(|k| if k.descending { format!("{} DESC", k.column) } else { k.column.clone() })
            .collect();
        out.push_str(&format!(" ORDER BY {}", keys.join(", ")));
    }
    if let Some(n) = s.limit {
        out.push_str(&format!(" LIMIT {n}"));
    }
    out
}

pub fn print_query(q: &Query) -> String {
    match q {
        Query::Table(t) => print_table(t),
        Query::Scalar(e) => print_scalar(e),
    }
}

pub fn print_table(t: &TableExpr) -> String {
    match &t.kind {
        TableKind::Id(n) => n.clone(),
        TableKind::Union(a, b) => format!("({} UNION {})", print_table(a), print_table(b)),
        TableKind::Join(a, b) => format!("({} JOIN {})", print_table(a), print_table(b)),
        TableKind::Rename(a, n) => format!("(RENAME {} AS {n})", wrap(a)),
        TableKind::Dedup(a) => format!("(DEDUP {})", wrap(a)),
        TableKind::Duplicate(a, e) => format!("({} DUPLICATE {} TIMES)", wrap(a), print_scalar(e)),
        TableKind::Where(a, e) => format!("({} WHERE {})", wrap(a), print_scalar(e)),
        TableKind::With { binding, name, body } => {
            let b = match binding.as_ref() {
                Binding::Table(t) => wrap(t),
                Binding::Model(m) => print_model(m),
                Binding::Ident(n, _) => n.clone(),
            };
            format!("(WITH {b} AS {name}: {})", print_table(body))
        }
        TableKind::Select { items, from } => {
            let items: Vec<String> = items.iter().map(print_item).collect();
            match from {
                Some(f) => format!("(SELECT {} FROM {})", items.join(", "), wrap(f)),
                None => format!("(SELECT {})", items.join(", ")),
            }
        }
        TableKind::GroupBy { source, keys, aggs } => {
            let keys: Vec<String> = keys.iter().map(|(e, n)| format!("{} AS {n}", print_scalar(e))).collect();
            let aggs: Vec<String> =
                aggs.iter().map(|a| format!("{} AS {}", print_agg(a.agg, a.arg.as_ref()), a.name)).collect();
            format!("(GROUP {} BY [{}] AGGREGATING {})", wrap(source), keys.join(", "), aggs.join(", "))
        }
        TableKind::Generate { model, limit } => {
            format!("(GENERATE UNDER {} LIMIT {})", print_model(model), print_scalar(limit))
        }
        TableKind::GenerativeJoin { table, model } => {
            format!("({} GENERATIVE JOIN {})", wrap(table), print_model(model))
        }
    }
}

// Identifiers print bare; everything else already carries parentheses.
fn wrap(t: &TableExpr) -> String {
    match &t.kind {
        TableKind::Id(n) => format!("({n})"),
        _ => print_table(t),
    }
}

fn print_item(i: &SelectItem) -> String {
    match i {
        SelectItem::Star { except, .. } => format!("*{}", print_except(except)),
        SelectItem::Expr { expr, alias: Some(a) } => format!("{} AS {a}", print_scalar(expr)),
        SelectItem::Expr { expr, alias: None } => print_scalar(expr),
    }
}

fn print_except(except: &[ColRef]) -> String {
    if except.is_empty() {
        String::new()
    } else {
        let cols: Vec<String> = except.iter().map(print_colref).collect();
        format!(" EXCEPT ({})", cols.join(", "))
    }
}

fn print_agg(agg: Aggregate, arg: Option<&ScalarExpr>) -> String {
    match (agg, arg) {
        (_, None) => format!("{}(*)", agg.name()),
        (Aggregate::CountDistinct, Some(e)) => format!("COUNT(DISTINCT {})", print_scalar(e)),
        (_, Some(e)) => format!("{}({})", agg.name(), print_scalar(e)),
    }
}

pub fn print_colref(c: &ColRef) -> String {
    match &c.qual {
        Some(q) => format!("{q}.{}", c.col),
        None => c.col.clone(),
    }
}

pub fn print_model(m: &ModelExpr) -> String {
    match &m.kind {
        ModelKind::Id(n) => n.clone(),
        ModelKind::Given(inner, c) => {
            let left = match inner.kind {
                ModelKind::Rename(..) => format!("({})", print_model(inner)),
                _ => print_model(inner),
            };
            format!("{left} GIVEN ({})", print_cond(c))
        }
        ModelKind::Rename(inner, n) => format!("RENAME ({}) AS {n}", print_model(inner)),
    }
}

pub fn print_cond(c: &Cond) -> String {
    match &c.kind {
        CondKind::And(a, b) => format!("({} AND {})", print_cond(a), print_cond(b)),
        CondKind::Or(a, b) => format!("({} OR {})", print_cond(a), print_cond(b)),
        CondKind::Atom { model, col, op, rhs } => {
            let lhs = match model {
                Some(m) => format!("{m}.{col}"),
                None => col.clone(),
            };
            format!("{lhs} {} {}", op.symbol(), print_scalar(rhs))
        }
        CondKind::Bare { qual: Some(q), col } => format!("{q}.{col}"),
        CondKind::Bare { qual: None, col } => col.clone(),
        CondKind::Star { except } => format!("*{}", print_except(except)),
        CondKind::True => "TRUE".to_string(),
    }
}

pub fn print_value(v: &Value) -> String {
    match v {
        Value::Null => "NULL".into(),
        Value::Bool(true) => "TRUE".into(),
        Value::Bool(false) => "FALSE".into(),
        Value::Int(n) if *n < 0 => format!("({n})"),
        Value::Int(n) => n.to_string(),
        Value::Real(x) => {
            let s = if x.is_infinite() { "1e999".to_string() } else { format!("{:?}", x.abs()) };
            if x.is_sign_negative() && *x != 0.0 {
                format!("(-{s})")
            } else {
                s
            }
        }
        Value::Str(s) => format!("'{}'", s.replace('\'', "''")),
    }
}

pub fn print_scalar(e: &ScalarExpr) -> String {
    match &e.kind {
        ScalarKind::Const(v) => print_value(v),
        ScalarKind::Col(c) => print_colref(c),
        ScalarKind::Op(Op::Neg, args) => format!("(-{})", print_scalar(&args[0])),
        ScalarKind::Op(op, args) if op.arity() == 1 => format!("{}({})", op.symbol(), print_scalar(&args[0])),
        ScalarKind::Op(op, args) => {
            format!("({} {} {})", print_scalar(&args[0]), op.symbol(), print_scalar(&args[1]))
        }
        ScalarKind::Probability { event, model, density } => format!(
            "(PROBABILITY {}OF {} UNDER {})",
            if *density { "DENSITY " } else { "" },
            print_cond(event),
            print_model(model)
        ),
        ScalarKind::MutualInfo { a, b, cond, model } => {
            let list = |cs: &[ColRef]| format!("[{}]", cs.iter().map(print_colref).collect::<Vec<_>>().join(", "));
            let cond = cond.as_ref().map(|c| format!(", {}", print_cond(c))).unwrap_or_default();
            format!("(MUTUAL INFO ({}, {}{cond}) UNDER {})", list(a), list(b), print_model(model))
        }
        ScalarKind::Agg(agg, arg) => print_agg(*agg, arg.as_deref()),
    }
}
