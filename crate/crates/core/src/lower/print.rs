//! Indented rendering of lowered terms, one bag combinator per line.

use std::fmt::Write;

use super::{AmiCall, Event0L, EventL, Term};

pub fn print_term(t: &Term) -> String {
    let mut out = String::new();
    block(t, 0, &mut out);
    out
}

fn is_bag(t: &Term) -> bool {
    matches!(
        t,
        Term::Table(_)
            | Term::Singleton(_)
            | Term::Map { .. }
            | Term::Filter { .. }
            | Term::MapReduce { .. }
            | Term::Replicate(..)
            | Term::Join(..)
            | Term::Union(..)
            | Term::Dedup(_)
            | Term::Duplicate(..)
            | Term::Let { .. }
            | Term::GroupBy { .. }
    )
}

fn block(t: &Term, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    let line = |out: &mut String, s: String| {
        let _ = writeln!(out, "{pad}{s}");
    };
    match t {
        Term::Table(n) => line(out, format!("table {n}")),
        Term::Singleton(x) => line(out, format!("singleton {}", inline(x))),
        Term::Map { var, body, src } => {
            line(out, format!("map {var} -> {}", inline(body)));
            block(src, depth + 1, out);
        }
        Term::Filter { var, pred, src } => {
            line(out, format!("filter {var} -> {}", inline(pred)));
            block(src, depth + 1, out);
        }
        Term::MapReduce { var, body, src } => {
            line(out, format!("mapreduce {var}"));
            block(body, depth + 1, out);
            block(src, depth + 1, out);
        }
        Term::Replicate(n, b) => {
            line(out, format!("replicate {}", inline(n)));
            block(b, depth + 1, out);
        }
        Term::Join(a, b) => {
            line(out, "join".into());
            block(a, depth + 1, out);
            block(b, depth + 1, out);
        }
        Term::Union(a, b) => {
            line(out, "union".into());
            block(a, depth + 1, out);
            block(b, depth + 1, out);
        }
        Term::Dedup(a) => {
            line(out, "dedup".into());
            block(a, depth + 1, out);
        }
        Term::Duplicate(a, n) => {
            line(out, format!("duplicate {}", inline(n)));
            block(a, depth + 1, out);
        }
        Term::Let { name, bound, body } => {
            line(out, format!("let {name} ="));
            block(bound, depth + 1, out);
            line(out, "in".into());
            block(body, depth + 1, out);
        }
        Term::GroupBy { var, src, keys, aggs } => {
            let keys: Vec<String> = keys.iter().map(inline).collect();
            let aggs: Vec<String> = aggs
                .iter()
                .map(|(a, e)| format!("{}({})", a.name(), e.as_ref().map_or("*".into(), inline)))
                .collect();
            line(out, format!("groupby {var} [{}] [{}]", keys.join(", "), aggs.join(", ")));
            block(src, depth + 1, out);
        }
        _ => line(out, inline(t)),
    }
}

fn inline(t: &Term) -> String {
    match t {
        Term::Const(v) => v.render(),
        Term::Var(x) => x.clone(),
        Term::Tuple(fs) => format!("<{}>", fs.iter().map(inline).collect::<Vec<_>>().join(", ")),
        Term::Proj(x, i) => format!("{}.{i}", inline(x)),
        Term::Op(op, args) => {
            let args: Vec<String> = args.iter().map(inline).collect();
            if args.len() == 2 {
                format!("({} {} {})", args[0], op.symbol(), args[1])
            } else {
                format!("{}({})", op.symbol(), args.join(", "))
            }
        }
        Term::Exp(x) => format!("exp({})", inline(x)),
        Term::Simulate(c) => format!("simulate({})", call(c)),
        Term::Logpdf(c, e) => format!("logpdf({}; {})", call(c), event0(e)),
        Term::Prob(c, e) => format!("prob({}; {})", call(c), event(e)),
        Term::MutualInfo(c, a, b) => format!("mi({}; {a:?}; {b:?})", call(c)),
        bag if is_bag(bag) => format!("{{{}}}", print_term(bag).split_whitespace().collect::<Vec<_>>().join(" ")),
        _ => unreachable!(),
    }
}

fn call(c: &AmiCall) -> String {
    format!("{}#{} | {} | {}", c.model, c.site, event0(&c.c0), event(&c.c1))
}

fn event0(e: &Event0L) -> String {
    if e.0.is_empty() {
        return "-".into();
    }
    e.0.iter().map(|(i, v)| format!("${i} = {}", inline(v))).collect::<Vec<_>>().join(" & ")
}

fn event(e: &EventL) -> String {
    match e {
        EventL::True => "true".into(),
        EventL::And(a, b) => format!("({} & {})", event(a), event(b)),
        EventL::Or(a, b) => format!("({} | {})", event(a), event(b)),
        EventL::Atom(i, op, v) => format!("${i} {} {}", op.symbol(), inline(v)),
    }
}
