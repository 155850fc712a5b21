//! Shared helpers: fixture sessions, an enumeration oracle for discrete
//! SPE documents and a random generator of model expressions.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use gensql::eval::{EvalOptions, Output};
use gensql::session::Session;
use gensql::table::Table;
use gensql::value::Value;
use rand::{Rng, RngCore};
use serde_json::Value as Json;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn session(models: &[(&str, &str)], tables: &[(&str, &str, &str)], opts: EvalOptions) -> Session {
    let mut s = Session::new(opts);
    for (name, file) in models {
        s.load_model(name, &fixture(file)).unwrap();
    }
    for (name, csv, schema) in tables {
        s.load_table(name, &fixture(csv), &fixture(schema)).unwrap();
    }
    s
}

pub fn run_table(s: &Session, q: &str) -> Table {
    match s.run(q).unwrap_or_else(|e| panic!("{q}: {e}")).output {
        Output::Table(t) => t,
        Output::Scalar(v) => panic!("{q}: expected a table, got {v}"),
    }
}

pub fn run_scalar(s: &Session, q: &str) -> f64 {
    match s.run(q).unwrap_or_else(|e| panic!("{q}: {e}")).output {
        Output::Scalar(v) => v.as_f64().unwrap_or_else(|| panic!("{q}: non-numeric {v}")),
        Output::Table(t) => panic!("{q}: expected a scalar, got {t:?}"),
    }
}

pub fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

/// A full joint distribution: assignments as column → rendered value.
pub type Joint = Vec<(BTreeMap<String, String>, f64)>;

fn render(v: &Json) -> String {
    match v {
        Json::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Enumerates the joint of a discrete SPE document by brute force, reading
/// the JSON directly.
pub fn enumerate(node: &Json) -> Joint {
    if let Some(branches) = node.get("sum") {
        let mut acc: BTreeMap<BTreeMap<String, String>, f64> = BTreeMap::new();
        for b in branches.as_array().unwrap() {
            let w = b["weight"].as_f64().unwrap();
            for (a, p) in enumerate(&b["node"]) {
                *acc.entry(a).or_default() += w * p;
            }
        }
        return acc.into_iter().collect();
    }
    if let Some(children) = node.get("product") {
        let mut out: Joint = vec![(BTreeMap::new(), 1.0)];
        for c in children.as_array().unwrap() {
            let sub = enumerate(c);
            out = out
                .iter()
                .flat_map(|(a, p)| {
                    sub.iter().map(move |(b, q)| {
                        let mut m = a.clone();
                        m.extend(b.clone());
                        (m, p * q)
                    })
                })
                .collect();
        }
        return out;
    }
    let leaf = &node["leaf"];
    let col = leaf["column"].as_str().unwrap().to_string();
    let cat = &leaf["dist"]["categorical"];
    let values = cat["values"].as_array().unwrap();
    let probs = cat["probs"].as_array().unwrap();
    values
        .iter()
        .zip(probs)
        .map(|(v, p)| ([(col.clone(), render(v))].into_iter().collect(), p.as_f64().unwrap()))
        .collect()
}

pub fn load_joint(file: &str) -> Joint {
    let doc: Json = serde_json::from_str(&std::fs::read_to_string(fixture(file)).unwrap()).unwrap();
    enumerate(&doc["root"])
}

/// P(event | given) by summation over the joint.
pub fn joint_prob(j: &Joint, event: impl Fn(&BTreeMap<String, String>) -> bool, given: impl Fn(&BTreeMap<String, String>) -> bool) -> f64 {
    let den: f64 = j.iter().filter(|(a, _)| given(a)).map(|(_, p)| p).sum();
    let num: f64 = j.iter().filter(|(a, _)| given(a) && event(a)).map(|(_, p)| p).sum();
    num / den
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// Random model expressions over a model `m` with real columns x, y, z and
/// its target conditions, always qualified by the name in scope.
pub struct ModelGen<'r> {
    pub rng: &'r mut dyn RngCore,
    names: usize,
}

impl<'r> ModelGen<'r> {
    pub fn new(rng: &'r mut dyn RngCore) -> Self {
        ModelGen { rng, names: 0 }
    }

    fn col(&mut self) -> &'static str {
        ["x", "y", "z"][self.rng.random_range(0..3)]
    }

    fn num(&mut self) -> i32 {
        self.rng.random_range(-3..4)
    }

    pub fn event0(&mut self, name: &str) -> String {
        // Distinct columns: an event-0 may bind each column once.
        let first = self.col();
        let mut cols = vec![first];
        if self.rng.random_bool(0.5) {
            cols.push(["x", "y", "z"].into_iter().find(|c| *c != first).unwrap());
        }
        cols.iter().map(|c| format!("{name}.{c} = {}", self.num())).collect::<Vec<_>>().join(" AND ")
    }

    pub fn event1(&mut self, name: &str) -> String {
        let op = if self.rng.random_bool(0.5) { ">" } else { "<" };
        let a = format!("{name}.{} {op} {}", self.col(), self.num());
        match self.rng.random_range(0..3) {
            0 => a,
            1 => format!("{a} AND {name}.{} > {}", self.col(), self.num()),
            _ => format!("({a} OR {name}.{} < {})", self.col(), self.num()),
        }
    }

    /// A model expression and the name its columns are qualified by.
    pub fn model(&mut self, depth: u32) -> (String, String) {
        if depth == 0 {
            return ("m".into(), "m".into());
        }
        let (inner, name) = self.model(depth - 1);
        match self.rng.random_range(0..4) {
            0 => {
                self.names += 1;
                let new = format!("j{}", self.names);
                (format!("RENAME ({inner}) AS {new}"), new)
            }
            1 => {
                let c = self.event0(&name);
                (format!("({inner}) GIVEN {c}"), name)
            }
            _ => {
                let c = self.event1(&name);
                (format!("({inner}) GIVEN {c}"), name)
            }
        }
    }

    /// A query wrapping a random model expression.
    pub fn query(&mut self) -> String {
        let depth = self.rng.random_range(1..6);
        let (m, name) = self.model(depth);
        match self.rng.random_range(0..4) {
            0 => format!("GENERATE UNDER {m} LIMIT 2"),
            1 => format!("PROBABILITY OF {} UNDER {m}", self.event0(&name)),
            2 => format!("PROBABILITY OF {} UNDER {m}", self.event1(&name)),
            _ => format!("t GENERATIVE JOIN {m}"),
        }
    }
}

pub mod corpus;

/// Cellwise comparison with a relative tolerance on reals.
pub fn same_rows(actual: &[gensql::table::Row], expected: &[gensql::table::Row], tol: f64) -> Result<(), String> {
    if actual.len() != expected.len() {
        return Err(format!("{} rows, expected {}", actual.len(), expected.len()));
    }
    for (i, (a, e)) in actual.iter().zip(expected).enumerate() {
        if a.len() != e.len() {
            return Err(format!("row {i}: arity {} vs {}", a.len(), e.len()));
        }
        for (x, y) in a.iter().zip(e) {
            let ok = match (x, y) {
                (Value::Real(_) | Value::Int(_), Value::Real(_)) => close(f(x), f(y), tol),
                _ => x == y,
            };
            if !ok {
                return Err(format!("row {i}: got {a:?}, expected {e:?}"));
            }
        }
    }
    Ok(())
}

/// Runs a corpus case and compares with its oracle.
pub fn check_case(s: &Session, j: &Joint, c: &corpus::Case, tol: f64) -> Result<(), String> {
    let rows = s.env.tables["d"].rows.clone();
    let mut expected = (c.expect)(j, &rows);
    let actual = match s.run(c.sql).map_err(|e| e.to_string())?.output {
        Output::Table(t) => t.rows,
        Output::Scalar(v) => vec![vec![v]],
    };
    if !c.ordered {
        expected.sort_by(|x, y| x.iter().zip(y).map(|(p, q)| p.partial_cmp(q).unwrap()).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
        let mut a = actual.clone();
        a.sort();
        return same_rows(&a, &expected, tol).map_err(|e| format!("{}: {e}", c.sql));
    }
    same_rows(&actual, &expected, tol).map_err(|e| format!("{}: {e}", c.sql))
}
