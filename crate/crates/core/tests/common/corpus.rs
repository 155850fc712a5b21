//! Queries over the discrete fixture with enumeration oracles. `d` holds the
//! rows of `discrete3_data.csv` over columns a, b, c.

use std::collections::BTreeMap;

use gensql::table::Row;
use gensql::value::Value;

use super::{joint_prob, Joint};

type Assignment = BTreeMap<String, String>;

pub struct Case {
    pub sql: &'static str,
    /// Whether row order is part of the answer.
    pub ordered: bool,
    pub expect: fn(&Joint, &[Row]) -> Vec<Row>,
}

const COLS: [&str; 3] = ["a", "b", "c"];

fn eq(col: &str, v: &str) -> impl Fn(&Assignment) -> bool {
    let (col, v) = (col.to_string(), v.to_string());
    move |a| a.get(&col) == Some(&v)
}

fn all(_: &Assignment) -> bool {
    true
}

/// The non-null cells of `row` restricted to `cols`.
fn cells(row: &[Value], cols: &[&str]) -> Vec<(String, String)> {
    COLS.iter()
        .zip(row)
        .filter(|(c, v)| cols.contains(c) && !v.is_null())
        .map(|(c, v)| (c.to_string(), v.to_string()))
        .collect()
}

fn matches(a: &Assignment, cs: &[(String, String)]) -> bool {
    cs.iter().all(|(c, v)| a.get(c) == Some(v))
}

/// P(target cells | given cells) for one data row.
fn row_prob(j: &Joint, row: &[Value], target: &[&str], given: &[&str]) -> f64 {
    let t = cells(row, target);
    let g = cells(row, given);
    joint_prob(j, |a| matches(a, &t), |a| matches(a, &g))
}

fn scalar(x: f64) -> Vec<Row> {
    vec![vec![Value::Real(x)]]
}

pub fn cases() -> Vec<Case> {
    vec![
        Case { sql: "PROBABILITY OF a = 1 UNDER m", ordered: false, expect: |j, _| scalar(joint_prob(j, eq("a", "1"), all)) },
        Case {
            sql: "PROBABILITY OF a = 2 AND b = \"hi\" UNDER m",
            ordered: false,
            expect: |j, _| scalar(joint_prob(j, |a| eq("a", "2")(a) && eq("b", "hi")(a), all)),
        },
        Case {
            sql: "PROBABILITY OF a = 0 UNDER m GIVEN c = true",
            ordered: false,
            expect: |j, _| scalar(joint_prob(j, eq("a", "0"), eq("c", "true"))),
        },
        Case {
            sql: "PROBABILITY OF b = \"lo\" OR c = false UNDER m",
            ordered: false,
            expect: |j, _| scalar(joint_prob(j, |a| eq("b", "lo")(a) || eq("c", "false")(a), all)),
        },
        Case {
            sql: "PROBABILITY OF a > 0 UNDER m GIVEN b = \"mid\"",
            ordered: false,
            expect: |j, _| scalar(joint_prob(j, |a| a["a"] != "0", eq("b", "mid"))),
        },
        Case {
            sql: "PROBABILITY OF a < 2 AND c = true UNDER m GIVEN b = \"hi\" OR b = \"lo\"",
            ordered: false,
            expect: |j, _| {
                scalar(joint_prob(j, |a| a["a"] != "2" && eq("c", "true")(a), |a| eq("b", "hi")(a) || eq("b", "lo")(a)))
            },
        },
        Case {
            sql: "PROBABILITY OF a = 1 UNDER (m GIVEN c = false) GIVEN b = \"lo\"",
            ordered: false,
            expect: |j, _| scalar(joint_prob(j, eq("a", "1"), |a| eq("c", "false")(a) && eq("b", "lo")(a))),
        },
        Case {
            // The target atom on the conditioned column is dropped.
            sql: "PROBABILITY OF a = 1 AND b = \"mid\" UNDER m GIVEN a = 1",
            ordered: false,
            expect: |j, _| scalar(joint_prob(j, eq("b", "mid"), eq("a", "1"))),
        },
        Case {
            sql: "PROBABILITY OF c = true UNDER m GIVEN a = NULL",
            ordered: false,
            expect: |j, _| scalar(joint_prob(j, eq("c", "true"), all)),
        },
        Case {
            sql: "SELECT PROBABILITY OF c = d.c UNDER m GIVEN a = d.a AND b = d.b AS p FROM d",
            ordered: false,
            expect: |j, rows| rows.iter().map(|r| vec![Value::Real(row_prob(j, r, &["c"], &["a", "b"]))]).collect(),
        },
        Case {
            sql: "SELECT * FROM d WHERE (PROBABILITY OF b UNDER m) > (PROBABILITY OF b UNDER m GIVEN * EXCEPT b)",
            ordered: false,
            expect: |j, rows| {
                rows.iter().filter(|r| row_prob(j, r, &["b"], &[]) > row_prob(j, r, &["b"], &["a", "c"])).cloned().collect()
            },
        },
        Case {
            sql: "SELECT PROBABILITY OF * UNDER m AS p, * FROM d ORDER BY p LIMIT 3",
            ordered: true,
            expect: |j, rows| {
                let mut out: Vec<Row> = rows
                    .iter()
                    .map(|r| {
                        let mut o = vec![Value::Real(row_prob(j, r, &COLS, &[]))];
                        o.extend(r.iter().cloned());
                        o
                    })
                    .collect();
                out.sort_by(|x, y| x[0].as_f64().unwrap().total_cmp(&y[0].as_f64().unwrap()).then(x.cmp(y)));
                out.truncate(3);
                out
            },
        },
        Case {
            sql: "SELECT b, SUM(p) AS s, COUNT(*) AS n FROM (SELECT b, PROBABILITY OF c = d.c UNDER m GIVEN b = d.b AS p FROM d) GROUP BY b",
            ordered: false,
            expect: |j, rows| {
                let mut groups: BTreeMap<Value, (f64, i64)> = BTreeMap::new();
                for r in rows {
                    let g = groups.entry(r[1].clone()).or_default();
                    g.0 += row_prob(j, r, &["c"], &["b"]);
                    g.1 += 1;
                }
                groups.into_iter().map(|(b, (s, n))| vec![b, Value::Real(s), Value::Int(n)]).collect()
            },
        },
        Case {
            sql: "WITH m GIVEN c = true AS mc: SELECT PROBABILITY OF b = d.b UNDER mc AS p FROM d",
            ordered: false,
            expect: |j, rows| {
                rows.iter()
                    .map(|r| {
                        let b = r[1].to_string();
                        vec![Value::Real(joint_prob(j, |a| a["b"] == b, eq("c", "true")))]
                    })
                    .collect()
            },
        },
        Case {
            sql: "SELECT * FROM (GENERATE UNDER m GIVEN a = 2 AND b = \"lo\" LIMIT 20) WHERE a <> 2 OR b <> \"lo\"",
            ordered: false,
            expect: |_, _| Vec::new(),
        },
    ]
}
