//! Property tests over random queries and conditions on the bundled models.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use gensql::ami::spec::load_model;
use gensql::ami::{AmiCtx, Assign, Event, EventExpr, Independence, RowModel};
use gensql::eval::{EvalOptions, Output};
use gensql::lower::{free_vars, lower, lowered_typecheck};
use gensql::normalize::normalize;
use gensql::parser::{desugar, has_sugar, parse, print_query, CmpOp};
use gensql::session::Session;
use gensql::typecheck::{typecheck, Mode};
use gensql::value::Value;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Assignment = BTreeMap<String, String>;
type Pred = Box<dyn Fn(&Assignment) -> bool>;

/// A condition over the discrete fixture: its text and its meaning.
struct Cond {
    sql: String,
    pred: Pred,
    /// Columns fixed by equality when this is an event-0.
    fixes: Vec<&'static str>,
}

fn eq_atom(q: &str, col: &'static str, rng: &mut ChaCha8Rng) -> Cond {
    let v: String = match col {
        "a" => rng.random_range(0..3).to_string(),
        "b" => ["lo", "mid", "hi"][rng.random_range(0..3)].into(),
        _ => ["true", "false"][rng.random_range(0..2)].into(),
    };
    let sql = if col == "b" { format!("{q}.b = \"{v}\"") } else { format!("{q}.{col} = {v}") };
    Cond { sql, pred: Box::new(move |a| a[col] == v), fixes: vec![col] }
}

fn event0(q: &str, avoid: &BTreeSet<&'static str>, rng: &mut ChaCha8Rng) -> Option<Cond> {
    let free: Vec<&'static str> = ["a", "b", "c"].into_iter().filter(|c| !avoid.contains(c)).collect();
    if free.is_empty() {
        return None;
    }
    let mut cols: Vec<&'static str> = free.into_iter().filter(|_| rng.random_bool(0.6)).collect();
    if cols.is_empty() {
        return None;
    }
    cols.truncate(2);
    let atoms: Vec<Cond> = cols.iter().map(|c| eq_atom(q, c, rng)).collect();
    Some(Cond {
        sql: atoms.iter().map(|c| c.sql.clone()).collect::<Vec<_>>().join(" AND "),
        fixes: cols,
        pred: Box::new(move |a| atoms.iter().all(|c| (c.pred)(a))),
    })
}

/// An event with an order comparison. In a GIVEN, desugaring splits an
/// equality conjunct off as an event-0, so it must avoid `fixed` columns.
fn event1(q: &str, fixed: &BTreeSet<&'static str>, rng: &mut ChaCha8Rng) -> Cond {
    let k: i64 = rng.random_range(0..3);
    let gt = rng.random_bool(0.5);
    let cmp = Cond {
        sql: format!("{q}.a {} {k}", if gt { ">" } else { "<" }),
        pred: Box::new(move |a| {
            let x: i64 = a["a"].parse().unwrap();
            if gt {
                x > k
            } else {
                x < k
            }
        }),
        fixes: vec![],
    };
    let col = ["b", "c"][rng.random_range(0..2)];
    let other = eq_atom(q, col, rng);
    match rng.random_range(0..3) {
        0 => cmp,
        1 if !fixed.contains(col) => {
            Cond { sql: format!("{} AND {}", cmp.sql, other.sql), pred: Box::new(move |a| (cmp.pred)(a) && (other.pred)(a)), fixes: vec![col] }
        }
        1 => cmp,
        _ => Cond { sql: format!("({} OR {})", cmp.sql, other.sql), pred: Box::new(move |a| (cmp.pred)(a) || (other.pred)(a)), fixes: vec![] },
    }
}

/// A nested model expression over `m`, the name it is qualified by and the
/// conditions applied, innermost first.
fn nested(depth: u32, rng: &mut ChaCha8Rng, fixed: &mut BTreeSet<&'static str>, conds: &mut Vec<Pred>, names: &mut u32) -> (String, String) {
    if depth == 0 {
        return ("m".into(), "m".into());
    }
    let (inner, q) = nested(depth - 1, rng, fixed, conds, names);
    match rng.random_range(0..3) {
        0 => {
            *names += 1;
            let j = format!("j{names}");
            (format!("RENAME ({inner}) AS {j}"), j)
        }
        1 => match event0(&q, fixed, rng) {
            Some(c) => {
                fixed.extend(c.fixes.iter().copied());
                conds.push(c.pred);
                (format!("({inner}) GIVEN {}", c.sql), q)
            }
            None => (inner, q),
        },
        _ => {
            let c = event1(&q, fixed, rng);
            fixed.extend(c.fixes.iter().copied());
            conds.push(c.pred);
            (format!("({inner}) GIVEN {}", c.sql), q)
        }
    }
}

fn discrete() -> Session {
    session(&[("m", "discrete3.spe.json")], &[("d", "discrete3_data.csv", "discrete3_data.schema.json")], EvalOptions::default())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    // Normalization, lowering and evaluation preserve the meaning of nested
    // conditioning, checked against conditioning the enumerated joint.
    #[test]
    fn nested_conditioning_matches_enumeration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut fixed, mut conds, mut names) = (BTreeSet::new(), Vec::new(), 0);
        let depth = rng.random_range(1..5);
        let (model, q) = nested(depth, &mut rng, &mut fixed, &mut conds, &mut names);
        let target = if rng.random_bool(0.5) { event0(&q, &fixed, &mut rng) } else { None };
        let target = target.unwrap_or_else(|| event1(&q, &BTreeSet::new(), &mut rng));
        let sql = format!("PROBABILITY OF {} UNDER {model}", target.sql);

        let j = load_joint("discrete3.spe.json");
        let given = |a: &Assignment| conds.iter().all(|c| c(a));
        let mass: f64 = j.iter().filter(|(a, _)| given(a)).map(|(_, p)| p).sum();
        let s = discrete();
        let got = s.run(&sql);
        if mass == 0.0 {
            // Zero-measure conditioning is an error or Null, never a number.
            if let Ok(r) = got {
                prop_assert!(matches!(r.output, Output::Scalar(Value::Null)), "{sql}: {:?}", r.output);
            }
            return Ok(());
        }
        let want = joint_prob(&j, |a| (target.pred)(a), given);
        let got = match got {
            Ok(r) => r.output,
            Err(e) => return Err(TestCaseError::fail(format!("{sql}: {e}"))),
        };
        let Output::Scalar(v) = got else { panic!() };
        prop_assert!(close(f(&v), want, 1e-12), "{sql}: got {v}, expected {want}");
    }

    // Pretty-printing is a right inverse of parsing.
    #[test]
    fn print_parse_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = ModelGen::new(&mut rng).query();
        let once = print_query(&parse(&src).unwrap());
        let twice = print_query(&parse(&once).unwrap());
        prop_assert_eq!(&once, &twice);
    }

    // Lowered terms are closed and well typed.
    #[test]
    fn lowered_terms_are_closed(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = discrete();
        let cat = s.env.catalog();
        let sqls: Vec<String> = corpus::cases().iter().map(|c| c.sql.to_string()).collect();
        let src = &sqls[rng.random_range(0..sqls.len())];
        let st = gensql::parser::parse_statement(src).unwrap();
        let q = normalize(&desugar(&st.query, &cat).unwrap()).query;
        typecheck(&q, &cat, Mode::Strict).unwrap();
        let p = lower(&q, &cat).unwrap();
        prop_assert!(free_vars(&p.term).is_empty(), "{src}");
        let ty = lowered_typecheck(&p.term, &cat).unwrap();
        if let Some(cols) = &p.columns {
            prop_assert!(ty.matches_columns(cols));
        }
    }

    // prob of the whole space is one, a partition of the space sums to one,
    // and a model conditioned on an event gives that event probability one.
    #[test]
    fn prob_laws(seed in any::<u64>(), k in 0i64..3, split in -1.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ctx = AmiCtx { rng: &mut rng, particles: 1000 };
        let text = std::fs::read_to_string(fixture("discrete3.spe.json")).unwrap();
        let d = load_model(&text).unwrap();
        let mix = load_model(&std::fs::read_to_string(fixture("mixture.spe.json")).unwrap()).unwrap();
        let c0: Assign = vec![(0, Value::Int(k))];
        let full = Event::full();
        let p = |m: &dyn RowModel, c0: &Assign, c1: &Event, e: &Event, ctx: &mut AmiCtx<'_>| gensql::ami::prob(m, c0, c1, e, ctx).unwrap();
        prop_assert!((p(d.as_ref(), &c0, &full, &full, &mut ctx) - 1.0).abs() < 1e-12);
        let total: f64 = ["lo", "mid", "hi"]
            .iter()
            .map(|b| p(d.as_ref(), &c0, &full, &Event::from_expr(&EventExpr::Atom(1, CmpOp::Eq, Value::Str(b.to_string()))), &mut ctx))
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let below = Event::from_expr(&EventExpr::Atom(1, CmpOp::Lt, Value::Real(split)));
        let above = Event::from_expr(&EventExpr::Atom(1, CmpOp::Gt, Value::Real(split)));
        let s = p(mix.as_ref(), &vec![], &full, &below, &mut ctx) + p(mix.as_ref(), &vec![], &full, &above, &mut ctx);
        prop_assert!((s - 1.0).abs() < 1e-12);
        prop_assert!((p(mix.as_ref(), &vec![], &above, &above, &mut ctx) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn desugared_queries_have_no_sugar() {
    let s = session(&[("m", "discrete3.spe.json")], &[("d", "discrete3_data.csv", "discrete3_data.schema.json")], EvalOptions::default());
    let cat = s.env.catalog();
    let sugar = [
        "SELECT * EXCEPT (a) FROM (GENERATE UNDER m GIVEN c = true LIMIT 3)",
        "d GENERATIVE JOIN m GIVEN c",
        "SELECT PROBABILITY OF * UNDER m GIVEN b = \"lo\" AS p FROM d",
        "SELECT PROBABILITY OF b UNDER m GIVEN * EXCEPT (b) AS p FROM d",
    ];
    for src in corpus::cases().iter().map(|c| c.sql).chain(sugar) {
        let st = gensql::parser::parse_statement(src).unwrap();
        let d = desugar(&st.query, &cat).unwrap_or_else(|e| panic!("{src}: {e}"));
        assert!(!has_sugar(&d), "{src}");
    }
}

/// Independence certificates hold exactly on product models.
#[test]
fn independence_certificates_are_sound() {
    for file in ["bits_independent.spe.json", "bits_correlated.spe.json", "discrete3.spe.json"] {
        let m = load_model(&std::fs::read_to_string(fixture(file)).unwrap()).unwrap();
        let n = m.columns().len();
        let joint = load_joint(file);
        for i in 0..n {
            for k in 0..n {
                if i == k || m.independence(&[i].into(), &[k].into()) != Independence::Independent {
                    continue;
                }
                let (ci, ck) = (&m.columns()[i].name, &m.columns()[k].name);
                for (a, _) in &joint {
                    let pa = joint_prob(&joint, |x| x[ci] == a[ci], |_| true);
                    let pb = joint_prob(&joint, |x| x[ck] == a[ck], |_| true);
                    let pab = joint_prob(&joint, |x| x[ci] == a[ci] && x[ck] == a[ck], |_| true);
                    assert!((pab - pa * pb).abs() <= 1e-12, "{file}: {ci} vs {ck}");
                }
            }
        }
    }
}

/// Empirical frequencies of discrete samples sit within 4 sigma of the
/// enumerated probabilities.
#[test]
fn discrete_simulation_matches_enumeration() {
    const N: usize = 100_000;
    let s = discrete();
    let rows = run_table(&s, &format!("GENERATE UNDER m LIMIT {N}")).rows;
    let mut counts: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    for r in &rows {
        *counts.entry(r.iter().map(|v| v.to_string()).collect()).or_default() += 1;
    }
    for (a, p) in load_joint("discrete3.spe.json") {
        let key: Vec<String> = ["a", "b", "c"].iter().map(|c| a[*c].clone()).collect();
        let n = *counts.get(&key).unwrap_or(&0) as f64;
        let sigma = (N as f64 * p * (1.0 - p)).sqrt();
        assert!((n - N as f64 * p).abs() <= 4.0 * sigma, "{key:?}: {n} vs {}", N as f64 * p);
    }
}

/// Importance-sampling error shrinks with the particle budget.
#[test]
fn bn_error_decreases_with_particles() {
    let exact = run_scalar(&session(&[("m", "mixture.spe.json")], &[], EvalOptions::default()), "PROBABILITY OF color = \"red\" UNDER m GIVEN x > 2");
    let rmse = |n: usize| {
        let se: f64 = (0..20u64)
            .map(|seed| {
                let s = session(&[("m", "mixture.bn.json")], &[], EvalOptions { particles: n, seed, ..EvalOptions::default() });
                (run_scalar(&s, "PROBABILITY OF color = \"red\" UNDER m GIVEN x > 2") - exact).powi(2)
            })
            .sum();
        (se / 20.0).sqrt()
    };
    let (a, b, c) = (rmse(100), rmse(1000), rmse(10000));
    assert!(a > b && b > c, "rmse {a} {b} {c}");
}
