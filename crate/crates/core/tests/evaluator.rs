//! Evaluation through the session: call counting, caching, sampling
//! budgets and load failures.

mod common;

use common::*;
use gensql::eval::{EvalOptions, Output};
use gensql::session::SessionError;
use gensql::value::Value;

fn mixture(opts: EvalOptions) -> gensql::session::Session {
    session(&[("m", "mixture.spe.json")], &[("p", "points.csv", "points.schema.json")], opts)
}

#[test]
fn equal_events_share_one_backend_call() {
    let s = mixture(EvalOptions::default());
    let r = s.run("SELECT PROBABILITY OF m.x > 1 UNDER m AS a, PROBABILITY OF x > 1 UNDER m AS b FROM p").unwrap();
    let Output::Table(t) = &r.output else { panic!() };
    assert!(t.rows.iter().all(|row| row[0] == row[1]));
    assert_eq!(r.stats.site_executions, 12);
    assert_eq!(r.stats.backend_calls, 1);
    assert_eq!(r.stats.cache_hits, 11);
}

#[test]
fn without_cache_every_site_execution_calls_the_backend() {
    let s = mixture(EvalOptions { cache: false, ..EvalOptions::default() });
    let r = s.run("SELECT PROBABILITY OF x > p.x UNDER m GIVEN color = \"red\" AS q FROM p").unwrap();
    assert_eq!(r.stats.cache_hits, 0);
    assert_eq!(r.stats.backend_calls, r.stats.site_executions);
    assert_eq!(r.stats.site_executions, 6);
}

#[test]
fn distinct_row_values_miss_the_cache() {
    let s = mixture(EvalOptions::default());
    let r = s.run("SELECT PROBABILITY OF color = \"red\" UNDER m GIVEN x = p.x AS q FROM p").unwrap();
    // Five distinct x values plus one null, which conditions on nothing.
    assert_eq!(r.stats.backend_calls, 6);
}

#[test]
fn mutual_information_with_one_sample_is_finite() {
    let s = session(&[("m", "health.spe.json")], &[], EvalOptions { mi_samples: 1, ..EvalOptions::default() });
    assert!(run_scalar(&s, "MUTUAL INFO (age, bmi) UNDER m").is_finite());
    assert!(run_scalar(&s, "MUTUAL INFO ([age, bmi], weight, weight > 70) UNDER m").is_finite());
}

#[test]
fn generate_zero_rows_keeps_columns() {
    let s = mixture(EvalOptions::default());
    let t = run_table(&s, "GENERATE UNDER m LIMIT 0");
    assert!(t.rows.is_empty());
    assert_eq!(t.schema.names(), ["color", "x"]);
}

#[test]
fn duplicate_and_dedup() {
    let s = mixture(EvalOptions::default());
    assert_eq!(run_table(&s, "p DUPLICATE 3 TIMES").rows.len(), 18);
    assert_eq!(run_table(&s, "DEDUP (p DUPLICATE 3 TIMES)").rows.len(), 6);
    assert_eq!(run_table(&s, "p UNION p").rows.len(), 12);
}

#[test]
fn generative_join_imputes_per_row() {
    let s = session(
        &[("m", "mixture.spe.json")],
        &[("r", "readings.csv", "readings.schema.json")],
        EvalOptions::default(),
    );
    let t = run_table(&s, "r GENERATIVE JOIN m GIVEN m.x = r.v");
    assert_eq!(t.schema.names(), ["id", "v", "color", "x"]);
    assert_eq!(t.rows.len(), 5);
    for row in &t.rows {
        assert_eq!(row[1], row[3]);
        assert!(matches!(&row[2], Value::Str(c) if c == "red" || c == "blue"));
    }
}

#[test]
fn seeds_are_reproducible() {
    let a = mixture(EvalOptions { seed: 3, ..EvalOptions::default() });
    let b = mixture(EvalOptions { seed: 3, ..EvalOptions::default() });
    let q = "GENERATE UNDER m GIVEN x > 2 LIMIT 30";
    assert_eq!(run_table(&a, q).rows, run_table(&b, q).rows);
}

#[test]
fn load_failures() {
    let mut s = gensql::session::Session::new(EvalOptions::default());
    let dir = std::env::temp_dir().join(format!("gensql-load-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad_model = dir.join("bad.json");
    std::fs::write(&bad_model, r#"{"kind": "spe", "root": {"sum": []}}"#).unwrap();
    let err = s.load_model("m", &bad_model).unwrap_err();
    assert!(matches!(err, SessionError::Load(_)));
    assert_eq!(err.exit_code(), 6);

    let csv = dir.join("t.csv");
    std::fs::write(&csv, "x,id\n1.0,1\n").unwrap();
    let err = s.load_table("t", &csv, &fixture("readings.schema.json")).unwrap_err();
    assert_eq!(err.exit_code(), 6);
    std::fs::write(&csv, "id,v\n-1,1.0\n").unwrap();
    let err = s.load_table("t", &csv, &fixture("readings.schema.json")).unwrap_err();
    assert!(err.to_string().contains("-1"), "{err}");
    std::fs::remove_dir_all(&dir).unwrap();

    s.load_model("m", &fixture("mixture.spe.json")).unwrap();
    assert!(s.load_model("m", &fixture("mixture.spe.json")).is_err(), "names are unique");
}
