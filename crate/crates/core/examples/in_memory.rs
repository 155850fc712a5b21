//! Models and tables built in code rather than read from files.

use gensql::ami::spec::load_model;
use gensql::eval::EvalOptions;
use gensql::session::{parse_schema, read_table, render, OutputFormat, Session};

const MODEL: &str = r#"{
  "kind": "spe",
  "columns": ["weather", "temp"],
  "root": {"sum": [
    {"weight": 0.7, "node": {"product": [
      {"leaf": {"column": "weather", "dist": {"categorical": {"values": ["sun", "rain"], "probs": [0.9, 0.1]}}}},
      {"leaf": {"column": "temp", "dist": {"gaussian": {"mean": 24, "std": 4}}}}
    ]}},
    {"weight": 0.3, "node": {"product": [
      {"leaf": {"column": "weather", "dist": {"categorical": {"values": ["sun", "rain"], "probs": [0.2, 0.8]}}}},
      {"leaf": {"column": "temp", "dist": {"gaussian": {"mean": 14, "std": 3}}}}
    ]}}
  ]}
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cols = parse_schema(r#"{"columns": [{"name": "day", "type": "str"}, {"name": "t", "type": "real"}]}"#)?;
    let days = read_table("day,t\nmon,25.5\ntue,13.0\nwed,\nthu,19.0\n", &cols)?;

    let mut s = Session::new(EvalOptions::default());
    s.add_model("w", load_model(MODEL)?)?;
    s.add_table("days", days)?;
    let q = "SELECT days.day, PROBABILITY OF weather = \"rain\" UNDER w GIVEN temp = days.t AS p_rain FROM days";
    println!("{}", render(&s.run(q)?.output, OutputFormat::Table));
    Ok(())
}
