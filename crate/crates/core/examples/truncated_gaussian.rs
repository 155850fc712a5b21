//! A multivariate Gaussian with a linear constraint region.

use std::path::Path;

use gensql::ami::spec::tmvg_from_json;
use gensql::ami::RowModel;
use gensql::eval::EvalOptions;
use gensql::session::{render, OutputFormat, Session};
use gensql::value::Value;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fx = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fx.join("tmvg.json"))?)?;
    let m = tmvg_from_json(&doc)?;
    let c = m.cond0(&vec![(1, Value::Real(1.0))])?;
    println!("x1 | x2 = 1: mean {:.3}, variance {:.3}", c.mean()[0], c.cov()[(0, 0)]);
    println!("columns: {:?}\n", m.columns().iter().map(|c| &c.name).collect::<Vec<_>>());

    let mut s = Session::new(EvalOptions { particles: 20_000, seed: 5, ..EvalOptions::default() });
    s.load_model("g", &fx.join("tmvg.json"))?;
    s.load_model("t", &fx.join("tmvg_truncated.json"))?;
    for q in [
        "PROBABILITY OF x1 > 0 UNDER g",
        "PROBABILITY DENSITY OF x1 = 0.5 UNDER g GIVEN x2 = 1",
        "GENERATE UNDER g GIVEN x1 > 1 LIMIT 4",
        "GENERATE UNDER t GIVEN x3 = 0 LIMIT 4",
        "PROBABILITY OF x1 > 0 UNDER t",
    ] {
        println!("> {q}\n{}", render(&s.run(q)?.output, OutputFormat::Table));
    }
    Ok(())
}
