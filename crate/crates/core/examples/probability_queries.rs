//! Per-row probabilities over a data table: scoring, ranking and the
//! mass/density split.

use std::path::Path;

use gensql::eval::EvalOptions;
use gensql::session::{render, OutputFormat, Session};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fx = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut s = Session::new(EvalOptions::default());
    s.load_model("m", &fx.join("mixture.spe.json"))?;
    s.load_table("p", &fx.join("points.csv"), &fx.join("points.schema.json"))?;

    let queries = [
        // An equality on a real column is a density, everything else a mass.
        "PROBABILITY OF x = 0 UNDER m",
        "PROBABILITY OF x > 0 AND x < 1 UNDER m",
        // Null cells condition on nothing.
        "SELECT p.id, PROBABILITY OF m.color = p.color UNDER m GIVEN m.x = p.x AS pc FROM p",
        // Least likely rows first.
        "SELECT p.id, p.x, PROBABILITY OF m.x = p.x UNDER m AS d FROM p ORDER BY d LIMIT 3",
        // `*` expands to every model column the row has a value for.
        "SELECT p.id, PROBABILITY OF * UNDER m AS joint FROM p",
    ];
    for q in queries {
        println!("> {q}\n{}", render(&s.run(q)?.output, OutputFormat::Table));
    }
    Ok(())
}
