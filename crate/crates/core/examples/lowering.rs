//! The combinator programs queries are compiled to.

use std::path::Path;

use gensql::eval::EvalOptions;
use gensql::session::Session;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fx = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut s = Session::new(EvalOptions::default());
    s.load_model("m", &fx.join("mixture.spe.json"))?;
    s.load_table("r", &fx.join("readings.csv"), &fx.join("readings.schema.json"))?;
    for q in [
        "GENERATE UNDER m GIVEN color = \"red\" LIMIT 3",
        "PROBABILITY OF x > 1 UNDER m",
        "PROBABILITY OF x = 1 UNDER m GIVEN color = \"red\"",
        "SELECT r.id, PROBABILITY OF m.x > r.v UNDER m AS p FROM (r WHERE r.v > 0)",
        "r GENERATIVE JOIN m GIVEN m.x = r.v",
    ] {
        println!("> {q}\n{}", s.run(q)?.lowered);
    }
    Ok(())
}
