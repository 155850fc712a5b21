//! Which queries converge as an approximate backend gets more particles.

use std::path::Path;

use gensql::eval::EvalOptions;
use gensql::session::{render, OutputFormat, Session};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fx = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut s = Session::new(EvalOptions::default());
    s.load_model("m", &fx.join("mixture.bn.json"))?;
    s.load_table("r", &fx.join("readings.csv"), &fx.join("readings.schema.json"))?;

    for q in [
        "SELECT r.id, PROBABILITY OF x > 1 UNDER m AS p FROM r",
        "SELECT r.id, PROBABILITY OF x > r.v UNDER m AS p FROM r",
        "r WHERE r.v < PROBABILITY OF x > 0 UNDER m",
    ] {
        let res = s.run(q)?;
        println!("> {q}\nsafe: {}", res.safety.safe);
        for w in &res.warnings {
            println!("  {w}");
        }
    }

    // Strict mode refuses instead of warning.
    s.strict_safety = true;
    match s.run("r WHERE r.v < PROBABILITY OF x > 0 UNDER m") {
        Ok(r) => println!("{}", render(&r.output, OutputFormat::Table)),
        Err(e) => println!("rejected (exit code {}): {e}", e.exit_code()),
    }
    Ok(())
}
