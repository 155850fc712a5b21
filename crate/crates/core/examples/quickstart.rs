//! Load a model, sample from it and ask it questions.
//!
//! ```text
//! cargo run --example quickstart
//! ```

use std::path::Path;

use gensql::eval::EvalOptions;
use gensql::session::{render, OutputFormat, Session};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut s = Session::new(EvalOptions { seed: 1, ..EvalOptions::default() });
    s.load_model("m", &fixtures.join("mixture.spe.json"))?;

    for q in [
        "GENERATE UNDER m LIMIT 5",
        "GENERATE UNDER m GIVEN color = \"blue\" LIMIT 3",
        "PROBABILITY OF color = \"red\" UNDER m",
        "PROBABILITY OF x > 2 UNDER m GIVEN color = \"blue\"",
    ] {
        let r = s.run(q)?;
        println!("> {q}\n{}", render(&r.output, OutputFormat::Table));
    }
    Ok(())
}
