//! Fill in missing cells by sampling a model conditioned on each row.

use std::path::Path;

use gensql::eval::EvalOptions;
use gensql::session::{render, OutputFormat, Session};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fx = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut s = Session::new(EvalOptions { seed: 3, ..EvalOptions::default() });
    s.load_model("m", &fx.join("mixture.spe.json"))?;
    s.load_table("p", &fx.join("points.csv"), &fx.join("points.schema.json"))?;

    println!("{}", render(&s.run("p")?.output, OutputFormat::Table));

    // Rename the observed columns so they do not clash with the model's.
    let q = "SELECT id, observed_color, observed_x, color, x FROM \
             ((SELECT p.id, p.color AS observed_color, p.x AS observed_x FROM p) \
              GENERATIVE JOIN m GIVEN m.color = observed_color AND m.x = observed_x)";
    println!("{}", render(&s.run(q)?.output, OutputFormat::Table));

    // Several imputations per row.
    let q = "SELECT id, color FROM ((SELECT p.id, p.x AS obs FROM p WHERE p.id > 4) DUPLICATE 4 TIMES \
             GENERATIVE JOIN m GIVEN m.x = obs)";
    println!("{}", render(&s.run(q)?.output, OutputFormat::Table));
    Ok(())
}
