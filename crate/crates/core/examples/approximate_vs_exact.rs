//! The same mixture as an exact sum-product model and as a Bayesian network
//! answered by importance sampling.

use std::path::Path;

use gensql::eval::{EvalOptions, Output};
use gensql::session::Session;

fn scalar(s: &Session, q: &str) -> f64 {
    match s.run(q).expect("query runs").output {
        Output::Scalar(v) => v.as_f64().unwrap_or(f64::NAN),
        Output::Table(_) => unreachable!(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fx = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let queries = [
        "PROBABILITY OF color = \"red\" UNDER m GIVEN x > 2",
        "PROBABILITY DENSITY OF x = 0 UNDER m",
        "PROBABILITY OF x > 4 UNDER m GIVEN color = \"blue\"",
    ];
    let mut exact = Session::new(EvalOptions::default());
    exact.load_model("m", &fx.join("mixture.spe.json"))?;
    for q in queries {
        println!("{q}\n  exact      {:.5}", scalar(&exact, q));
        for particles in [10, 100, 1_000, 10_000, 100_000] {
            let mut s = Session::new(EvalOptions { particles, ..EvalOptions::default() });
            s.load_model("m", &fx.join("mixture.bn.json"))?;
            println!("  n={particles:<8} {:.5}", scalar(&s, q));
        }
    }
    Ok(())
}
