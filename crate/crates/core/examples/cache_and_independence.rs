//! Call counters with memoization and the independence rewrite on and off.

use std::path::Path;

use gensql::eval::EvalOptions;
use gensql::session::Session;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fx = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let runs = [
        ("health_data", "health.spe.json", "SELECT PROBABILITY OF bmi > 25 UNDER m GIVEN weight = 80 AS p FROM (health_data DUPLICATE 50 TIMES)"),
        ("health_data", "bits_independent.spe.json", "SELECT PROBABILITY OF x = 1 UNDER m GIVEN y = 1 AS p FROM health_data"),
    ];
    for (table, model, q) in runs {
        println!("{model}: {q}");
        for (cache, indep_opt) in [(true, true), (true, false), (false, true), (false, false)] {
            let mut s = Session::new(EvalOptions { cache, indep_opt, ..EvalOptions::default() });
            s.load_model("m", &fx.join(model))?;
            s.load_table(table, &fx.join("health_data.csv"), &fx.join("health_data.schema.json"))?;
            let st = s.run(q)?.stats;
            println!(
                "  cache={cache:<5} indep_opt={indep_opt:<5} sites={:<4} backend={:<4} hits={:<4} conditionings={:<4} dropped={}",
                st.site_executions, st.backend_calls, st.cache_hits, st.conditionings, st.dropped_conditions
            );
        }
    }
    Ok(())
}
