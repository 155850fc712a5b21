//! Mutual information, both through the built-in estimator and spelled out
//! as a query over synthetic rows.

use std::path::Path;

use gensql::eval::EvalOptions;
use gensql::session::{render, OutputFormat, Session};

const CONDITIONAL_MI: &str = "
SELECT weight, AVG(log_pxy_div_px_py) AS mutual_information
FROM (
  SELECT weight, LOG(pxy) - (LOG(px) + LOG(py)) AS log_pxy_div_px_py
  FROM (
    SELECT weight,
      PROBABILITY OF h_model.age = table.age AND h_model.bmi = table.bmi
        UNDER h_model GIVEN h_model.weight = table.weight AS pxy,
      PROBABILITY OF h_model.age = table.age
        UNDER h_model GIVEN h_model.weight = table.weight AS px,
      PROBABILITY OF h_model.bmi = table.bmi
        UNDER h_model GIVEN h_model.weight = table.weight AS py
    FROM (
      SELECT table.weight, table.age, table.bmi
      FROM (
        (SELECT weight AS w FROM health_data) DUPLICATE 1000 TIMES
        GENERATIVE JOIN h_model
        GIVEN h_model.weight = w) AS table)))
GROUP BY weight";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fx = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut s = Session::new(EvalOptions { mi_samples: 10_000, ..EvalOptions::default() });
    s.load_model("independent", &fx.join("bits_independent.spe.json"))?;
    s.load_model("correlated", &fx.join("bits_correlated.spe.json"))?;
    s.load_model("h_model", &fx.join("health.spe.json"))?;
    s.load_table("health_data", &fx.join("health_data.csv"), &fx.join("health_data.schema.json"))?;

    for q in [
        "MUTUAL INFO (x, y) UNDER independent",
        "MUTUAL INFO (x, y) UNDER correlated",
        "MUTUAL INFO (age, bmi) UNDER h_model",
        "MUTUAL INFO (age, bmi, weight > 90) UNDER h_model",
    ] {
        println!("> {q}\n{}", render(&s.run(q)?.output, OutputFormat::Table));
    }
    println!("age and bmi given each patient's weight:");
    println!("{}", render(&s.run(CONDITIONAL_MI)?.output, OutputFormat::Table));
    Ok(())
}
