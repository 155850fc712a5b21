//! Drive the interactive shell from a script, loading data with dot
//! commands.

use std::io::Cursor;
use std::path::Path;

use gensql::eval::EvalOptions;
use gensql::session::{OutputFormat, Session};

fn main() {
    let fx = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let script = format!(
        ".load model m {m}\n.load table p {csv} {schema}\n.schema\n.seed 11\nGENERATE UNDER m LIMIT 2\n\
         SELECT p.id, p.color FROM (p WHERE p.x > 1)\nnot a query\n.quit\n",
        m = fx.join("mixture.spe.json").display(),
        csv = fx.join("points.csv").display(),
        schema = fx.join("points.schema.json").display(),
    );
    let mut s = Session::new(EvalOptions::default());
    let (mut out, mut err) = (std::io::stdout(), std::io::stdout());
    s.repl(Cursor::new(script), OutputFormat::Table, &mut out, &mut err);
}
