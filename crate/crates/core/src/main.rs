use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use gensql::eval::EvalOptions;
use gensql::session::{render, OutputFormat, Session, SessionError};

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Table,
}

/// Query tables and generative row models.
#[derive(Parser)]
#[command(name = "gensql", version)]
struct Args {
    /// Data table as NAME=CSV_PATH; needs a matching --table-schema.
    #[arg(long = "table", value_name = "NAME=PATH")]
    tables: Vec<String>,
    /// Schema document for a table as NAME=JSON_PATH.
    #[arg(long = "table-schema", value_name = "NAME=PATH")]
    schemas: Vec<String>,
    /// Model document as NAME=JSON_PATH.
    #[arg(long = "model", value_name = "NAME=PATH")]
    models: Vec<String>,
    #[arg(long, conflicts_with = "repl")]
    query: Option<String>,
    #[arg(long)]
    repl: bool,
    #[arg(long, env = "GENSQL_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    particles: u64,
    #[arg(long = "mi-samples", default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    mi_samples: u64,
    #[arg(long = "no-cache")]
    no_cache: bool,
    #[arg(long = "no-indep-opt")]
    no_indep_opt: bool,
    /// Reject unsafe queries on approximate models instead of warning.
    #[arg(long = "strict-safety")]
    strict_safety: bool,
    /// Print the lowered program to stderr before evaluating.
    #[arg(long = "dump-lowered")]
    dump_lowered: bool,
    #[arg(long, value_enum, default_value = "csv")]
    output: Format,
}

fn split(arg: &str) -> Result<(&str, PathBuf), SessionError> {
    match arg.split_once('=') {
        Some((n, p)) if !n.is_empty() && !p.is_empty() => Ok((n, PathBuf::from(p))),
        _ => Err(SessionError::Load(format!("expected NAME=PATH, got {arg:?}"))),
    }
}

fn setup(args: &Args) -> Result<Session, SessionError> {
    let mut s = Session::new(EvalOptions {
        cache: !args.no_cache,
        indep_opt: !args.no_indep_opt,
        particles: args.particles as usize,
        seed: args.seed,
        mi_samples: args.mi_samples as usize,
    });
    s.strict_safety = args.strict_safety;
    let schemas = args.schemas.iter().map(|a| split(a)).collect::<Result<Vec<_>, _>>()?;
    for t in &args.tables {
        let (name, csv) = split(t)?;
        let Some((_, schema)) = schemas.iter().find(|(n, _)| *n == name) else {
            return Err(SessionError::Load(format!("table {name} has no --table-schema")));
        };
        s.load_table(name, &csv, schema)?;
    }
    for m in &args.models {
        let (name, path) = split(m)?;
        s.load_model(name, &path)?;
    }
    Ok(s)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let fmt = match args.output {
        Format::Csv => OutputFormat::Csv,
        Format::Table => OutputFormat::Table,
    };
    let fail = |e: SessionError| {
        eprintln!("{e}");
        ExitCode::from(e.exit_code() as u8)
    };
    let mut session = match setup(&args) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    if let Some(q) = &args.query {
        return match session.run(q) {
            Ok(r) => {
                if args.dump_lowered {
                    eprint!("{}", r.lowered);
                }
                for w in &r.warnings {
                    eprintln!("{w}");
                }
                print!("{}", render(&r.output, fmt));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        };
    }
    if !args.repl {
        return fail(SessionError::Load("pass --query or --repl".into()));
    }
    let stdin = io::stdin();
    let (mut out, mut err) = (io::stdout(), io::stderr());
    let _ = write!(err, "gensql> ");
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if !session.repl_line(&line, fmt, &mut out, &mut err) {
            break;
        }
        let _ = write!(err, "gensql> ");
    }
    ExitCode::SUCCESS
}
