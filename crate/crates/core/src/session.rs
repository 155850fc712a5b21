//! Loading data and models, running statements end to end and rendering
//! their results.

use std::cmp::Ordering;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use crate::ami::spec::{load_model, SpecError};
use crate::ami::RowModel;
use crate::eval::{EvalError, EvalOptions, Evaluator, Env, Output, StatsSnapshot};
use crate::lower::{lower, lowered_typecheck, print_term, LowerError, Term};
use crate::normalize::{check_normal, normalize};
use crate::parser::{desugar, parse_statement, DesugarError, ParseError, Statement};
use crate::safety::{analyze, SafetyReport};
use crate::table::{Column, Row, Schema, SchemaDoc, Table};
use crate::typecheck::{typecheck, Mode, TypeError};
use crate::value::{BaseType, Value};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("error at {}: {}", .0.span, .0.message)]
    Desugar(#[from] DesugarError),
    #[error("type error at {}: {}", .0.span, .0.message)]
    Type(#[from] TypeError),
    #[error("{0}")]
    Lower(#[from] LowerError),
    #[error("evaluation error: {0}")]
    Eval(#[from] EvalError),
    #[error("unsafe query on an approximate model:\n{0}")]
    Unsafe(String),
    #[error("{0}")]
    Load(String),
}

impl SessionError {
    pub fn exit_code(&self) -> i32 {
        match self {
            SessionError::Parse(_) => 2,
            SessionError::Desugar(_) | SessionError::Type(_) | SessionError::Lower(_) => 3,
            SessionError::Eval(_) => 4,
            SessionError::Unsafe(_) => 5,
            SessionError::Load(_) => 6,
        }
    }
}

fn load_err(e: impl std::fmt::Display) -> SessionError {
    SessionError::Load(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Table,
}

#[derive(Debug)]
pub struct QueryResult {
    pub output: Output,
    pub warnings: Vec<String>,
    pub safety: SafetyReport,
    pub lowered: String,
    pub stats: StatsSnapshot,
}

#[derive(Default)]
pub struct Session {
    pub env: Env,
    pub options: EvalOptions,
    pub strict_safety: bool,
}

/// Parses one CSV cell as a value of `ty`. Empty cells and `NULL` are Null.
pub fn parse_cell(ty: &BaseType, text: &str) -> Result<Value, String> {
    let s = text.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("null") {
        return Ok(Value::Null);
    }
    let v = match ty {
        BaseType::Real | BaseType::PosReal | BaseType::Ranged { .. } => {
            Value::Real(s.parse::<f64>().map_err(|_| format!("{s:?} is not a number"))?)
        }
        BaseType::Int | BaseType::Nat => Value::Int(s.parse::<i64>().map_err(|_| format!("{s:?} is not an integer"))?),
        BaseType::Bool => match s.to_ascii_lowercase().as_str() {
            "true" | "1" => Value::Bool(true),
            "false" | "0" => Value::Bool(false),
            _ => return Err(format!("{s:?} is not a boolean")),
        },
        BaseType::Str => Value::Str(text.to_string()),
        BaseType::Categorical { labels } => {
            if !labels.iter().any(|l| l == s) {
                return Err(format!("{s:?} is not one of the labels {{{}}}", labels.join(", ")));
            }
            Value::Str(s.to_string())
        }
    };
    if !ty.admits(&v) {
        return Err(format!("{s:?} is outside type {ty}"));
    }
    Ok(v)
}

pub fn parse_schema(text: &str) -> Result<Vec<Column>, String> {
    let doc: SchemaDoc = serde_json::from_str(text).map_err(|e| format!("schema: {e}"))?;
    for c in &doc.columns {
        c.ty.validate().map_err(|e| format!("schema column {}: {e}", c.name))?;
    }
    Schema::new(doc.columns.clone()).map_err(|e| e.to_string())?;
    Ok(doc.columns)
}

/// Reads CSV text whose header must list exactly the schema's columns in order.
pub fn read_table(csv_text: &str, columns: &[Column]) -> Result<Table, String> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(csv_text.as_bytes());
    let header: Vec<String> = rdr.headers().map_err(|e| e.to_string())?.iter().map(|h| h.trim().to_string()).collect();
    let names: Vec<&str> = columns.iter().map(|c| c.name.as_str()).collect();
    if header != names {
        return Err(format!("CSV header [{}] does not match schema columns [{}]", header.join(", "), names.join(", ")));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() != columns.len() {
            return Err(format!("row {}: {} fields, expected {}", i + 1, rec.len(), columns.len()));
        }
        let row = rec
            .iter()
            .zip(columns)
            .map(|(cell, c)| parse_cell(&c.ty, cell).map_err(|e| format!("row {}, column {}: {e}", i + 1, c.name)))
            .collect::<Result<Row, _>>()?;
        rows.push(row);
    }
    let schema = Schema::new(columns.to_vec()).map_err(|e| e.to_string())?;
    Table::new(schema, rows).map_err(|e| e.to_string())
}

fn read(path: &Path) -> Result<String, SessionError> {
    std::fs::read_to_string(path).map_err(|e| load_err(format!("{}: {e}", path.display())))
}

fn model_names(t: &Term, out: &mut Vec<String>) {
    use crate::lower::{AmiCall, EventL};
    fn event(e: &EventL, out: &mut Vec<String>) {
        match e {
            EventL::True => {}
            EventL::And(a, b) | EventL::Or(a, b) => {
                event(a, out);
                event(b, out);
            }
            EventL::Atom(_, _, v) => model_names(v, out),
        }
    }
    let call = |c: &AmiCall, out: &mut Vec<String>| {
        out.push(c.model.clone());
        c.c0.0.iter().for_each(|(_, v)| model_names(v, out));
        event(&c.c1, out);
    };
    match t {
        Term::Const(_) | Term::Var(_) | Term::Table(_) => {}
        Term::Simulate(c) | Term::MutualInfo(c, _, _) => call(c, out),
        Term::Logpdf(c, e) => {
            call(c, out);
            e.0.iter().for_each(|(_, v)| model_names(v, out));
        }
        Term::Prob(c, e) => {
            call(c, out);
            event(e, out);
        }
        Term::Tuple(ts) | Term::Op(_, ts) => ts.iter().for_each(|x| model_names(x, out)),
        Term::Proj(a, _) | Term::Exp(a) | Term::Singleton(a) | Term::Dedup(a) => model_names(a, out),
        Term::Replicate(a, b)
        | Term::Join(a, b)
        | Term::Union(a, b)
        | Term::Duplicate(a, b)
        | Term::Map { body: a, src: b, .. }
        | Term::Filter { pred: a, src: b, .. }
        | Term::MapReduce { body: a, src: b, .. }
        | Term::Let { bound: a, body: b, .. } => {
            model_names(a, out);
            model_names(b, out);
        }
        Term::GroupBy { src, keys, aggs, .. } => {
            model_names(src, out);
            keys.iter().for_each(|k| model_names(k, out));
            aggs.iter().filter_map(|(_, a)| a.as_ref()).for_each(|a| model_names(a, out));
        }
    }
}

impl Session {
    pub fn new(options: EvalOptions) -> Self {
        Session { env: Env::new(), options, strict_safety: false }
    }

    fn check_name(&self, name: &str) -> Result<(), SessionError> {
        if self.env.tables.contains_key(name) || self.env.models.contains_key(name) {
            return Err(load_err(format!("name {name} is already loaded")));
        }
        Ok(())
    }

    pub fn add_table(&mut self, name: &str, t: Table) -> Result<(), SessionError> {
        self.check_name(name)?;
        self.env.add_table(name, t);
        Ok(())
    }

    pub fn add_model(&mut self, name: &str, m: Arc<dyn RowModel>) -> Result<(), SessionError> {
        self.check_name(name)?;
        self.env.add_model(name, m);
        Ok(())
    }

    pub fn load_table(&mut self, name: &str, csv_path: &Path, schema_path: &Path) -> Result<(), SessionError> {
        let cols = parse_schema(&read(schema_path)?).map_err(|e| load_err(format!("{}: {e}", schema_path.display())))?;
        let t = read_table(&read(csv_path)?, &cols).map_err(|e| load_err(format!("{}: {e}", csv_path.display())))?;
        let t = Table { schema: t.schema.with_id(Some(name.to_string())), rows: t.rows };
        self.add_table(name, t)
    }

    pub fn load_model(&mut self, name: &str, path: &Path) -> Result<(), SessionError> {
        let m = load_model(&read(path)?).map_err(|e: SpecError| load_err(format!("{}: {e}", path.display())))?;
        self.add_model(name, m)
    }

    /// Runs one statement through the whole pipeline.
    pub fn run(&self, src: &str) -> Result<QueryResult, SessionError> {
        let st = parse_statement(src)?;
        let catalog = self.env.catalog();
        let q = desugar(&st.query, &catalog)?;
        typecheck(&q, &catalog, Mode::Permissive)?;
        let n = normalize(&q);
        let mut warnings: Vec<String> = n.warnings.iter().map(|d| format!("warning at {}: {}", d.span, d.message)).collect();
        check_normal(&n.query).map_err(|e| SessionError::Eval(EvalError::Runtime(format!("normalizer: {e}"))))?;
        typecheck(&n.query, &catalog, Mode::Strict)?;
        let safety = analyze(&n.query);
        let program = lower(&n.query, &catalog)?;
        let lty = lowered_typecheck(&program.term, &catalog)
            .map_err(|e| SessionError::Eval(EvalError::Runtime(e.to_string())))?;
        if let Some(cols) = &program.columns {
            if !lty.matches_columns(cols) {
                return Err(SessionError::Eval(EvalError::Runtime(format!("lowered type {lty:?} disagrees with query type"))));
            }
        }
        let mut models = Vec::new();
        model_names(&program.term, &mut models);
        let approximate = models.iter().any(|m| self.env.models.get(m).is_some_and(|m| !m.is_exact()));
        if approximate && !safety.safe {
            if self.strict_safety {
                return Err(SessionError::Unsafe(safety.render()));
            }
            warnings.extend(safety.render().lines().map(|l| format!("warning: {l}")));
        }
        let ev = Evaluator::new(&self.env, self.options.clone());
        let output = post_process(ev.run(&program)?, &st)?;
        Ok(QueryResult { output, warnings, safety, lowered: print_term(&program.term), stats: ev.stats() })
    }

    /// Handles one REPL line; returns false on `.quit`.
    pub fn repl_line(&mut self, line: &str, fmt: OutputFormat, out: &mut dyn Write, err: &mut dyn Write) -> bool {
        let line = line.trim();
        if line.is_empty() {
            return true;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        let r: Result<(), SessionError> = match words[0] {
            ".quit" | ".exit" => return false,
            ".seed" => match words.get(1).and_then(|s| s.parse().ok()) {
                Some(s) => {
                    self.options.seed = s;
                    Ok(())
                }
                None => Err(load_err("usage: .seed N")),
            },
            ".schema" => {
                for (name, kind, cols) in self.env.catalog().iter() {
                    if words.len() > 1 && !words[1..].contains(&name) {
                        continue;
                    }
                    let cols: Vec<String> = cols.iter().map(|c| format!("{} {}", c.name, c.ty)).collect();
                    let _ = writeln!(out, "{} {name}({})", if kind == crate::table::EntryKind::Model { "model" } else { "table" }, cols.join(", "));
                }
                Ok(())
            }
            ".load" => match words.as_slice() {
                [_, "table", name, csv, schema] => self.load_table(name, Path::new(csv), Path::new(schema)),
                [_, "model", name, path] => self.load_model(name, Path::new(path)),
                _ => Err(load_err("usage: .load table NAME CSV SCHEMA | .load model NAME PATH")),
            },
            w if w.starts_with('.') => Err(load_err(format!("unknown command {w}"))),
            _ => self.run(line).map(|r| {
                for w in &r.warnings {
                    let _ = writeln!(err, "{w}");
                }
                let _ = write!(out, "{}", render(&r.output, fmt));
            }),
        };
        if let Err(e) = r {
            let _ = writeln!(err, "{e}");
        }
        true
    }

    /// Reads statements line by line until `.quit` or end of input.
    pub fn repl(&mut self, input: impl BufRead, fmt: OutputFormat, out: &mut dyn Write, err: &mut dyn Write) {
        for line in input.lines() {
            let Ok(line) = line else { break };
            if !self.repl_line(&line, fmt, out, err) {
                break;
            }
        }
    }
}

/// Applies ORDER BY and LIMIT. Ties, and tables without ORDER BY, fall back
/// to the canonical row order.
pub fn post_process(out: Output, st: &Statement) -> Result<Output, SessionError> {
    let Output::Table(mut t) = out else {
        return Ok(out);
    };
    let mut keys = Vec::new();
    for k in &st.order_by {
        let i = t.schema.index_of(&k.column).ok_or_else(|| load_err(format!("ORDER BY: unknown column {}", k.column)))?;
        keys.push((i, k.descending));
    }
    t.rows.sort_by(|a, b| {
        for (i, desc) in &keys {
            let o = a[*i].cmp(&b[*i]);
            if o != Ordering::Equal {
                return if *desc { o.reverse() } else { o };
            }
        }
        a.cmp(b)
    });
    if let Some(n) = st.limit {
        t.rows.truncate(n as usize);
    }
    Ok(Output::Table(t))
}

fn as_table(o: &Output) -> (Vec<String>, Vec<Row>) {
    match o {
        Output::Table(t) => (t.schema.columns.iter().map(|c| c.name.clone()).collect(), t.rows.clone()),
        Output::Scalar(v) => (vec!["value".into()], vec![vec![v.clone()]]),
    }
}

/// Renders CSV, or a padded text table. Row order is kept as given.
pub fn render(o: &Output, fmt: OutputFormat) -> String {
    let (header, rows) = as_table(o);
    match fmt {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let _ = w.write_record(&header);
            for r in &rows {
                let _ = w.write_record(r.iter().map(Value::render));
            }
            String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
        }
        OutputFormat::Table => {
            let cells: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|v| v.to_string()).collect()).collect();
            let widths: Vec<usize> = (0..header.len())
                .map(|j| cells.iter().map(|r| r[j].chars().count()).chain([header[j].chars().count()]).max().unwrap_or(0))
                .collect();
            let line = |r: &[String]| {
                let cols: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
                format!("{}\n", cols.join(" | ").trim_end())
            };
            let mut s = line(&header);
            s.push_str(&format!("{}\n", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-")));
            for r in &cells {
                s.push_str(&line(r));
            }
            s
        }
    }
}
