//! The `gensql` binary: flags, determinism and exit codes.

mod common;

use std::process::{Command, Output};

use common::fixture;

fn gensql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gensql")).args(args).env_remove("GENSQL_SEED").output().unwrap()
}

fn model_arg(name: &str, file: &str) -> String {
    format!("{name}={}", fixture(file).display())
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn same_seed_same_bytes() {
    let m = model_arg("m", "mixture.bn.json");
    let run = |seed: &str| gensql(&["--model", &m, "--seed", seed, "--query", "GENERATE UNDER m GIVEN x > 3 LIMIT 20"]);
    let (a, b, c) = (run("7"), run("7"), run("8"));
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(stdout(&a).lines().count(), 21);
}

#[test]
fn seed_from_environment() {
    let m = model_arg("m", "mixture.bn.json");
    let q = ["--model", &m, "--query", "GENERATE UNDER m LIMIT 5"];
    let env = Command::new(env!("CARGO_BIN_EXE_gensql")).args(q).env("GENSQL_SEED", "7").output().unwrap();
    let flag = gensql(&[&q[..], &["--seed", "7"]].concat());
    assert_eq!(env.stdout, flag.stdout);
}

#[test]
fn limit_and_order() {
    let t = format!("p={}", fixture("points.csv").display());
    let s = format!("p={}", fixture("points.schema.json").display());
    let o = gensql(&["--table", &t, "--table-schema", &s, "--query", "SELECT p.id, p.x FROM p ORDER BY x DESC LIMIT 2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "id,x\n5,4.4\n2,3.7\n");
}

#[test]
fn table_output_and_scalar_header() {
    let m = model_arg("m", "mixture.spe.json");
    let o = gensql(&["--model", &m, "--output", "table", "--query", "PROBABILITY OF color = \"red\" UNDER m"]);
    let text = stdout(&o);
    assert!(text.contains("value"), "{text}");
    assert!(text.contains("0.55"), "{text}");
}

#[test]
fn dump_lowered_goes_to_stderr() {
    let m = model_arg("m", "mixture.spe.json");
    let o = gensql(&["--model", &m, "--dump-lowered", "--query", "GENERATE UNDER m LIMIT 2"]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("replicate"), "{err}");
    assert!(!stdout(&o).contains("replicate"));
}

#[test]
fn exit_codes() {
    let m = model_arg("m", "mixture.bn.json");
    let t = format!("p={}", fixture("points.csv").display());
    let s = format!("p={}", fixture("points.schema.json").display());
    let code = |args: &[&str]| gensql(args).status.code().unwrap();
    assert_eq!(code(&["--model", &m, "--query", "GENERATE m"]), 2);
    assert_eq!(code(&["--model", &m, "--query", "GENERATE UNDER m GIVEN nope > 1 LIMIT 2"]), 3);
    assert_eq!(code(&["--model", &m, "--query", "GENERATE UNDER m LIMIT -1"]), 3);
    assert_eq!(code(&["--model", &m, "--query", "GENERATE UNDER m LIMIT 1 - 3"]), 4);
    let unsafe_q = "SELECT * FROM p WHERE p.x < PROBABILITY OF x > 0 UNDER m";
    let args = ["--model", &m, "--table", &t, "--table-schema", &s, "--query", unsafe_q];
    assert_eq!(code(&args), 0);
    assert_eq!(code(&[&args[..], &["--strict-safety"]].concat()), 5);
    assert_eq!(code(&["--model", "m=/nonexistent.json", "--query", "1"]), 6);
    assert_eq!(code(&["--table", &t, "--query", "1"]), 6);
}

#[test]
fn unsafe_query_warns() {
    let m = model_arg("m", "mixture.bn.json");
    let t = format!("p={}", fixture("points.csv").display());
    let s = format!("p={}", fixture("points.schema.json").display());
    let o = gensql(&["--model", &m, "--table", &t, "--table-schema", &s, "--query", "p WHERE p.x > 1"]);
    assert!(!String::from_utf8_lossy(&o.stderr).contains("warning"), "no approximate model involved");
    let q = "SELECT * FROM p WHERE p.x < PROBABILITY OF x > 0 UNDER m";
    let o = gensql(&["--model", &m, "--table", &t, "--table-schema", &s, "--query", q]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("WHERE"));
}

#[test]
fn repl_session() {
    use std::io::Write;
    let m = model_arg("m", "mixture.spe.json");
    let mut child = Command::new(env!("CARGO_BIN_EXE_gensql"))
        .args(["--model", &m, "--repl"])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b".schema m\nPROBABILITY OF color = \"red\" UNDER m\nbroken query\n.quit\n").unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("0.55"), "{out}");
    assert!(out.contains("color"), "{out}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse error"));
}
