//! Runs the `nrc` binary on small files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const RELATED: &str = "for m in M union <m.1, sng(for m2 in M where m.1 != m2.1 && (m.2.1 == m2.2.1 || m.2.2 == m2.2.2) union m2.1)>\n";
const MOVIES: &str = r#"M : Bag(<Base, Base, Base>)
{ <"Drive", "Drama", "Refn">, <"Skyfall", "Action", "Mendes">, <"Rush", "Action", "Howard"> }
"#;
const JARHEAD: &str = "M : Bag(<Base, Base, Base>)\n{ <\"Jarhead\", \"Drama\", \"Mendes\"> }\n";

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Workspace { dir: tempfile::tempdir().unwrap() };
        ws.file("related.nrc", RELATED);
        ws.file("movies.db", MOVIES);
        ws.file("jarhead.upd", JARHEAD);
        ws
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_nrc")).current_dir(self.dir.path()).args(args).output().unwrap()
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn eval_prints_the_nested_result() {
    let ws = Workspace::new();
    let o = ws.run(&["eval", "related.nrc", "--db", "movies.db"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "{ <\"Drive\", { }>, <\"Rush\", { \"Skyfall\" }>, <\"Skyfall\", { \"Rush\" }> }\n");
}

#[test]
fn eval_of_an_empty_bag() {
    let ws = Workspace::new();
    ws.file("e.nrc", "empty[Bag(Base)]");
    let o = ws.run(&["eval", "e.nrc"]);
    assert_eq!(stdout(&o), "{ }\n");
}

#[test]
fn negative_multiplicities_survive_evaluation() {
    let ws = Workspace::new();
    ws.file("r.db", "R : Bag(Base)\n{ \"a\" : -3 }\n");
    ws.file("q.nrc", "R");
    let o = ws.run(&["eval", "q.nrc", "--db", "r.db"]);
    assert_eq!(stdout(&o), "{ \"a\" : -3 }\n");
}

#[test]
fn shredded_delta_of_related() {
    let ws = Workspace::new();
    let o = ws.run(&["delta", "related.nrc", "--db", "movies.db", "--rel", "M", "--shredded"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("delta flat = for m in delta M^F union sng(<m.1, inL[1](m)>)"), "{out}");
    assert!(out.contains("for m2 in delta M^F where m.1 != m2.1"), "{out}");
}

#[test]
fn nested_delta_is_a_domain_error() {
    let ws = Workspace::new();
    let o = ws.run(&["delta", "related.nrc", "--db", "movies.db", "--rel", "M"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[unrestricted-singleton]"), "{}", stderr(&o));
}

#[test]
fn higher_order_deltas_and_degrees() {
    let ws = Workspace::new();
    ws.file("sj.nrc", "for x in M union for y in M union sng(<x.1, y.1>)");
    let o = ws.run(&["degree", "sj.nrc", "--db", "movies.db"]);
    assert_eq!(stdout(&o), "degree 2\nM 2\n");
    let o = ws.run(&["delta", "sj.nrc", "--db", "movies.db", "--rel", "M", "--order", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "empty[Bag(<Base, Base>)]\n");
}

#[test]
fn cost_of_related() {
    let ws = Workspace::new();
    let o = ws.run(&["cost", "related.nrc", "--db", "movies.db", "--permissive"]);
    assert_eq!(stdout(&o), "cost 3{<1,3{1}>}\ntcost 12\n");
    let o = ws.run(&["cost", "related.nrc", "--db", "movies.db", "--permissive", "--sizes", "M=n"]);
    assert_eq!(stdout(&o), "cost n{<1,n{1}>}\ntcost n^2 + n\n");
    let o = ws.run(&["cost", "related.nrc", "--db", "movies.db"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn shred_prints_components_and_tables() {
    let ws = Workspace::new();
    ws.file("x.db", "X : Bag(<Base, Bag(Base)>)\n{ <\"a\", { \"x1\", \"x2\" }>, <\"b\", { \"x3\" }> }\n");
    ws.file("x.nrc", "X");
    let o = ws.run(&["shred", "x.nrc", "--db", "x.db"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("X^F = { <\"a\", @(1, <>)>, <\"b\", @(2, <>)> }"), "{out}");
    assert!(out.contains("X^G.2 = [ @(1, <>) => { \"x1\", \"x2\" }, @(2, <>) => { \"x3\" } ]"), "{out}");
    let o = ws.run(&["shred", "x.nrc", "--db", "x.db", "--depth", "0"]);
    assert!(stdout(&o).contains("X^F = { <\"a\", { \"x1\", \"x2\" }>, <\"b\", { \"x3\" }> }"), "{}", stdout(&o));
}

#[test]
fn ivm_session() {
    let ws = Workspace::new();
    let o = ws.run(&["ivm", "init", "related.nrc", "--db", "movies.db", "--state", "s.ivm"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = ws.run(&["ivm", "apply", "--state", "s.ivm", "jarhead.upd"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("new-labels 1"), "{}", stdout(&o));
    let o = ws.run(&["ivm", "read", "--state", "s.ivm"]);
    assert_eq!(
        stdout(&o),
        "{ <\"Drive\", { \"Jarhead\" }>, <\"Jarhead\", { \"Drive\", \"Skyfall\" }>, <\"Rush\", { \"Skyfall\" }>, <\"Skyfall\", { \"Jarhead\", \"Rush\" }> }\n"
    );
    let o = ws.run(&["--json", "ivm", "stats", "--state", "s.ivm"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["updates"], 1);
    assert_eq!(v["view_rows"], 4);
}

#[test]
fn ivm_rejects_updates_of_the_wrong_type() {
    let ws = Workspace::new();
    ws.run(&["ivm", "init", "related.nrc", "--db", "movies.db", "--state", "s.ivm"]);
    ws.file("bad.upd", "M : Bag(Base)\n{ 1 }\n");
    let o = ws.run(&["ivm", "apply", "--state", "s.ivm", "bad.upd"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error[type-mismatch]"), "{}", stderr(&o));
}

#[test]
fn parse_errors_carry_code_and_span() {
    let ws = Workspace::new();
    ws.file("bad.nrc", "for x in M union\n  sng(x.9)");
    let o = ws.run(&["eval", "bad.nrc", "--db", "movies.db"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error[parse]"), "{}", stderr(&o));
    assert!(stderr(&o).contains("bad.nrc:2:9"), "{}", stderr(&o));
    let o = ws.run(&["--json", "eval", "bad.nrc", "--db", "movies.db"]);
    let v: serde_json::Value = serde_json::from_str(&stderr(&o)).unwrap();
    assert_eq!(v["error"]["code"], "parse");
    assert_eq!(v["error"]["line"], 2);
    assert!(v["error"]["span"]["start"].as_u64().unwrap() > 0);
}

#[test]
fn incremental_fragment_rejects_input_dependent_singletons() {
    let ws = Workspace::new();
    ws.file("s.nrc", "sng(M)");
    let o = ws.run(&["typecheck", "s.nrc", "--db", "movies.db", "--fragment", "inc"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error[sng-input-dependent]"));
    let o = ws.run(&["typecheck", "s.nrc", "--db", "movies.db"]);
    assert_eq!(stdout(&o), "Bag(Bag(<Base, Base, Base>))\n");
}

#[test]
fn usage_errors_exit_with_two() {
    let ws = Workspace::new();
    assert_eq!(ws.run(&["eval"]).status.code(), Some(2));
    assert_eq!(ws.run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ws.run(&["delta", "related.nrc"]).status.code(), Some(2));
}

#[test]
fn missing_files_are_domain_errors() {
    let ws = Workspace::new();
    let o = ws.run(&["eval", "nope.nrc"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error[io]"));
}

#[test]
fn fuzzing_a_small_corpus() {
    let ws = Workspace::new();
    let o = ws.run(&["fuzz", "--seed", "42", "--cases", "20", "--mode", "delta,shred", "--out", "cx"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(stdout(&o), "delta: 20 cases, 0 failures\nshred: 20 cases, 0 failures\n");
    assert!(!ws.path("cx").exists());
    let o = ws.run(&["fuzz", "--mode", "nonsense"]);
    assert_eq!(o.status.code(), Some(1));
}

fn write_cx(dir: &Path, property: &str, query: &str, db: &str, update: Option<&str>) {
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join("property"), property).unwrap();
    fs::write(dir.join("query.nrc"), query).unwrap();
    fs::write(dir.join("db.nrc"), db).unwrap();
    if let Some(u) = update {
        fs::write(dir.join("update.nrc"), u).unwrap();
    }
}

#[test]
fn oracle_check_reproduces_a_failure() {
    let ws = Workspace::new();
    // An update larger than its base is not incremental, so the cost check fails.
    let db = "R : Bag(Base)\n{ 1, 2 }\n";
    write_cx(&ws.path("bad"), "cost", "for x in R union sng(x)", db, Some("R : Bag(Base)\n{ 3 : 5 }\n"));
    let o = ws.run(&["oracle-check", "bad"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("cost: failure reproduced"), "{}", stdout(&o));

    write_cx(&ws.path("good"), "delta", "for x in R union sng(x)", db, Some("R : Bag(Base)\n{ 3 }\n"));
    let o = ws.run(&["oracle-check", "good"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(stdout(&o), "delta: passes\n");
}

#[test]
fn json_output_parses() {
    let ws = Workspace::new();
    for args in [
        vec!["--json", "eval", "related.nrc", "--db", "movies.db"],
        vec!["--json", "shred", "related.nrc", "--db", "movies.db"],
        vec!["--json", "cost", "related.nrc", "--db", "movies.db", "--permissive"],
        vec!["--json", "degree", "related.nrc", "--db", "movies.db", "--shredded"],
        vec!["--json", "delta", "related.nrc", "--db", "movies.db", "--rel", "M", "--shredded"],
    ] {
        let o = ws.run(&args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        serde_json::from_str::<serde_json::Value>(&stdout(&o)).unwrap_or_else(|e| panic!("{args:?}: {e}"));
    }
    let o = ws.run(&["--json", "cost", "related.nrc", "--db", "movies.db", "--permissive"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["tcost"], "12");
}
