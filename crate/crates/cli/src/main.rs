//! `nrc`: evaluate nested queries, derive deltas and costs, shred, and
//! maintain views from the command line.

mod diag;
mod json;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nrc_core::corpus::{fuzz, Counterexample, GenConfig, Property};
use nrc_core::syntax::{parse_card, parse_cost, parse_db, parse_query};
use nrc_core::{
    compile, cost, degree_of, delta, eval, nested_db, shred_query, shred_value_depth, size, typecheck, Bag, CostEnv,
    DegreeOf, Expr, IvmMode, LabelGen, MaterializedState, Mode, Name, Poly, RelKey, RelName, Schema, SymCost,
};
use serde_json::json;

use diag::Diag;

#[derive(Parser, Debug)]
#[command(name = "nrc", version, about = "Nested relational queries with incremental maintenance")]
struct Cli {
    /// Emit structured JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct QueryArgs {
    /// File holding the query.
    query: PathBuf,
    /// Database files: `Name : Type` headers, each followed by a bag.
    #[arg(long = "db")]
    db: Vec<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Fragment {
    Nrc,
    Inc,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Typecheck a query against the database schema.
    Typecheck {
        #[command(flatten)]
        q: QueryArgs,
        #[arg(long, value_enum, default_value = "nrc")]
        fragment: Fragment,
    },
    /// Evaluate a query.
    Eval {
        #[command(flatten)]
        q: QueryArgs,
    },
    /// Derive the delta of a query for one relation.
    Delta {
        #[command(flatten)]
        q: QueryArgs,
        #[arg(long)]
        rel: String,
        /// Apply the delta transformation this many times.
        #[arg(long, default_value_t = 1)]
        order: u32,
        /// Shred the query first and derive deltas of every component.
        #[arg(long)]
        shredded: bool,
    },
    /// Degree of a query in each relation.
    Degree {
        #[command(flatten)]
        q: QueryArgs,
        /// Report the degrees of the shredded components instead.
        #[arg(long)]
        shredded: bool,
    },
    /// Cost of a query.
    Cost {
        #[command(flatten)]
        q: QueryArgs,
        /// Relation sizes, `R=n` for a cardinality at every bag level or
        /// `R=<cost literal>`; relations without one are sized from the
        /// database.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<String>,
        /// Cost singletons with input-dependent bodies too.
        #[arg(long)]
        permissive: bool,
    },
    /// Shred a query, and the database if given.
    Shred {
        #[command(flatten)]
        q: QueryArgs,
        /// Shred database values only down to this bag depth.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Maintain a materialized view in a state file.
    Ivm {
        #[command(subcommand)]
        action: IvmAction,
    },
    /// Check properties on a seeded random corpus.
    Fuzz {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        cases: u64,
        /// Property to check, or `all`.
        #[arg(long, default_value = "all")]
        mode: String,
        /// Directory to write counterexamples to.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun the check of a counterexample directory written by `fuzz`.
    OracleCheck { dir: PathBuf },
}

#[derive(Subcommand, Debug)]
enum IvmAction {
    /// Materialize a query over a database.
    Init {
        #[command(flatten)]
        q: QueryArgs,
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value = "recursive")]
        mode: IvmMode,
    },
    /// Apply update files in order.
    Apply {
        #[arg(long)]
        state: PathBuf,
        updates: Vec<PathBuf>,
    },
    /// Print the nested view.
    Read {
        #[arg(long)]
        state: PathBuf,
    },
    /// Print cumulative statistics.
    Stats {
        #[arg(long)]
        state: PathBuf,
    },
}

/// Text and JSON forms of a command's output.
struct Output {
    text: String,
    json: serde_json::Value,
    /// Exit with status 1 after printing, e.g. when a check failed.
    failed: bool,
}

impl Output {
    fn ok(text: String, json: serde_json::Value) -> Self {
        Output { text, json, failed: false }
    }
}

fn read(path: &Path) -> Result<String, Diag> {
    fs::read_to_string(path).map_err(|e| Diag::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), Diag> {
    fs::write(path, text).map_err(|e| Diag::io(path, e))
}

struct Loaded {
    query: Expr,
    schema: Schema,
    db: BTreeMap<Name, Bag>,
    path: PathBuf,
    src: String,
}

impl Loaded {
    fn diag(&self, e: nrc_core::Error) -> Diag {
        Diag::from_core(&e, &self.path, &self.src)
    }
}

fn load_db(paths: &[PathBuf]) -> Result<(Schema, BTreeMap<Name, Bag>), Diag> {
    let mut schema = Schema::new();
    let mut db = BTreeMap::new();
    for p in paths {
        let src = read(p)?;
        for d in parse_db(&src).map_err(|e| Diag::from_core(&e, p, &src))? {
            if schema.rels.contains_key(&d.name) {
                let msg = format!("relation `{}` is declared twice", d.name);
                return Err(Diag { file: Some(p.clone()), ..Diag::new("duplicate-relation", msg) });
            }
            schema.insert(d.name.clone(), d.ty);
            db.insert(d.name, d.value);
        }
    }
    Ok((schema, db))
}

fn load(q: &QueryArgs) -> Result<Loaded, Diag> {
    let src = read(&q.query)?;
    let query = parse_query(&src).map_err(|e| Diag::from_core(&e, &q.query, &src))?;
    let (schema, db) = load_db(&q.db)?;
    Ok(Loaded { query, schema, db, path: q.query.clone(), src })
}

fn typecheck_cmd(q: &QueryArgs, fragment: Fragment) -> Result<Output, Diag> {
    let l = load(q)?;
    let mode = match fragment {
        Fragment::Nrc => Mode::Nrc,
        Fragment::Inc => Mode::Inc,
    };
    let ty = typecheck(&l.query, &l.schema, mode).map_err(|e| l.diag(e))?;
    Ok(Output::ok(ty.to_string(), json!({ "type": ty.to_string() })))
}

fn eval_cmd(q: &QueryArgs) -> Result<Output, Diag> {
    let l = load(q)?;
    typecheck(&l.query, &l.schema, Mode::Nrc).map_err(|e| l.diag(e))?;
    let v = eval(&l.query, &Arc::new(nested_db(l.db.clone()))).map_err(|e| l.diag(e))?;
    Ok(Output::ok(v.to_string(), json!({ "value": json::value(&v) })))
}

fn delta_cmd(q: &QueryArgs, rel: &str, order: u32, shredded: bool) -> Result<Output, Diag> {
    let l = load(q)?;
    if !l.schema.rels.contains_key(rel) {
        return Err(l.diag(nrc_core::Error::UnknownRelation(rel.into())));
    }
    typecheck(&l.query, &l.schema, Mode::Nrc).map_err(|e| l.diag(e))?;
    let derive = |e: &Expr| -> Result<Expr, Diag> {
        (1..=order).try_fold(e.clone(), |acc, k| delta(&acc, rel, k, &l.schema)).map_err(|e| l.diag(e))
    };
    let parts: Vec<(String, Expr)> = if shredded {
        let sq = shred_query(&l.query, &l.schema).map_err(|e| l.diag(e))?;
        let mut out = Vec::new();
        for (path, e) in sq.components() {
            let label = path.map_or("flat".to_string(), |p| format!("ctx{}", render_path(&p)));
            out.push((label, derive(e)?));
        }
        out
    } else {
        vec![("query".into(), derive(&l.query)?)]
    };
    let text = if shredded {
        parts.iter().map(|(n, d)| format!("delta {n} = {d}")).collect::<Vec<_>>().join("\n")
    } else {
        parts[0].1.to_string()
    };
    let js: serde_json::Map<_, _> = parts.iter().map(|(n, d)| (n.clone(), json!(d.to_string()))).collect();
    Ok(Output::ok(text, json!({ "relation": rel, "order": order, "deltas": js })))
}

fn render_path(p: &[nrc_core::CtxStep]) -> String {
    p.iter()
        .map(|s| match s {
            nrc_core::CtxStep::Fst => ".1",
            nrc_core::CtxStep::Snd => ".2",
            nrc_core::CtxStep::Inner => ".i",
        })
        .collect()
}

fn degree_cmd(q: &QueryArgs, shredded: bool) -> Result<Output, Diag> {
    let l = load(q)?;
    typecheck(&l.query, &l.schema, Mode::Nrc).map_err(|e| l.diag(e))?;
    let parts: Vec<(String, Expr)> = if shredded {
        let sq = shred_query(&l.query, &l.schema).map_err(|e| l.diag(e))?;
        sq.components()
            .into_iter()
            .map(|(p, e)| (p.map_or("flat".to_string(), |p| format!("ctx{}", render_path(&p))), e.clone()))
            .collect()
    } else {
        vec![("query".into(), l.query.clone())]
    };
    let phi = BTreeMap::new();
    let mut lines = Vec::new();
    let mut js = serde_json::Map::new();
    for (label, e) in &parts {
        let total = degree_of(e, &phi, DegreeOf::AllRelations).map_err(|e| l.diag(e))?;
        let mut per = serde_json::Map::new();
        let mut cols = vec![format!("degree {total}")];
        for r in l.schema.rels.keys() {
            let d = degree_of(e, &phi, DegreeOf::Relation(r)).map_err(|e| l.diag(e))?;
            cols.push(format!("{r} {d}"));
            per.insert(r.to_string(), json!(d));
        }
        lines.push(if shredded { format!("{label}: {}", cols.join(", ")) } else { cols.join("\n") });
        js.insert(label.clone(), json!({ "degree": total, "relations": per }));
    }
    Ok(Output::ok(lines.join("\n"), serde_json::Value::Object(js)))
}

fn size_spec(spec: &str, ty: &nrc_core::SchemaType) -> Result<SymCost, nrc_core::Error> {
    if spec.contains('{') {
        return parse_cost(spec)?.conform(ty);
    }
    let n = parse_card(spec)?;
    let bottom = SymCost::bottom(ty);
    Ok(bottom.map_card(&|_| n.clone()))
}

fn cost_cmd(q: &QueryArgs, sizes: &[String], permissive: bool) -> Result<Output, Diag> {
    let l = load(q)?;
    typecheck(&l.query, &l.schema, Mode::Nrc).map_err(|e| l.diag(e))?;
    let mut given = BTreeMap::new();
    for s in sizes {
        let (r, spec) = s
            .split_once('=')
            .ok_or_else(|| Diag::new("bad-size", format!("expected `R=size`, found `{s}`")))?;
        let ty = l
            .schema
            .rels
            .get(r.trim())
            .ok_or_else(|| Diag::new("unknown-relation", format!("unknown relation `{r}` in --sizes")))?;
        let c = size_spec(spec.trim(), ty)
            .map_err(|e| Diag { src: Some(spec.into()), ..Diag::new(e.code(), format!("in --sizes {s}: {e}")) })?;
        given.insert(r.trim().to_string(), c);
    }
    let mut env = CostEnv::<Poly>::new();
    for (r, ty) in &l.schema.rels {
        let c = match given.remove(&**r) {
            Some(c) => c,
            None => {
                let v = nrc_core::Value::Bag(l.db.get(r).cloned().unwrap_or_default());
                size::<i64, u64>(&v, ty).map_err(|e| l.diag(e))?.map_card(&|n| Poly::constant(*n))
            }
        };
        env.rels.insert(RelKey::base(RelName::whole(r)), c);
    }
    if permissive {
        env = env.permissive();
    }
    let c = cost(&l.query, &env).map_err(|e| l.diag(e))?;
    let t = c.tcost();
    Ok(Output::ok(
        format!("cost {c}\ntcost {t}"),
        json!({ "cost": json::cost(&c), "text": c.to_string(), "tcost": t.to_string() }),
    ))
}

fn shred_cmd(q: &QueryArgs, depth: Option<usize>) -> Result<Output, Diag> {
    let l = load(q)?;
    let sq = shred_query(&l.query, &l.schema).map_err(|e| l.diag(e))?;
    let mut text = sq.to_string();
    let comps: serde_json::Map<_, _> = sq
        .components()
        .into_iter()
        .map(|(p, e)| (p.map_or("flat".into(), |p| format!("ctx{}", render_path(&p))), json!(e.to_string())))
        .collect();
    let mut rels = serde_json::Map::new();
    let mut gen = LabelGen::starting_after(l.query.max_iota());
    for (r, ty) in &l.schema.rels {
        let Some(v) = l.db.get(r) else { continue };
        let elem = ty.bag_elem().expect("relations are bags");
        let sv = shred_value_depth(v, elem, r, &mut gen, depth.unwrap_or(usize::MAX)).map_err(|e| l.diag(e))?;
        text.push_str(&format!("{r}^F = {}\n", sv.flat));
        let mut dicts = serde_json::Map::new();
        for (p, d) in sv.ctx.leaves() {
            text.push_str(&format!("{r}^G{} = {d}\n", render_path(&p)));
            dicts.insert(format!("ctx{}", render_path(&p)), json::dict(d));
        }
        rels.insert(r.to_string(), json!({ "flat": json::bag(&sv.flat), "ctx": dicts }));
    }
    Ok(Output::ok(text.trim_end().to_string(), json!({ "query": comps, "relations": rels })))
}

fn load_state(path: &Path) -> Result<MaterializedState, Diag> {
    let src = read(path)?;
    MaterializedState::import(&src).map_err(|e| Diag::from_core(&e, path, &src))
}

fn ivm_cmd(action: &IvmAction) -> Result<Output, Diag> {
    match action {
        IvmAction::Init { q, state, mode } => {
            let l = load(q)?;
            let plan = compile(&l.query, &l.schema, *mode).map_err(|e| l.diag(e))?;
            let st = MaterializedState::initialize(Arc::new(plan), &l.db).map_err(|e| l.diag(e))?;
            write(state, &st.export())?;
            let touched = st.stats().init_touched;
            let text = format!("initialized {} ({mode} mode, {} auxiliary views, {touched} tuples touched)", state.display(), st.plan().aux.len());
            Ok(Output::ok(text, json!({ "state": state.display().to_string(), "mode": mode.to_string(), "aux": st.plan().aux.len(), "touched": touched })))
        }
        IvmAction::Apply { state, updates } => {
            let mut st = load_state(state)?;
            let mut lines = Vec::new();
            let mut reports = Vec::new();
            for u in updates {
                let src = read(u)?;
                let decls = parse_db(&src).map_err(|e| Diag::from_core(&e, u, &src))?;
                for d in decls {
                    let expected = st.plan().schema.rels.get(&d.name).cloned();
                    if expected.as_ref() != Some(&d.ty) {
                        let e = nrc_core::Error::TypeMismatch {
                            context: format!("update of `{}`", d.name),
                            expected: expected.map_or("a relation of the view".into(), |t| t.to_string()),
                            found: d.ty.to_string(),
                        };
                        return Err(Diag::from_core(&e, u, &src));
                    }
                    let r = st.apply_update(&d.name, &d.value).map_err(|e| Diag::from_core(&e, u, &src))?;
                    lines.push(format!(
                        "{}: delta {} view {} init {} aux {} base {} new-labels {} total {}",
                        d.name, r.delta_eval, r.view_update, r.label_init, r.aux_update, r.base_update, r.new_labels, r.total()
                    ));
                    reports.push(json!({
                        "relation": d.name.to_string(), "delta_eval": r.delta_eval, "view_update": r.view_update,
                        "label_init": r.label_init, "aux_update": r.aux_update, "base_update": r.base_update,
                        "new_labels": r.new_labels, "total": r.total(),
                    }));
                }
            }
            write(state, &st.export())?;
            Ok(Output::ok(lines.join("\n"), json!({ "updates": reports })))
        }
        IvmAction::Read { state } => {
            let st = load_state(state)?;
            let v = st.read_view().map_err(|e| Diag::new(e.code(), e.to_string()))?;
            Ok(Output::ok(v.to_string(), json!({ "value": json::bag(&v) })))
        }
        IvmAction::Stats { state } => {
            let st = load_state(state)?;
            let s = st.stats();
            let text = format!(
                "mode {}\nupdates {}\ninit-touched {}\ntouched {}\naux-views {}\nview-rows {}",
                st.plan().mode,
                s.updates,
                s.init_touched,
                s.touched,
                st.plan().aux.len(),
                st.flat_view().len()
            );
            Ok(Output::ok(
                text,
                json!({ "mode": st.plan().mode.to_string(), "updates": s.updates, "init_touched": s.init_touched,
                        "touched": s.touched, "aux_views": st.plan().aux.len(), "view_rows": st.flat_view().len() }),
            ))
        }
    }
}

fn write_counterexample(dir: &Path, cx: &Counterexample) -> Result<(), Diag> {
    fs::create_dir_all(dir).map_err(|e| Diag::io(dir, e))?;
    write(&dir.join("property"), &format!("{}\n", cx.property))?;
    write(&dir.join("query.nrc"), &format!("{}\n", cx.query))?;
    write(&dir.join("db.nrc"), &cx.db_text())?;
    if let Some(u) = cx.update_text() {
        write(&dir.join("update.nrc"), &u)?;
    }
    write(&dir.join("reason.txt"), &format!("{}\n", cx.reason))
}

fn fuzz_cmd(seed: u64, cases: u64, mode: &str, out: Option<&Path>) -> Result<Output, Diag> {
    let props: Vec<Property> = if mode == "all" {
        Property::ALL.to_vec()
    } else {
        mode.split(',').map(|m| m.trim().parse::<Property>()).collect::<Result<_, _>>().map_err(|e| {
            let names: Vec<String> = Property::ALL.iter().map(|p| p.to_string()).collect();
            Diag::new("bad-mode", format!("{e}; expected `all` or one of {}", names.join(", ")))
        })?
    };
    let cfg = GenConfig::with_seed(seed);
    let mut lines = Vec::new();
    let mut per = serde_json::Map::new();
    let mut all = Vec::new();
    for p in &props {
        let report = fuzz(&cfg, &[*p], cases);
        lines.push(format!("{p}: {} cases, {} failures", report.cases, report.failures.len()));
        per.insert(p.to_string(), json!({ "cases": report.cases, "failures": report.failures.len() }));
        all.extend(report.failures);
    }
    let mut written = Vec::new();
    if let Some(dir) = out {
        for (i, cx) in all.iter().enumerate() {
            let d = dir.join(format!("{}-{i}", cx.property));
            write_counterexample(&d, cx)?;
            lines.push(format!("wrote {}", d.display()));
            written.push(d.display().to_string());
        }
    }
    for cx in all.iter().take(3) {
        lines.push(format!("---\n{cx}"));
    }
    Ok(Output {
        text: lines.join("\n"),
        json: json!({ "seed": seed, "properties": per, "counterexamples": written }),
        failed: !all.is_empty(),
    })
}

fn oracle_check_cmd(dir: &Path) -> Result<Output, Diag> {
    let pfile = dir.join("property");
    let psrc = read(&pfile)?;
    let property: Property =
        psrc.trim().parse().map_err(|e: nrc_core::Error| Diag { file: Some(pfile.clone()), ..Diag::new("bad-mode", e.to_string()) })?;
    let qpath = dir.join("query.nrc");
    let q = QueryArgs { query: qpath, db: vec![dir.join("db.nrc")] };
    let l = load(&q)?;
    let upath = dir.join("update.nrc");
    let update = if upath.exists() {
        let src = read(&upath)?;
        let mut decls = parse_db(&src).map_err(|e| Diag::from_core(&e, &upath, &src))?;
        if decls.len() != 1 {
            return Err(Diag { file: Some(upath), ..Diag::new("bad-update", "an update file declares exactly one relation") });
        }
        let d = decls.remove(0);
        Some((d.name, d.value))
    } else {
        None
    };
    let cx = Counterexample { property, query: l.query, schema: l.schema, db: l.db, update, reason: String::new() };
    match cx.recheck() {
        Ok(()) => Ok(Output::ok(format!("{property}: passes"), json!({ "property": property.to_string(), "reproduced": false }))),
        Err(reason) => Ok(Output {
            text: format!("{property}: failure reproduced\n{reason}"),
            json: json!({ "property": property.to_string(), "reproduced": true, "reason": reason }),
            failed: true,
        }),
    }
}

fn run(cli: &Cli) -> Result<Output, Diag> {
    match &cli.command {
        Command::Typecheck { q, fragment } => typecheck_cmd(q, *fragment),
        Command::Eval { q } => eval_cmd(q),
        Command::Delta { q, rel, order, shredded } => delta_cmd(q, rel, *order, *shredded),
        Command::Degree { q, shredded } => degree_cmd(q, *shredded),
        Command::Cost { q, sizes, permissive } => cost_cmd(q, sizes, *permissive),
        Command::Shred { q, depth } => shred_cmd(q, *depth),
        Command::Ivm { action } => ivm_cmd(action),
        Command::Fuzz { seed, cases, mode, out } => fuzz_cmd(*seed, *cases, mode, out.as_deref()),
        Command::OracleCheck { dir } => oracle_check_cmd(dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            if cli.json {
                println!("{}", out.json);
            } else if !out.text.is_empty() {
                println!("{}", out.text);
            }
            if out.failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(d) => {
            if cli.json {
                eprintln!("{}", d.to_json());
            } else {
                eprint!("{d}");
            }
            ExitCode::from(1)
        }
    }
}
