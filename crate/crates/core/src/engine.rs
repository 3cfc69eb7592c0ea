//! Incremental maintenance of shredded views under update streams.
//!
//! A query is compiled once into a [`MaintenancePlan`]: its shredded flat
//! and context queries together with their first-order deltas for every
//! relation. In [`IvmMode::Recursive`] every closed subexpression of a delta
//! that reads the input but not the update is cached as an auxiliary view
//! and maintained by its own deltas, which realizes the higher-order delta
//! stack.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::delta::{delta, delta_stack, DeltaStack};
use crate::dict::DictVal;
use crate::error::{Error, Result};
use crate::eval::{eval_in, nested_db, Counter, Db, Env, RelKey};
use crate::expr::{alpha_normalize, free_relations, is_input_independent, name, Expr, Name, RelName, Schema};
use crate::scalar::Multiplicity;
use crate::shred::{check_consistency, check_update_consistency, nest_value, shred_query, shred_value};
use crate::shred::{LabelGen, ShreddedQuery, ShreddedValue};
use crate::syntax::{parse_query, parse_type, parse_value};
use crate::typecheck::{typecheck, Mode};
use crate::types::{render_path, shred_type, CtxPath, CtxStep, CtxTree, SchemaType};
use crate::value::{Bag, Label, Value};

/// How deltas are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum IvmMode {
    /// First-order deltas evaluated directly against the stored state.
    Classic,
    /// First-order deltas over cached auxiliary views, each maintained by
    /// its own deltas.
    #[default]
    Recursive,
}

impl fmt::Display for IvmMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IvmMode::Classic => "classic",
            IvmMode::Recursive => "recursive",
        })
    }
}

impl FromStr for IvmMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classic" => Ok(IvmMode::Classic),
            "recursive" => Ok(IvmMode::Recursive),
            _ => Err(Error::State(format!("unknown mode `{s}`"))),
        }
    }
}

/// A maintained query together with its delta for each relation it reads.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Maintained {
    pub query: Expr,
    pub deltas: BTreeMap<Name, Expr>,
}

/// A cached subexpression of some delta.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuxView {
    pub name: Name,
    pub ty: SchemaType,
    pub view: Maintained,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaintenancePlan {
    pub original: Expr,
    pub schema: Schema,
    pub mode: IvmMode,
    pub shredded: ShreddedQuery,
    pub flat: Maintained,
    pub ctx: CtxTree<Maintained>,
    pub aux: Vec<AuxView>,
}

impl MaintenancePlan {
    /// Every maintained component with a display name.
    pub fn components(&self) -> Vec<(String, &Maintained)> {
        let mut out = vec![("flat".to_string(), &self.flat)];
        for (p, m) in self.ctx.leaves() {
            out.push((format!("ctx{}", render_path(&p)), m));
        }
        for a in &self.aux {
            out.push((a.name.to_string(), &a.view));
        }
        out
    }
}

impl MaintenancePlan {
    /// Full higher-order delta stacks of every shredded component, per
    /// relation. Their size can grow exponentially with the degree, so
    /// they are built on request only.
    pub fn delta_stacks(&self) -> Result<Vec<(String, DeltaStack)>> {
        let mut out = Vec::new();
        for (label, q) in self.shredded.components() {
            let label = label.map_or("flat".to_string(), |p| format!("ctx{}", render_path(&p)));
            for r in free_relations(q) {
                out.push((label.clone(), delta_stack(q, &r, &self.schema)?));
            }
        }
        Ok(out)
    }
}

impl fmt::Display for MaintenancePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode {}", self.mode)?;
        for (label, m) in self.components() {
            writeln!(f, "{label} = {}", m.query)?;
            for (r, d) in &m.deltas {
                writeln!(f, "  delta {r}: {d}")?;
            }
        }
        Ok(())
    }
}

/// Nesting bound on auxiliary views; unreachable for well-typed queries
/// since every cached view is a proper subterm of the query it came from.
const MAX_AUX: usize = 4096;

struct AuxRegistry {
    views: Vec<AuxView>,
    schema: Schema,
}

impl AuxRegistry {
    fn extract(&mut self, e: &Expr) -> Result<Expr> {
        if self.is_candidate(e) {
            return self.register(e);
        }
        let mut err = None;
        let out = e.map_children(&mut |c| match self.extract(c) {
            Ok(x) => x,
            Err(x) => {
                err.get_or_insert(x);
                c.clone()
            }
        });
        err.map_or(Ok(out), Err)
    }

    fn is_candidate(&self, e: &Expr) -> bool {
        !matches!(e, Expr::Rel(_) | Expr::DeltaRel(..) | Expr::Empty(_) | Expr::DictEmpty(_))
            && !e.mentions_delta()
            && !is_input_independent(e)
            && e.free_for_vars().is_empty()
            && e.free_let_vars().is_empty()
            && typecheck(e, &self.schema, Mode::Nrc).is_ok_and(|t| t.bag_elem().is_some())
    }

    fn register(&mut self, e: &Expr) -> Result<Expr> {
        let canon = alpha_normalize(e);
        if let Some(a) = self.views.iter().find(|a| alpha_normalize(&a.view.query) == canon) {
            return Ok(Expr::Rel(RelName::whole(&a.name)));
        }
        if self.views.len() >= MAX_AUX {
            return Err(Error::State("too many auxiliary views".into()));
        }
        let ty = typecheck(e, &self.schema, Mode::Nrc)?;
        let n = name(&format!("_V{}", self.views.len() + 1));
        self.schema.insert(n.clone(), ty.clone());
        self.views.push(AuxView { name: n.clone(), ty, view: Maintained { query: e.clone(), deltas: BTreeMap::new() } });
        Ok(Expr::Rel(RelName::whole(&n)))
    }
}

fn first_order(query: &Expr, schema: &Schema, reg: Option<&mut AuxRegistry>) -> Result<Maintained> {
    let mut deltas = BTreeMap::new();
    let mut reg = reg;
    for r in free_relations(query) {
        let d = delta(query, &r, 1, reg.as_ref().map_or(schema, |g| &g.schema))?;
        let d = match reg.as_deref_mut() {
            Some(g) => g.extract(&d)?,
            None => d,
        };
        deltas.insert(r, d);
    }
    Ok(Maintained { query: query.clone(), deltas })
}

/// Compiles a query over nested relations into a maintenance plan.
pub fn compile(e: &Expr, schema: &Schema, mode: IvmMode) -> Result<MaintenancePlan> {
    typecheck(e, schema, Mode::Nrc)?;
    let shredded = shred_query(e, schema)?;
    let mut reg = AuxRegistry { views: Vec::new(), schema: schema.clone() };
    let recursive = mode == IvmMode::Recursive;
    let flat = first_order(&shredded.flat, schema, recursive.then_some(&mut reg))?;
    let ctx = shredded.ctx.try_map(&mut |_, q| first_order(q, schema, recursive.then_some(&mut reg)))?;
    let mut done = 0;
    while done < reg.views.len() {
        let q = reg.views[done].view.query.clone();
        let m = first_order(&q, schema, Some(&mut reg))?;
        reg.views[done].view = m;
        done += 1;
    }
    Ok(MaintenancePlan { original: e.clone(), schema: schema.clone(), mode, shredded, flat, ctx, aux: reg.views })
}

/// Tuples touched by one update, per phase.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UpdateReport {
    pub relation: Option<Name>,
    /// Evaluating the delta queries.
    pub delta_eval: u64,
    /// Applying view changes, including probing maintained labels.
    pub view_update: u64,
    /// Initializing definitions of labels new to the views.
    pub label_init: u64,
    pub aux_update: u64,
    pub base_update: u64,
    pub new_labels: u64,
}

impl UpdateReport {
    pub fn total(&self) -> u64 {
        self.delta_eval + self.view_update + self.label_init + self.aux_update + self.base_update
    }
}

/// Cumulative counters of a state.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub updates: u64,
    pub init_touched: u64,
    pub touched: u64,
    pub last: Option<UpdateReport>,
}

/// Materialized base relations, views and auxiliary views of a plan.
#[derive(Clone, Debug)]
pub struct MaterializedState<M = i64> {
    plan: Arc<MaintenancePlan>,
    gen: LabelGen<M>,
    base: BTreeMap<Name, ShreddedValue<M>>,
    flat: Bag<M>,
    dicts: CtxTree<BTreeMap<Label<M>, Bag<M>>>,
    aux: BTreeMap<Name, Bag<M>>,
    stats: Stats,
}

fn labels_in<M: Multiplicity>(x: &Value<M>, ty: &SchemaType, path: &mut CtxPath, out: &mut Vec<(CtxPath, Label<M>)>) {
    match (ty, x) {
        (SchemaType::Prod(a, b), Value::Pair(p)) => {
            path.push(CtxStep::Fst);
            labels_in(&p.0, a, path, out);
            path.pop();
            path.push(CtxStep::Snd);
            labels_in(&p.1, b, path, out);
            path.pop();
        }
        (SchemaType::Bag(_), Value::Label(l)) => out.push((path.clone(), (**l).clone())),
        _ => {}
    }
}

/// Element type of the bags stored at a context position.
fn elem_at<'t>(elem: &'t SchemaType, path: &[CtxStep]) -> Option<&'t SchemaType> {
    let mut t = elem;
    for s in path {
        t = match (s, t) {
            (CtxStep::Fst, SchemaType::Prod(a, _)) => a,
            (CtxStep::Snd, SchemaType::Prod(_, b)) => b,
            (CtxStep::Inner, SchemaType::Bag(c)) => c,
            _ => return None,
        };
    }
    t.bag_elem()
}

fn def_labels<M: Multiplicity>(elem: &SchemaType, p: &[CtxStep], def: &Bag<M>, out: &mut Vec<(CtxPath, Label<M>)>) {
    if let Some(c) = elem_at(elem, p) {
        let mut path = p.to_vec();
        path.push(CtxStep::Inner);
        for (y, _) in def.iter() {
            labels_in(y, c, &mut path, out);
        }
    }
}

fn run<M: Multiplicity>(e: &Expr, db: &Arc<Db<M>>, counter: &Counter) -> Result<Value<M>> {
    eval_in(e, &mut Env::new(), db, counter)
}

impl<M: Multiplicity> MaterializedState<M> {
    /// Shreds the database and materializes every view.
    pub fn initialize(plan: Arc<MaintenancePlan>, db: &BTreeMap<Name, Bag<M>>) -> Result<Self> {
        for r in db.keys() {
            if plan.schema.get(r).is_none() {
                return Err(Error::UnknownRelation(r.to_string()));
            }
        }
        let max_iota = plan.original.max_iota();
        let mut gen = LabelGen::starting_after(max_iota);
        let mut base = BTreeMap::new();
        for (r, ty) in &plan.schema.rels {
            let elem = ty.bag_elem().ok_or_else(|| Error::mismatch("relation", "a bag type", ty))?;
            let sv = match db.get(r) {
                Some(v) => {
                    if !Value::Bag(v.clone()).has_type(ty) {
                        return Err(Error::mismatch(format!("relation {r}"), ty, v));
                    }
                    shred_value(v, elem, r, &mut gen)?
                }
                None => ShreddedValue::empty(elem),
            };
            base.insert(r.clone(), sv);
        }
        let dicts = shred_type(&plan.shredded.elem).ctx.map(&mut |_, _| BTreeMap::new());
        let mut state =
            MaterializedState { plan, gen, base, flat: Bag::empty(), dicts, aux: BTreeMap::new(), stats: Stats::default() };
        let counter = Counter::default();
        let db0 = state.db(None);
        for a in &state.plan.aux {
            let v = run(&a.view.query, &db0, &counter)?.into_bag("auxiliary view")?;
            state.aux.insert(a.name.clone(), v);
        }
        let db0 = state.db(None);
        state.flat = run(&state.plan.flat.query, &db0, &counter)?.into_bag("flat view")?;
        let mut seeds = Vec::new();
        for (x, _) in state.flat.iter() {
            labels_in(x, &state.plan.shredded.elem, &mut Vec::new(), &mut seeds);
        }
        state.extend_domain(seeds, &db0, &counter)?;
        state.stats.init_touched = counter.get();
        Ok(state)
    }

    pub fn plan(&self) -> &MaintenancePlan {
        &self.plan
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    pub fn flat_view(&self) -> &Bag<M> {
        &self.flat
    }

    /// Materialized definitions of one context position.
    pub fn dict_view(&self, path: &[CtxStep]) -> Option<&BTreeMap<Label<M>, Bag<M>>> {
        self.dicts.leaf(path)
    }

    pub fn aux_view(&self, n: &str) -> Option<&Bag<M>> {
        self.aux.get(n)
    }

    pub fn base(&self, rel: &str) -> Option<&ShreddedValue<M>> {
        self.base.get(rel)
    }

    /// The materialized view as a shredded value.
    pub fn view(&self) -> ShreddedValue<M> {
        ShreddedValue {
            flat: self.flat.clone(),
            ctx: self.dicts.map(&mut |_, d| Arc::new(DictVal::Mat(Arc::new(d.clone())))),
        }
    }

    fn db(&self, update: Option<(&Name, &ShreddedValue<M>)>) -> Arc<Db<M>> {
        let mut db = Db::new();
        for (r, sv) in &self.base {
            db.extend(sv.db_entries(r, 0));
        }
        for (n, v) in &self.aux {
            db.insert(RelKey::base(RelName::whole(n)), Value::Bag(v.clone()));
        }
        if let Some((r, sv)) = update {
            db.extend(sv.db_entries(r, 1));
        }
        Arc::new(db)
    }

    /// Adds definitions for labels not yet maintained, following the labels
    /// their definitions reference. Returns the number of labels added.
    fn extend_domain(&mut self, seeds: Vec<(CtxPath, Label<M>)>, db: &Arc<Db<M>>, counter: &Counter) -> Result<u64> {
        let mut work = seeds;
        let mut defs: BTreeMap<CtxPath, Arc<DictVal<M>>> = BTreeMap::new();
        let mut added = 0;
        while let Some((p, l)) = work.pop() {
            let known = self.dicts.leaf(&p).ok_or_else(|| Error::State(format!("no context at {}", render_path(&p))))?;
            if known.contains_key(&l) {
                continue;
            }
            let d = match defs.get(&p) {
                Some(d) => d.clone(),
                None => {
                    let q = self.plan.ctx.leaf(&p).expect("plan and view contexts agree");
                    let d = run(&q.query, db, counter)?.into_dict("context view")?;
                    defs.insert(p.clone(), d.clone());
                    d
                }
            };
            if !d.defines(&l) {
                return Err(Error::UnboundLabel(l.to_string()));
            }
            let def = d.lookup(&l, counter)?;
            def_labels(&self.plan.shredded.elem, &p, &def, &mut work);
            self.dicts.leaf_mut(&p).expect("checked above").insert(l, def);
            added += 1;
        }
        Ok(added)
    }

    /// Applies a nested update to one relation and maintains all views.
    pub fn apply_update(&mut self, rel: &str, update: &Bag<M>) -> Result<UpdateReport> {
        let plan = self.plan.clone();
        let rel = name(rel);
        let ty = plan.schema.get(&rel).ok_or_else(|| Error::UnknownRelation(rel.to_string()))?;
        let elem = ty.bag_elem().ok_or_else(|| Error::mismatch("relation", "a bag type", ty))?;
        if !Value::Bag(update.clone()).has_type(ty) {
            return Err(Error::mismatch(format!("update of {rel}"), ty, update));
        }
        let mut report = UpdateReport { relation: Some(rel.clone()), ..UpdateReport::default() };
        self.stats.updates += 1;
        if update.is_empty() {
            self.stats.last = Some(report.clone());
            return Ok(report);
        }
        let upd = shred_value(update, elem, &rel, &mut self.gen)?;
        let base = &self.base[&rel];
        let check = check_update_consistency(&upd, base, elem);
        if !check.ok() {
            return Err(Error::InconsistentUpdate(check.trail.join("; ")));
        }

        let counter = Counter::default();
        let db = self.db(Some((&rel, &upd)));
        let dflat = match plan.flat.deltas.get(&rel) {
            Some(d) => run(d, &db, &counter)?.into_bag("flat delta")?,
            None => Bag::empty(),
        };
        let mut dctx = Vec::new();
        for (p, m) in plan.ctx.leaves() {
            if let Some(d) = m.deltas.get(&rel) {
                dctx.push((p, run(d, &db, &counter)?.into_dict("context delta")?));
            }
        }
        let mut daux = Vec::new();
        for a in &plan.aux {
            if let Some(d) = a.view.deltas.get(&rel) {
                daux.push((a.name.clone(), run(d, &db, &counter)?.into_bag("auxiliary delta")?));
            }
        }
        report.delta_eval = counter.take();

        let mut seeds = Vec::new();
        for (p, dd) in &dctx {
            if dd.is_trivially_empty() {
                continue;
            }
            let dict = self.dicts.leaf_mut(p).expect("plan and view contexts agree");
            for (l, def) in dict.iter_mut() {
                counter.bump(1);
                if !dd.defines(l) {
                    continue;
                }
                let change = dd.lookup(l, &counter)?;
                if !change.is_empty() {
                    def.add_assign(&change)?;
                    def_labels(&plan.shredded.elem, p, &change, &mut seeds);
                }
            }
        }
        counter.bump(dflat.len() as u64);
        for (x, _) in dflat.iter() {
            labels_in(x, &plan.shredded.elem, &mut Vec::new(), &mut seeds);
        }
        self.flat.add_assign(&dflat)?;
        report.view_update = counter.take();

        for (n, d) in daux {
            counter.bump(d.len() as u64);
            self.aux.get_mut(&n).expect("aux views are initialized").add_assign(&d)?;
        }
        report.aux_update = counter.take();

        let base = self.base.get_mut(&rel).expect("every relation has a base");
        base.flat.add_assign(&upd.flat)?;
        let merged = base
            .ctx
            .zip_with(&upd.ctx, &mut |b, u| DictVal::label_union(b, u))
            .ok_or_else(|| Error::InconsistentUpdate("shape mismatch".into()))?;
        base.ctx = merged.try_map(&mut |_, r| r.clone())?;
        report.base_update = update.len() as u64;

        let db = self.db(None);
        report.new_labels = self.extend_domain(seeds, &db, &counter)?;
        report.label_init = counter.take();

        self.stats.touched += report.total();
        self.stats.last = Some(report.clone());
        Ok(report)
    }

    /// Applies updates to several relations, in schema order.
    pub fn apply_batch(&mut self, updates: &BTreeMap<Name, Bag<M>>) -> Result<Vec<UpdateReport>> {
        let order: Vec<Name> = self.plan.schema.rels.keys().filter(|r| updates.contains_key(*r)).cloned().collect();
        for r in updates.keys() {
            if !order.contains(r) {
                return Err(Error::UnknownRelation(r.to_string()));
            }
        }
        order.iter().map(|r| self.apply_update(r, &updates[r])).collect()
    }

    /// The view in nested form.
    pub fn read_view(&self) -> Result<Bag<M>> {
        let v = self.view();
        nest_value(&v.flat, &v.ctx, &self.plan.shredded.elem, &Counter::default())
    }

    /// The base relations in nested form.
    pub fn nested_base(&self) -> Result<BTreeMap<Name, Bag<M>>> {
        let mut out = BTreeMap::new();
        for (r, sv) in &self.base {
            let ty = &self.plan.schema.rels[r];
            let elem = ty.bag_elem().expect("relations are bags");
            out.insert(r.clone(), nest_value(&sv.flat, &sv.ctx, elem, &Counter::default())?);
        }
        Ok(out)
    }

    /// Recomputes every stored view from the current base and compares.
    pub fn verify(&self) -> Result<()> {
        let counter = Counter::default();
        let base_db = self.db(None);
        let mut fresh_aux = BTreeMap::new();
        for a in &self.plan.aux {
            let v = run(&a.view.query, &base_db, &counter)?.into_bag("auxiliary view")?;
            if Some(&v) != self.aux.get(&a.name) {
                return Err(Error::State(format!("auxiliary view {} diverged", a.name)));
            }
            fresh_aux.insert(a.name.clone(), v);
        }
        let flat = run(&self.plan.flat.query, &base_db, &counter)?.into_bag("flat view")?;
        if flat != self.flat {
            return Err(Error::State(format!("flat view diverged: stored {}, recomputed {flat}", self.flat)));
        }
        for (p, m) in self.plan.ctx.leaves() {
            let d = run(&m.query, &base_db, &counter)?.into_dict("context view")?;
            for (l, def) in self.dicts.leaf(&p).expect("plan and view contexts agree") {
                let want = d.lookup(l, &counter)?;
                if &want != def {
                    return Err(Error::State(format!(
                        "definition of {l} at ctx{} diverged: stored {def}, recomputed {want}",
                        render_path(&p)
                    )));
                }
            }
        }
        let report = check_consistency(&self.view(), &self.plan.shredded.elem);
        if !report.ok() {
            return Err(Error::State(report.trail.join("; ")));
        }
        for (r, sv) in &self.base {
            let report = check_consistency(sv, self.plan.schema.rels[r].bag_elem().expect("relations are bags"));
            if !report.ok() {
                return Err(Error::State(format!("base {r}: {}", report.trail.join("; "))));
            }
        }
        Ok(())
    }
}

/// Evaluates a nested query directly, counting touched tuples.
pub fn recompute_oracle<M: Multiplicity>(e: &Expr, db: &BTreeMap<Name, Bag<M>>) -> Result<(Bag<M>, u64)> {
    let db = Arc::new(nested_db(db.iter().map(|(r, b)| (r.clone(), b.clone()))));
    let counter = Counter::default();
    let v = run(e, &db, &counter)?.into_bag("query result")?;
    Ok((v, counter.get()))
}

fn parse_path(s: &str) -> Result<CtxPath> {
    s.split('.')
        .skip(1)
        .map(|step| match step {
            "1" => Ok(CtxStep::Fst),
            "2" => Ok(CtxStep::Snd),
            "i" => Ok(CtxStep::Inner),
            _ => Err(Error::State(format!("bad context path `{s}`"))),
        })
        .collect()
}

fn section_value(text: &str, what: &str) -> Result<Value> {
    parse_value(text).map_err(|e| Error::State(format!("{what}: {e}")))
}

fn mat_entries(v: Value, what: &str) -> Result<BTreeMap<Label, Bag>> {
    let d = v.into_dict(what)?;
    d.as_mat().cloned().ok_or_else(|| Error::State(format!("{what} is not materialized")))
}

impl MaterializedState<i64> {
    /// Renders the state in a line-oriented text format.
    pub fn export(&self) -> String {
        let mut out = String::new();
        let mut line = |s: String| {
            out.push_str(&s);
            out.push('\n');
        };
        line("%query".into());
        line(self.plan.original.to_string());
        line("%schema".into());
        for (r, ty) in &self.plan.schema.rels {
            line(format!("{r} : {ty}"));
        }
        line("%mode".into());
        line(self.plan.mode.to_string());
        line("%next-label".into());
        line(self.gen.next_index().to_string());
        for (r, sv) in &self.base {
            line(format!("%base {r}"));
            line(sv.flat.to_string());
            for (p, d) in sv.ctx.leaves() {
                line(format!("%base-dict {r} {}", render_path(&p)));
                line(d.to_string());
            }
        }
        line("%view".into());
        line(self.flat.to_string());
        for (p, d) in self.dicts.leaves() {
            line(format!("%view-dict {}", render_path(&p)));
            line(DictVal::Mat(Arc::new(d.clone())).to_string());
        }
        for (n, v) in &self.aux {
            line(format!("%aux {n}"));
            line(v.to_string());
        }
        line("%stats".into());
        line(format!("updates {}", self.stats.updates));
        line(format!("init-touched {}", self.stats.init_touched));
        line(format!("touched {}", self.stats.touched));
        out
    }

    /// Reads a state written by [`MaterializedState::export`].
    pub fn import(text: &str) -> Result<Self> {
        let mut sections: Vec<(String, String)> = Vec::new();
        for l in text.lines() {
            if let Some(h) = l.strip_prefix('%') {
                sections.push((h.trim().to_string(), String::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                body.push_str(l);
                body.push('\n');
            } else if !l.trim().is_empty() {
                return Err(Error::State("content before the first section".into()));
            }
        }
        let get = |h: &str| {
            sections
                .iter()
                .find(|(k, _)| k == h)
                .map(|(_, b)| b.trim())
                .ok_or_else(|| Error::State(format!("missing section %{h}")))
        };
        let query = parse_query(get("query")?)?;
        let mut schema = Schema::new();
        for l in get("schema")?.lines().filter(|l| !l.trim().is_empty()) {
            let (r, t) = l.split_once(':').ok_or_else(|| Error::State(format!("bad schema line `{l}`")))?;
            schema.insert(name(r.trim()), parse_type(t.trim())?);
        }
        let mode: IvmMode = get("mode")?.parse()?;
        let next: u64 = get("next-label")?.parse().map_err(|_| Error::State("bad %next-label".into()))?;
        let plan = Arc::new(compile(&query, &schema, mode)?);

        let mut gen = LabelGen::starting_after(plan.original.max_iota());
        let mut base = BTreeMap::new();
        let mut dicts = shred_type(&plan.shredded.elem).ctx.map(&mut |_, _| BTreeMap::new());
        let mut flat = None;
        let mut aux = BTreeMap::new();
        let mut stats = Stats::default();
        for (h, body) in &sections {
            let mut words = h.split_whitespace();
            match words.next() {
                Some("base") => {
                    let r = name(words.next().ok_or_else(|| Error::State("%base needs a relation".into()))?);
                    let ty = schema.get(&r).ok_or_else(|| Error::UnknownRelation(r.to_string()))?;
                    let elem = ty.bag_elem().ok_or_else(|| Error::mismatch("relation", "a bag type", ty))?;
                    let f = section_value(body, "base")?.into_bag("base")?;
                    let mut sv = ShreddedValue::empty(elem);
                    sv.flat = f;
                    base.insert(r, sv);
                }
                Some("base-dict") => {
                    let r = name(words.next().unwrap_or_default());
                    let p = parse_path(words.next().unwrap_or_default())?;
                    let entries = mat_entries(section_value(body, "base dictionary")?, "base dictionary")?;
                    for (l, def) in &entries {
                        gen.register(&r, &p, l, def);
                    }
                    let sv: &mut ShreddedValue = base
                        .get_mut(&r)
                        .ok_or_else(|| Error::State(format!("%base-dict before %base {r}")))?;
                    *sv.ctx.leaf_mut(&p).ok_or_else(|| Error::State(format!("no context at {}", render_path(&p))))? =
                        Arc::new(DictVal::Mat(Arc::new(entries)));
                }
                Some("view") => flat = Some(section_value(body, "view")?.into_bag("view")?),
                Some("view-dict") => {
                    let p = parse_path(words.next().unwrap_or_default())?;
                    let entries = mat_entries(section_value(body, "view dictionary")?, "view dictionary")?;
                    *dicts.leaf_mut(&p).ok_or_else(|| Error::State(format!("no context at {}", render_path(&p))))? =
                        entries;
                }
                Some("aux") => {
                    let n = name(words.next().ok_or_else(|| Error::State("%aux needs a name".into()))?);
                    aux.insert(n, section_value(body, "aux")?.into_bag("aux")?);
                }
                Some("stats") => {
                    for l in body.lines() {
                        let mut kv = l.split_whitespace();
                        let (Some(k), Some(v)) = (kv.next(), kv.next()) else { continue };
                        let v: u64 = v.parse().map_err(|_| Error::State(format!("bad stats line `{l}`")))?;
                        match k {
                            "updates" => stats.updates = v,
                            "init-touched" => stats.init_touched = v,
                            "touched" => stats.touched = v,
                            _ => {}
                        }
                    }
                }
                _ => {}
            }
        }
        for (r, ty) in &schema.rels {
            if !base.contains_key(r) {
                base.insert(r.clone(), ShreddedValue::empty(ty.bag_elem().expect("relations are bags")));
            }
        }
        let names: BTreeSet<&Name> = plan.aux.iter().map(|a| &a.name).collect();
        if aux.keys().collect::<BTreeSet<_>>() != names {
            return Err(Error::State("auxiliary views do not match the plan".into()));
        }
        if gen.next_index() > next {
            return Err(Error::State("%next-label is below a stored label".into()));
        }
        gen.skip_to(next);
        let flat = flat.ok_or_else(|| Error::State("missing section %view".into()))?;
        Ok(MaterializedState { plan, gen, base, flat, dicts, aux, stats })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_type;

    fn bag(s: &str) -> Bag {
        parse_value(s).unwrap().into_bag("test").unwrap()
    }

    #[test]
    fn self_join_gets_an_aux_view() {
        let schema = Schema::new().with("R", parse_type("Bag(Bag(Base))").unwrap());
        let q = parse_query("flatten R * flatten R").unwrap();
        let plan = compile(&q, &schema, IvmMode::Recursive).unwrap();
        assert_eq!(plan.aux.len(), 1);
        let want = parse_query("for l in R^F union lookup(R^G, l)").unwrap();
        assert_eq!(alpha_normalize(&plan.aux[0].view.query), alpha_normalize(&want));
        let classic = compile(&q, &schema, IvmMode::Classic).unwrap();
        assert!(classic.aux.is_empty());
        for p in [plan, classic] {
            let mut st = MaterializedState::initialize(Arc::new(p), &[(name("R"), bag("{ { 1, 2 }, { 3 } }"))].into())
                .unwrap();
            st.apply_update("R", &bag("{ { 4 }, { 3 } : -1 }")).unwrap();
            st.verify().unwrap();
            let (want, _) = recompute_oracle(&q, &st.nested_base().unwrap()).unwrap();
            assert_eq!(st.read_view().unwrap(), want);
        }
    }

    #[test]
    fn export_round_trip() {
        let schema = Schema::new().with("R", parse_type("Bag(<Base, Bag(Base)>)").unwrap());
        let q = parse_query("for x in R union <x.1, sng(flatten x.2 + flatten x.2)>").unwrap();
        let plan = Arc::new(compile(&q, &schema, IvmMode::Recursive).unwrap());
        let mut st = MaterializedState::initialize(plan, &[(name("R"), bag("{ <1, { 2 }> }"))].into()).unwrap();
        st.apply_update("R", &bag("{ <5, { 6, 7 }> }")).unwrap();
        let text = st.export();
        let mut back = MaterializedState::import(&text).unwrap();
        assert_eq!(back.export(), text);
        back.apply_update("R", &bag("{ <8, { 6, 7 }> }")).unwrap();
        back.verify().unwrap();
    }
}
