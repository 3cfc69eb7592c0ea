//! Seeded random generators for schemas, values, queries and updates, and
//! the equivalence checks that the property suites run over them.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::{cost, is_incremental, size, CostEnv, CostVal};
use crate::delta::{degree_of, delta, delta_stack, DegreeOf};
use crate::dict::DictVal;
use crate::engine::{compile, recompute_oracle, IvmMode, MaterializedState};
use crate::error::{Error, Result};
use crate::eval::{eval, nested_db, Counter, Db, RelKey};
use crate::expr::{free_relations, name, CmpOp, Expr, Name, Pred, RelName, Schema, Term};
use crate::scalar::Multiplicity;
use crate::shred::{check_consistency, nest_value, shred_query, shred_value, LabelGen, ShreddedValue};
use crate::simplify::simplify;
use crate::typecheck::{typecheck, Mode, TypeCx};
use crate::types::{CtxPath, CtxStep, CtxTree, SchemaType};
use crate::value::{Atom, Bag, BagBuilder, Label, Value};

/// Which fragment generated queries belong to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum GenMode {
    /// Singleton bodies may read the input.
    Nrc,
    /// Every singleton body is input-independent.
    #[default]
    Inc,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    /// Bag nesting depth of relation types.
    pub max_type_depth: usize,
    pub max_expr_depth: usize,
    /// Base values are drawn from `0..atoms`.
    pub atoms: i64,
    pub max_mult: i64,
    pub neg_fraction: f64,
    pub mode: GenMode,
    pub relations: usize,
    pub max_bag_len: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            max_type_depth: 3,
            max_expr_depth: 6,
            atoms: 4,
            max_mult: 3,
            neg_fraction: 0.2,
            mode: GenMode::Inc,
            relations: 2,
            max_bag_len: 4,
        }
    }
}

impl GenConfig {
    pub fn with_seed(seed: u64) -> Self {
        GenConfig { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.max_type_depth >= 1
            && self.max_expr_depth >= 1
            && self.atoms >= 1
            && self.max_mult >= 1
            && self.relations >= 1
            && self.max_bag_len >= 1
            && (0.0..=1.0).contains(&self.neg_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::State(format!("invalid generator configuration {self:?}")))
        }
    }

    /// Independent generator for case `i`.
    pub fn case(&self, i: u64) -> Gen {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(i);
        Gen { cfg: self.clone(), rng }
    }
}

/// A deterministic generator.
pub struct Gen {
    pub cfg: GenConfig,
    rng: ChaCha8Rng,
}

fn rel_names(n: usize) -> Vec<Name> {
    const NAMES: [&str; 6] = ["R", "S", "T", "U", "V", "W"];
    (0..n).map(|i| if i < NAMES.len() { name(NAMES[i]) } else { name(&format!("R{i}")) }).collect()
}

impl Gen {
    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    /// A relation type `Bag(A)` of bag depth at most the configured bound.
    pub fn gen_type(&mut self) -> SchemaType {
        let depth = self.rng.gen_range(0..self.cfg.max_type_depth);
        SchemaType::bag(self.gen_elem(depth, 2))
    }

    fn gen_elem(&mut self, bags: usize, width: usize) -> SchemaType {
        let r = self.rng.gen_range(0..10);
        if r < 4 || (bags == 0 && width == 0) {
            SchemaType::Base
        } else if r < 7 && width > 0 {
            let a = self.gen_elem(bags, width - 1);
            let b = self.gen_elem(bags, width - 1);
            SchemaType::prod(a, b)
        } else if bags > 0 {
            SchemaType::bag(self.gen_elem(bags - 1, 1))
        } else {
            SchemaType::Base
        }
    }

    pub fn gen_schema(&mut self) -> Schema {
        let mut s = Schema::new();
        for r in rel_names(self.cfg.relations) {
            let t = self.gen_type();
            s.insert(r, t);
        }
        s
    }

    fn mult(&mut self) -> i64 {
        let m = self.rng.gen_range(1..=self.cfg.max_mult);
        if self.chance(self.cfg.neg_fraction) {
            -m
        } else {
            m
        }
    }

    /// A random value of type `ty`.
    pub fn gen_value(&mut self, ty: &SchemaType) -> Value {
        self.value_at(ty, 0)
    }

    fn value_at(&mut self, ty: &SchemaType, level: usize) -> Value {
        match ty {
            SchemaType::Unit => Value::Unit,
            SchemaType::Base => Value::int(self.rng.gen_range(0..self.cfg.atoms)),
            SchemaType::Prod(a, b) => Value::pair(self.value_at(a, level), self.value_at(b, level)),
            SchemaType::Bag(c) => {
                let cap = (self.cfg.max_bag_len >> level).max(1);
                let n = self.rng.gen_range(0..=cap);
                let mut out = BagBuilder::new();
                for _ in 0..n {
                    let x = self.value_at(c, level + 1);
                    let m = self.mult();
                    out.add(x, m).expect("small multiplicities");
                }
                Value::Bag(out.finish())
            }
            SchemaType::Label => Value::label(0, Value::Unit),
            SchemaType::Dict(_) => Value::Dict(Arc::new(DictVal::empty())),
        }
    }

    /// A relation instance with total multiplicity at least two, so that
    /// single-element updates are incremental.
    pub fn gen_relation(&mut self, ty: &SchemaType) -> Bag {
        let elem = ty.bag_elem().expect("relation types are bags");
        let mut b = self.gen_value(ty).into_bag("relation").expect("bag type");
        while b.card() < 2 {
            let x = self.value_at(elem, 1);
            b = b.add(&Bag::singleton(x)).expect("small multiplicities");
        }
        b
    }

    pub fn gen_db(&mut self, schema: &Schema) -> BTreeMap<Name, Bag> {
        schema.rels.iter().map(|(r, t)| (r.clone(), self.gen_relation(t))).collect()
    }

    /// A single-element update derived from an element of `base`: atoms are
    /// resampled and inner bags shrink to sub-bags, so its size is strictly
    /// below that of `base` whenever `base` has total multiplicity two or more.
    pub fn gen_update(&mut self, base: &Bag, ty: &SchemaType) -> Bag {
        let elem = ty.bag_elem().expect("relation types are bags");
        let items: Vec<&Value> = base.iter().map(|(x, _)| x).collect();
        let x = match items.choose(&mut self.rng) {
            Some(x) => self.shrink_value(x, elem),
            None => self.value_at(elem, 1),
        };
        let m = if self.chance(0.5) { 1 } else { -1 };
        Bag::from_entries([(x, m)]).expect("nonzero multiplicity")
    }

    fn shrink_value(&mut self, x: &Value, ty: &SchemaType) -> Value {
        match (ty, x) {
            (SchemaType::Base, _) => {
                if self.chance(0.5) {
                    Value::int(self.rng.gen_range(0..self.cfg.atoms))
                } else {
                    x.clone()
                }
            }
            (SchemaType::Prod(a, b), Value::Pair(p)) => Value::pair(self.shrink_value(&p.0, a), self.shrink_value(&p.1, b)),
            (SchemaType::Bag(c), Value::Bag(inner)) => {
                let mut out = BagBuilder::new();
                for (y, m) in inner.iter() {
                    if self.chance(0.3) {
                        continue;
                    }
                    let mag = self.rng.gen_range(1..=m.abs());
                    let sign = if self.chance(0.5) { 1 } else { -1 };
                    let y = self.shrink_value(y, c);
                    out.add(y, mag * sign).expect("small multiplicities");
                }
                let b = out.finish();
                Value::Bag(if b.card() > inner.card() { Bag::empty() } else { b })
            }
            _ => x.clone(),
        }
    }

    /// A closed query over `schema`, typechecking in the configured fragment.
    pub fn gen_query(&mut self, schema: &Schema) -> Expr {
        let mode = self.cfg.mode;
        let depth = self.cfg.max_expr_depth;
        let mut q = QueryGen { g: self, schema, fors: Vec::new(), lets: Vec::new(), next_var: 0, next_iota: 0, mode };
        let (e, _) = q.bag(None, depth, false);
        e
    }

    /// A query mentioning at least one relation, retrying a bounded number
    /// of times.
    pub fn gen_dependent_query(&mut self, schema: &Schema) -> Expr {
        let mut last = self.gen_query(schema);
        for _ in 0..32 {
            if !free_relations(&last).is_empty() {
                break;
            }
            last = self.gen_query(schema);
        }
        last
    }

    pub fn pick<'a, T>(&mut self, xs: &'a [T]) -> Option<&'a T> {
        xs.choose(&mut self.rng)
    }
}

struct QueryGen<'g, 's> {
    g: &'g mut Gen,
    schema: &'s Schema,
    fors: Vec<(Name, SchemaType)>,
    lets: Vec<(Name, SchemaType, bool)>,
    next_var: usize,
    next_iota: u64,
    mode: GenMode,
}

/// Projection paths of `ty` through products, paired with their types.
fn projections(ty: &SchemaType) -> Vec<(Vec<u8>, &SchemaType)> {
    let mut out = vec![(vec![], ty)];
    if let SchemaType::Prod(a, b) = ty {
        for (step, t) in [(1u8, a), (2u8, b)] {
            for (mut p, u) in projections(t) {
                p.insert(0, step);
                out.push((p, u));
            }
        }
    }
    out
}

impl QueryGen<'_, '_> {
    fn fresh(&mut self, prefix: &str) -> Name {
        self.next_var += 1;
        name(&format!("{prefix}{}", self.next_var))
    }

    fn leaves(&mut self, want: Option<&SchemaType>, indep: bool) -> Vec<(Expr, SchemaType)> {
        let fits = |t: &SchemaType| want.is_none_or(|w| w == t);
        let mut out = Vec::new();
        if !indep {
            for (r, t) in &self.schema.rels {
                let e = t.bag_elem().expect("relation types are bags");
                if fits(e) {
                    out.push((Expr::rel(r), e.clone()));
                }
            }
        }
        for (x, t) in &self.fors {
            for (p, u) in projections(t) {
                if fits(u) {
                    out.push((Expr::SngVar(x.clone(), p), u.clone()));
                }
            }
        }
        for (x, t, dep) in &self.lets {
            if fits(t) && !(indep && *dep) {
                out.push((Expr::LetVar(x.clone()), t.clone()));
            }
        }
        if want.is_none_or(|w| *w == SchemaType::Unit) {
            if let Some(p) = self.pred() {
                out.push((Expr::Pred(p), SchemaType::Unit));
            }
        }
        out
    }

    fn base_terms(&self) -> Vec<Term> {
        let mut out = Vec::new();
        for (x, t) in &self.fors {
            for (p, u) in projections(t) {
                if *u == SchemaType::Base {
                    out.push(Term::Var(x.clone(), p));
                }
            }
        }
        out
    }

    fn pred(&mut self) -> Option<Pred> {
        let terms = self.base_terms();
        if terms.is_empty() {
            return None;
        }
        let cmp = |q: &mut Self| {
            let a = q.g.pick(&terms).expect("nonempty").clone();
            let b = if q.g.chance(0.5) {
                q.g.pick(&terms).expect("nonempty").clone()
            } else {
                Term::Const(Atom::Int(q.g.rng.gen_range(0..q.g.cfg.atoms)))
            };
            let op = *q.g.pick(&[CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le]).expect("nonempty");
            Pred::Cmp(op, a, b)
        };
        let p = cmp(self);
        Some(match self.g.rng.gen_range(0..6) {
            0 => Pred::And(Box::new(p), Box::new(cmp(self))),
            1 => Pred::Or(Box::new(p), Box::new(cmp(self))),
            _ => p,
        })
    }

    fn fallback(&mut self, want: Option<&SchemaType>) -> (Expr, SchemaType) {
        let t = want.cloned().unwrap_or(SchemaType::Base);
        (Expr::Empty(SchemaType::bag(t.clone())), t)
    }

    fn leaf(&mut self, want: Option<&SchemaType>, indep: bool) -> (Expr, SchemaType) {
        let cands = self.leaves(want, indep);
        match self.g.pick(&cands) {
            Some(c) if !self.g.chance(0.05) => c.clone(),
            _ => self.fallback(want),
        }
    }

    /// A bag-valued expression whose element type is `want` when given.
    fn bag(&mut self, want: Option<&SchemaType>, depth: usize, indep: bool) -> (Expr, SchemaType) {
        if depth == 0 {
            return self.leaf(want, indep);
        }
        let d = depth - 1;
        let b = Box::new;
        match self.g.rng.gen_range(0..20) {
            0..=4 => self.leaf(want, indep),
            5..=8 => {
                let (src, a) = self.bag(None, d, indep);
                let x = self.fresh("x");
                self.fors.push((x.clone(), a));
                let body = if self.g.chance(0.3) {
                    match self.pred() {
                        Some(p) => {
                            let (e, t) = self.bag(want, d, indep);
                            let v = self.fresh("_p");
                            (Expr::For(v, b(Expr::Pred(p)), b(e)), t)
                        }
                        None => self.bag(want, d, indep),
                    }
                } else {
                    self.bag(want, d, indep)
                };
                self.fors.pop();
                (Expr::For(x, b(src), b(body.0)), body.1)
            }
            9..=10 => {
                let (l, t) = self.bag(want, d, indep);
                let (r, _) = self.bag(Some(&t), d, indep);
                (Expr::Union(b(l), b(r)), t)
            }
            11..=12 => {
                let (wa, wb) = match want {
                    Some(SchemaType::Prod(a, c)) => (Some(a.as_ref().clone()), Some(c.as_ref().clone())),
                    Some(_) => return self.leaf(want, indep),
                    None => (None, None),
                };
                let (l, ta) = self.bag(wa.as_ref(), d, indep);
                let (r, tb) = self.bag(wb.as_ref(), d, indep);
                (Expr::Prod(b(l), b(r)), SchemaType::prod(ta, tb))
            }
            13 => {
                let inner = want.map(|w| SchemaType::bag(w.clone()));
                let (e, t) = self.bag(inner.as_ref(), d, indep);
                match t {
                    SchemaType::Bag(c) => (Expr::Flatten(b(e)), *c),
                    t => (e, t),
                }
            }
            14..=15 => {
                let inner = match want {
                    Some(SchemaType::Bag(c)) => Some(c.as_ref().clone()),
                    Some(_) => return self.leaf(want, indep),
                    None => None,
                };
                let body_indep = indep || self.mode == GenMode::Inc;
                // Indices follow textual order, as the parser assigns them.
                self.next_iota += 1;
                let iota = self.next_iota;
                let (e, t) = self.bag(inner.as_ref(), d, body_indep);
                (Expr::Sng(b(e), iota), SchemaType::bag(t))
            }
            16 => {
                let (e, t) = self.bag(want, d, indep);
                (Expr::Neg(b(e)), t)
            }
            _ => {
                let (bound, a) = self.bag(None, d, indep);
                let dep = !free_relations(&bound).is_empty()
                    || bound.free_let_vars().iter().any(|x| self.lets.iter().any(|(y, _, dep)| y == x && *dep));
                let x = self.fresh("X");
                self.lets.push((x.clone(), a, dep));
                let (body, t) = self.bag(want, d, indep);
                self.lets.pop();
                (Expr::Let(x, b(bound), b(body)), t)
            }
        }
    }
}

/// A failed check, with everything needed to reproduce it.
#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample {
    pub property: Property,
    pub query: Expr,
    pub schema: Schema,
    pub db: BTreeMap<Name, Bag>,
    pub update: Option<(Name, Bag)>,
    pub reason: String,
}

impl Counterexample {
    /// Database in the relation file format.
    pub fn db_text(&self) -> String {
        db_text(&self.schema, &self.db)
    }

    pub fn update_text(&self) -> Option<String> {
        self.update.as_ref().map(|(r, b)| format!("{r} : {}\n{b}\n", self.schema.rels[r]))
    }

    /// Reruns the check on the stored inputs.
    pub fn recheck(&self) -> Result<(), String> {
        check_property(self.property, &self.query, &self.schema, &self.db, self.update.as_ref())
    }
}

/// Renders a database as a sequence of `Name : Type` headers and values.
pub fn db_text(schema: &Schema, db: &BTreeMap<Name, Bag>) -> String {
    let mut out = String::new();
    for (r, t) in &schema.rels {
        let v = db.get(r).cloned().unwrap_or_default();
        out.push_str(&format!("{r} : {t}\n{v}\n"));
    }
    out
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "property: {}", self.property)?;
        writeln!(f, "reason: {}", self.reason)?;
        writeln!(f, "query: {}", self.query)?;
        write!(f, "{}", self.db_text())?;
        if let Some(u) = self.update_text() {
            write!(f, "update {u}")?;
        }
        Ok(())
    }
}

/// Properties checked by the fuzzer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Property {
    /// Delta of a nested query.
    Delta,
    /// Deltas of the flat and context queries of a shredded query.
    ShreddedDelta,
    /// Shredded evaluation agrees with nested evaluation.
    Shred,
    /// Each first-order delta lowers the degree by one.
    Degree,
    /// Deltas of incremental updates are cheaper than the query.
    Cost,
    /// Maintained views agree with recomputation over an update stream.
    Ivm,
}

impl Property {
    pub const ALL: [Property; 6] =
        [Property::Delta, Property::ShreddedDelta, Property::Shred, Property::Degree, Property::Cost, Property::Ivm];

    /// Fragment the property is stated for.
    pub fn mode(self) -> GenMode {
        match self {
            Property::Delta | Property::Degree | Property::Cost => GenMode::Inc,
            Property::ShreddedDelta | Property::Shred | Property::Ivm => GenMode::Nrc,
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Property::Delta => "delta",
            Property::ShreddedDelta => "shredded-delta",
            Property::Shred => "shred",
            Property::Degree => "degree",
            Property::Cost => "cost",
            Property::Ivm => "ivm",
        })
    }
}

impl std::str::FromStr for Property {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Property::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| Error::State(format!("unknown property `{s}`")))
    }
}

fn err(e: Error) -> String {
    format!("{} error: {e}", e.code())
}

fn with_update(db: &BTreeMap<Name, Bag>, rel: &Name, upd: &Bag) -> Result<BTreeMap<Name, Bag>, String> {
    let mut out = db.clone();
    let cur = out.get(rel).cloned().unwrap_or_default();
    out.insert(rel.clone(), cur.add(upd).map_err(err)?);
    Ok(out)
}

/// `h[R ⊎ ΔR] = h[R] ⊎ δ(h)[R, ΔR]` on a nested database.
pub fn check_delta_equiv(
    h: &Expr,
    schema: &Schema,
    db: &BTreeMap<Name, Bag>,
    rel: &Name,
    upd: &Bag,
) -> Result<(), String> {
    let d = delta(h, rel, 1, schema).map_err(err)?;
    let mut ndb = nested_db(db.iter().map(|(r, b)| (r.clone(), b.clone())));
    let old = eval(h, &Arc::new(ndb.clone())).map_err(err)?;
    ndb.insert(RelKey::delta(RelName::whole(rel), 1), Value::Bag(upd.clone()));
    let change = eval(&d, &Arc::new(ndb)).map_err(err)?;
    let new_db = with_update(db, rel, upd)?;
    let new = eval(h, &Arc::new(nested_db(new_db))).map_err(err)?;
    let want = old.as_bag().ok_or("result is not a bag")?.add(change.as_bag().ok_or("delta is not a bag")?);
    let want = want.map_err(err)?;
    if Value::Bag(want.clone()) == new {
        Ok(())
    } else {
        Err(format!("delta {d}: old ⊎ delta = {want}, recomputed {new}"))
    }
}

fn shredded_db(
    schema: &Schema,
    db: &BTreeMap<Name, Bag>,
    gen: &mut LabelGen,
) -> Result<BTreeMap<Name, ShreddedValue>, String> {
    let mut out = BTreeMap::new();
    for (r, t) in &schema.rels {
        let elem = t.bag_elem().ok_or("relation type is not a bag")?;
        let v = db.get(r).cloned().unwrap_or_default();
        out.insert(r.clone(), shred_value(&v, elem, r, gen).map_err(err)?);
    }
    Ok(out)
}

fn to_db(parts: &BTreeMap<Name, ShreddedValue>, update: Option<(&Name, &ShreddedValue)>) -> Arc<Db> {
    let mut db = Db::new();
    for (r, sv) in parts {
        db.extend(sv.db_entries(r, 0));
    }
    if let Some((r, sv)) = update {
        db.extend(sv.db_entries(r, 1));
    }
    Arc::new(db)
}

fn reachable(
    flat: &Bag,
    ctx: &CtxTree<Arc<DictVal>>,
    elem: &SchemaType,
    out: &mut BTreeMap<(CtxPath, Label), ()>,
) -> Result<(), String> {
    fn walk(
        x: &Value,
        ty: &SchemaType,
        ctx: &CtxTree<Arc<DictVal>>,
        path: &mut CtxPath,
        out: &mut BTreeMap<(CtxPath, Label), ()>,
    ) -> Result<(), String> {
        match (ty, ctx, x) {
            (SchemaType::Prod(a, b), CtxTree::Pair(ca, cb), Value::Pair(p)) => {
                path.push(CtxStep::Fst);
                walk(&p.0, a, ca, path, out)?;
                path.pop();
                path.push(CtxStep::Snd);
                walk(&p.1, b, cb, path, out)?;
                path.pop();
            }
            (SchemaType::Bag(c), CtxTree::Dict(d, inner), Value::Label(l)) => {
                if out.insert((path.clone(), (**l).clone()), ()).is_some() {
                    return Ok(());
                }
                let def = d.lookup(l, &Counter::default()).map_err(err)?;
                path.push(CtxStep::Inner);
                for (y, _) in def.iter() {
                    walk(y, c, inner, path, out)?;
                }
                path.pop();
            }
            _ => {}
        }
        Ok(())
    }
    for (x, _) in flat.iter() {
        walk(x, elem, ctx, &mut Vec::new(), out)?;
    }
    Ok(())
}

/// Delta correctness for the flat and context components of a shredded
/// query: flat results are compared as bags, dictionaries on every label
/// reachable before or after the update.
pub fn check_shredded_delta_equiv(
    h: &Expr,
    schema: &Schema,
    db: &BTreeMap<Name, Bag>,
    rel: &Name,
    upd: &Bag,
) -> Result<(), String> {
    let sq = shred_query(h, schema).map_err(err)?;
    let mut gen = LabelGen::starting_after(h.max_iota());
    let old_parts = shredded_db(schema, db, &mut gen)?;
    let elem = schema.rels[rel].bag_elem().ok_or("relation type is not a bag")?;
    let supd = shred_value(upd, elem, rel, &mut gen).map_err(err)?;
    let mut new_parts = old_parts.clone();
    {
        let sv = new_parts.get_mut(rel).ok_or("unknown relation")?;
        sv.flat = sv.flat.add(&supd.flat).map_err(err)?;
        let merged = sv.ctx.zip_with(&supd.ctx, &mut |a, b| DictVal::label_union(a, b)).ok_or("shape mismatch")?;
        sv.ctx = merged.try_map(&mut |_, r| r.clone()).map_err(err)?;
    }
    let old_db = to_db(&old_parts, None);
    let delta_db = to_db(&old_parts, Some((rel, &supd)));
    let new_db = to_db(&new_parts, None);

    let run = |e: &Expr, db: &Arc<Db>| eval(e, db).map_err(err);
    let flat_delta = delta(&sq.flat, rel, 1, schema).map_err(err)?;
    let old_flat = run(&sq.flat, &old_db)?.into_bag("flat").map_err(err)?;
    let new_flat = run(&sq.flat, &new_db)?.into_bag("flat").map_err(err)?;
    let dflat = run(&flat_delta, &delta_db)?.into_bag("flat delta").map_err(err)?;
    if old_flat.add(&dflat).map_err(err)? != new_flat {
        return Err(format!("flat delta {flat_delta}: old {old_flat} ⊎ {dflat} != {new_flat}"));
    }
    let dict_of = |e: &Expr, db: &Arc<Db>| -> Result<Arc<DictVal>, String> { run(e, db)?.into_dict("ctx").map_err(err) };
    let old_ctx = sq.ctx.try_map(&mut |_, e| dict_of(e, &old_db))?;
    let new_ctx = sq.ctx.try_map(&mut |_, e| dict_of(e, &new_db))?;
    let mut labels = BTreeMap::new();
    reachable(&old_flat, &old_ctx, &sq.elem, &mut labels)?;
    reachable(&new_flat, &new_ctx, &sq.elem, &mut labels)?;
    let mut deltas = BTreeMap::new();
    for (p, e) in sq.ctx.leaves() {
        let d = delta(e, rel, 1, schema).map_err(err)?;
        deltas.insert(p, (d.clone(), dict_of(&d, &delta_db)?));
    }
    let c = Counter::default();
    for (p, l) in labels.keys() {
        let (dexpr, dd) = &deltas[p];
        let before = old_ctx.leaf(p).expect("same shape").lookup(l, &c).map_err(err)?;
        let after = new_ctx.leaf(p).expect("same shape").lookup(l, &c).map_err(err)?;
        let change = dd.lookup(l, &c).map_err(err)?;
        if before.add(&change).map_err(err)? != after {
            return Err(format!("context delta {dexpr} at label {l}: {before} ⊎ {change} != {after}"));
        }
    }
    Ok(())
}

/// Nested evaluation equals the nesting of the shredded evaluation.
pub fn check_shred_equiv(h: &Expr, schema: &Schema, db: &BTreeMap<Name, Bag>) -> Result<(), String> {
    let direct = eval(h, &Arc::new(nested_db(db.clone()))).map_err(err)?;
    let sq = shred_query(h, schema).map_err(err)?;
    let mut gen = LabelGen::starting_after(h.max_iota());
    let parts = shredded_db(schema, db, &mut gen)?;
    let sdb = to_db(&parts, None);
    let flat = eval(&sq.flat, &sdb).map_err(err)?.into_bag("flat").map_err(err)?;
    let ctx = sq.ctx.try_map(&mut |_, e| eval(e, &sdb).and_then(|v| v.into_dict("ctx"))).map_err(err)?;
    let sv = ShreddedValue { flat: flat.clone(), ctx: ctx.clone() };
    let report = check_consistency(&sv, &sq.elem);
    if !report.ok() {
        return Err(format!("inconsistent shredded output: {}", report.trail.join("; ")));
    }
    let nested = nest_value(&flat, &ctx, &sq.elem, &Counter::default()).map_err(err)?;
    if Value::Bag(nested.clone()) == direct {
        Ok(())
    } else {
        Err(format!("shredded result nests to {nested}, direct evaluation gives {direct}"))
    }
}

/// `nest(shred(v)) = v` and the shredded value is consistent.
pub fn check_round_trip<M: Multiplicity>(v: &Bag<M>, elem: &SchemaType) -> Result<(), String> {
    let mut gen = LabelGen::starting_after(0);
    let sv = shred_value(v, elem, &name("X"), &mut gen).map_err(err)?;
    let report = check_consistency(&sv, elem);
    if !report.ok() {
        return Err(report.trail.join("; "));
    }
    let back = nest_value(&sv.flat, &sv.ctx, elem, &Counter::default()).map_err(err)?;
    if &back == v {
        Ok(())
    } else {
        Err(format!("round trip gives {back}"))
    }
}

/// For a query depending on `rel`, each delta lowers the degree in `rel` by
/// one and the stack ends in an input-independent query. The query is
/// simplified first, so that degenerate products with empty bags do not
/// count towards its degree.
pub fn check_degree(h: &Expr, schema: &Schema, rel: &Name) -> Result<(), String> {
    let (h, _) = simplify(h, &mut TypeCx::new(schema, Mode::Inc)).map_err(err)?;
    let phi = BTreeMap::new();
    let of = DegreeOf::Relation(rel);
    let k = degree_of(&h, &phi, of).map_err(err)?;
    if k == 0 {
        return Ok(());
    }
    let d = delta(&h, rel, 1, schema).map_err(err)?;
    let kd = degree_of(&d, &phi, of).map_err(err)?;
    if kd + 1 != k {
        return Err(format!("degree {k} but delta {d} has degree {kd}"));
    }
    let stack = delta_stack(&h, rel, schema).map_err(err)?;
    if stack.depth() != k as usize {
        return Err(format!("degree {k} but delta stack depth {}", stack.depth()));
    }
    let last = stack.levels.last().expect("nonempty");
    if free_relations(last).contains(rel) {
        return Err(format!("last stack level {last} still reads {rel}"));
    }
    Ok(())
}

/// With `size(ΔR) ≺ size(R)`, the cost of the delta is strictly below the
/// cost of the query, and costs are monotone in relation sizes.
pub fn check_cost(
    h: &Expr,
    schema: &Schema,
    db: &BTreeMap<Name, Bag>,
    rel: &Name,
    upd: &Bag,
) -> Result<(), String> {
    let ty = &schema.rels[rel];
    let base = db.get(rel).cloned().unwrap_or_default();
    if !is_incremental(&Value::Bag(upd.clone()), &Value::Bag(base.clone()), ty).map_err(err)? {
        return Err(format!("update {upd} is not incremental for {base}"));
    }
    if degree_of(h, &BTreeMap::new(), DegreeOf::Relation(rel)).map_err(err)? == 0 {
        return Ok(());
    }
    let mut env: CostEnv<u128> = CostEnv::new();
    for (r, t) in &schema.rels {
        let v = Value::Bag(db.get(r).cloned().unwrap_or_default());
        env.rels.insert(RelKey::base(RelName::whole(r)), size(&v, t).map_err(err)?);
    }
    let c_upd: CostVal<u128> = size(&Value::Bag(upd.clone()), ty).map_err(err)?;
    let c_h = cost(h, &env).map_err(err)?;
    let d = delta(h, rel, 1, schema).map_err(err)?;
    let denv = env.clone().with_rel(RelKey::delta(RelName::whole(rel), 1), c_upd.clone());
    let c_d = cost(&d, &denv).map_err(err)?;
    if !c_d.prec(&c_h).map_err(err)? {
        return Err(format!("cost of delta {d} is {c_d}, not below {c_h}"));
    }
    if c_d.tcost() >= c_h.tcost() {
        return Err(format!("tcost of delta {} is not below {}", c_d.tcost(), c_h.tcost()));
    }
    let small = env.clone().with_rel(RelKey::base(RelName::whole(rel)), c_upd);
    let c_small = cost(h, &small).map_err(err)?;
    if !c_small.preceq(&c_h).map_err(err)? {
        return Err(format!("cost is not monotone: {c_small} at the update size, {c_h} at the base size"));
    }
    Ok(())
}

/// Applies `updates` in order to maintained views in both modes and compares
/// with recomputation after each step.
pub fn check_ivm(
    h: &Expr,
    schema: &Schema,
    db: &BTreeMap<Name, Bag>,
    updates: &[(Name, Bag)],
) -> Result<(), String> {
    let mut states = Vec::new();
    for mode in [IvmMode::Classic, IvmMode::Recursive] {
        let plan = Arc::new(compile(h, schema, mode).map_err(err)?);
        states.push(MaterializedState::initialize(plan, db).map_err(err)?);
    }
    let mut cur = db.clone();
    let check = |states: &[MaterializedState], cur: &BTreeMap<Name, Bag>, step: usize| -> Result<(), String> {
        let (want, _) = recompute_oracle(h, cur).map_err(err)?;
        for st in states {
            st.verify().map_err(|e| format!("step {step}, {} mode: {e}", st.plan().mode))?;
            let got = st.read_view().map_err(err)?;
            if got != want {
                return Err(format!("step {step}, {} mode: view {got}, recomputed {want}", st.plan().mode));
            }
        }
        Ok(())
    };
    check(&states, &cur, 0)?;
    for (i, (r, u)) in updates.iter().enumerate() {
        for st in &mut states {
            st.apply_update(r, u).map_err(err)?;
        }
        cur = with_update(&cur, r, u)?;
        check(&states, &cur, i + 1)?;
    }
    Ok(())
}

/// Runs one property on fixed inputs. The update, when present, names the
/// relation it applies to.
pub fn check_property(
    p: Property,
    h: &Expr,
    schema: &Schema,
    db: &BTreeMap<Name, Bag>,
    update: Option<&(Name, Bag)>,
) -> Result<(), String> {
    let need = || update.ok_or_else(|| format!("property {p} needs an update"));
    match p {
        Property::Delta => need().and_then(|(r, u)| check_delta_equiv(h, schema, db, r, u)),
        Property::ShreddedDelta => need().and_then(|(r, u)| check_shredded_delta_equiv(h, schema, db, r, u)),
        Property::Shred => check_shred_equiv(h, schema, db),
        Property::Degree => schema.rels.keys().try_for_each(|r| check_degree(h, schema, r)),
        Property::Cost => need().and_then(|(r, u)| check_cost(h, schema, db, r, u)),
        Property::Ivm => check_ivm(h, schema, db, &update.cloned().into_iter().collect::<Vec<_>>()),
    }
}

/// Inputs of one generated case.
#[derive(Clone, Debug, PartialEq)]
pub struct Case {
    pub schema: Schema,
    pub query: Expr,
    pub db: BTreeMap<Name, Bag>,
    pub updates: Vec<(Name, Bag)>,
}

impl Gen {
    /// A complete case for a property. Updates are incremental and apply in
    /// sequence.
    pub fn gen_case(&mut self, p: Property, stream: usize) -> Case {
        self.cfg.mode = p.mode();
        let schema = self.gen_schema();
        let query = self.gen_dependent_query(&schema);
        let db = self.gen_db(&schema);
        let mut cur = db.clone();
        let mut updates = Vec::new();
        let rels: Vec<Name> = free_relations(&query).into_iter().collect();
        let rels = if rels.is_empty() { schema.rels.keys().cloned().collect() } else { rels };
        for _ in 0..stream {
            let r = self.pick(&rels).expect("schemas are nonempty").clone();
            let u = self.gen_update(&cur[&r], &schema.rels[&r]);
            cur.insert(r.clone(), cur[&r].add(&u).expect("small multiplicities"));
            updates.push((r, u));
        }
        Case { schema, query, db, updates }
    }
}

/// Runs property `p` on case `i` of the configuration.
pub fn run_case(cfg: &GenConfig, p: Property, i: u64) -> Result<(), Box<Counterexample>> {
    let mut g = cfg.case(i);
    let stream = if p == Property::Ivm { g.rng.gen_range(1..=20) } else { 1 };
    let case = g.gen_case(p, stream);
    let outcome = match p {
        Property::Ivm => check_ivm(&case.query, &case.schema, &case.db, &case.updates),
        _ => check_property(p, &case.query, &case.schema, &case.db, case.updates.first()),
    };
    outcome.map_err(|reason| {
        let update = case.updates.first().cloned();
        Box::new(Counterexample { property: p, query: case.query, schema: case.schema, db: case.db, update, reason })
    })
}

/// Outcome of a fuzzing run.
#[derive(Clone, Debug, Default)]
pub struct FuzzReport {
    pub cases: u64,
    pub failures: Vec<Counterexample>,
}

/// Runs `cases` cases of each property; failures are shrunk.
pub fn fuzz(cfg: &GenConfig, props: &[Property], cases: u64) -> FuzzReport {
    let mut report = FuzzReport::default();
    for &p in props {
        for i in 0..cases {
            report.cases += 1;
            if let Err(cx) = run_case(cfg, p, i) {
                report.failures.push(shrink(*cx));
            }
        }
    }
    report
}

fn replace_at(e: &Expr, target: usize, seen: &mut usize, by: &Expr) -> Expr {
    let here = *seen;
    *seen += 1;
    if here == target {
        *seen += e.size() - 1;
        return by.clone();
    }
    e.map_children(&mut |c| replace_at(c, target, seen, by))
}

fn subterm(e: &Expr, target: usize) -> Option<&Expr> {
    fn go<'e>(e: &'e Expr, target: usize, seen: &mut usize) -> Option<&'e Expr> {
        if *seen == target {
            return Some(e);
        }
        *seen += 1;
        for c in e.children() {
            if let Some(x) = go(c, target, seen) {
                return Some(x);
            }
        }
        None
    }
    go(e, target, &mut 0)
}

fn query_candidates(h: &Expr) -> Vec<Expr> {
    let mut out = Vec::new();
    for i in 0..h.size() {
        let Some(node) = subterm(h, i) else { continue };
        for c in node.children() {
            out.push(replace_at(h, i, &mut 0, c));
        }
    }
    out
}

fn db_candidates(db: &BTreeMap<Name, Bag>) -> Vec<BTreeMap<Name, Bag>> {
    let mut out = Vec::new();
    for (r, b) in db {
        for (x, m) in b.iter() {
            let mut smaller = db.clone();
            let rest = b.add(&Bag::from_entries([(x.clone(), -*m)]).expect("nonzero")).expect("small multiplicities");
            smaller.insert(r.clone(), rest);
            out.push(smaller);
            if m.abs() > 1 {
                let mut unit = db.clone();
                let step = Bag::from_entries([(x.clone(), -m.signum())]).expect("nonzero");
                unit.insert(r.clone(), b.add(&step).expect("small multiplicities"));
                out.push(unit);
            }
        }
    }
    out
}

/// Greedily shrinks a counterexample while it keeps failing its property.
pub fn shrink(cx: Counterexample) -> Counterexample {
    shrink_with(cx, |c| c.recheck())
}

/// Greedily shrinks a counterexample while `check` keeps rejecting it.
/// Candidate queries must still typecheck in the property's fragment.
pub fn shrink_with(cx: Counterexample, check: impl Fn(&Counterexample) -> Result<(), String>) -> Counterexample {
    let mut cur = cx;
    let mode = match cur.property.mode() {
        GenMode::Inc => Mode::Inc,
        GenMode::Nrc => Mode::Nrc,
    };
    'outer: for _ in 0..200 {
        for q in query_candidates(&cur.query) {
            if q.size() >= cur.query.size() || typecheck(&q, &cur.schema, mode).is_err() {
                continue;
            }
            let cand = Counterexample { query: q, ..cur.clone() };
            if let Err(reason) = check(&cand) {
                cur = Counterexample { reason, ..cand };
                continue 'outer;
            }
        }
        for db in db_candidates(&cur.db) {
            let cand = Counterexample { db, ..cur.clone() };
            if let Err(reason) = check(&cand) {
                cur = Counterexample { reason, ..cand };
                continue 'outer;
            }
        }
        break;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_queries_typecheck() {
        for mode in [GenMode::Inc, GenMode::Nrc] {
            let cfg = GenConfig { mode, ..GenConfig::with_seed(7) };
            for i in 0..200 {
                let mut g = cfg.case(i);
                let s = g.gen_schema();
                let q = g.gen_query(&s);
                let m = if mode == GenMode::Inc { Mode::Inc } else { Mode::Nrc };
                typecheck(&q, &s, m).unwrap_or_else(|e| panic!("{q}: {e}"));
            }
        }
    }

    #[test]
    fn updates_are_incremental() {
        let cfg = GenConfig::with_seed(3);
        for i in 0..200 {
            let mut g = cfg.case(i);
            let t = g.gen_type();
            let base = g.gen_relation(&t);
            let u = g.gen_update(&base, &t);
            assert_eq!(u.len(), 1);
            assert!(is_incremental(&Value::Bag(u.clone()), &Value::Bag(base.clone()), &t).unwrap(), "{u} vs {base}");
        }
    }

    #[test]
    fn shrinking_keeps_failing() {
        let schema = Schema::new().with("R", crate::syntax::parse_type("Bag(Base)").unwrap());
        let q = crate::syntax::parse_query("for x in R union (sng(x) + R)").unwrap();
        let db: BTreeMap<Name, Bag> = [(name("R"), Bag::of([Value::int(1), Value::int(2), Value::int(3)]))].into();
        let cx = Counterexample { property: Property::Shred, query: q, schema, db, update: None, reason: String::new() };
        assert!(cx.recheck().is_ok());
        // Pretend the property fails whenever the query reads a nonempty R.
        let bad = |c: &Counterexample| {
            if free_relations(&c.query).contains("R") && !c.db["R"].is_empty() {
                Err("reads R".to_string())
            } else {
                Ok(())
            }
        };
        let small = shrink_with(cx.clone(), bad);
        assert!(bad(&small).is_err());
        assert_eq!(small.query.to_string(), "R");
        assert_eq!(small.db["R"].len(), 1);
        assert!(small.query.size() < cx.query.size());
    }
}
