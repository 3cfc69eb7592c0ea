//! Shredding of queries and values into flat components plus label
//! dictionaries, nesting back, and consistency checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::dict::DictVal;
use crate::error::{Error, Result};
use crate::eval::{Counter, Db, RelKey};
use crate::expr::{inline_dependent_lets, uniquify, Expr, Name, NameSupply, Part, RelName, Schema};
use crate::scalar::Multiplicity;
use crate::typecheck::{Mode, TypeCx};
use crate::types::{render_path, shred_type, shred_type_depth, CtxPath, CtxStep, CtxTree, SchemaType};
use crate::value::{Bag, BagBuilder, Label, Value};

/// A shredded query: the flat query and one dictionary query per inner
/// bag position of the output elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShreddedQuery {
    pub flat: Expr,
    pub ctx: CtxTree<Expr>,
    /// Element type of the nested output.
    pub elem: SchemaType,
}

impl ShreddedQuery {
    /// All component queries: the flat one first, then context leaves.
    pub fn components(&self) -> Vec<(Option<CtxPath>, &Expr)> {
        let mut out = vec![(None, &self.flat)];
        out.extend(self.ctx.leaves().into_iter().map(|(p, e)| (Some(p), e)));
        out
    }
}

impl fmt::Display for ShreddedQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "flat = {}", self.flat)?;
        for (path, e) in self.ctx.leaves() {
            writeln!(f, "ctx{} = {}", render_path(&path), e)?;
        }
        Ok(())
    }
}

struct Shredder<'a> {
    cx: TypeCx<'a>,
    fors: Vec<(Name, SchemaType, CtxTree<Expr>)>,
    lets: Vec<(Name, CtxTree<Expr>)>,
    supply: NameSupply,
}

fn empty_ctx(elem: &SchemaType) -> CtxTree<Expr> {
    shred_type(elem).ctx.map(&mut |_, c| Expr::DictEmpty(c.clone()))
}

impl Shredder<'_> {
    fn elem_of(&mut self, e: &Expr) -> Result<SchemaType> {
        let t = self.cx.check(e)?;
        t.bag_elem().cloned().ok_or_else(|| Error::mismatch("shredding", "a bag", &t))
    }

    fn sh(&mut self, e: &Expr) -> Result<(Expr, CtxTree<Expr>)> {
        let b = Box::new;
        Ok(match e {
            Expr::Rel(r) if r.part == Part::Whole => {
                let ty = self.cx.schema.get(&r.base).ok_or_else(|| Error::UnknownRelation(r.to_string()))?;
                let elem = ty.bag_elem().ok_or_else(|| Error::mismatch("relation", "a bag type", ty))?;
                let base = r.base.clone();
                let ctx = shred_type(elem).ctx.map(&mut |p, _| Expr::Rel(RelName::ctx(&base, p.to_vec())));
                (Expr::Rel(RelName::flat(&r.base)), ctx)
            }
            Expr::LetVar(x) => {
                let c = self
                    .lets
                    .iter()
                    .rev()
                    .find(|(y, _)| y == x)
                    .map(|(_, c)| c.clone())
                    .ok_or_else(|| Error::UnboundVariable(x.to_string()))?;
                (e.clone(), c)
            }
            Expr::SngVar(x, path) => {
                let c = self
                    .fors
                    .iter()
                    .rev()
                    .find(|(y, ..)| y == x)
                    .ok_or_else(|| Error::UnboundVariable(x.to_string()))?
                    .2
                    .project(path)
                    .cloned()
                    .ok_or_else(|| Error::mismatch("projection", "a tuple", x))?;
                (e.clone(), c)
            }
            Expr::Pred(_) | Expr::SngUnit => (e.clone(), CtxTree::Unit),
            Expr::Empty(t) => {
                let elem = t.bag_elem().ok_or_else(|| Error::mismatch("empty bag", "a bag type", t))?;
                (Expr::Empty(SchemaType::bag(shred_type(elem).flat)), empty_ctx(elem))
            }
            Expr::Sng(body, i) | Expr::SngStar(body, i) => {
                let (f, c) = self.sh(body)?;
                let free = f.free_for_vars();
                let params: Vec<(Name, SchemaType)> = self
                    .fors
                    .iter()
                    .filter(|(x, ..)| free.contains(x))
                    .map(|(x, t, _)| (x.clone(), t.clone()))
                    .collect();
                let names = params.iter().map(|p| p.0.clone()).collect();
                (Expr::InL(*i, names), CtxTree::dict(Expr::DictDef(*i, params, b(f)), c))
            }
            Expr::Flatten(a) => {
                let (f, c) = self.sh(a)?;
                let CtxTree::Dict(d, inner) = c else {
                    return Err(Error::mismatch("flatten", "a bag of bags", a));
                };
                let l = self.supply.fresh("l");
                (Expr::For(l.clone(), b(f), b(Expr::DictApp(b(d), l, vec![]))), *inner)
            }
            Expr::For(x, src, body) => {
                let elem = self.elem_of(src)?;
                let (f1, c1) = self.sh(src)?;
                self.fors.push((x.clone(), shred_type(&elem).flat, c1));
                self.cx.push_for(x, elem);
                let r = self.sh(body);
                self.cx.pop_for();
                self.fors.pop();
                let (f2, c2) = r?;
                (Expr::For(x.clone(), b(f1), b(f2)), c2)
            }
            Expr::Prod(l, r) => {
                let (fl, cl) = self.sh(l)?;
                let (fr, cr) = self.sh(r)?;
                (Expr::Prod(b(fl), b(fr)), CtxTree::pair(cl, cr))
            }
            Expr::Union(l, r) => {
                let (fl, cl) = self.sh(l)?;
                let (fr, cr) = self.sh(r)?;
                let c = cl
                    .zip_with(&cr, &mut |x, y| Expr::DictUnion(b(x.clone()), b(y.clone())))
                    .ok_or_else(|| Error::mismatch("bag union", l, r))?;
                (Expr::Union(b(fl), b(fr)), c)
            }
            Expr::Neg(a) => {
                let (f, c) = self.sh(a)?;
                (Expr::Neg(b(f)), c)
            }
            Expr::Let(x, bound, body) => {
                let t = self.cx.check(bound)?;
                let dep = self.cx.depends(bound);
                let (f1, c1) = self.sh(bound)?;
                self.lets.push((x.clone(), c1));
                self.cx.push_let(x, t, dep);
                let r = self.sh(body);
                self.cx.pop_let();
                self.lets.pop();
                let (f2, c2) = r?;
                let c2 = c2.map(&mut |_, leaf| {
                    if leaf.mentions_let(x) {
                        Expr::Let(x.clone(), b(f1.clone()), b(leaf.clone()))
                    } else {
                        leaf.clone()
                    }
                });
                (Expr::Let(x.clone(), b(f1), b(f2)), c2)
            }
            other => {
                return Err(Error::mismatch("shredding", "a nested query", format!("shredded construct {other}")))
            }
        })
    }
}

/// Shreds a closed query over nested relations into queries over their
/// flat components `R^F` and context dictionaries `R^G`.
pub fn shred_query(e: &Expr, schema: &Schema) -> Result<ShreddedQuery> {
    let ty = TypeCx::new(schema, Mode::Nrc).check(e)?;
    let elem = ty.bag_elem().cloned().ok_or_else(|| Error::mismatch("query", "a bag", &ty))?;
    let mut supply = NameSupply::for_expr(e);
    let u = inline_dependent_lets(&uniquify(e, &mut supply));
    let mut s = Shredder { cx: TypeCx::new(schema, Mode::Nrc), fors: Vec::new(), lets: Vec::new(), supply };
    let (flat, ctx) = s.sh(&u)?;
    Ok(ShreddedQuery { flat, ctx, elem })
}

/// Source of value labels. Inner bags with the same relation, position and
/// flat contents share one label, so that deleting a tuple cancels the
/// label it was inserted with.
#[derive(Clone, Debug)]
pub struct LabelGen<M = i64> {
    next: u64,
    interned: BTreeMap<(Name, CtxPath, Bag<M>), Label<M>>,
}

impl<M: Multiplicity> LabelGen<M> {
    /// Labels get indices strictly greater than `after`, which should be the
    /// largest singleton index of the maintained queries.
    pub fn starting_after(after: u64) -> Self {
        LabelGen { next: after + 1, interned: BTreeMap::new() }
    }

    pub fn next_index(&self) -> u64 {
        self.next
    }

    /// Never hands out indices below `next`.
    pub fn skip_to(&mut self, next: u64) {
        self.next = self.next.max(next);
    }

    /// The label for an inner bag, and whether it is new.
    pub fn intern(&mut self, rel: &Name, path: &[CtxStep], def: &Bag<M>) -> (Label<M>, bool) {
        let key = (rel.clone(), path.to_vec(), def.clone());
        if let Some(l) = self.interned.get(&key) {
            return (l.clone(), false);
        }
        let l = Label::new(self.next, Value::Unit);
        self.next += 1;
        self.interned.insert(key, l.clone());
        (l, true)
    }

    /// Re-registers existing definitions, e.g. after loading a state.
    pub fn register(&mut self, rel: &Name, path: &[CtxStep], l: &Label<M>, def: &Bag<M>) {
        self.next = self.next.max(l.index + 1);
        self.interned.insert((rel.clone(), path.to_vec(), def.clone()), l.clone());
    }
}

/// A shredded bag: its flat component and materialized dictionaries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShreddedValue<M = i64> {
    pub flat: Bag<M>,
    pub ctx: CtxTree<Arc<DictVal<M>>>,
}

impl<M: Multiplicity> ShreddedValue<M> {
    /// The shredded empty bag of the given element type.
    pub fn empty(elem: &SchemaType) -> Self {
        ShreddedValue { flat: Bag::empty(), ctx: shred_type(elem).ctx.map(&mut |_, _| Arc::new(DictVal::empty())) }
    }

    /// Database entries for relation `rel`, at update level `level`
    /// (0 for the relation itself).
    pub fn db_entries(&self, rel: &str, level: u32) -> Vec<(RelKey, Value<M>)> {
        let key = |n: RelName| if level == 0 { RelKey::base(n) } else { RelKey::delta(n, level) };
        let mut out = vec![(key(RelName::flat(rel)), Value::Bag(self.flat.clone()))];
        for (p, d) in self.ctx.leaves() {
            out.push((key(RelName::ctx(rel, p)), Value::Dict(d.clone())));
        }
        out
    }
}

/// Shreds a bag of elements of type `elem` belonging to relation `rel`.
pub fn shred_value<M: Multiplicity>(
    v: &Bag<M>,
    elem: &SchemaType,
    rel: &Name,
    gen: &mut LabelGen<M>,
) -> Result<ShreddedValue<M>> {
    shred_value_depth(v, elem, rel, gen, usize::MAX)
}

/// Like [`shred_value`], keeping bags nested `depth` or more levels below
/// the top unshredded.
pub fn shred_value_depth<M: Multiplicity>(
    v: &Bag<M>,
    elem: &SchemaType,
    rel: &Name,
    gen: &mut LabelGen<M>,
    depth: usize,
) -> Result<ShreddedValue<M>> {
    let mut dicts = shred_type_depth(elem, depth).ctx.map(&mut |_, _| BTreeMap::new());
    let mut flat = BagBuilder::new();
    let mut path = Vec::new();
    for (x, m) in v.iter() {
        let fx = shred_elem(x, elem, depth, &mut path, &mut dicts, rel, gen)?;
        flat.add(fx, m.clone())?;
    }
    Ok(ShreddedValue { flat: flat.finish(), ctx: dicts.map(&mut |_, d| Arc::new(DictVal::Mat(Arc::new(d.clone())))) })
}

fn shred_elem<M: Multiplicity>(
    x: &Value<M>,
    ty: &SchemaType,
    depth: usize,
    path: &mut CtxPath,
    dicts: &mut CtxTree<BTreeMap<Label<M>, Bag<M>>>,
    rel: &Name,
    gen: &mut LabelGen<M>,
) -> Result<Value<M>> {
    let bad = || Error::mismatch("shredding a value", ty, x);
    match ty {
        SchemaType::Unit | SchemaType::Base | SchemaType::Label | SchemaType::Dict(_) => Ok(x.clone()),
        SchemaType::Bag(_) if depth == 0 => Ok(x.clone()),
        SchemaType::Prod(a, b) => {
            let Value::Pair(p) = x else { return Err(bad()) };
            path.push(CtxStep::Fst);
            let fa = shred_elem(&p.0, a, depth, path, dicts, rel, gen);
            path.pop();
            path.push(CtxStep::Snd);
            let fb = shred_elem(&p.1, b, depth, path, dicts, rel, gen);
            path.pop();
            Ok(Value::pair(fa?, fb?))
        }
        SchemaType::Bag(c) => {
            let inner = x.as_bag().ok_or_else(bad)?;
            path.push(CtxStep::Inner);
            let mut def = BagBuilder::new();
            let mut res = Ok(());
            for (y, m) in inner.iter() {
                match shred_elem(y, c, depth - 1, path, dicts, rel, gen) {
                    Ok(fy) => def.add(fy, m.clone())?,
                    Err(e) => {
                        res = Err(e);
                        break;
                    }
                }
            }
            path.pop();
            res?;
            let def = def.finish();
            let (l, fresh) = gen.intern(rel, path, &def);
            if fresh {
                dicts.leaf_mut(path).expect("context shape follows the type").insert(l.clone(), def);
            }
            Ok(Value::Label(Arc::new(l)))
        }
    }
}

/// Rebuilds the nested bag from a flat component and its context.
pub fn nest_value<M: Multiplicity>(
    flat: &Bag<M>,
    ctx: &CtxTree<Arc<DictVal<M>>>,
    elem: &SchemaType,
    counter: &Counter,
) -> Result<Bag<M>> {
    let mut out = BagBuilder::new();
    for (x, m) in flat.iter() {
        out.add(nest_elem(x, ctx, elem, counter)?, m.clone())?;
    }
    Ok(out.finish())
}

fn nest_elem<M: Multiplicity>(
    x: &Value<M>,
    ctx: &CtxTree<Arc<DictVal<M>>>,
    ty: &SchemaType,
    counter: &Counter,
) -> Result<Value<M>> {
    let bad = || Error::mismatch("nesting a value", ty, x);
    match (ty, ctx) {
        (SchemaType::Prod(a, b), CtxTree::Pair(ca, cb)) => {
            let Value::Pair(p) = x else { return Err(bad()) };
            Ok(Value::pair(nest_elem(&p.0, ca, a, counter)?, nest_elem(&p.1, cb, b, counter)?))
        }
        (SchemaType::Bag(c), CtxTree::Dict(d, inner)) => {
            let l = x.as_label().ok_or_else(bad)?;
            if !d.defines(l) {
                return Err(Error::UnboundLabel(l.to_string()));
            }
            let def = d.lookup(l, counter)?;
            Ok(Value::Bag(nest_value(&def, inner, c, counter)?))
        }
        (_, CtxTree::Unit) => Ok(x.clone()),
        _ => Err(bad()),
    }
}

/// Shredded relations by name.
pub type ShreddedParts<M = i64> = BTreeMap<Name, ShreddedValue<M>>;

/// Shreds every relation of a nested database.
pub fn shred_db<M: Multiplicity>(
    rels: &[(Name, SchemaType, Bag<M>)],
    gen: &mut LabelGen<M>,
) -> Result<(Db<M>, ShreddedParts<M>)> {
    let mut db = Db::new();
    let mut parts = BTreeMap::new();
    for (r, ty, v) in rels {
        let elem = ty.bag_elem().ok_or_else(|| Error::mismatch("relation", "a bag type", ty))?;
        let sv = shred_value(v, elem, r, gen)?;
        db.extend(sv.db_entries(r, 0));
        parts.insert(r.clone(), sv);
    }
    Ok((db, parts))
}

/// Outcome of a consistency check. Empty trail means consistent.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConsistencyReport {
    pub trail: Vec<String>,
}

impl ConsistencyReport {
    pub fn ok(&self) -> bool {
        self.trail.is_empty()
    }
}

struct Checker<'c, M: Multiplicity> {
    seen: BTreeSet<(CtxPath, Label<M>)>,
    report: ConsistencyReport,
    counter: &'c Counter,
}

impl<M: Multiplicity> Checker<'_, M> {
    fn elem(&mut self, x: &Value<M>, ty: &SchemaType, ctx: &CtxTree<Arc<DictVal<M>>>, path: &mut CtxPath) {
        match (ty, ctx) {
            (SchemaType::Prod(a, b), CtxTree::Pair(ca, cb)) => {
                let Value::Pair(p) = x else {
                    self.report.trail.push(format!("at {}: expected a pair, found {x}", render_path(path)));
                    return;
                };
                path.push(CtxStep::Fst);
                self.elem(&p.0, a, ca, path);
                path.pop();
                path.push(CtxStep::Snd);
                self.elem(&p.1, b, cb, path);
                path.pop();
            }
            (SchemaType::Bag(c), CtxTree::Dict(d, inner)) => {
                let Some(l) = x.as_label() else {
                    self.report.trail.push(format!("at {}: expected a label, found {x}", render_path(path)));
                    return;
                };
                if !self.seen.insert((path.clone(), l.clone())) {
                    return;
                }
                if !d.defines(l) {
                    self.report.trail.push(format!("label {l} at {} has no definition", render_path(path)));
                    return;
                }
                match d.lookup(l, self.counter) {
                    Ok(def) => {
                        path.push(CtxStep::Inner);
                        for (y, _) in def.iter() {
                            self.elem(y, c, inner, path);
                        }
                        path.pop();
                    }
                    Err(e) => self.report.trail.push(format!("label {l} at {}: {e}", render_path(path))),
                }
            }
            _ => {}
        }
    }
}

/// Checks that every label reachable from the flat component has a
/// definition and that every definition is well defined.
pub fn check_consistency<M: Multiplicity>(sv: &ShreddedValue<M>, elem: &SchemaType) -> ConsistencyReport {
    let counter = Counter::default();
    let mut c = Checker { seen: BTreeSet::new(), report: ConsistencyReport::default(), counter: &counter };
    for (x, _) in sv.flat.iter() {
        c.elem(x, elem, &sv.ctx, &mut Vec::new());
    }
    c.report
}

/// Checks a shredded update against the shredded value it applies to:
/// labels it introduces must be fresh everywhere in the base, and every
/// label it references must resolve in the combined dictionaries.
pub fn check_update_consistency<M: Multiplicity>(
    update: &ShreddedValue<M>,
    base: &ShreddedValue<M>,
    elem: &SchemaType,
) -> ConsistencyReport {
    let mut report = ConsistencyReport::default();
    let mut known = BTreeSet::new();
    for (_, d) in base.ctx.leaves() {
        known.extend(d.materialized_entries().into_iter().map(|(l, _)| l));
    }
    for (p, d) in update.ctx.leaves() {
        for (l, _) in d.materialized_entries() {
            if known.contains(&l) {
                report.trail.push(format!("label {l} at {} is not fresh", render_path(&p)));
            }
        }
    }
    let merged = update.ctx.zip_with(&base.ctx, &mut |u, b| DictVal::label_union(b, u));
    let Some(merged) = merged else {
        report.trail.push("update and base have different shapes".into());
        return report;
    };
    match merged.try_map(&mut |_, r| r.clone()) {
        Ok(ctx) => {
            let combined = ShreddedValue { flat: update.flat.clone(), ctx };
            report.trail.extend(check_consistency(&combined, elem).trail);
        }
        Err(e) => report.trail.push(e.to_string()),
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::eval;
    use crate::expr::name;
    use crate::syntax::{parse_query, parse_type, parse_value};

    fn bag(s: &str) -> Bag {
        parse_value(s).unwrap().as_bag().unwrap().clone()
    }

    #[test]
    fn value_round_trip() {
        let elem = parse_type("<Base, Bag(Base)>").unwrap();
        let v = bag("{ <\"a\", { \"x1\", \"x2\" }>, <\"b\", { \"x3\" }> }");
        let mut gen = LabelGen::starting_after(0);
        let sv = shred_value(&v, &elem, &name("X"), &mut gen).unwrap();
        assert_eq!(sv.flat.len(), 2);
        assert_eq!(sv.ctx.leaf(&[CtxStep::Snd]).unwrap().materialized_entries().len(), 2);
        assert!(check_consistency(&sv, &elem).ok());
        assert_eq!(nest_value(&sv.flat, &sv.ctx, &elem, &Counter::default()).unwrap(), v);
    }

    #[test]
    fn identical_inner_bags_share_a_label() {
        let elem = parse_type("Bag(Base)").unwrap();
        let mut gen = LabelGen::starting_after(0);
        let sv = shred_value(&bag("{ { 1 }, { 1 } : 2, { } }"), &elem, &name("R"), &mut gen).unwrap();
        assert_eq!(sv.flat.len(), 2);
        let del = shred_value(&bag("{ { 1 } : -3 }"), &elem, &name("R"), &mut gen).unwrap();
        assert!(del.ctx.leaf(&[]).unwrap().is_trivially_empty());
        assert_eq!(sv.flat.add(&del.flat).unwrap().len(), 1);
        assert!(check_update_consistency(&del, &sv, &elem).ok());
    }

    #[test]
    fn undefined_label_is_inconsistent() {
        let elem = parse_type("Bag(Base)").unwrap();
        let sv: ShreddedValue = ShreddedValue {
            flat: Bag::singleton(Value::<i64>::label(7, Value::Unit)),
            ctx: CtxTree::dict(Arc::new(DictVal::empty()), CtxTree::Unit),
        };
        assert!(!check_consistency(&sv, &elem).ok());
        assert!(matches!(nest_value(&sv.flat, &sv.ctx, &elem, &Counter::default()), Err(Error::UnboundLabel(_))));
    }

    #[test]
    fn query_shredding_preserves_semantics() {
        let schema = Schema::new().with("R", parse_type("Bag(<Base, Bag(Base)>)").unwrap());
        let q = parse_query("for x in R union <x.1, sng(flatten x.2 + for y in flatten x.2 where y != 3 union sng(y))>").unwrap();
        let sq = shred_query(&q, &schema).unwrap();
        assert!(crate::typecheck::typecheck(&sq.flat, &schema, Mode::Inc).is_ok());
        let rels = vec![(name("R"), schema.get("R").unwrap().clone(), bag("{ <1, { 2, 3 }>, <4, { }> }"))];
        let mut gen = LabelGen::starting_after(q.max_iota());
        let (db, _) = shred_db(&rels, &mut gen).unwrap();
        let db = Arc::new(db);
        let flat = eval(&sq.flat, &db).unwrap();
        let ctx = sq.ctx.try_map(&mut |_, e| eval(e, &db).and_then(|v| v.into_dict("ctx"))).unwrap();
        let nested = nest_value(flat.as_bag().unwrap(), &ctx, &sq.elem, &Counter::default()).unwrap();
        let direct = eval(&q, &Arc::new(crate::eval::nested_db([(name("R"), rels[0].2.clone())]))).unwrap();
        assert_eq!(Value::Bag(nested), direct);
    }
}
