//! Reference evaluator.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::dict::{DictVal, Generator};
use crate::error::{Error, Result};
use crate::expr::{CmpOp, Expr, Name, Pred, RelName, Term};
use crate::scalar::Multiplicity;
use crate::value::{Bag, BagBuilder, Value};

/// Key of a stored relation component; level 0 is the current state and
/// level `k > 0` the update used by `k`-th order deltas.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelKey {
    pub name: RelName,
    pub level: u32,
}

impl RelKey {
    pub fn base(name: RelName) -> Self {
        RelKey { name, level: 0 }
    }

    pub fn delta(name: RelName, level: u32) -> Self {
        RelKey { name, level }
    }
}

/// Database: relation components and updates by key.
pub type Db<M = i64> = BTreeMap<RelKey, Value<M>>;

/// Builds a database of nested relations.
pub fn nested_db<M: Multiplicity>(rels: impl IntoIterator<Item = (Name, Bag<M>)>) -> Db<M> {
    rels.into_iter().map(|(n, b)| (RelKey::base(RelName { base: n, part: crate::expr::Part::Whole }), Value::Bag(b))).collect()
}

/// Work counter: one unit per tuple a loop visits.
#[derive(Debug, Default)]
pub struct Counter(Cell<u64>);

impl Counter {
    pub fn get(&self) -> u64 {
        self.0.get()
    }

    pub fn bump(&self, n: u64) {
        self.0.set(self.0.get().saturating_add(n));
    }

    pub fn take(&self) -> u64 {
        self.0.replace(0)
    }
}

/// Variable bindings: let-bound values and for-bound values.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Env<M = i64> {
    pub lets: Vec<(Name, Value<M>)>,
    pub fors: Vec<(Name, Value<M>)>,
}

impl<M: Multiplicity> Env<M> {
    pub fn new() -> Self {
        Env { lets: Vec::new(), fors: Vec::new() }
    }

    pub fn with_for(mut self, x: &str, v: Value<M>) -> Self {
        self.fors.push((crate::expr::name(x), v));
        self
    }

    pub fn with_let(mut self, x: &str, v: Value<M>) -> Self {
        self.lets.push((crate::expr::name(x), v));
        self
    }

    fn for_var(&self, x: &str) -> Result<&Value<M>> {
        self.fors.iter().rev().find(|(y, _)| &**y == x).map(|(_, v)| v).ok_or_else(|| Error::UnboundVariable(x.into()))
    }

    fn let_var(&self, x: &str) -> Result<&Value<M>> {
        self.lets.iter().rev().find(|(y, _)| &**y == x).map(|(_, v)| v).ok_or_else(|| Error::UnboundVariable(x.into()))
    }
}

/// Evaluates a closed expression.
pub fn eval<M: Multiplicity>(e: &Expr, db: &Arc<Db<M>>) -> Result<Value<M>> {
    eval_in(e, &mut Env::new(), db, &Counter::default())
}

/// Evaluates a closed expression and reports the work done.
pub fn eval_counted<M: Multiplicity>(e: &Expr, db: &Arc<Db<M>>) -> Result<(Value<M>, u64)> {
    let c = Counter::default();
    let v = eval_in(e, &mut Env::new(), db, &c)?;
    Ok((v, c.get()))
}

fn bag<M: Multiplicity>(v: Value<M>) -> Result<Bag<M>> {
    v.into_bag("bag expression")
}

/// Evaluates `e` under `env`. The environment is restored on return.
pub fn eval_in<M: Multiplicity>(e: &Expr, env: &mut Env<M>, db: &Arc<Db<M>>, counter: &Counter) -> Result<Value<M>> {
    Ok(match e {
        Expr::Rel(r) => db.get(&RelKey::base(r.clone())).cloned().ok_or_else(|| Error::UnknownRelation(r.to_string()))?,
        Expr::DeltaRel(r, k) => db
            .get(&RelKey::delta(r.clone(), *k))
            .cloned()
            .ok_or_else(|| Error::UnknownRelation(format!("{} {}", delta_prefix(*k), r)))?,
        Expr::LetVar(x) => env.let_var(x)?.clone(),
        Expr::SngVar(x, path) => {
            let v = env.for_var(x)?;
            let p = v.project(path).ok_or_else(|| Error::mismatch("projection", "a tuple", v.kind()))?;
            Value::Bag(Bag::singleton(p.clone()))
        }
        Expr::Pred(p) => {
            if eval_pred(p, env)? {
                Value::Bag(Bag::singleton(Value::Unit))
            } else {
                Value::Bag(Bag::empty())
            }
        }
        Expr::Empty(_) => Value::Bag(Bag::empty()),
        Expr::SngUnit => Value::Bag(Bag::singleton(Value::Unit)),
        Expr::Sng(b, _) | Expr::SngStar(b, _) => Value::Bag(Bag::singleton(eval_in(b, env, db, counter)?)),
        Expr::Flatten(b) => {
            let outer = bag(eval_in(b, env, db, counter)?)?;
            let mut out = BagBuilder::new();
            for (inner, m) in outer.iter() {
                counter.bump(1);
                let inner = inner.as_bag().ok_or_else(|| Error::mismatch("flatten", "a bag of bags", inner.kind()))?;
                out.add_bag(inner, m)?;
            }
            Value::Bag(out.finish())
        }
        Expr::For(x, src, body) => {
            let src = bag(eval_in(src, env, db, counter)?)?;
            let mut out = BagBuilder::new();
            for (v, m) in src.iter() {
                counter.bump(1);
                env.fors.push((x.clone(), v.clone()));
                let r = eval_in(body, env, db, counter);
                env.fors.pop();
                out.add_bag(&bag(r?)?, m)?;
            }
            Value::Bag(out.finish())
        }
        Expr::Prod(a, b) => {
            let a = bag(eval_in(a, env, db, counter)?)?;
            if a.is_empty() {
                return Ok(Value::Bag(Bag::empty()));
            }
            let b = bag(eval_in(b, env, db, counter)?)?;
            let mut out = BagBuilder::new();
            for (x, m) in a.iter() {
                for (y, n) in b.iter() {
                    counter.bump(1);
                    let k = m.checked_mul(n).ok_or(Error::MultiplicityOverflow)?;
                    out.add(Value::pair(x.clone(), y.clone()), k)?;
                }
            }
            Value::Bag(out.finish())
        }
        Expr::Union(a, b) => {
            let a = bag(eval_in(a, env, db, counter)?)?;
            let b = bag(eval_in(b, env, db, counter)?)?;
            counter.bump(a.len().min(b.len()) as u64);
            Value::Bag(a.add(&b)?)
        }
        Expr::Neg(a) => {
            let a = bag(eval_in(a, env, db, counter)?)?;
            counter.bump(a.len() as u64);
            Value::Bag(a.neg())
        }
        Expr::Let(x, a, b) => {
            let v = eval_in(a, env, db, counter)?;
            env.lets.push((x.clone(), v));
            let r = eval_in(b, env, db, counter);
            env.lets.pop();
            r?
        }
        Expr::InL(i, xs) => {
            let vals = xs.iter().map(|x| env.for_var(x).cloned()).collect::<Result<Vec<_>>>()?;
            Value::Bag(Bag::singleton(Value::label(*i, Value::tuple(vals))))
        }
        Expr::DictDef(i, params, body) => {
            let mut captured = Env::new();
            for x in e.free_for_vars() {
                captured.fors.push((x.clone(), env.for_var(&x)?.clone()));
            }
            for x in e.free_let_vars() {
                captured.lets.push((x.clone(), env.let_var(&x)?.clone()));
            }
            Value::Dict(Arc::new(DictVal::Gen(Generator {
                index: *i,
                params: params.iter().map(|p| p.0.clone()).collect(),
                body: Arc::new((**body).clone()),
                env: captured,
                db: db.clone(),
            })))
        }
        Expr::DictApp(d, x, path) => {
            let d = eval_in(d, env, db, counter)?.into_dict("lookup")?;
            let v = env.for_var(x)?;
            let l = v
                .project(path)
                .and_then(Value::as_label)
                .ok_or_else(|| Error::mismatch("lookup", "a label", v.kind()))?;
            Value::Bag(d.lookup(l, counter)?)
        }
        Expr::DictUnion(a, b) => {
            let a = eval_in(a, env, db, counter)?.into_dict("label union")?;
            let b = eval_in(b, env, db, counter)?.into_dict("label union")?;
            Value::Dict(DictVal::label_union(&a, &b)?)
        }
        Expr::DictAdd(a, b) => {
            let a = eval_in(a, env, db, counter)?.into_dict("dictionary addition")?;
            let b = eval_in(b, env, db, counter)?.into_dict("dictionary addition")?;
            Value::Dict(DictVal::add(&a, &b)?)
        }
        Expr::DictEmpty(_) => Value::Dict(Arc::new(DictVal::empty())),
    })
}

pub(crate) fn delta_prefix(level: u32) -> String {
    format!("delta{}", "'".repeat(level.saturating_sub(1) as usize))
}

fn term_value<M: Multiplicity>(t: &Term, env: &Env<M>) -> Result<Value<M>> {
    match t {
        Term::Const(a) => Ok(Value::Atom(a.clone())),
        Term::Var(x, path) => {
            let v = env.for_var(x)?;
            v.project(path).cloned().ok_or_else(|| Error::mismatch("predicate", "a tuple", v.kind()))
        }
    }
}

pub(crate) fn eval_pred<M: Multiplicity>(p: &Pred, env: &Env<M>) -> Result<bool> {
    Ok(match p {
        Pred::Cmp(op, a, b) => {
            let a = term_value(a, env)?;
            let b = term_value(b, env)?;
            match op {
                CmpOp::Eq => a == b,
                CmpOp::Ne => a != b,
                CmpOp::Lt => a < b,
                CmpOp::Le => a <= b,
            }
        }
        Pred::And(a, b) => eval_pred(a, env)? && eval_pred(b, env)?,
        Pred::Or(a, b) => eval_pred(a, env)? || eval_pred(b, env)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::name;

    fn db(rows: &[(i64, i64)]) -> Arc<Db> {
        let bag = Bag::of(rows.iter().map(|&(a, b)| Value::pair(Value::int(a), Value::int(b))));
        Arc::new(nested_db([(name("R"), bag)]))
    }

    #[test]
    fn identity_query() {
        let e = Expr::for_("x", Expr::rel("R"), Expr::var("x"));
        let d = db(&[(1, 2), (3, 4)]);
        assert_eq!(eval(&e, &d).unwrap(), eval(&Expr::rel("R"), &d).unwrap());
    }

    #[test]
    fn filter_and_product() {
        let p = Pred::Cmp(CmpOp::Lt, Term::Var(name("x"), vec![1]), Term::Var(name("x"), vec![2]));
        let e = Expr::for_("x", Expr::rel("R"), Expr::for_("_p", Expr::Pred(p), Expr::proj("x", &[1])));
        let d = db(&[(1, 2), (5, 4), (0, 9)]);
        assert_eq!(eval(&e, &d).unwrap(), Value::Bag(Bag::of([Value::int(0), Value::int(1)])));
        let sq = Expr::prod(Expr::rel("R"), Expr::rel("R"));
        let (v, work) = eval_counted(&sq, &d).unwrap();
        assert_eq!(v.as_bag().unwrap().len(), 9);
        assert_eq!(work, 9);
    }

    #[test]
    fn empty_query_is_empty() {
        let e = Expr::Empty(crate::types::SchemaType::bag(crate::types::SchemaType::Base));
        assert_eq!(eval(&e, &db(&[])).unwrap(), Value::Bag(Bag::empty()));
    }
}
