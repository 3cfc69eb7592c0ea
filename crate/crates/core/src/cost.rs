//! Cost domains, the size of values and the cost transformation.

use std::collections::BTreeMap;
use std::fmt;

use crate::dict::DictVal;
use crate::error::{Error, Result};
use crate::eval::RelKey;
use crate::expr::{classify, Expr, Name};
use crate::scalar::{Card, Multiplicity};
use crate::types::SchemaType;
use crate::value::Value;

/// An element of the cost domain of a type. Scalars cost 1; a bag costs
/// a cardinality bound together with the cost of its elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CostVal<N> {
    Base,
    Unit,
    Label,
    Pair(Box<CostVal<N>>, Box<CostVal<N>>),
    Bag(N, Box<CostVal<N>>),
}

impl<N: Card> CostVal<N> {
    pub fn bag(card: N, elem: CostVal<N>) -> Self {
        CostVal::Bag(card, Box::new(elem))
    }

    pub fn pair(a: CostVal<N>, b: CostVal<N>) -> Self {
        CostVal::Pair(Box::new(a), Box::new(b))
    }

    /// The least element `1_A`. Dictionaries are costed like bags.
    pub fn bottom(ty: &SchemaType) -> Self {
        match ty {
            SchemaType::Unit => CostVal::Unit,
            SchemaType::Base => CostVal::Base,
            SchemaType::Label => CostVal::Label,
            SchemaType::Prod(a, b) => CostVal::pair(Self::bottom(a), Self::bottom(b)),
            SchemaType::Bag(a) | SchemaType::Dict(a) => CostVal::bag(N::one(), Self::bottom(a)),
        }
    }

    /// Cardinality and element cost of a bag cost.
    pub fn as_bag(&self) -> Result<(&N, &CostVal<N>)> {
        match self {
            CostVal::Bag(n, c) => Ok((n, c)),
            other => Err(Error::ShapeMismatch(format!("expected a bag cost, found {other}"))),
        }
    }

    fn scalar(&self) -> bool {
        matches!(self, CostVal::Base | CostVal::Unit | CostVal::Label)
    }

    fn mismatch(&self, other: &Self) -> Error {
        Error::ShapeMismatch(format!("{self} and {other}"))
    }

    /// Strict order `≺`: false on scalars, componentwise on pairs, strict on
    /// the cardinality and non-strict on the elements of bags.
    pub fn prec(&self, other: &Self) -> Result<bool> {
        match (self, other) {
            (a, b) if a.scalar() && b.scalar() => Ok(false),
            (CostVal::Pair(a1, a2), CostVal::Pair(b1, b2)) => Ok(a1.prec(b1)? && a2.prec(b2)?),
            (CostVal::Bag(n, a), CostVal::Bag(m, b)) => Ok(n.card_lt(m) && a.preceq(b)?),
            _ => Err(self.mismatch(other)),
        }
    }

    /// Non-strict order `⪯`: true on scalars.
    pub fn preceq(&self, other: &Self) -> Result<bool> {
        match (self, other) {
            (a, b) if a.scalar() && b.scalar() => Ok(true),
            (CostVal::Pair(a1, a2), CostVal::Pair(b1, b2)) => Ok(a1.preceq(b1)? && a2.preceq(b2)?),
            (CostVal::Bag(n, a), CostVal::Bag(m, b)) => Ok(n.card_le(m) && a.preceq(b)?),
            _ => Err(self.mismatch(other)),
        }
    }

    /// Pointwise supremum.
    pub fn sup(&self, other: &Self) -> Result<Self> {
        match (self, other) {
            (a, b) if a.scalar() && b.scalar() => Ok(a.clone()),
            (CostVal::Pair(a1, a2), CostVal::Pair(b1, b2)) => Ok(CostVal::pair(a1.sup(b1)?, a2.sup(b2)?)),
            (CostVal::Bag(n, a), CostVal::Bag(m, b)) => Ok(CostVal::bag(n.card_max(m), a.sup(b)?)),
            _ => Err(self.mismatch(other)),
        }
    }

    /// Scalar time bound: 1 for scalars, sums for pairs, `n·tcost(c)` for bags.
    pub fn tcost(&self) -> N {
        match self {
            CostVal::Base | CostVal::Unit | CostVal::Label => N::one(),
            CostVal::Pair(a, b) => a.tcost() + b.tcost(),
            CostVal::Bag(n, c) => n.clone() * c.tcost(),
        }
    }

    /// Adjusts scalar leaves to the given type, so that a literal such as
    /// `2{1}` can stand for a bag of labels.
    pub fn conform(self, ty: &SchemaType) -> Result<Self> {
        match (self, ty) {
            (c, SchemaType::Base) if c.scalar() => Ok(CostVal::Base),
            (c, SchemaType::Unit) if c.scalar() => Ok(CostVal::Unit),
            (c, SchemaType::Label) if c.scalar() => Ok(CostVal::Label),
            (CostVal::Pair(a, b), SchemaType::Prod(ta, tb)) => Ok(CostVal::pair(a.conform(ta)?, b.conform(tb)?)),
            (CostVal::Bag(n, c), SchemaType::Bag(t) | SchemaType::Dict(t)) => Ok(CostVal::bag(n, c.conform(t)?)),
            (c, t) => Err(Error::ShapeMismatch(format!("cost {c} does not fit type {t}"))),
        }
    }

    pub fn map_card<K: Card>(&self, f: &impl Fn(&N) -> K) -> CostVal<K> {
        match self {
            CostVal::Base => CostVal::Base,
            CostVal::Unit => CostVal::Unit,
            CostVal::Label => CostVal::Label,
            CostVal::Pair(a, b) => CostVal::pair(a.map_card(f), b.map_card(f)),
            CostVal::Bag(n, c) => CostVal::bag(f(n), c.map_card(f)),
        }
    }
}

impl<N: fmt::Display> fmt::Display for CostVal<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostVal::Base | CostVal::Unit | CostVal::Label => f.write_str("1"),
            CostVal::Pair(a, b) => write!(f, "<{a},{b}>"),
            CostVal::Bag(n, c) => {
                let s = n.to_string();
                if s.contains(' ') {
                    write!(f, "({s}){{{c}}}")
                } else {
                    write!(f, "{s}{{{c}}}")
                }
            }
        }
    }
}

fn magnitude<M: Multiplicity>(m: &M) -> u64 {
    m.abs().to_u64().unwrap_or(u64::MAX)
}

/// Size of a value of the given type. Bag cardinalities count multiplicity
/// magnitudes and are at least 1; a dictionary is sized by its largest
/// materialized definition.
pub fn size<M: Multiplicity, N: Card>(v: &Value<M>, ty: &SchemaType) -> Result<CostVal<N>> {
    let bad = || Error::mismatch("size", ty, v);
    match ty {
        SchemaType::Unit => Ok(CostVal::Unit),
        SchemaType::Base => Ok(CostVal::Base),
        SchemaType::Label => Ok(CostVal::Label),
        SchemaType::Prod(ta, tb) => match v {
            Value::Pair(p) => Ok(CostVal::pair(size(&p.0, ta)?, size(&p.1, tb)?)),
            _ => Err(bad()),
        },
        SchemaType::Bag(t) => {
            let b = v.as_bag().ok_or_else(bad)?;
            let mut elem = CostVal::bottom(t);
            let mut card = 0u64;
            for (x, m) in b.iter() {
                elem = elem.sup(&size(x, t)?)?;
                card = card.saturating_add(magnitude(m));
            }
            Ok(CostVal::bag(N::from_u64(card.max(1)), elem))
        }
        SchemaType::Dict(t) => {
            let d = v.as_dict().ok_or_else(bad)?;
            let mut out = CostVal::bottom(ty);
            for (_, b) in d.materialized_entries() {
                out = out.sup(&size(&Value::Bag(b), &SchemaType::bag(t.as_ref().clone()))?)?;
            }
            Ok(out)
        }
    }
}

/// Size of a dictionary value.
pub fn dict_size<M: Multiplicity, N: Card>(d: &DictVal<M>, elem: &SchemaType) -> Result<CostVal<N>> {
    size(&Value::Dict(std::sync::Arc::new(d.clone())), &SchemaType::dict(elem.clone()))
}

/// `size(Δ) ≺ size(base)`.
pub fn is_incremental<M: Multiplicity>(delta: &Value<M>, base: &Value<M>, ty: &SchemaType) -> Result<bool> {
    size::<M, u128>(delta, ty)?.prec(&size(base, ty)?)
}

/// How singletons with input-dependent bodies are costed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SngPolicy {
    /// Reject them, as the cost transformation is defined on the restricted
    /// fragment only.
    #[default]
    Strict,
    /// Cost them like `sng*`, giving the cost of the nested output.
    Permissive,
}

/// Cost assignments for relations and free variables.
#[derive(Clone, Debug)]
pub struct CostEnv<N> {
    pub rels: BTreeMap<RelKey, CostVal<N>>,
    pub lets: Vec<(Name, CostVal<N>)>,
    pub fors: Vec<(Name, CostVal<N>)>,
    pub policy: SngPolicy,
}

impl<N: Card> Default for CostEnv<N> {
    fn default() -> Self {
        CostEnv { rels: BTreeMap::new(), lets: Vec::new(), fors: Vec::new(), policy: SngPolicy::Strict }
    }
}

impl<N: Card> CostEnv<N> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_rel(mut self, key: RelKey, c: CostVal<N>) -> Self {
        self.rels.insert(key, c);
        self
    }

    pub fn with_for(mut self, x: &str, c: CostVal<N>) -> Self {
        self.fors.push((crate::expr::name(x), c));
        self
    }

    pub fn with_let(mut self, x: &str, c: CostVal<N>) -> Self {
        self.lets.push((crate::expr::name(x), c));
        self
    }

    pub fn permissive(mut self) -> Self {
        self.policy = SngPolicy::Permissive;
        self
    }

    fn lookup<'a>(scope: &'a [(Name, CostVal<N>)], x: &str) -> Result<&'a CostVal<N>> {
        scope.iter().rev().find(|(y, _)| &**y == x).map(|(_, c)| c).ok_or_else(|| Error::UnboundVariable(x.into()))
    }
}

fn project<'a, N>(c: &'a CostVal<N>, path: &[u8]) -> Result<&'a CostVal<N>>
where
    N: Card,
{
    path.iter().try_fold(c, |c, i| match (c, i) {
        (CostVal::Pair(a, _), 1) => Ok(&**a),
        (CostVal::Pair(_, b), 2) => Ok(&**b),
        _ => Err(Error::ShapeMismatch(format!("cannot project {c} on {i}"))),
    })
}

/// The cost transformation.
pub fn cost<N: Card>(e: &Expr, env: &CostEnv<N>) -> Result<CostVal<N>> {
    let mut env = env.clone();
    go(&classify(e), &mut env)
}

fn go<N: Card>(e: &Expr, env: &mut CostEnv<N>) -> Result<CostVal<N>> {
    let one = N::one;
    Ok(match e {
        Expr::Rel(r) => env.rels.get(&RelKey::base(r.clone())).cloned().ok_or_else(|| Error::UnknownRelation(r.to_string()))?,
        Expr::DeltaRel(r, k) => env
            .rels
            .get(&RelKey::delta(r.clone(), *k))
            .cloned()
            .ok_or_else(|| Error::UnknownRelation(format!("{} {r}", crate::eval::delta_prefix(*k))))?,
        Expr::LetVar(x) => CostEnv::lookup(&env.lets, x)?.clone(),
        Expr::SngVar(x, path) => CostVal::bag(one(), project(CostEnv::lookup(&env.fors, x)?, path)?.clone()),
        Expr::Pred(_) | Expr::SngUnit => CostVal::bag(one(), CostVal::Unit),
        Expr::Empty(t) => CostVal::bottom(t),
        Expr::DictEmpty(t) => CostVal::bottom(&SchemaType::bag(t.clone())),
        Expr::InL(..) => CostVal::bag(one(), CostVal::Label),
        Expr::SngStar(b, _) => CostVal::bag(one(), go(b, env)?),
        Expr::Sng(b, _) => match env.policy {
            SngPolicy::Strict => return Err(Error::UnrestrictedSingleton(e.to_string())),
            SngPolicy::Permissive => CostVal::bag(one(), go(b, env)?),
        },
        Expr::Flatten(b) => {
            let c = go(b, env)?;
            let (o, inner) = c.as_bag()?;
            let (oi, ii) = inner.as_bag()?;
            CostVal::bag(o.clone() * oi.clone(), ii.clone())
        }
        Expr::For(x, src, body) => {
            let c1 = go(src, env)?;
            let (o1, i1) = c1.as_bag()?;
            env.fors.push((x.clone(), i1.clone()));
            let c2 = go(body, env);
            env.fors.pop();
            let c2 = c2?;
            let (o2, i2) = c2.as_bag()?;
            CostVal::bag(o1.clone() * o2.clone(), i2.clone())
        }
        Expr::Prod(a, b) => {
            let (ca, cb) = (go(a, env)?, go(b, env)?);
            let (o1, i1) = ca.as_bag()?;
            let (o2, i2) = cb.as_bag()?;
            CostVal::bag(o1.clone() * o2.clone(), CostVal::pair(i1.clone(), i2.clone()))
        }
        Expr::Union(a, b) | Expr::DictUnion(a, b) | Expr::DictAdd(a, b) => go(a, env)?.sup(&go(b, env)?)?,
        Expr::Neg(b) => go(b, env)?,
        Expr::Let(x, a, b) => {
            let c = go(a, env)?;
            env.lets.push((x.clone(), c));
            let r = go(b, env);
            env.lets.pop();
            r?
        }
        Expr::DictDef(_, params, body) => {
            let n = params.len();
            env.fors.extend(params.iter().map(|(x, t)| (x.clone(), CostVal::bottom(t))));
            let r = go(body, env);
            env.fors.truncate(env.fors.len() - n);
            r?
        }
        Expr::DictApp(d, _, _) => go(d, env)?,
    })
}
