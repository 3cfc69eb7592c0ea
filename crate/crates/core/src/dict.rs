//! Label dictionaries: finite maps from labels to bags, plus symbolic
//! generators and lazy unions and sums over them.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::eval::{eval_in, Counter, Db, Env};
use crate::expr::{Expr, Name};
use crate::scalar::Multiplicity;
use crate::value::{Bag, Label};

/// A dictionary value.
///
/// The support of a materialized dictionary is exactly its key set, so a
/// label may be defined as the empty bag. A generator defines every label
/// carrying its index. Lookups of labels outside the support yield the empty
/// bag.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DictVal<M = i64> {
    Mat(Arc<BTreeMap<Label<M>, Bag<M>>>),
    Gen(Generator<M>),
    Union(Vec<Arc<DictVal<M>>>),
    Sum(Vec<Arc<DictVal<M>>>),
}

/// Closure produced by evaluating a dictionary definition `[ι(Π) ↦ body]`.
#[derive(Clone, Debug)]
pub struct Generator<M = i64> {
    pub index: u64,
    pub params: Vec<Name>,
    pub body: Arc<Expr>,
    /// Bindings of the free variables of the definition at capture time.
    pub env: Env<M>,
    pub db: Arc<Db<M>>,
}

impl<M> Generator<M> {
    fn key(&self) -> (u64, &[Name], &Expr, &Env<M>) {
        (self.index, &self.params, &self.body, &self.env)
    }
}

impl<M: PartialEq> PartialEq for Generator<M> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<M: Eq> Eq for Generator<M> {}

impl<M: PartialOrd> PartialOrd for Generator<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.key().partial_cmp(&other.key())
    }
}

impl<M: Ord> Ord for Generator<M> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl<M: Hash> Hash for Generator<M> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

/// Labels that may have a nonempty definition in a dictionary.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SupportHint<M = i64> {
    /// Every label with one of these indices may be defined.
    pub indices: BTreeSet<u64>,
    pub labels: BTreeSet<Label<M>>,
}

impl<M: Multiplicity> SupportHint<M> {
    pub fn covers(&self, l: &Label<M>) -> bool {
        self.indices.contains(&l.index) || self.labels.contains(l)
    }
}

impl<M: Multiplicity> Default for DictVal<M> {
    fn default() -> Self {
        DictVal::empty()
    }
}

impl<M: Multiplicity> DictVal<M> {
    pub fn empty() -> Self {
        DictVal::Mat(Arc::new(BTreeMap::new()))
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (Label<M>, Bag<M>)>) -> Self {
        DictVal::Mat(Arc::new(entries.into_iter().collect()))
    }

    pub fn as_mat(&self) -> Option<&BTreeMap<Label<M>, Bag<M>>> {
        match self {
            DictVal::Mat(m) => Some(m),
            _ => None,
        }
    }

    /// Whether `l` is in the support.
    pub fn defines(&self, l: &Label<M>) -> bool {
        match self {
            DictVal::Mat(m) => m.contains_key(l),
            DictVal::Gen(g) => g.index == l.index,
            DictVal::Union(ds) | DictVal::Sum(ds) => ds.iter().any(|d| d.defines(l)),
        }
    }

    pub fn support_hint(&self) -> SupportHint<M> {
        let mut h = SupportHint { indices: BTreeSet::new(), labels: BTreeSet::new() };
        self.collect_hint(&mut h);
        h
    }

    fn collect_hint(&self, h: &mut SupportHint<M>) {
        match self {
            DictVal::Mat(m) => h.labels.extend(m.keys().cloned()),
            DictVal::Gen(g) => {
                h.indices.insert(g.index);
            }
            DictVal::Union(ds) | DictVal::Sum(ds) => ds.iter().for_each(|d| d.collect_hint(h)),
        }
    }

    /// Definition of `l`; the empty bag outside the support.
    pub fn lookup(&self, l: &Label<M>, counter: &Counter) -> Result<Bag<M>> {
        match self {
            DictVal::Mat(m) => Ok(m.get(l).cloned().unwrap_or_default()),
            DictVal::Gen(g) => {
                if g.index != l.index {
                    return Ok(Bag::empty());
                }
                let args = l.env.untuple(g.params.len()).ok_or_else(|| {
                    Error::mismatch("label environment", format!("{} components", g.params.len()), &l.env)
                })?;
                let mut env = g.env.clone();
                for (p, v) in g.params.iter().zip(args) {
                    env.fors.push((p.clone(), v));
                }
                eval_in(&g.body, &mut env, &g.db, counter)?.into_bag("dictionary definition")
            }
            DictVal::Union(ds) => {
                let mut found: Option<(&Arc<DictVal<M>>, Bag<M>)> = None;
                for d in ds {
                    if !d.defines(l) {
                        continue;
                    }
                    match &found {
                        None => found = Some((d, d.lookup(l, counter)?)),
                        Some((prev, def)) => {
                            if same_generator(prev, d) {
                                continue;
                            }
                            let other = d.lookup(l, counter)?;
                            if &other != def {
                                return Err(Error::DictUnionConflict {
                                    label: l.to_string(),
                                    left: def.to_string(),
                                    right: other.to_string(),
                                });
                            }
                        }
                    }
                }
                Ok(found.map(|f| f.1).unwrap_or_default())
            }
            DictVal::Sum(ds) => {
                let mut acc = Bag::empty();
                for d in ds {
                    acc.add_assign(&d.lookup(l, counter)?)?;
                }
                Ok(acc)
            }
        }
    }

    /// Label union. Materialized operands are merged eagerly and conflicts
    /// reported immediately; anything symbolic is combined lazily.
    pub fn label_union(a: &Arc<Self>, b: &Arc<Self>) -> Result<Arc<Self>> {
        if let (Some(x), Some(y)) = (a.as_mat(), b.as_mat()) {
            return dict_label_union_mat(x, y).map(|m| Arc::new(DictVal::Mat(Arc::new(m))));
        }
        if a.is_trivially_empty() {
            return Ok(b.clone());
        }
        if b.is_trivially_empty() {
            return Ok(a.clone());
        }
        let mut parts = Vec::new();
        for d in [a, b] {
            match &**d {
                DictVal::Union(ds) => parts.extend(ds.iter().cloned()),
                _ => parts.push(d.clone()),
            }
        }
        Ok(Arc::new(DictVal::Union(parts)))
    }

    /// Pointwise bag addition of definitions.
    pub fn add(a: &Arc<Self>, b: &Arc<Self>) -> Result<Arc<Self>> {
        if let (Some(x), Some(y)) = (a.as_mat(), b.as_mat()) {
            return dict_add_mat(x, y).map(|m| Arc::new(DictVal::Mat(Arc::new(m))));
        }
        if a.is_trivially_empty() {
            return Ok(b.clone());
        }
        if b.is_trivially_empty() {
            return Ok(a.clone());
        }
        let mut parts = Vec::new();
        for d in [a, b] {
            match &**d {
                DictVal::Sum(ds) => parts.extend(ds.iter().cloned()),
                _ => parts.push(d.clone()),
            }
        }
        Ok(Arc::new(DictVal::Sum(parts)))
    }

    pub fn is_trivially_empty(&self) -> bool {
        matches!(self, DictVal::Mat(m) if m.is_empty())
    }

    /// Entries of the materialized parts, without evaluating generators.
    pub fn materialized_entries(&self) -> Vec<(Label<M>, Bag<M>)> {
        match self {
            DictVal::Mat(m) => m.iter().map(|(l, b)| (l.clone(), b.clone())).collect(),
            DictVal::Gen(_) => vec![],
            DictVal::Union(ds) | DictVal::Sum(ds) => ds.iter().flat_map(|d| d.materialized_entries()).collect(),
        }
    }

    /// Materializes the definitions of the given labels.
    pub fn materialize<'a>(
        &self,
        labels: impl IntoIterator<Item = &'a Label<M>>,
        counter: &Counter,
    ) -> Result<BTreeMap<Label<M>, Bag<M>>> {
        let mut out = BTreeMap::new();
        for l in labels {
            if self.defines(l) {
                out.insert(l.clone(), self.lookup(l, counter)?);
            }
        }
        Ok(out)
    }
}

fn same_generator<M: Multiplicity>(a: &DictVal<M>, b: &DictVal<M>) -> bool {
    matches!((a, b), (DictVal::Gen(x), DictVal::Gen(y)) if x == y)
}

fn dict_label_union_mat<M: Multiplicity>(
    a: &BTreeMap<Label<M>, Bag<M>>,
    b: &BTreeMap<Label<M>, Bag<M>>,
) -> Result<BTreeMap<Label<M>, Bag<M>>> {
    let (big, small) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut out = big.clone();
    for (l, def) in small {
        match out.get(l) {
            Some(existing) if existing != def => {
                let (left, right) = if std::ptr::eq(big, a) { (existing, def) } else { (def, existing) };
                return Err(Error::DictUnionConflict {
                    label: l.to_string(),
                    left: left.to_string(),
                    right: right.to_string(),
                });
            }
            Some(_) => {}
            None => {
                out.insert(l.clone(), def.clone());
            }
        }
    }
    Ok(out)
}

fn dict_add_mat<M: Multiplicity>(
    a: &BTreeMap<Label<M>, Bag<M>>,
    b: &BTreeMap<Label<M>, Bag<M>>,
) -> Result<BTreeMap<Label<M>, Bag<M>>> {
    let (big, small) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut out = big.clone();
    for (l, def) in small {
        match out.get_mut(l) {
            Some(existing) => existing.add_assign(def)?,
            None => {
                out.insert(l.clone(), def.clone());
            }
        }
    }
    Ok(out)
}

/// Label union of two dictionaries; fails when a shared label has two
/// different definitions.
pub fn dict_label_union<M: Multiplicity>(a: &DictVal<M>, b: &DictVal<M>) -> Result<DictVal<M>> {
    Ok((*DictVal::label_union(&Arc::new(a.clone()), &Arc::new(b.clone()))?).clone())
}

/// Pointwise addition of two dictionaries over the union of their supports.
pub fn dict_add<M: Multiplicity>(a: &DictVal<M>, b: &DictVal<M>) -> Result<DictVal<M>> {
    Ok((*DictVal::add(&Arc::new(a.clone()), &Arc::new(b.clone()))?).clone())
}

impl<M: Multiplicity> fmt::Display for DictVal<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DictVal::Mat(m) => {
                if m.is_empty() {
                    return f.write_str("[ ]");
                }
                f.write_str("[ ")?;
                for (i, (l, b)) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{l} => {b}")?;
                }
                f.write_str(" ]")
            }
            DictVal::Gen(g) => {
                write!(f, "[@{}(", g.index)?;
                for (i, p) in g.params.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ") |-> {}]", g.body)
            }
            DictVal::Union(ds) | DictVal::Sum(ds) => {
                let op = if matches!(self, DictVal::Union(_)) { " \\/ " } else { " (+) " };
                f.write_str("(")?;
                for (i, d) in ds.iter().enumerate() {
                    if i > 0 {
                        f.write_str(op)?;
                    }
                    write!(f, "{d}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Value;

    fn l(i: u64) -> Label {
        Label::new(i, Value::Unit)
    }

    fn b(xs: &[&str]) -> Bag {
        Bag::of(xs.iter().map(|x| Value::str(x)))
    }

    #[test]
    fn union_agrees_on_shared_labels() {
        let d1 = DictVal::from_entries([(l(1), b(&["b1"])), (l(2), b(&["b2", "b3"]))]);
        let d2 = DictVal::from_entries([(l(2), b(&["b2", "b3"])), (l(3), b(&["b4"]))]);
        let u = dict_label_union(&d1, &d2).unwrap();
        assert_eq!(u, DictVal::from_entries([(l(1), b(&["b1"])), (l(2), b(&["b2", "b3"])), (l(3), b(&["b4"]))]));
        let bad = DictVal::from_entries([(l(2), b(&["b5"])), (l(3), b(&["b4"]))]);
        assert!(matches!(dict_label_union(&d1, &bad), Err(Error::DictUnionConflict { .. })));
        assert_eq!(dict_label_union(&d1, &DictVal::empty()).unwrap(), d1);
    }

    #[test]
    fn addition_modifies_definitions() {
        let d1 = DictVal::from_entries([(l(2), b(&["b2", "b3"]))]);
        let d2 = DictVal::from_entries([(l(2), b(&["b5"]))]);
        assert_eq!(dict_add(&d1, &d2).unwrap(), DictVal::from_entries([(l(2), b(&["b2", "b3", "b5"]))]));
    }

    #[test]
    fn lookup_outside_support_is_empty() {
        let d = DictVal::from_entries([(l(1), b(&["x"]))]);
        assert!(d.lookup(&l(9), &Counter::default()).unwrap().is_empty());
        assert!(!d.defines(&l(9)));
    }
}
