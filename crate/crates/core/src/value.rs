//! Values of the calculus: atoms, tuples, generalized bags, labels and
//! dictionaries.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::dict::DictVal;
use crate::error::{Error, Result};
use crate::scalar::Multiplicity;
use crate::types::SchemaType;

/// Payload of a `Base` value. Integers order before strings.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Int(i64),
    Str(Arc<str>),
}

impl From<i64> for Atom {
    fn from(n: i64) -> Self {
        Atom::Int(n)
    }
}

impl From<&str> for Atom {
    fn from(s: &str) -> Self {
        Atom::Str(Arc::from(s))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Int(n) => write!(f, "{n}"),
            Atom::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
        }
    }
}

/// A label `⟨ι, ε⟩`: a static index paired with a value environment.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label<M = i64> {
    pub index: u64,
    pub env: Value<M>,
}

impl<M> Label<M> {
    pub fn new(index: u64, env: Value<M>) -> Self {
        Label { index, env }
    }
}

/// A value. The derived order is the canonical order used for bag keys and
/// rendering: unit, atoms, pairs, bags, labels, dictionaries.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value<M = i64> {
    Unit,
    Atom(Atom),
    Pair(Arc<(Value<M>, Value<M>)>),
    Bag(Bag<M>),
    Label(Arc<Label<M>>),
    Dict(Arc<DictVal<M>>),
}

impl<M: Multiplicity> Value<M> {
    pub fn int(n: i64) -> Self {
        Value::Atom(Atom::Int(n))
    }

    pub fn str(s: &str) -> Self {
        Value::Atom(Atom::Str(Arc::from(s)))
    }

    pub fn pair(a: Value<M>, b: Value<M>) -> Self {
        Value::Pair(Arc::new((a, b)))
    }

    pub fn label(index: u64, env: Value<M>) -> Self {
        Value::Label(Arc::new(Label::new(index, env)))
    }

    /// Right-nested tuple; one component is returned bare, none is unit.
    pub fn tuple(mut items: Vec<Value<M>>) -> Self {
        match items.len() {
            0 => Value::Unit,
            1 => items.pop().unwrap(),
            _ => {
                let last = items.pop().unwrap();
                items.into_iter().rev().fold(last, |acc, v| Value::pair(v, acc))
            }
        }
    }

    /// Splits a right-nested tuple into `n` components, the inverse of [`Value::tuple`].
    pub fn untuple(&self, n: usize) -> Option<Vec<Value<M>>> {
        match n {
            0 => matches!(self, Value::Unit).then(Vec::new),
            1 => Some(vec![self.clone()]),
            _ => {
                let mut out = Vec::with_capacity(n);
                let mut cur = self;
                for _ in 0..n - 1 {
                    let Value::Pair(p) = cur else { return None };
                    out.push(p.0.clone());
                    cur = &p.1;
                }
                out.push(cur.clone());
                Some(out)
            }
        }
    }

    pub fn as_bag(&self) -> Option<&Bag<M>> {
        match self {
            Value::Bag(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_dict(&self) -> Option<&Arc<DictVal<M>>> {
        match self {
            Value::Dict(d) => Some(d),
            _ => None,
        }
    }

    pub fn as_label(&self) -> Option<&Label<M>> {
        match self {
            Value::Label(l) => Some(l),
            _ => None,
        }
    }

    pub fn into_bag(self, context: &str) -> Result<Bag<M>> {
        match self {
            Value::Bag(b) => Ok(b),
            other => Err(Error::mismatch(context, "a bag", other.kind())),
        }
    }

    pub fn into_dict(self, context: &str) -> Result<Arc<DictVal<M>>> {
        match self {
            Value::Dict(d) => Ok(d),
            other => Err(Error::mismatch(context, "a dictionary", other.kind())),
        }
    }

    /// Follows a tuple projection path.
    pub fn project(&self, path: &[u8]) -> Option<&Value<M>> {
        let mut v = self;
        for &step in path {
            let Value::Pair(p) = v else { return None };
            v = if step == 1 { &p.0 } else { &p.1 };
        }
        Some(v)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Value::Unit => "unit",
            Value::Atom(_) => "atom",
            Value::Pair(_) => "pair",
            Value::Bag(_) => "bag",
            Value::Label(_) => "label",
            Value::Dict(_) => "dictionary",
        }
    }

    /// Whether this value inhabits `ty`. Dictionaries are checked only
    /// through their materialized entries.
    pub fn has_type(&self, ty: &SchemaType) -> bool {
        match (self, ty) {
            (Value::Unit, SchemaType::Unit) => true,
            (Value::Atom(_), SchemaType::Base) => true,
            (Value::Label(_), SchemaType::Label) => true,
            (Value::Pair(p), SchemaType::Prod(a, b)) => p.0.has_type(a) && p.1.has_type(b),
            (Value::Bag(bag), SchemaType::Bag(c)) => bag.iter().all(|(v, _)| v.has_type(c)),
            (Value::Dict(d), SchemaType::Dict(c)) => d.materialized_entries().iter().all(|(_, bag)| {
                bag.iter().all(|(v, _)| v.has_type(c))
            }),
            _ => false,
        }
    }

    /// Every label occurring in this value, outside of dictionaries.
    pub fn labels(&self, out: &mut Vec<Label<M>>) {
        match self {
            Value::Unit | Value::Atom(_) | Value::Dict(_) => {}
            Value::Pair(p) => {
                p.0.labels(out);
                p.1.labels(out);
            }
            Value::Bag(b) => b.iter().for_each(|(v, _)| v.labels(out)),
            Value::Label(l) => out.push((**l).clone()),
        }
    }
}

impl<M: Multiplicity> From<Atom> for Value<M> {
    fn from(a: Atom) -> Self {
        Value::Atom(a)
    }
}

impl<M: Multiplicity> From<Bag<M>> for Value<M> {
    fn from(b: Bag<M>) -> Self {
        Value::Bag(b)
    }
}

/// A generalized bag: a finite map from values to nonzero integer
/// multiplicities. Cloning is cheap; mutation copies on write.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bag<M = i64>(Arc<BTreeMap<Value<M>, M>>);

impl<M: Multiplicity> Default for Bag<M> {
    fn default() -> Self {
        Bag(Arc::new(BTreeMap::new()))
    }
}

impl<M: Multiplicity> Bag<M> {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn singleton(v: Value<M>) -> Self {
        let mut map = BTreeMap::new();
        map.insert(v, M::one());
        Bag(Arc::new(map))
    }

    /// Builds a bag from possibly repeated, possibly cancelling entries.
    pub fn from_entries(entries: impl IntoIterator<Item = (Value<M>, M)>) -> Result<Self> {
        let mut b = BagBuilder::new();
        for (v, m) in entries {
            b.add(v, m)?;
        }
        Ok(b.finish())
    }

    /// Shorthand for tests and examples: every value with multiplicity one.
    pub fn of(values: impl IntoIterator<Item = Value<M>>) -> Self {
        Self::from_entries(values.into_iter().map(|v| (v, M::one()))).expect("unit multiplicities cannot overflow")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Value<M>, &M)> + '_ {
        self.0.iter()
    }

    pub fn get(&self, v: &Value<M>) -> M {
        self.0.get(v).cloned().unwrap_or_else(M::zero)
    }

    pub fn contains(&self, v: &Value<M>) -> bool {
        self.0.contains_key(v)
    }

    /// Sum of the magnitudes of all multiplicities.
    pub fn card(&self) -> u64 {
        self.0.values().map(|m| m.abs().to_u64().unwrap_or(u64::MAX)).fold(0u64, |a, b| a.saturating_add(b))
    }

    pub fn add(&self, other: &Bag<M>) -> Result<Bag<M>> {
        let (mut big, small) = if self.len() >= other.len() { (self.clone(), other) } else { (other.clone(), self) };
        big.add_assign(small)?;
        Ok(big)
    }

    pub fn add_assign(&mut self, other: &Bag<M>) -> Result<()> {
        if other.is_empty() {
            return Ok(());
        }
        let map = Arc::make_mut(&mut self.0);
        for (v, m) in other.iter() {
            add_entry(map, v.clone(), m.clone())?;
        }
        Ok(())
    }

    pub fn neg(&self) -> Bag<M> {
        Bag(Arc::new(self.0.iter().map(|(v, m)| (v.clone(), -m.clone())).collect()))
    }

    pub fn scale(&self, k: &M) -> Result<Bag<M>> {
        if k.is_one() {
            return Ok(self.clone());
        }
        let mut map = BTreeMap::new();
        for (v, m) in self.iter() {
            map.insert(v.clone(), m.checked_mul(k).ok_or(Error::MultiplicityOverflow)?);
        }
        Ok(Bag(Arc::new(map)))
    }

    pub fn map_values(&self) -> &BTreeMap<Value<M>, M> {
        &self.0
    }
}

fn add_entry<M: Multiplicity>(map: &mut BTreeMap<Value<M>, M>, v: Value<M>, m: M) -> Result<()> {
    use std::collections::btree_map::Entry;
    if m.is_zero() {
        return Ok(());
    }
    match map.entry(v) {
        Entry::Vacant(e) => {
            e.insert(m);
        }
        Entry::Occupied(mut e) => {
            let sum = e.get().checked_add(&m).ok_or(Error::MultiplicityOverflow)?;
            if sum.is_zero() {
                e.remove();
            } else {
                *e.get_mut() = sum;
            }
        }
    }
    Ok(())
}

/// Accumulates entries and drops zero multiplicities.
#[derive(Debug)]
pub struct BagBuilder<M = i64> {
    map: BTreeMap<Value<M>, M>,
}

impl<M: Multiplicity> Default for BagBuilder<M> {
    fn default() -> Self {
        Self::new()
    }
}

impl<M: Multiplicity> BagBuilder<M> {
    pub fn new() -> Self {
        BagBuilder { map: BTreeMap::new() }
    }

    pub fn add(&mut self, v: Value<M>, m: M) -> Result<()> {
        add_entry(&mut self.map, v, m)
    }

    /// Adds `bag` scaled by `k`.
    pub fn add_bag(&mut self, bag: &Bag<M>, k: &M) -> Result<()> {
        for (v, m) in bag.iter() {
            let m = if k.is_one() { m.clone() } else { m.checked_mul(k).ok_or(Error::MultiplicityOverflow)? };
            add_entry(&mut self.map, v.clone(), m)?;
        }
        Ok(())
    }

    pub fn finish(self) -> Bag<M> {
        Bag(Arc::new(self.map))
    }
}

impl<M: Multiplicity> fmt::Display for Bag<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("{ }");
        }
        f.write_str("{ ")?;
        for (i, (v, m)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}")?;
            if !m.is_one() {
                write!(f, " : {m}")?;
            }
        }
        f.write_str(" }")
    }
}

impl<M: Multiplicity> fmt::Display for Label<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@({}, {})", self.index, self.env)
    }
}

impl<M: Multiplicity> fmt::Display for Value<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => f.write_str("<>"),
            Value::Atom(a) => write!(f, "{a}"),
            Value::Pair(p) => {
                write!(f, "<{}", p.0)?;
                let mut rest = &p.1;
                while let Value::Pair(q) = rest {
                    write!(f, ", {}", q.0)?;
                    rest = &q.1;
                }
                write!(f, ", {rest}>")
            }
            Value::Bag(b) => write!(f, "{b}"),
            Value::Label(l) => write!(f, "{l}"),
            Value::Dict(d) => write!(f, "{d}"),
        }
    }
}

/// Pointwise sum of two bag values.
pub fn bag_add<M: Multiplicity>(a: &Value<M>, b: &Value<M>) -> Result<Value<M>> {
    match (a, b) {
        (Value::Bag(x), Value::Bag(y)) => Ok(Value::Bag(x.add(y)?)),
        (Value::Bag(_), other) | (other, _) => Err(Error::mismatch("bag addition", "a bag", other.kind())),
    }
}

/// Negates every multiplicity of a bag value.
pub fn bag_neg<M: Multiplicity>(a: &Value<M>) -> Result<Value<M>> {
    match a {
        Value::Bag(x) => Ok(Value::Bag(x.neg())),
        other => Err(Error::mismatch("bag negation", "a bag", other.kind())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: &str) -> Value {
        Value::str(x)
    }

    #[test]
    fn cancellation_drops_zero_entries() {
        let a = Bag::from_entries([(s("a"), 1), (s("b"), 2)]).unwrap();
        let b = Bag::from_entries([(s("b"), -2), (s("c"), 1)]).unwrap();
        assert_eq!(a.add(&b).unwrap(), Bag::of([s("a"), s("c")]));
        let three = Bag::from_entries([(s("a"), 3)]).unwrap();
        assert_eq!(three.neg().get(&s("a")), -3);
        assert!(three.add(&three.neg()).unwrap().is_empty());
    }

    #[test]
    fn canonical_order() {
        let vals: Vec<Value> = vec![
            Value::Dict(Arc::new(DictVal::empty())),
            Value::label(1, Value::Unit),
            Value::Bag(Bag::empty()),
            Value::pair(Value::int(1), Value::Unit),
            s("a"),
            Value::int(7),
            Value::Unit,
        ];
        let mut sorted = vals.clone();
        sorted.sort();
        let rev: Vec<Value> = vals.into_iter().rev().collect();
        assert_eq!(sorted, rev);
    }

    #[test]
    fn render_is_canonical() {
        let b = Bag::from_entries([(s("b"), 1), (s("a"), -3), (Value::int(2), 2)]).unwrap();
        assert_eq!(b.to_string(), "{ 2 : 2, \"a\" : -3, \"b\" }");
        assert_eq!(Bag::<i64>::empty().to_string(), "{ }");
        let t: Value = Value::tuple(vec![s("x"), Value::int(1), Value::Unit]);
        assert_eq!(t.to_string(), "<\"x\", 1, <>>");
        assert_eq!(t.untuple(3).unwrap()[1], Value::int(1));
    }

    #[test]
    fn overflow_is_reported() {
        let mut b = BagBuilder::<i64>::new();
        b.add(s("a"), i64::MAX).unwrap();
        assert_eq!(b.add(s("a"), 1), Err(Error::MultiplicityOverflow));
    }
}
