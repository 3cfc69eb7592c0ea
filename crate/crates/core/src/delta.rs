//! Delta derivation, degrees and higher-order delta stacks.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::expr::{classify, name, uniquify, Expr, Name, NameSupply, Part, Schema};
use crate::simplify::{empty_of, simplify};
use crate::typecheck::{Mode, TypeCx};
use crate::types::SchemaType;

/// What a delta is taken with respect to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DeltaTarget {
    /// All components of a relation; occurrences become update relations
    /// at the given level.
    Relation { name: Name, level: u32 },
    /// A let-bound variable, whose update is bound to `update`.
    LetBound { var: Name, update: Name },
}

impl DeltaTarget {
    pub fn relation(r: &str, level: u32) -> Self {
        DeltaTarget::Relation { name: name(r), level }
    }

    fn mentioned_by(&self, e: &Expr) -> bool {
        match self {
            DeltaTarget::Relation { name, .. } => e.mentions_rel(name),
            DeltaTarget::LetBound { var, .. } => e.mentions_let(var),
        }
    }
}

struct Deriver<'s> {
    supply: &'s mut NameSupply,
}

fn sum(parts: Vec<Option<Expr>>) -> Option<Expr> {
    parts.into_iter().flatten().reduce(Expr::union)
}

/// Syntactically dictionary-valued.
fn is_dict(e: &Expr) -> bool {
    match e {
        Expr::DictDef(..) | Expr::DictUnion(..) | Expr::DictAdd(..) | Expr::DictEmpty(_) => true,
        Expr::Rel(r) | Expr::DeltaRel(r, _) => matches!(r.part, Part::Ctx(_)),
        Expr::Let(_, _, body) => is_dict(body),
        _ => false,
    }
}

fn dict_sum(parts: Vec<Option<Expr>>) -> Option<Expr> {
    parts.into_iter().flatten().reduce(|a, c| Expr::DictAdd(Box::new(a), Box::new(c)))
}

impl Deriver<'_> {
    /// `None` stands for the empty delta.
    fn go(&mut self, e: &Expr, t: &DeltaTarget) -> Result<Option<Expr>> {
        if !t.mentioned_by(e) {
            return Ok(None);
        }
        let b = Box::new;
        Ok(match e {
            Expr::Rel(r) => match t {
                DeltaTarget::Relation { level, .. } => Some(Expr::DeltaRel(r.clone(), *level)),
                DeltaTarget::LetBound { .. } => None,
            },
            Expr::LetVar(_) => match t {
                DeltaTarget::LetBound { update, .. } => Some(Expr::LetVar(update.clone())),
                DeltaTarget::Relation { .. } => None,
            },
            Expr::Sng(..) | Expr::SngStar(..) => return Err(Error::UnrestrictedSingleton(e.to_string())),
            Expr::Flatten(a) => self.go(a, t)?.map(|d| Expr::Flatten(b(d))),
            Expr::Neg(a) => self.go(a, t)?.map(|d| Expr::Neg(b(d))),
            Expr::Union(l, r) => sum(vec![self.go(l, t)?, self.go(r, t)?]),
            Expr::For(x, src, body) => {
                let ds = self.go(src, t)?;
                let db = self.go(body, t)?;
                let f = |s: &Expr, bd: &Expr| Expr::For(x.clone(), b(s.clone()), b(bd.clone()));
                sum(vec![
                    ds.as_ref().map(|ds| f(ds, body)),
                    db.as_ref().map(|db| f(src, db)),
                    ds.as_ref().zip(db.as_ref()).map(|(ds, db)| f(ds, db)),
                ])
            }
            Expr::Prod(l, r) => {
                let dl = self.go(l, t)?;
                let dr = self.go(r, t)?;
                let p = |a: &Expr, c: &Expr| Expr::prod(a.clone(), c.clone());
                sum(vec![
                    dl.as_ref().map(|dl| p(dl, r)),
                    dr.as_ref().map(|dr| p(l, dr)),
                    dl.as_ref().zip(dr.as_ref()).map(|(dl, dr)| p(dl, dr)),
                ])
            }
            Expr::Let(x, bound, body) => {
                let dt_body = self.go(body, t)?;
                let Some(dx) = self.go(bound, t)? else {
                    return Ok(dt_body.map(|d| Expr::Let(x.clone(), bound.clone(), b(d))));
                };
                let update = self.supply.fresh(&format!("d{x}"));
                let tx = DeltaTarget::LetBound { var: x.clone(), update: update.clone() };
                let dx_body = self.go(body, &tx)?;
                let dt_dx_body = match &dx_body {
                    Some(d) => self.go(d, t)?,
                    None => None,
                };
                let parts = vec![dt_body, dx_body, dt_dx_body];
                let total = if is_dict(body) { dict_sum(parts) } else { sum(parts) };
                total.map(|s| Expr::Let(x.clone(), bound.clone(), b(Expr::Let(update, b(dx), b(s)))))
            }
            Expr::DictDef(i, params, body) => self.go(body, t)?.map(|d| Expr::DictDef(*i, params.clone(), b(d))),
            Expr::DictApp(d, x, p) => self.go(d, t)?.map(|dd| Expr::DictApp(b(dd), x.clone(), p.clone())),
            Expr::DictUnion(l, r) => match (self.go(l, t)?, self.go(r, t)?) {
                (Some(a), Some(c)) => Some(Expr::DictUnion(b(a), b(c))),
                (a, c) => a.or(c),
            },
            Expr::DictAdd(l, r) => match (self.go(l, t)?, self.go(r, t)?) {
                (Some(a), Some(c)) => Some(Expr::DictAdd(b(a), b(c))),
                (a, c) => a.or(c),
            },
            Expr::DeltaRel(..)
            | Expr::SngVar(..)
            | Expr::Pred(_)
            | Expr::Empty(_)
            | Expr::SngUnit
            | Expr::InL(..)
            | Expr::DictEmpty(_) => None,
        })
    }
}

/// Derives and simplifies the delta of `e` with respect to `target`.
///
/// `lets` and `fors` type the free variables of `e`. Singletons with
/// input-dependent bodies are rejected: shred the query first.
pub fn delta_in(
    e: &Expr,
    target: &DeltaTarget,
    schema: &Schema,
    lets: &[(Name, SchemaType)],
    fors: &[(Name, SchemaType)],
) -> Result<Expr> {
    let mut supply = NameSupply::for_expr(e);
    for (x, _) in lets.iter().chain(fors) {
        supply.reserve(x);
    }
    if let DeltaTarget::LetBound { update, .. } = target {
        supply.reserve(update);
    }
    let u = uniquify(&classify(e), &mut supply);
    let mut cx = TypeCx::new(schema, Mode::Nrc);
    for (x, t) in lets {
        cx.push_let(x, t.clone(), true);
    }
    if let DeltaTarget::LetBound { var, update } = target {
        let t = cx.let_type(var)?.clone();
        cx.push_let(update, t, false);
    }
    for (x, t) in fors {
        cx.push_for(x, t.clone());
    }
    let d = Deriver { supply: &mut supply }.go(&u, target)?;
    match d {
        Some(d) => Ok(simplify(&d, &mut cx)?.0),
        None => Ok(empty_of(&cx.check(&u)?)),
    }
}

/// Delta of a closed query with respect to updates of relation `rel` at
/// the given level.
pub fn delta(e: &Expr, rel: &str, level: u32, schema: &Schema) -> Result<Expr> {
    delta_in(e, &DeltaTarget::relation(rel, level), schema, &[], &[])
}

/// Which relation occurrences count towards a degree.
#[derive(Clone, Copy, Debug)]
pub enum DegreeOf<'a> {
    AllRelations,
    Relation(&'a str),
}

/// Degree of `e`, given the degrees of its free let-variables.
pub fn degree(e: &Expr, phi: &BTreeMap<Name, u32>) -> Result<u32> {
    degree_of(e, phi, DegreeOf::AllRelations)
}

/// Degree counting only occurrences selected by `of`.
pub fn degree_of(e: &Expr, phi: &BTreeMap<Name, u32>, of: DegreeOf<'_>) -> Result<u32> {
    let mut phi: Vec<(Name, u32)> = phi.iter().map(|(k, v)| (k.clone(), *v)).collect();
    deg(&classify(e), &mut phi, of)
}

fn deg(e: &Expr, phi: &mut Vec<(Name, u32)>, of: DegreeOf<'_>) -> Result<u32> {
    Ok(match e {
        Expr::Rel(r) => match of {
            DegreeOf::AllRelations => 1,
            DegreeOf::Relation(x) => u32::from(&*r.base == x),
        },
        Expr::LetVar(x) => {
            phi.iter().rev().find(|(y, _)| y == x).map(|(_, d)| *d).ok_or_else(|| Error::UnboundVariable(x.to_string()))?
        }
        Expr::Sng(..) => return Err(Error::UnrestrictedSingleton(e.to_string())),
        Expr::For(_, a, b) | Expr::Prod(a, b) => deg(a, phi, of)? + deg(b, phi, of)?,
        Expr::Union(a, b) | Expr::DictUnion(a, b) | Expr::DictAdd(a, b) => deg(a, phi, of)?.max(deg(b, phi, of)?),
        Expr::Flatten(a) | Expr::Neg(a) | Expr::DictDef(_, _, a) | Expr::DictApp(a, _, _) => deg(a, phi, of)?,
        Expr::Let(x, a, b) => {
            let d = deg(a, phi, of)?;
            phi.push((x.clone(), d));
            let r = deg(b, phi, of);
            phi.pop();
            r?
        }
        Expr::DeltaRel(..)
        | Expr::SngStar(..)
        | Expr::SngVar(..)
        | Expr::Pred(_)
        | Expr::Empty(_)
        | Expr::SngUnit
        | Expr::InL(..)
        | Expr::DictEmpty(_) => 0,
    })
}

/// Higher-order deltas of a query for one relation: level `i` is the
/// `i`-th delta, over updates at levels `1..=i`. The last level no longer
/// depends on the relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeltaStack {
    pub relation: Name,
    pub levels: Vec<Expr>,
}

impl DeltaStack {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }
}

/// Builds the delta stack of a closed query for `rel`.
pub fn delta_stack(e: &Expr, rel: &str, schema: &Schema) -> Result<DeltaStack> {
    let of = DegreeOf::Relation(rel);
    let empty = BTreeMap::new();
    let mut levels = vec![e.clone()];
    let mut d = degree_of(e, &empty, of)?;
    while d > 0 {
        let k = levels.len() as u32;
        let next = delta(levels.last().expect("nonempty"), rel, k, schema)?;
        let nd = degree_of(&next, &empty, of)?;
        debug_assert!(nd < d, "degree must decrease along a delta stack");
        if nd >= d {
            return Err(Error::State(format!("delta of degree {d} query has degree {nd}")));
        }
        levels.push(next);
        d = nd;
    }
    Ok(DeltaStack { relation: name(rel), levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_query, parse_type};

    fn schema() -> Schema {
        Schema::new()
            .with("R", parse_type("Bag(Bag(Base))").unwrap())
            .with("S", parse_type("Bag(<Base, Base>)").unwrap())
    }

    fn d(src: &str, rel: &str) -> String {
        delta(&parse_query(src).unwrap(), rel, 1, &schema()).unwrap().to_string()
    }

    #[test]
    fn filter_delta_filters_the_update() {
        assert_eq!(
            d("for x in S where x.1 == x.2 union sng(x)", "S"),
            "for x in delta S where x.1 == x.2 union sng(x)"
        );
    }

    #[test]
    fn base_cases() {
        assert_eq!(d("S", "S"), "delta S");
        assert_eq!(d("for x in S union sng(x)", "R"), "empty[Bag(<Base, Base>)]");
        assert_eq!(d("for x in S union sng(sng(x))", "S"), "for x in delta S union sng(sng(x))");
    }

    #[test]
    fn product_has_three_summands() {
        assert_eq!(
            d("flatten R * flatten R", "R"),
            "flatten delta R * flatten R + flatten R * flatten delta R + flatten delta R * flatten delta R"
        );
    }

    #[test]
    fn unrestricted_singletons_are_refused() {
        let e = parse_query("sng(R)").unwrap();
        assert!(matches!(delta(&e, "R", 1, &schema()), Err(Error::UnrestrictedSingleton(_))));
    }

    #[test]
    fn let_rule() {
        let out = d("let X = flatten R in X * X", "R");
        assert!(out.starts_with("let X = flatten R in let dX = flatten delta R in"), "{out}");
        let dead = d("let X = S in flatten R", "S");
        assert_eq!(dead, "empty[Bag(Base)]");
    }

    #[test]
    fn degrees() {
        let none = BTreeMap::new();
        let q = |s: &str| parse_query(s).unwrap();
        assert_eq!(degree(&q("R"), &none).unwrap(), 1);
        assert_eq!(degree(&q("delta R"), &none).unwrap(), 0);
        assert_eq!(degree(&q("flatten R * flatten R"), &none).unwrap(), 2);
        assert_eq!(degree(&q("let X = R * R in flatten R + X"), &none).unwrap(), 2);
    }

    #[test]
    fn stack_of_self_product() {
        let st = delta_stack(&parse_query("flatten R * flatten R").unwrap(), "R", &schema()).unwrap();
        assert_eq!(st.depth(), 2);
        assert_eq!(
            st.levels[2].to_string(),
            "flatten delta R * flatten delta' R + flatten delta' R * flatten delta R"
        );
        let flat = delta_stack(&parse_query("for x in S union sng(x)").unwrap(), "R", &schema()).unwrap();
        assert_eq!(flat.depth(), 0);
    }
}
