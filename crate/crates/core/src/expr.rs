//! Abstract syntax of the calculus and its label extension.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::types::{render_path, CtxPath, SchemaType};
use crate::value::Atom;

pub type Name = Arc<str>;

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

/// Which component of a relation an occurrence refers to.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Part {
    /// The nested relation itself.
    Whole,
    /// Flat component `R^F`.
    Flat,
    /// Dictionary of the context `R^G` at a path.
    Ctx(CtxPath),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelName {
    pub base: Name,
    pub part: Part,
}

impl RelName {
    pub fn whole(base: &str) -> Self {
        RelName { base: name(base), part: Part::Whole }
    }

    pub fn flat(base: &str) -> Self {
        RelName { base: name(base), part: Part::Flat }
    }

    pub fn ctx(base: &str, path: CtxPath) -> Self {
        RelName { base: name(base), part: Part::Ctx(path) }
    }
}

impl fmt::Display for RelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.part {
            Part::Whole => write!(f, "{}", self.base),
            Part::Flat => write!(f, "{}^F", self.base),
            Part::Ctx(p) => write!(f, "{}^G{}", self.base, render_path(p)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
        }
    }
}

/// Operand of a comparison: a projection of a for-bound variable or a constant.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(Name, Vec<u8>),
    Const(Atom),
}

/// Boolean combination of comparisons over flat tuples.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pred {
    Cmp(CmpOp, Term, Term),
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
}

impl Pred {
    pub fn vars(&self, out: &mut Vec<Name>) {
        match self {
            Pred::Cmp(_, a, b) => {
                for t in [a, b] {
                    if let Term::Var(x, _) = t {
                        out.push(x.clone());
                    }
                }
            }
            Pred::And(a, b) | Pred::Or(a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }

    fn rename(&self, from: &str, to: &Name) -> Pred {
        match self {
            Pred::Cmp(op, a, b) => {
                let r = |t: &Term| match t {
                    Term::Var(x, p) if &**x == from => Term::Var(to.clone(), p.clone()),
                    other => other.clone(),
                };
                Pred::Cmp(*op, r(a), r(b))
            }
            Pred::And(a, b) => Pred::And(Box::new(a.rename(from, to)), Box::new(b.rename(from, to))),
            Pred::Or(a, b) => Pred::Or(Box::new(a.rename(from, to)), Box::new(b.rename(from, to))),
        }
    }
}

/// Expressions. All bag-valued except the dictionary forms.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Rel(RelName),
    /// Update to a relation at a delta level (1 for the first-order update).
    DeltaRel(RelName, u32),
    LetVar(Name),
    /// `sng(x.path)` for a for-bound variable `x`.
    SngVar(Name, Vec<u8>),
    Pred(Pred),
    Empty(SchemaType),
    SngUnit,
    Sng(Box<Expr>, u64),
    /// Singleton whose body is known to be input-independent.
    SngStar(Box<Expr>, u64),
    Flatten(Box<Expr>),
    For(Name, Box<Expr>, Box<Expr>),
    Prod(Box<Expr>, Box<Expr>),
    Union(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Let(Name, Box<Expr>, Box<Expr>),
    /// `{⟨ι, Π⟩}`: the singleton label built from the listed for-variables.
    InL(u64, Vec<Name>),
    /// `[ι(Π) ↦ body]`: symbolic dictionary defining all labels with index ι.
    DictDef(u64, Vec<(Name, SchemaType)>, Box<Expr>),
    /// Lookup of the label stored at `x.path` in a dictionary.
    DictApp(Box<Expr>, Name, Vec<u8>),
    DictUnion(Box<Expr>, Box<Expr>),
    DictAdd(Box<Expr>, Box<Expr>),
    /// Empty dictionary whose definitions are bags of the given type.
    DictEmpty(SchemaType),
}

impl Expr {
    pub fn rel(n: &str) -> Expr {
        Expr::Rel(RelName::whole(n))
    }

    pub fn var(x: &str) -> Expr {
        Expr::SngVar(name(x), vec![])
    }

    pub fn proj(x: &str, path: &[u8]) -> Expr {
        Expr::SngVar(name(x), path.to_vec())
    }

    pub fn for_(x: &str, src: Expr, body: Expr) -> Expr {
        Expr::For(name(x), Box::new(src), Box::new(body))
    }

    pub fn let_(x: &str, bound: Expr, body: Expr) -> Expr {
        Expr::Let(name(x), Box::new(bound), Box::new(body))
    }

    pub fn prod(a: Expr, b: Expr) -> Expr {
        Expr::Prod(Box::new(a), Box::new(b))
    }

    pub fn union(a: Expr, b: Expr) -> Expr {
        Expr::Union(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(a: Expr) -> Expr {
        Expr::Neg(Box::new(a))
    }

    pub fn flatten(a: Expr) -> Expr {
        Expr::Flatten(Box::new(a))
    }

    pub fn sng(a: Expr, iota: u64) -> Expr {
        Expr::Sng(Box::new(a), iota)
    }

    pub fn is_empty_const(&self) -> bool {
        matches!(self, Expr::Empty(_) | Expr::DictEmpty(_))
    }

    /// Immediate subexpressions.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Rel(_)
            | Expr::DeltaRel(..)
            | Expr::LetVar(_)
            | Expr::SngVar(..)
            | Expr::Pred(_)
            | Expr::Empty(_)
            | Expr::SngUnit
            | Expr::InL(..)
            | Expr::DictEmpty(_) => vec![],
            Expr::Sng(e, _) | Expr::SngStar(e, _) | Expr::Flatten(e) | Expr::Neg(e) => vec![e],
            Expr::DictDef(_, _, e) | Expr::DictApp(e, _, _) => vec![e],
            Expr::For(_, a, b)
            | Expr::Prod(a, b)
            | Expr::Union(a, b)
            | Expr::Let(_, a, b)
            | Expr::DictUnion(a, b)
            | Expr::DictAdd(a, b) => vec![a, b],
        }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        1 + self.children().into_iter().map(Expr::size).sum::<usize>()
    }

    /// Largest singleton index used anywhere in the expression.
    pub fn max_iota(&self) -> u64 {
        let own = match self {
            Expr::Sng(_, i) | Expr::SngStar(_, i) | Expr::InL(i, _) | Expr::DictDef(i, _, _) => *i,
            _ => 0,
        };
        self.children().into_iter().map(Expr::max_iota).fold(own, u64::max)
    }

    /// Every variable name bound or referenced anywhere.
    pub fn all_names(&self, out: &mut BTreeSet<Name>) {
        match self {
            Expr::LetVar(x) | Expr::SngVar(x, _) => {
                out.insert(x.clone());
            }
            Expr::Pred(p) => {
                let mut v = Vec::new();
                p.vars(&mut v);
                out.extend(v);
            }
            Expr::For(x, _, _) | Expr::Let(x, _, _) | Expr::DictApp(_, x, _) => {
                out.insert(x.clone());
            }
            Expr::InL(_, xs) => out.extend(xs.iter().cloned()),
            Expr::DictDef(_, ps, _) => out.extend(ps.iter().map(|p| p.0.clone())),
            _ => {}
        }
        for c in self.children() {
            c.all_names(out);
        }
    }

    /// Free for-bound variables, in order of first occurrence.
    pub fn free_for_vars(&self) -> Vec<Name> {
        let mut out = Vec::new();
        let mut bound = Vec::new();
        free_for(self, &mut bound, &mut out);
        out
    }

    /// Free let-bound variables.
    pub fn free_let_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        let mut bound = Vec::new();
        free_let(self, &mut bound, &mut out);
        out
    }

    /// Whether a let-variable occurs free.
    pub fn mentions_let(&self, x: &str) -> bool {
        self.free_let_vars().iter().any(|y| &**y == x)
    }

    /// Whether some part of relation `r` occurs (updates excluded).
    pub fn mentions_rel(&self, r: &str) -> bool {
        match self {
            Expr::Rel(n) => &*n.base == r,
            _ => self.children().into_iter().any(|c| c.mentions_rel(r)),
        }
    }

    /// Whether any update relation occurs.
    pub fn mentions_delta(&self) -> bool {
        match self {
            Expr::DeltaRel(..) => true,
            _ => self.children().into_iter().any(Expr::mentions_delta),
        }
    }

    /// Renames free occurrences of a for-variable.
    pub fn rename_for(&self, from: &str, to: &Name) -> Expr {
        let r = |e: &Expr| e.rename_for(from, to);
        let rb = |e: &Expr| Box::new(e.rename_for(from, to));
        let rn = |x: &Name| if &**x == from { to.clone() } else { x.clone() };
        match self {
            Expr::SngVar(x, p) => Expr::SngVar(rn(x), p.clone()),
            Expr::Pred(p) => Expr::Pred(p.rename(from, to)),
            Expr::InL(i, xs) => Expr::InL(*i, xs.iter().map(rn).collect()),
            Expr::DictApp(d, x, p) => Expr::DictApp(rb(d), rn(x), p.clone()),
            Expr::For(x, a, b) => {
                if &**x == from {
                    Expr::For(x.clone(), rb(a), b.clone())
                } else {
                    Expr::For(x.clone(), rb(a), rb(b))
                }
            }
            Expr::DictDef(i, ps, b) => {
                if ps.iter().any(|p| &*p.0 == from) {
                    self.clone()
                } else {
                    Expr::DictDef(*i, ps.clone(), rb(b))
                }
            }
            Expr::Let(x, a, b) => Expr::Let(x.clone(), rb(a), rb(b)),
            _ => self.map_children(&mut |c| r(c)),
        }
    }

    /// Replaces free occurrences of let-variable `x` by `by`.
    pub fn subst_let(&self, x: &str, by: &Expr) -> Expr {
        match self {
            Expr::LetVar(y) if &**y == x => by.clone(),
            Expr::Let(y, a, b) => {
                let a = a.subst_let(x, by);
                let b = if &**y == x { (**b).clone() } else { b.subst_let(x, by) };
                Expr::Let(y.clone(), Box::new(a), Box::new(b))
            }
            _ => self.map_children(&mut |c| c.subst_let(x, by)),
        }
    }

    /// Rebuilds this node with each child transformed by `f`.
    pub fn map_children(&self, f: &mut impl FnMut(&Expr) -> Expr) -> Expr {
        let mut b = |e: &Expr| Box::new(f(e));
        match self {
            Expr::Rel(_)
            | Expr::DeltaRel(..)
            | Expr::LetVar(_)
            | Expr::SngVar(..)
            | Expr::Pred(_)
            | Expr::Empty(_)
            | Expr::SngUnit
            | Expr::InL(..)
            | Expr::DictEmpty(_) => self.clone(),
            Expr::Sng(e, i) => Expr::Sng(b(e), *i),
            Expr::SngStar(e, i) => Expr::SngStar(b(e), *i),
            Expr::Flatten(e) => Expr::Flatten(b(e)),
            Expr::Neg(e) => Expr::Neg(b(e)),
            Expr::DictDef(i, ps, e) => Expr::DictDef(*i, ps.clone(), b(e)),
            Expr::DictApp(e, x, p) => Expr::DictApp(b(e), x.clone(), p.clone()),
            Expr::For(x, l, r) => {
                let l = b(l);
                Expr::For(x.clone(), l, b(r))
            }
            Expr::Let(x, l, r) => {
                let l = b(l);
                Expr::Let(x.clone(), l, b(r))
            }
            Expr::Prod(l, r) => {
                let l = b(l);
                Expr::Prod(l, b(r))
            }
            Expr::Union(l, r) => {
                let l = b(l);
                Expr::Union(l, b(r))
            }
            Expr::DictUnion(l, r) => {
                let l = b(l);
                Expr::DictUnion(l, b(r))
            }
            Expr::DictAdd(l, r) => {
                let l = b(l);
                Expr::DictAdd(l, b(r))
            }
        }
    }
}

fn free_for(e: &Expr, bound: &mut Vec<Name>, out: &mut Vec<Name>) {
    let note = |x: &Name, bound: &Vec<Name>, out: &mut Vec<Name>| {
        if !bound.contains(x) && !out.contains(x) {
            out.push(x.clone());
        }
    };
    match e {
        Expr::SngVar(x, _) | Expr::DictApp(_, x, _) => {
            note(x, bound, out);
            if let Expr::DictApp(d, _, _) = e {
                free_for(d, bound, out);
            }
        }
        Expr::Pred(p) => {
            let mut v = Vec::new();
            p.vars(&mut v);
            for x in &v {
                note(x, bound, out);
            }
        }
        Expr::InL(_, xs) => {
            for x in xs {
                note(x, bound, out);
            }
        }
        Expr::For(x, a, b) => {
            free_for(a, bound, out);
            bound.push(x.clone());
            free_for(b, bound, out);
            bound.pop();
        }
        Expr::DictDef(_, ps, b) => {
            let n = ps.len();
            bound.extend(ps.iter().map(|p| p.0.clone()));
            free_for(b, bound, out);
            bound.truncate(bound.len() - n);
        }
        _ => {
            for c in e.children() {
                free_for(c, bound, out);
            }
        }
    }
}

fn free_let(e: &Expr, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
    match e {
        Expr::LetVar(x) => {
            if !bound.contains(x) {
                out.insert(x.clone());
            }
        }
        Expr::Let(x, a, b) => {
            free_let(a, bound, out);
            bound.push(x.clone());
            free_let(b, bound, out);
            bound.pop();
        }
        _ => {
            for c in e.children() {
                free_let(c, bound, out);
            }
        }
    }
}

/// Free relation names, following let-bindings: a let-variable contributes
/// the relations of its bound expression only where it is used.
pub fn free_relations(e: &Expr) -> BTreeSet<Name> {
    fn go(e: &Expr, lets: &mut Vec<(Name, BTreeSet<Name>)>, out: &mut BTreeSet<Name>) {
        match e {
            Expr::Rel(r) => {
                out.insert(r.base.clone());
            }
            Expr::LetVar(x) => {
                if let Some((_, rs)) = lets.iter().rev().find(|(y, _)| y == x) {
                    out.extend(rs.iter().cloned());
                }
            }
            Expr::Let(x, a, b) => {
                let mut rs = BTreeSet::new();
                go(a, lets, &mut rs);
                lets.push((x.clone(), rs));
                go(b, lets, out);
                lets.pop();
            }
            _ => {
                for c in e.children() {
                    go(c, lets, out);
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    go(e, &mut Vec::new(), &mut out);
    out
}

/// No relation occurs free (update relations do not count).
pub fn is_input_independent(e: &Expr) -> bool {
    free_relations(e).is_empty()
}

/// Rewrites `sng` into `sng*` wherever the body is input-independent.
pub fn classify(e: &Expr) -> Expr {
    fn go(e: &Expr, lets: &mut Vec<(Name, bool)>) -> Expr {
        match e {
            Expr::Sng(b, i) | Expr::SngStar(b, i) => {
                let dep = depends(b, lets);
                let b = Box::new(go(b, lets));
                if dep {
                    Expr::Sng(b, *i)
                } else {
                    Expr::SngStar(b, *i)
                }
            }
            Expr::Let(x, a, b) => {
                let dep = depends(a, lets);
                let a = go(a, lets);
                lets.push((x.clone(), dep));
                let b = go(b, lets);
                lets.pop();
                Expr::Let(x.clone(), Box::new(a), Box::new(b))
            }
            _ => e.map_children(&mut |c| go(c, lets)),
        }
    }
    go(e, &mut Vec::new())
}

/// Input dependence of `e` given the dependence of enclosing let-variables.
pub(crate) fn depends(e: &Expr, lets: &[(Name, bool)]) -> bool {
    let rels = free_relations(e);
    if !rels.is_empty() {
        return true;
    }
    e.free_let_vars().iter().any(|x| lets.iter().rev().find(|(y, _)| y == x).is_some_and(|(_, d)| *d))
}

/// Supply of names that avoid every name already used in a program.
#[derive(Clone, Debug, Default)]
pub struct NameSupply {
    used: BTreeSet<Name>,
}

impl NameSupply {
    pub fn for_expr(e: &Expr) -> Self {
        let mut used = BTreeSet::new();
        e.all_names(&mut used);
        NameSupply { used }
    }

    pub fn reserve(&mut self, n: &Name) {
        self.used.insert(n.clone());
    }

    pub fn fresh(&mut self, hint: &str) -> Name {
        let candidate = name(hint);
        if !self.used.contains(&candidate) {
            self.used.insert(candidate.clone());
            return candidate;
        }
        for k in 1.. {
            let c = name(&format!("{hint}_{k}"));
            if !self.used.contains(&c) {
                self.used.insert(c.clone());
                return c;
            }
        }
        unreachable!()
    }
}

/// Renames binders so that no binder shadows a variable already in scope.
pub fn uniquify(e: &Expr, supply: &mut NameSupply) -> Expr {
    fn go(e: &Expr, scope: &mut Vec<Name>, supply: &mut NameSupply) -> Expr {
        match e {
            Expr::For(x, a, b) => {
                let a = go(a, scope, supply);
                let (x2, b2) = rebind(x, b, scope, supply, false);
                scope.push(x2.clone());
                let b = go(&b2, scope, supply);
                scope.pop();
                Expr::For(x2, Box::new(a), Box::new(b))
            }
            Expr::Let(x, a, b) => {
                let a = go(a, scope, supply);
                let (x2, b2) = rebind(x, b, scope, supply, true);
                scope.push(x2.clone());
                let b = go(&b2, scope, supply);
                scope.pop();
                Expr::Let(x2, Box::new(a), Box::new(b))
            }
            Expr::DictDef(i, ps, b) => {
                let mut body = (**b).clone();
                let mut params = Vec::new();
                for (p, t) in ps {
                    let (p2, b2) = rebind(p, &body, scope, supply, false);
                    body = b2;
                    params.push((p2, t.clone()));
                }
                let n = params.len();
                scope.extend(params.iter().map(|p| p.0.clone()));
                let body = go(&body, scope, supply);
                scope.truncate(scope.len() - n);
                Expr::DictDef(*i, params, Box::new(body))
            }
            _ => e.map_children(&mut |c| go(c, scope, supply)),
        }
    }
    fn rebind(x: &Name, body: &Expr, scope: &[Name], supply: &mut NameSupply, is_let: bool) -> (Name, Expr) {
        if !scope.contains(x) {
            return (x.clone(), body.clone());
        }
        let fresh = supply.fresh(x);
        let body = if is_let { body.subst_let(x, &Expr::LetVar(fresh.clone())) } else { body.rename_for(x, &fresh) };
        (fresh, body)
    }
    go(e, &mut Vec::new(), supply)
}

/// Renames every binder to a canonical name given by its position, so that
/// alpha-equivalent programs become equal.
pub fn alpha_normalize(e: &Expr) -> Expr {
    fn fresh(k: &mut usize) -> Name {
        *k += 1;
        name(&format!("#{k}"))
    }
    fn go(e: &Expr, k: &mut usize) -> Expr {
        match e {
            Expr::For(x, a, b) => {
                let a = go(a, k);
                let x2 = fresh(k);
                let b = go(&b.rename_for(x, &x2), k);
                Expr::For(x2, Box::new(a), Box::new(b))
            }
            Expr::Let(x, a, b) => {
                let a = go(a, k);
                let x2 = fresh(k);
                let b = go(&b.subst_let(x, &Expr::LetVar(x2.clone())), k);
                Expr::Let(x2, Box::new(a), Box::new(b))
            }
            Expr::DictDef(i, ps, b) => {
                let mut body = (**b).clone();
                let mut params = Vec::new();
                for (p, t) in ps {
                    let p2 = fresh(k);
                    body = body.rename_for(p, &p2);
                    params.push((p2, t.clone()));
                }
                Expr::DictDef(*i, params, Box::new(go(&body, k)))
            }
            _ => e.map_children(&mut |c| go(c, k)),
        }
    }
    go(e, &mut 0)
}

/// Inlines every let whose bound expression has free for-variables.
///
/// Expects a program without shadowing (see [`uniquify`]).
pub fn inline_dependent_lets(e: &Expr) -> Expr {
    match e {
        Expr::Let(x, a, b) => {
            let a = inline_dependent_lets(a);
            let b = inline_dependent_lets(b);
            if a.free_for_vars().is_empty() {
                Expr::Let(x.clone(), Box::new(a), Box::new(b))
            } else {
                b.subst_let(x, &a)
            }
        }
        _ => e.map_children(&mut inline_dependent_lets),
    }
}

/// Relation schema: the declared nested type of every relation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Schema {
    pub rels: BTreeMap<Name, SchemaType>,
}

impl Schema {
    pub fn new() -> Self {
        Schema::default()
    }

    pub fn with(mut self, rel: &str, ty: SchemaType) -> Self {
        self.rels.insert(name(rel), ty);
        self
    }

    pub fn insert(&mut self, rel: Name, ty: SchemaType) {
        self.rels.insert(rel, ty);
    }

    pub fn get(&self, rel: &str) -> Option<&SchemaType> {
        self.rels.get(rel)
    }

    /// Type of one component of a relation.
    pub fn part_type(&self, r: &RelName) -> Option<SchemaType> {
        let ty = self.rels.get(&r.base)?;
        match &r.part {
            Part::Whole => Some(ty.clone()),
            Part::Flat => {
                let elem = ty.bag_elem()?;
                Some(SchemaType::bag(crate::types::shred_type(elem).flat))
            }
            Part::Ctx(path) => crate::types::ctx_leaf_type(ty.bag_elem()?, path),
        }
    }

    /// All component names of a relation after shredding.
    pub fn shredded_parts(&self, rel: &str) -> Vec<RelName> {
        let Some(ty) = self.rels.get(rel) else { return vec![] };
        let mut out = vec![RelName::flat(rel)];
        if let Some(elem) = ty.bag_elem() {
            for (path, _) in crate::types::shred_type(elem).ctx.leaves() {
                out.push(RelName::ctx(rel, path));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_relations_follow_lets() {
        let e = Expr::let_("X", Expr::rel("R"), Expr::prod(Expr::flatten(Expr::LetVar(name("X"))), Expr::var("x")));
        assert_eq!(free_relations(&e).into_iter().collect::<Vec<_>>(), vec![name("R")]);
        let dead = Expr::let_("X", Expr::rel("R"), Expr::SngUnit);
        assert!(is_input_independent(&dead));
        assert!(is_input_independent(&Expr::var("x")));
    }

    #[test]
    fn classify_marks_independent_singletons() {
        let e = Expr::for_("x", Expr::rel("R"), Expr::sng(Expr::var("x"), 1));
        let c = classify(&e);
        assert!(matches!(c, Expr::For(_, _, ref b) if matches!(**b, Expr::SngStar(..))));
        let dep = classify(&Expr::sng(Expr::rel("R"), 2));
        assert!(matches!(dep, Expr::Sng(..)));
    }

    #[test]
    fn uniquify_removes_shadowing() {
        let inner = Expr::for_("x", Expr::rel("S"), Expr::var("x"));
        let e = Expr::for_("x", Expr::rel("R"), Expr::prod(Expr::var("x"), inner));
        let mut supply = NameSupply::for_expr(&e);
        let u = uniquify(&e, &mut supply);
        let Expr::For(_, _, body) = &u else { panic!() };
        let Expr::Prod(a, b) = &**body else { panic!() };
        assert_eq!(**a, Expr::var("x"));
        assert_eq!(**b, Expr::for_("x_1", Expr::rel("S"), Expr::var("x_1")));
    }

    #[test]
    fn inlining_substitutes_dependent_lets() {
        let e = Expr::for_(
            "x",
            Expr::rel("R"),
            Expr::let_("Y", Expr::var("x"), Expr::prod(Expr::LetVar(name("Y")), Expr::LetVar(name("Y")))),
        );
        let i = inline_dependent_lets(&e);
        assert_eq!(i, Expr::for_("x", Expr::rel("R"), Expr::prod(Expr::var("x"), Expr::var("x"))));
    }
}
