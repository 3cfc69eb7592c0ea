//! Type-aware algebraic clean-up of derived queries.
//!
//! Removes empty subterms introduced by delta derivation: iterating over or
//! into an empty bag, unions and products with empty bags, flattening or
//! negating the empty bag, double negation, dead lets and empty
//! dictionaries. Every rewrite preserves the semantics.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::typecheck::TypeCx;
use crate::types::SchemaType;

/// The empty constant of a bag or dictionary type.
pub fn empty_of(ty: &SchemaType) -> Expr {
    match ty {
        SchemaType::Dict(a) => Expr::DictEmpty(a.as_ref().clone()),
        t => Expr::Empty(t.clone()),
    }
}

fn is_empty(e: &Expr) -> bool {
    matches!(e, Expr::Empty(_) | Expr::DictEmpty(_))
}

fn elem(t: &SchemaType) -> Result<SchemaType> {
    t.bag_elem().cloned().ok_or_else(|| Error::mismatch("simplification", "a bag", t))
}

/// Simplifies `e`, returning it with its type.
pub fn simplify(e: &Expr, cx: &mut TypeCx<'_>) -> Result<(Expr, SchemaType)> {
    let b = Box::new;
    Ok(match e {
        Expr::For(x, src, body) => {
            let (s, ts) = simplify(src, cx)?;
            cx.push_for(x, elem(&ts)?);
            let r = simplify(body, cx);
            cx.pop_for();
            let (bd, tb) = r?;
            if is_empty(&s) || is_empty(&bd) {
                (Expr::Empty(tb.clone()), tb)
            } else {
                (Expr::For(x.clone(), b(s), b(bd)), tb)
            }
        }
        Expr::Union(l, r) => {
            let (l, tl) = simplify(l, cx)?;
            let (r, tr) = simplify(r, cx)?;
            match (is_empty(&l), is_empty(&r)) {
                (true, _) => (r, tr),
                (_, true) => (l, tl),
                _ => (Expr::Union(b(l), b(r)), tl),
            }
        }
        Expr::Prod(l, r) => {
            let (l, tl) = simplify(l, cx)?;
            let (r, tr) = simplify(r, cx)?;
            let t = SchemaType::bag(SchemaType::prod(elem(&tl)?, elem(&tr)?));
            if is_empty(&l) || is_empty(&r) {
                (Expr::Empty(t.clone()), t)
            } else {
                (Expr::Prod(b(l), b(r)), t)
            }
        }
        Expr::Flatten(a) => {
            let (a, ta) = simplify(a, cx)?;
            let t = elem(&ta)?;
            if is_empty(&a) {
                (Expr::Empty(t.clone()), t)
            } else {
                (Expr::Flatten(b(a)), t)
            }
        }
        Expr::Neg(a) => {
            let (a, ta) = simplify(a, cx)?;
            match a {
                Expr::Neg(inner) => (*inner, ta),
                a if is_empty(&a) => (a, ta),
                a => (Expr::Neg(b(a)), ta),
            }
        }
        Expr::Let(x, bound, body) => {
            let (a, ta) = simplify(bound, cx)?;
            if is_empty(&a) {
                return simplify(&body.subst_let(x, &a), cx);
            }
            let dep = cx.depends(&a);
            cx.push_let(x, ta, dep);
            let r = simplify(body, cx);
            cx.pop_let();
            let (bd, tb) = r?;
            if bd.mentions_let(x) {
                (Expr::Let(x.clone(), b(a), b(bd)), tb)
            } else {
                (bd, tb)
            }
        }
        Expr::Sng(a, i) | Expr::SngStar(a, i) => {
            let (a, ta) = simplify(a, cx)?;
            let t = SchemaType::bag(ta);
            let node = if matches!(e, Expr::Sng(..)) { Expr::Sng(b(a), *i) } else { Expr::SngStar(b(a), *i) };
            (node, t)
        }
        Expr::DictDef(i, params, body) => {
            for (p, t) in params {
                cx.push_for(p, t.clone());
            }
            let r = simplify(body, cx);
            for _ in params {
                cx.pop_for();
            }
            let (bd, tb) = r?;
            let t = SchemaType::dict(elem(&tb)?);
            if is_empty(&bd) {
                (empty_of(&t), t)
            } else {
                (Expr::DictDef(*i, params.clone(), b(bd)), t)
            }
        }
        Expr::DictApp(d, x, p) => {
            let (d, td) = simplify(d, cx)?;
            let a = td.dict_elem().cloned().ok_or_else(|| Error::mismatch("lookup", "a dictionary", &td))?;
            let t = SchemaType::bag(a);
            if is_empty(&d) {
                (Expr::Empty(t.clone()), t)
            } else {
                (Expr::DictApp(b(d), x.clone(), p.clone()), t)
            }
        }
        Expr::DictUnion(l, r) | Expr::DictAdd(l, r) => {
            let (l, tl) = simplify(l, cx)?;
            let (r, tr) = simplify(r, cx)?;
            match (is_empty(&l), is_empty(&r)) {
                (true, _) => (r, tr),
                (_, true) => (l, tl),
                _ if matches!(e, Expr::DictUnion(..)) => (Expr::DictUnion(b(l), b(r)), tl),
                _ => (Expr::DictAdd(b(l), b(r)), tl),
            }
        }
        leaf => (leaf.clone(), cx.check(leaf)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Schema;
    use crate::syntax::{parse_query, parse_type};
    use crate::typecheck::Mode;

    fn simp(src: &str) -> String {
        let schema = Schema::new().with("R", parse_type("Bag(<Base, Base>)").unwrap());
        let e = parse_query(src).unwrap();
        simplify(&e, &mut TypeCx::new(&schema, Mode::Nrc)).unwrap().0.to_string()
    }

    #[test]
    fn removes_empty_subterms() {
        assert_eq!(simp("for x in empty[Bag(Base)] union sng(x)"), "empty[Bag(Base)]");
        assert_eq!(simp("R + empty[Bag(<Base, Base>)]"), "R");
        assert_eq!(simp("empty[Bag(Base)] * R"), "empty[Bag(<Base, Base, Base>)]");
        assert_eq!(simp("neg neg R"), "R");
        assert_eq!(simp("let X = R in R"), "R");
        assert_eq!(simp("let X = empty[Bag(Base)] in X * X"), "empty[Bag(<Base, Base>)]");
        assert_eq!(simp("flatten empty[Bag(Bag(Base))]"), "empty[Bag(Base)]");
        assert_eq!(simp("[@1(x: Base) |-> empty[Bag(Base)]] \\/ emptydict[Base]"), "emptydict[Base]");
    }
}
