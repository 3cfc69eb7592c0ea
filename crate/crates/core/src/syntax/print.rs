//! Surface rendering of expressions. The output parses back to an equal
//! expression, up to singleton indices.

use std::fmt::{self, Display, Formatter, Write};

use crate::expr::{Expr, Pred, Term};

const BINDER: u8 = 0;
const SUM: u8 = 1;
const PROD: u8 = 2;
const UNARY: u8 = 3;

fn path(f: &mut Formatter<'_>, p: &[u8]) -> fmt::Result {
    p.iter().try_for_each(|i| write!(f, ".{i}"))
}

impl Display for Term {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(x, p) => {
                f.write_str(x)?;
                path(f, p)
            }
            Term::Const(a) => write!(f, "{a}"),
        }
    }
}

impl Display for Pred {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Pred::Cmp(op, a, b) => write!(f, "{a} {} {b}", op.symbol()),
            Pred::And(a, b) => {
                pred_operand(f, a, true)?;
                f.write_str(" && ")?;
                pred_operand(f, b, true)
            }
            Pred::Or(a, b) => {
                pred_operand(f, a, false)?;
                f.write_str(" || ")?;
                pred_operand(f, b, false)
            }
        }
    }
}

fn pred_operand(f: &mut Formatter<'_>, p: &Pred, in_and: bool) -> fmt::Result {
    let wrap = match p {
        Pred::Or(..) => in_and,
        Pred::And(..) => !in_and,
        Pred::Cmp(..) => false,
    };
    if wrap {
        write!(f, "({p})")
    } else {
        write!(f, "{p}")
    }
}

fn is_tuple_term(e: &Expr) -> bool {
    match e {
        Expr::SngVar(..) | Expr::SngUnit | Expr::InL(..) => true,
        Expr::Prod(a, b) => is_tuple_term(a) && is_tuple_term(b),
        _ => false,
    }
}

fn tuple_term(f: &mut Formatter<'_>, e: &Expr) -> fmt::Result {
    match e {
        Expr::SngVar(x, p) => {
            f.write_str(x)?;
            path(f, p)
        }
        Expr::SngUnit => f.write_str("<>"),
        Expr::InL(..) => write!(f, "{e}"),
        Expr::Prod(a, b) => {
            f.write_char('<')?;
            tuple_term(f, a)?;
            let mut rest: &Expr = b;
            while let Expr::Prod(x, y) = rest {
                f.write_str(", ")?;
                tuple_term(f, x)?;
                rest = y;
            }
            f.write_str(", ")?;
            tuple_term(f, rest)?;
            f.write_char('>')
        }
        _ => unreachable!("not a tuple term"),
    }
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::For(..) | Expr::Let(..) => BINDER,
        Expr::Union(..) | Expr::DictUnion(..) | Expr::DictAdd(..) => SUM,
        Expr::Prod(..) if !is_tuple_term(e) => PROD,
        Expr::Neg(..) | Expr::Flatten(..) => UNARY,
        _ => UNARY + 1,
    }
}

fn go(f: &mut Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if prec(e) < min {
        f.write_char('(')?;
        go(f, e, BINDER)?;
        return f.write_char(')');
    }
    match e {
        Expr::Rel(r) => write!(f, "{r}"),
        Expr::DeltaRel(r, k) => write!(f, "delta{} {r}", "'".repeat(k.saturating_sub(1) as usize)),
        Expr::LetVar(x) => f.write_str(x),
        Expr::SngVar(..) | Expr::SngUnit => {
            f.write_str("sng(")?;
            tuple_term(f, e)?;
            f.write_char(')')
        }
        Expr::Prod(..) if is_tuple_term(e) => {
            f.write_str("sng(")?;
            tuple_term(f, e)?;
            f.write_char(')')
        }
        Expr::Pred(p) => write!(f, "pred({p})"),
        Expr::Empty(t) => write!(f, "empty[{t}]"),
        Expr::Sng(b, _) | Expr::SngStar(b, _) => {
            f.write_str("sng(")?;
            go(f, b, BINDER)?;
            f.write_char(')')
        }
        Expr::Flatten(b) => {
            f.write_str("flatten ")?;
            go(f, b, UNARY)
        }
        Expr::Neg(b) => {
            f.write_str("neg ")?;
            go(f, b, UNARY)
        }
        Expr::For(x, src, body) => {
            write!(f, "for {x} in ")?;
            go(f, src, BINDER)?;
            if let Expr::For(w, p, inner) = &**body {
                if let Expr::Pred(p) = &**p {
                    if !inner.free_for_vars().iter().any(|v| v == w) {
                        write!(f, " where {p} union ")?;
                        return go(f, inner, BINDER);
                    }
                }
            }
            f.write_str(" union ")?;
            go(f, body, BINDER)
        }
        Expr::Let(x, bound, body) => {
            write!(f, "let {x} = ")?;
            go(f, bound, BINDER)?;
            f.write_str(" in ")?;
            go(f, body, BINDER)
        }
        Expr::Prod(a, b) => {
            go(f, a, PROD)?;
            f.write_str(" * ")?;
            go(f, b, UNARY)
        }
        Expr::Union(a, b) | Expr::DictUnion(a, b) | Expr::DictAdd(a, b) => {
            let op = match e {
                Expr::Union(..) => "+",
                Expr::DictUnion(..) => "\\/",
                _ => "(+)",
            };
            go(f, a, SUM)?;
            write!(f, " {op} ")?;
            go(f, b, PROD)
        }
        Expr::InL(i, xs) => {
            write!(f, "inL[{i}](")?;
            for (k, x) in xs.iter().enumerate() {
                if k > 0 {
                    f.write_str(", ")?;
                }
                f.write_str(x)?;
            }
            f.write_char(')')
        }
        Expr::DictDef(i, params, body) => {
            write!(f, "[@{i}(")?;
            for (k, (x, t)) in params.iter().enumerate() {
                if k > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{x}: {t}")?;
            }
            f.write_str(") |-> ")?;
            go(f, body, BINDER)?;
            f.write_char(']')
        }
        Expr::DictApp(d, x, p) => {
            f.write_str("lookup(")?;
            go(f, d, BINDER)?;
            write!(f, ", {x}")?;
            path(f, p)?;
            f.write_char(')')
        }
        Expr::DictEmpty(t) => write!(f, "emptydict[{t}]"),
    }
}

impl Display for Expr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        go(f, self, BINDER)
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_query;
    use crate::expr::Expr;

    fn strip(e: &Expr) -> Expr {
        match e {
            Expr::Sng(b, _) | Expr::SngStar(b, _) => Expr::Sng(Box::new(strip(b)), 0),
            _ => e.map_children(&mut strip),
        }
    }

    fn round_trip(src: &str) {
        let e = parse_query(src).unwrap();
        let printed = e.to_string();
        let again = parse_query(&printed).unwrap_or_else(|err| panic!("{printed}: {err}"));
        assert_eq!(strip(&e), strip(&again), "{printed}");
    }

    #[test]
    fn printing_round_trips() {
        for src in [
            "for x in R union sng(x)",
            "for <a, b> in R where a == 3 && (b < 2 || b != \"q\") union sng(<b, a>)",
            "let X = R * S in neg flatten (X + X) * sng(<>)",
            "R * (S * T) + neg (R + S)",
            "for x in R union sng(<x.1, sng(for y in x.2 union sng(y))>)",
            "for l in delta'' M^F union lookup(M^G.2.i, l) (+) emptydict[Base] \\/ emptydict[Base]",
            "[@3(m: Base, n: <Base, Base>) |-> sng(<m, n.2>) + empty[Bag(<Base, Base>)]]",
            "for x in R union sng(inL[5](x))",
            "for x in R union for y in S union sng(<x, y>) * pred(x.1 <= y.1)",
        ] {
            round_trip(src);
        }
    }

    #[test]
    fn renders_where_sugar() {
        let e = parse_query("for x in R where x.1 == 2 union sng(x.2)").unwrap();
        assert_eq!(e.to_string(), "for x in R where x.1 == 2 union sng(x.2)");
    }
}
