use std::collections::BTreeMap;

use super::lexer::{lex, Tok, Token};
use crate::dict::DictVal;
use crate::error::{Error, Result, Span};
use crate::expr::{name, CmpOp, Expr, Name, Pred, RelName, Term};
use crate::poly::Poly;
use crate::cost::CostVal;
use crate::types::{CtxStep, SchemaType};
use crate::value::{Atom, Bag, BagBuilder, Label, Value};

const KEYWORDS: &[&str] = &[
    "let", "in", "for", "union", "where", "sng", "flatten", "neg", "empty", "emptydict", "inL", "lookup", "delta", "pred",
];

#[derive(Clone, Debug)]
struct ForBind {
    surface: String,
    var: Name,
    prefix: Vec<u8>,
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    src: &'a str,
    fors: Vec<ForBind>,
    lets: Vec<String>,
    next_iota: u64,
    explicit_iota: u64,
    fresh_t: u64,
    fresh_p: u64,
    idents: std::collections::BTreeSet<String>,
}

/// Parses a query. Singleton occurrences receive indices in textual order.
pub fn parse_query(src: &str) -> Result<Expr> {
    let mut p = Parser::new(src)?;
    let e = p.expr()?;
    p.expect_eof()?;
    if p.explicit_iota > 0 && p.next_iota > 1 {
        let shift = p.explicit_iota;
        return Ok(shift_sng(&e, shift));
    }
    Ok(e)
}

fn shift_sng(e: &Expr, by: u64) -> Expr {
    match e {
        Expr::Sng(b, i) => Expr::Sng(Box::new(shift_sng(b, by)), i + by),
        Expr::SngStar(b, i) => Expr::SngStar(Box::new(shift_sng(b, by)), i + by),
        _ => e.map_children(&mut |c| shift_sng(c, by)),
    }
}

pub fn parse_type(src: &str) -> Result<SchemaType> {
    let mut p = Parser::new(src)?;
    let t = p.ty()?;
    p.expect_eof()?;
    Ok(t)
}

/// Parses a value literal.
pub fn parse_value(src: &str) -> Result<Value> {
    let mut p = Parser::new(src)?;
    let v = p.value()?;
    p.expect_eof()?;
    Ok(v)
}

/// Parses a value literal and checks it against a type.
pub fn parse_value_typed(src: &str, ty: &SchemaType) -> Result<Value> {
    let v = parse_value(src)?;
    if !v.has_type(ty) {
        return Err(Error::mismatch("value literal", ty, &v));
    }
    Ok(v)
}

/// One relation declared in a database file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelDecl {
    pub name: Name,
    pub ty: SchemaType,
    pub value: Bag,
}

/// Parses a database file: `Name : Type` followed by a bag literal,
/// possibly repeated.
pub fn parse_db(src: &str) -> Result<Vec<RelDecl>> {
    let mut p = Parser::new(src)?;
    let mut out = Vec::new();
    while p.peek() != &Tok::Eof {
        let span = p.span();
        let n = p.ident()?;
        p.expect(Tok::Colon)?;
        let ty = p.ty()?;
        if ty.bag_elem().is_none() {
            return Err(p.error_at(span, format!("relation `{n}` must have a bag type")));
        }
        let vspan = p.span();
        let v = p.value()?;
        let bag = match v {
            Value::Bag(b) if Value::Bag(b.clone()).has_type(&ty) => b,
            other => return Err(p.error_at(vspan.join(p.prev_span()), format!("value does not have type {ty}: {other}"))),
        };
        out.push(RelDecl { name: name(&n), ty, value: bag });
    }
    Ok(out)
}

/// Parses a cost literal such as `3{<1, n{1}>}`. The shape is fixed with
/// [`CostVal::conform`].
pub fn parse_cost(src: &str) -> Result<CostVal<Poly>> {
    let mut p = Parser::new(src)?;
    let c = p.cost()?;
    p.expect_eof()?;
    Ok(c)
}

/// Parses a symbolic cardinality such as `2n^2 + n*d + 1`.
pub fn parse_card(src: &str) -> Result<Poly> {
    let mut p = Parser::new(src)?;
    let c = p.poly()?;
    p.expect_eof()?;
    Ok(c)
}

fn is_rel_name(s: &str) -> bool {
    let t = s.trim_start_matches('_');
    t.chars().next().is_some_and(|c| c.is_ascii_uppercase())
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self> {
        let toks = lex(src)?;
        let idents = toks
            .iter()
            .filter_map(|t| match &t.tok {
                Tok::Ident(s) => Some(s.clone()),
                _ => None,
            })
            .collect();
        Ok(Parser {
            toks,
            pos: 0,
            src,
            fors: Vec::new(),
            lets: Vec::new(),
            next_iota: 1,
            explicit_iota: 0,
            fresh_t: 0,
            fresh_p: 0,
            idents,
        })
    }

    /// A generated name that does not occur in the source text.
    fn fresh(&mut self, prefix: &str, counter: fn(&mut Self) -> &mut u64) -> Name {
        loop {
            let c = counter(self);
            let n = format!("{prefix}{c}");
            *c += 1;
            if !self.idents.contains(&n) {
                return name(&n);
            }
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, span: Span, message: String) -> Error {
        let _ = self.src;
        Error::Parse { span, message }
    }

    fn unexpected(&self, what: &str) -> Error {
        self.error_at(self.span(), format!("expected {what}, found {}", self.peek().describe()))
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        if self.peek() == &t {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&Tok::describe(&t)))
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn expect_eof(&self) -> Result<()> {
        if self.peek() == &Tok::Eof {
            Ok(())
        } else {
            Err(self.unexpected("end of input"))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected("an identifier")),
        }
    }

    fn binder(&mut self) -> Result<String> {
        let span = self.span();
        let s = self.ident()?;
        if KEYWORDS.contains(&s.as_str()) {
            return Err(self.error_at(span, format!("`{s}` is a keyword")));
        }
        Ok(s)
    }

    fn int(&mut self) -> Result<i64> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(n)
            }
            _ => Err(self.unexpected("an integer")),
        }
    }

    fn index(&mut self) -> Result<u64> {
        let span = self.span();
        let n = self.int()?;
        u64::try_from(n).map_err(|_| self.error_at(span, "index must be nonnegative".into()))
    }

    // ---- types ----

    fn ty(&mut self) -> Result<SchemaType> {
        match self.peek().clone() {
            Tok::Lt => {
                self.bump();
                if self.eat(&Tok::Gt) {
                    return Ok(SchemaType::Unit);
                }
                let mut items = vec![self.ty()?];
                while self.eat(&Tok::Comma) {
                    items.push(self.ty()?);
                }
                self.expect(Tok::Gt)?;
                Ok(SchemaType::tuple(items))
            }
            Tok::Ident(s) => {
                self.bump();
                match s.as_str() {
                    "Unit" => Ok(SchemaType::Unit),
                    "Base" => Ok(SchemaType::Base),
                    "Label" => Ok(SchemaType::Label),
                    "Bag" | "Dict" => {
                        self.expect(Tok::LParen)?;
                        let t = self.ty()?;
                        self.expect(Tok::RParen)?;
                        Ok(if s == "Bag" { SchemaType::bag(t) } else { SchemaType::dict(t) })
                    }
                    _ => Err(self.error_at(self.prev_span(), format!("unknown type `{s}`"))),
                }
            }
            _ => Err(self.unexpected("a type")),
        }
    }

    // ---- queries ----

    fn expr(&mut self) -> Result<Expr> {
        if self.is_kw("let") {
            self.bump();
            let x = self.binder()?;
            self.expect(Tok::Eq)?;
            let bound = self.expr()?;
            self.expect_kw("in")?;
            self.lets.push(x.clone());
            let body = self.expr();
            self.lets.pop();
            return Ok(Expr::Let(name(&x), Box::new(bound), Box::new(body?)));
        }
        if self.is_kw("for") {
            self.bump();
            let binds = self.pattern()?;
            self.expect_kw("in")?;
            let src = self.expr()?;
            let n = binds.len();
            let var = binds[0].var.clone();
            self.fors.extend(binds);
            let body = self.for_rest();
            self.fors.truncate(self.fors.len() - n);
            return Ok(Expr::For(var, Box::new(src), Box::new(body?)));
        }
        self.sum()
    }

    fn for_rest(&mut self) -> Result<Expr> {
        if self.is_kw("where") {
            self.bump();
            let p = self.pred()?;
            self.expect_kw("union")?;
            let body = self.expr()?;
            let w = self.fresh("_p", |p| &mut p.fresh_p);
            return Ok(Expr::For(w, Box::new(Expr::Pred(p)), Box::new(body)));
        }
        self.expect_kw("union")?;
        self.expr()
    }

    /// A binder or tuple pattern; the first entry names the bound variable.
    fn pattern(&mut self) -> Result<Vec<ForBind>> {
        if self.peek() != &Tok::Lt {
            let x = self.binder()?;
            return Ok(vec![ForBind { surface: x.clone(), var: name(&x), prefix: vec![] }]);
        }
        let pat = self.pat()?;
        let var = self.fresh("_t", |p| &mut p.fresh_t);
        let mut out = vec![ForBind { surface: var.to_string(), var: var.clone(), prefix: vec![] }];
        flatten_pat(&pat, &var, vec![], &mut out);
        Ok(out)
    }

    fn pat(&mut self) -> Result<Pat> {
        if !self.eat(&Tok::Lt) {
            return Ok(Pat::Var(self.binder()?));
        }
        let mut items = vec![self.pat()?];
        while self.eat(&Tok::Comma) {
            items.push(self.pat()?);
        }
        self.expect(Tok::Gt)?;
        Ok(Pat::Tuple(items))
    }

    fn starts_binder(&self) -> bool {
        self.is_kw("let") || self.is_kw("for")
    }

    fn operand(&mut self, next: fn(&mut Self) -> Result<Expr>) -> Result<Expr> {
        if self.starts_binder() {
            self.expr()
        } else {
            next(self)
        }
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut lhs = self.prod()?;
        loop {
            let op = self.peek().clone();
            if !matches!(op, Tok::Plus | Tok::Cup | Tok::OPlus) {
                return Ok(lhs);
            }
            self.bump();
            let rhs = Box::new(self.operand(Self::prod)?);
            let l = Box::new(lhs);
            lhs = match op {
                Tok::Plus => Expr::Union(l, rhs),
                Tok::Cup => Expr::DictUnion(l, rhs),
                _ => Expr::DictAdd(l, rhs),
            };
        }
    }

    fn prod(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while self.eat(&Tok::Star) {
            let rhs = self.operand(Self::unary)?;
            lhs = Expr::Prod(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.is_kw("neg") {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.operand(Self::unary)?)));
        }
        if self.is_kw("flatten") {
            self.bump();
            return Ok(Expr::Flatten(Box::new(self.operand(Self::unary)?)));
        }
        self.atom()
    }

    fn lookup_for(&self, s: &str) -> Option<&ForBind> {
        self.fors.iter().rev().find(|b| b.surface == s)
    }

    fn is_let(&self, s: &str) -> bool {
        self.lets.iter().rev().any(|x| x == s)
    }

    fn proj_path(&mut self) -> Result<Vec<u8>> {
        let mut path = Vec::new();
        while self.peek() == &Tok::Dot {
            if let Tok::Int(n @ (1 | 2)) = *self.peek_at(1) {
                self.bump();
                self.bump();
                path.push(n as u8);
            } else {
                self.bump();
                return Err(self.unexpected("projection `1` or `2`"));
            }
        }
        Ok(path)
    }

    /// A for-bound variable with an optional projection path.
    fn var_path(&mut self) -> Result<(Name, Vec<u8>)> {
        let span = self.span();
        let x = self.ident()?;
        let Some(b) = self.lookup_for(&x).cloned() else {
            return Err(self.error_at(span, format!("unbound variable `{x}`")));
        };
        let mut path = b.prefix.clone();
        path.extend(self.proj_path()?);
        Ok((b.var, path))
    }

    fn plain_var(&mut self) -> Result<Name> {
        let span = self.span();
        let (v, path) = self.var_path()?;
        if !path.is_empty() {
            return Err(self.error_at(span, "expected a variable without projection".into()));
        }
        Ok(v)
    }

    fn atom(&mut self) -> Result<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Lt => {
                self.bump();
                if self.eat(&Tok::Gt) {
                    return Ok(Expr::SngUnit);
                }
                let mut items = vec![self.expr()?];
                while self.eat(&Tok::Comma) {
                    items.push(self.expr()?);
                }
                self.expect(Tok::Gt)?;
                Ok(prod_chain(items))
            }
            Tok::LBrack => self.dict_def(),
            Tok::Ident(s) => match s.as_str() {
                "sng" => {
                    self.bump();
                    self.sng()
                }
                "empty" | "emptydict" => {
                    self.bump();
                    self.expect(Tok::LBrack)?;
                    let t = self.ty()?;
                    self.expect(Tok::RBrack)?;
                    if s == "emptydict" {
                        return Ok(Expr::DictEmpty(t));
                    }
                    if t.bag_elem().is_none() {
                        return Err(self.error_at(span.join(self.prev_span()), format!("`empty` needs a bag type, found {t}")));
                    }
                    Ok(Expr::Empty(t))
                }
                "inL" => self.in_label(),
                "lookup" => {
                    self.bump();
                    self.expect(Tok::LParen)?;
                    let d = self.expr()?;
                    self.expect(Tok::Comma)?;
                    let (x, path) = self.var_path()?;
                    self.expect(Tok::RParen)?;
                    Ok(Expr::DictApp(Box::new(d), x, path))
                }
                "pred" => {
                    self.bump();
                    self.expect(Tok::LParen)?;
                    let p = self.pred()?;
                    self.expect(Tok::RParen)?;
                    Ok(Expr::Pred(p))
                }
                "delta" => {
                    self.bump();
                    let mut level = 1;
                    while self.eat(&Tok::Prime) {
                        level += 1;
                    }
                    let rspan = self.span();
                    let r = self.ident()?;
                    if !is_rel_name(&r) {
                        return Err(self.error_at(rspan, format!("`{r}` is not a relation name")));
                    }
                    Ok(Expr::DeltaRel(self.rel_part(&r)?, level))
                }
                _ if KEYWORDS.contains(&s.as_str()) => Err(self.unexpected("an expression")),
                _ => {
                    if self.lookup_for(&s).is_some() {
                        let (x, path) = self.var_path()?;
                        return Ok(Expr::SngVar(x, path));
                    }
                    self.bump();
                    if self.is_let(&s) {
                        return Ok(Expr::LetVar(name(&s)));
                    }
                    if is_rel_name(&s) {
                        return Ok(Expr::Rel(self.rel_part(&s)?));
                    }
                    Err(self.error_at(span, format!("unbound variable `{s}`")))
                }
            },
            _ => Err(self.unexpected("an expression")),
        }
    }

    fn rel_part(&mut self, base: &str) -> Result<RelName> {
        if !self.eat(&Tok::Caret) {
            return Ok(RelName::whole(base));
        }
        let span = self.span();
        match self.ident()?.as_str() {
            "F" => Ok(RelName::flat(base)),
            "G" => {
                let mut path = Vec::new();
                while self.peek() == &Tok::Dot {
                    self.bump();
                    match self.bump() {
                        Tok::Int(1) => path.push(CtxStep::Fst),
                        Tok::Int(2) => path.push(CtxStep::Snd),
                        Tok::Ident(s) if s == "i" => path.push(CtxStep::Inner),
                        _ => return Err(self.error_at(self.prev_span(), "expected context step `1`, `2` or `i`".into())),
                    }
                }
                Ok(RelName::ctx(base, path))
            }
            other => Err(self.error_at(span, format!("unknown relation component `{other}`"))),
        }
    }

    fn in_label(&mut self) -> Result<Expr> {
        self.expect_kw("inL")?;
        self.expect(Tok::LBrack)?;
        let i = self.index()?;
        self.explicit_iota = self.explicit_iota.max(i);
        self.expect(Tok::RBrack)?;
        self.expect(Tok::LParen)?;
        let mut xs = Vec::new();
        if self.peek() != &Tok::RParen {
            xs.push(self.plain_var()?);
            while self.eat(&Tok::Comma) {
                xs.push(self.plain_var()?);
            }
        }
        self.expect(Tok::RParen)?;
        Ok(Expr::InL(i, xs))
    }

    fn dict_def(&mut self) -> Result<Expr> {
        self.expect(Tok::LBrack)?;
        self.expect(Tok::At)?;
        let i = self.index()?;
        self.explicit_iota = self.explicit_iota.max(i);
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if self.peek() != &Tok::RParen {
            loop {
                let x = self.binder()?;
                self.expect(Tok::Colon)?;
                let t = self.ty()?;
                params.push((name(&x), t));
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        self.expect(Tok::MapsTo)?;
        let n = params.len();
        for (x, _) in &params {
            self.fors.push(ForBind { surface: x.to_string(), var: x.clone(), prefix: vec![] });
        }
        let body = self.expr();
        self.fors.truncate(self.fors.len() - n);
        let body = body?;
        self.expect(Tok::RBrack)?;
        Ok(Expr::DictDef(i, params, Box::new(body)))
    }

    fn sng(&mut self) -> Result<Expr> {
        let save = self.pos;
        if self.peek() == &Tok::LParen {
            self.bump();
            if let Some(t) = self.try_tuple_term() {
                if self.eat(&Tok::RParen) {
                    return Ok(t);
                }
            }
            self.pos = save;
            let iota = self.alloc_iota();
            self.bump();
            let e = self.expr()?;
            self.expect(Tok::RParen)?;
            return Ok(Expr::Sng(Box::new(e), iota));
        }
        if let Some(t) = self.try_tuple_term() {
            return Ok(t);
        }
        self.pos = save;
        let iota = self.alloc_iota();
        let e = self.atom()?;
        Ok(Expr::Sng(Box::new(e), iota))
    }

    fn alloc_iota(&mut self) -> u64 {
        let i = self.next_iota;
        self.next_iota += 1;
        i
    }

    /// A tuple of variable projections, units and labels; restores the
    /// position on failure.
    fn try_tuple_term(&mut self) -> Option<Expr> {
        let save = self.pos;
        let explicit = self.explicit_iota;
        let r = self.tuple_term();
        if r.is_none() {
            self.pos = save;
            self.explicit_iota = explicit;
        }
        r
    }

    fn tuple_term(&mut self) -> Option<Expr> {
        match self.peek().clone() {
            Tok::Lt => {
                self.bump();
                if self.eat(&Tok::Gt) {
                    return Some(Expr::SngUnit);
                }
                let mut items = vec![self.tuple_term()?];
                while self.eat(&Tok::Comma) {
                    items.push(self.tuple_term()?);
                }
                self.eat(&Tok::Gt).then(|| prod_chain(items))
            }
            Tok::Ident(s) if s == "inL" => self.in_label().ok(),
            Tok::Ident(s) if self.lookup_for(&s).is_some() => {
                let (x, path) = self.var_path().ok()?;
                Some(Expr::SngVar(x, path))
            }
            _ => None,
        }
    }

    // ---- predicates ----

    fn pred(&mut self) -> Result<Pred> {
        let mut lhs = self.conj()?;
        while self.eat(&Tok::OrOr) {
            lhs = Pred::Or(Box::new(lhs), Box::new(self.conj()?));
        }
        Ok(lhs)
    }

    fn conj(&mut self) -> Result<Pred> {
        let mut lhs = self.cmp()?;
        while self.eat(&Tok::AndAnd) {
            lhs = Pred::And(Box::new(lhs), Box::new(self.cmp()?));
        }
        Ok(lhs)
    }

    fn cmp(&mut self) -> Result<Pred> {
        if self.eat(&Tok::LParen) {
            let p = self.pred()?;
            self.expect(Tok::RParen)?;
            return Ok(p);
        }
        let a = self.term()?;
        let op = self.bump();
        let b = self.term()?;
        Ok(match op {
            Tok::EqEq => Pred::Cmp(CmpOp::Eq, a, b),
            Tok::Ne => Pred::Cmp(CmpOp::Ne, a, b),
            Tok::Lt => Pred::Cmp(CmpOp::Lt, a, b),
            Tok::Le => Pred::Cmp(CmpOp::Le, a, b),
            Tok::Gt => Pred::Cmp(CmpOp::Lt, b, a),
            Tok::Ge => Pred::Cmp(CmpOp::Le, b, a),
            _ => return Err(self.error_at(self.prev_span(), "expected a comparison operator".into())),
        })
    }

    fn term(&mut self) -> Result<Term> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Term::Const(Atom::Int(n)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Term::Const(Atom::from(s.as_str())))
            }
            Tok::Ident(_) => {
                let (x, path) = self.var_path()?;
                Ok(Term::Var(x, path))
            }
            _ => Err(self.unexpected("a variable or constant")),
        }
    }

    // ---- values ----

    fn value(&mut self) -> Result<Value> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Value::int(n))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Value::str(&s))
            }
            Tok::Lt => {
                self.bump();
                if self.eat(&Tok::Gt) {
                    return Ok(Value::Unit);
                }
                let mut items = vec![self.value()?];
                while self.eat(&Tok::Comma) {
                    items.push(self.value()?);
                }
                self.expect(Tok::Gt)?;
                Ok(Value::tuple(items))
            }
            Tok::LBrace => {
                self.bump();
                let mut b = BagBuilder::new();
                if self.peek() != &Tok::RBrace {
                    loop {
                        let v = self.value()?;
                        let m = if self.eat(&Tok::Colon) { self.int()? } else { 1 };
                        b.add(v, m)?;
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBrace)?;
                Ok(Value::Bag(b.finish()))
            }
            Tok::At => Ok(Value::Label(std::sync::Arc::new(self.label()?))),
            Tok::LBrack => {
                self.bump();
                let mut entries = BTreeMap::new();
                if self.peek() != &Tok::RBrack {
                    loop {
                        let span = self.span();
                        let l = self.label()?;
                        self.expect(Tok::FatArrow)?;
                        let v = self.value()?;
                        let Value::Bag(b) = v else {
                            return Err(self.error_at(span, "dictionary definitions must be bags".into()));
                        };
                        if entries.insert(l, b).is_some() {
                            return Err(self.error_at(span, "label defined twice".into()));
                        }
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBrack)?;
                Ok(Value::Dict(std::sync::Arc::new(DictVal::Mat(std::sync::Arc::new(entries)))))
            }
            _ => Err(self.unexpected("a value")),
        }
    }

    fn label(&mut self) -> Result<Label> {
        self.expect(Tok::At)?;
        self.expect(Tok::LParen)?;
        let i = self.index()?;
        self.expect(Tok::Comma)?;
        let env = self.value()?;
        self.expect(Tok::RParen)?;
        Ok(Label::new(i, env))
    }

    // ---- costs ----

    fn cost(&mut self) -> Result<CostVal<Poly>> {
        match self.peek() {
            Tok::Lt => {
                self.bump();
                let mut items = vec![self.cost()?];
                while self.eat(&Tok::Comma) {
                    items.push(self.cost()?);
                }
                self.expect(Tok::Gt)?;
                let last = items.pop().expect("nonempty");
                Ok(items.into_iter().rev().fold(last, |acc, c| CostVal::Pair(Box::new(c), Box::new(acc))))
            }
            Tok::LBrace => {
                self.bump();
                let c = self.cost()?;
                self.expect(Tok::RBrace)?;
                Ok(CostVal::Bag(Poly::constant(1), Box::new(c)))
            }
            _ => {
                let span = self.span();
                let n = self.poly()?;
                if self.eat(&Tok::LBrace) {
                    let c = self.cost()?;
                    self.expect(Tok::RBrace)?;
                    return Ok(CostVal::Bag(n, Box::new(c)));
                }
                if n == Poly::constant(1) {
                    Ok(CostVal::Base)
                } else {
                    Err(self.error_at(span, "scalar costs must be `1`".into()))
                }
            }
        }
    }

    fn poly(&mut self) -> Result<Poly> {
        let mut acc = self.monomial()?;
        while self.eat(&Tok::Plus) {
            acc = acc + self.monomial()?;
        }
        Ok(acc)
    }

    fn monomial(&mut self) -> Result<Poly> {
        let mut acc = self.factor()?;
        loop {
            if self.eat(&Tok::Star) || matches!(self.peek(), Tok::Ident(_) | Tok::LParen) {
                acc = acc * self.factor()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn factor(&mut self) -> Result<Poly> {
        let span = self.span();
        let base = match self.bump() {
            Tok::Int(n) if n > 0 => Poly::constant(n as u64),
            Tok::Ident(v) => Poly::var(&v),
            Tok::LParen => {
                let p = self.poly()?;
                self.expect(Tok::RParen)?;
                p
            }
            _ => return Err(self.error_at(span, "expected a positive cardinality".into())),
        };
        if self.eat(&Tok::Caret) {
            let k = self.index()?;
            let mut acc = Poly::constant(1);
            for _ in 0..k {
                acc = acc * base.clone();
            }
            return Ok(acc);
        }
        Ok(base)
    }
}

enum Pat {
    Var(String),
    Tuple(Vec<Pat>),
}

fn flatten_pat(p: &Pat, var: &Name, prefix: Vec<u8>, out: &mut Vec<ForBind>) {
    match p {
        Pat::Var(x) if x == "_" => {}
        Pat::Var(x) => out.push(ForBind { surface: x.clone(), var: var.clone(), prefix }),
        Pat::Tuple(items) => {
            let n = items.len();
            for (i, item) in items.iter().enumerate() {
                let mut path = prefix.clone();
                path.extend(std::iter::repeat_n(2, i));
                if i + 1 < n {
                    path.push(1);
                }
                flatten_pat(item, var, path, out);
            }
        }
    }
}

fn prod_chain(mut items: Vec<Expr>) -> Expr {
    let last = items.pop().expect("nonempty");
    items.into_iter().rev().fold(last, |acc, e| Expr::Prod(Box::new(e), Box::new(acc)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn where_desugars_to_nested_for() {
        let e = parse_query("for x in R where x.1 == x.2 union sng x").unwrap();
        let Expr::For(x, src, body) = e else { panic!() };
        assert_eq!(&*x, "x");
        assert_eq!(*src, Expr::rel("R"));
        let Expr::For(_, p, inner) = *body else { panic!() };
        assert!(matches!(*p, Expr::Pred(_)));
        assert_eq!(*inner, Expr::var("x"));
    }

    #[test]
    fn tuple_patterns_become_projections() {
        let e = parse_query("for <a, b, c> in R union sng(<c, a>)").unwrap();
        let Expr::For(t, _, body) = e else { panic!() };
        assert_eq!(*body, Expr::prod(Expr::SngVar(t.clone(), vec![2, 2]), Expr::SngVar(t, vec![1])));
    }

    #[test]
    fn singletons_get_textual_indices() {
        let e = parse_query("for x in R union sng(sng(x)) * sng(R)").unwrap();
        let Expr::For(_, _, body) = e else { panic!() };
        let Expr::Prod(a, b) = *body else { panic!() };
        assert!(matches!(*a, Expr::Sng(ref inner, 1) if **inner == Expr::var("x")));
        assert!(matches!(*b, Expr::Sng(_, 2)));
    }

    #[test]
    fn unbound_variable_has_span() {
        let e = parse_query("for x in R union y").unwrap_err();
        assert_eq!(e.span(), Some(Span::new(17, 18)));
    }

    #[test]
    fn values_and_types() {
        let v = parse_value("{ <\"a\", { \"x1\", \"x2\" }>, <\"b\", { \"x3\" }> }").unwrap();
        let t = parse_type("Bag(<Base, Bag(Base)>)").unwrap();
        assert!(v.has_type(&t));
        assert_eq!(parse_value("{ \"a\" : -3 }").unwrap().as_bag().unwrap().get(&Value::str("a")), -3);
        let d = parse_value("[ @(3, <>) => { 1 } ]").unwrap();
        assert!(matches!(d, Value::Dict(_)));
    }

    #[test]
    fn db_files() {
        let decls = parse_db("M : Bag(<Base, Base>)\n{ <1, 2>, <3, 4> : 2 }\n").unwrap();
        assert_eq!(decls.len(), 1);
        assert_eq!(decls[0].value.card(), 3);
        assert!(parse_db("M : Base 1").is_err());
    }

    #[test]
    fn shredded_forms() {
        let e = parse_query("for m in delta' M^F union lookup([@4(k: Base) |-> M^G.2.i + sng(k)], m)").unwrap();
        let Expr::For(_, src, _) = e else { panic!() };
        assert_eq!(*src, Expr::DeltaRel(RelName::flat("M"), 2));
        let ok = parse_query("for l in M^F union lookup(M^G, l) (+) emptydict[Base]").unwrap();
        assert!(matches!(ok, Expr::For(..)));
    }
}
