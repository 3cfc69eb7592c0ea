//! Type checking for the calculus and its label extension.

use crate::error::{Error, Result};
use crate::expr::{depends, Expr, Name, Pred, Schema, Term};
use crate::types::SchemaType;

/// Which singleton forms are accepted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    /// Full calculus: singletons may have input-dependent bodies.
    #[default]
    Nrc,
    /// Restricted fragment: singleton bodies must be input-independent.
    Inc,
}

/// Typing context: the schema plus let- and for-bound variables.
#[derive(Clone, Debug)]
pub struct TypeCx<'a> {
    pub schema: &'a Schema,
    pub mode: Mode,
    lets: Vec<(Name, SchemaType, bool)>,
    fors: Vec<(Name, SchemaType)>,
}

impl<'a> TypeCx<'a> {
    pub fn new(schema: &'a Schema, mode: Mode) -> Self {
        TypeCx { schema, mode, lets: Vec::new(), fors: Vec::new() }
    }

    pub fn push_for(&mut self, x: &Name, ty: SchemaType) {
        self.fors.push((x.clone(), ty));
    }

    pub fn pop_for(&mut self) {
        self.fors.pop();
    }

    /// Binds a let-variable; `dependent` records whether its definition
    /// reads the input.
    pub fn push_let(&mut self, x: &Name, ty: SchemaType, dependent: bool) {
        self.lets.push((x.clone(), ty, dependent));
    }

    pub fn pop_let(&mut self) {
        self.lets.pop();
    }

    pub fn for_type(&self, x: &str) -> Result<&SchemaType> {
        self.fors.iter().rev().find(|(y, _)| &**y == x).map(|(_, t)| t).ok_or_else(|| Error::UnboundVariable(x.into()))
    }

    pub fn let_type(&self, x: &str) -> Result<&SchemaType> {
        self.lets.iter().rev().find(|(y, ..)| &**y == x).map(|(_, t, _)| t).ok_or_else(|| Error::UnboundVariable(x.into()))
    }

    pub(crate) fn depends(&self, e: &Expr) -> bool {
        let lets: Vec<(Name, bool)> = self.lets.iter().map(|(x, _, d)| (x.clone(), *d)).collect();
        depends(e, &lets)
    }

    fn project(&self, x: &str, path: &[u8]) -> Result<SchemaType> {
        let t = self.for_type(x)?;
        t.project(path).cloned().ok_or_else(|| Error::mismatch(format!("projection of `{x}`"), "a tuple", t))
    }

    fn bag_of(&mut self, e: &Expr, context: &str) -> Result<SchemaType> {
        let t = self.check(e)?;
        match t.bag_elem() {
            Some(a) => Ok(a.clone()),
            None => Err(Error::mismatch(context, "a bag", &t)),
        }
    }

    fn dict_of(&mut self, e: &Expr, context: &str) -> Result<SchemaType> {
        let t = self.check(e)?;
        match t.dict_elem() {
            Some(a) => Ok(a.clone()),
            None => Err(Error::mismatch(context, "a dictionary", &t)),
        }
    }

    fn check_pred(&self, p: &Pred) -> Result<()> {
        match p {
            Pred::Cmp(_, a, b) => {
                for t in [a, b] {
                    if let Term::Var(x, path) = t {
                        let ty = self.project(x, path)?;
                        if !ty.is_flat_tuple() {
                            return Err(Error::PredicateOnNonFlatTuple(t.to_string()));
                        }
                    }
                }
                Ok(())
            }
            Pred::And(a, b) | Pred::Or(a, b) => {
                self.check_pred(a)?;
                self.check_pred(b)
            }
        }
    }

    /// Type of `e` in this context.
    pub fn check(&mut self, e: &Expr) -> Result<SchemaType> {
        Ok(match e {
            Expr::Rel(r) | Expr::DeltaRel(r, _) => {
                self.schema.part_type(r).ok_or_else(|| Error::UnknownRelation(r.to_string()))?
            }
            Expr::LetVar(x) => self.let_type(x)?.clone(),
            Expr::SngVar(x, path) => SchemaType::bag(self.project(x, path)?),
            Expr::Pred(p) => {
                self.check_pred(p)?;
                SchemaType::bag(SchemaType::Unit)
            }
            Expr::Empty(t) => match t.bag_elem() {
                Some(_) => t.clone(),
                None => return Err(Error::mismatch("empty bag", "a bag type", t)),
            },
            Expr::SngUnit => SchemaType::bag(SchemaType::Unit),
            Expr::Sng(b, _) | Expr::SngStar(b, _) => {
                let dep = self.depends(b);
                if dep && (self.mode == Mode::Inc || matches!(e, Expr::SngStar(..))) {
                    return Err(Error::SngStarInputDependent(e.to_string()));
                }
                let a = self.bag_of(b, "singleton")?;
                SchemaType::bag(SchemaType::bag(a))
            }
            Expr::Flatten(b) => {
                let a = self.bag_of(b, "flatten")?;
                match a.bag_elem() {
                    Some(inner) => SchemaType::bag(inner.clone()),
                    None => return Err(Error::mismatch("flatten", "a bag of bags", SchemaType::bag(a))),
                }
            }
            Expr::For(x, src, body) => {
                let a = self.bag_of(src, "for source")?;
                self.push_for(x, a);
                let t = self.bag_of(body, "for body");
                self.pop_for();
                SchemaType::bag(t?)
            }
            Expr::Prod(a, b) => {
                let ta = self.bag_of(a, "product")?;
                let tb = self.bag_of(b, "product")?;
                SchemaType::bag(SchemaType::prod(ta, tb))
            }
            Expr::Union(a, b) => {
                let ta = self.bag_of(a, "bag union")?;
                let tb = self.bag_of(b, "bag union")?;
                if ta != tb {
                    return Err(Error::mismatch("bag union", SchemaType::bag(ta), SchemaType::bag(tb)));
                }
                SchemaType::bag(ta)
            }
            Expr::Neg(b) => SchemaType::bag(self.bag_of(b, "negation")?),
            Expr::Let(x, a, b) => {
                let ta = self.check(a)?;
                let dep = self.depends(a);
                self.push_let(x, ta, dep);
                let t = self.check(b);
                self.pop_let();
                t?
            }
            Expr::InL(_, xs) => {
                for x in xs {
                    self.for_type(x)?;
                }
                SchemaType::bag(SchemaType::Label)
            }
            Expr::DictDef(_, params, body) => {
                for (x, t) in params {
                    self.push_for(x, t.clone());
                }
                let t = self.bag_of(body, "dictionary definition");
                for _ in params {
                    self.pop_for();
                }
                SchemaType::dict(t?)
            }
            Expr::DictApp(d, x, path) => {
                let a = self.dict_of(d, "lookup")?;
                let l = self.project(x, path)?;
                if l != SchemaType::Label {
                    return Err(Error::mismatch("lookup key", SchemaType::Label, l));
                }
                SchemaType::bag(a)
            }
            Expr::DictUnion(a, b) | Expr::DictAdd(a, b) => {
                let ta = self.dict_of(a, "dictionary union")?;
                let tb = self.dict_of(b, "dictionary union")?;
                if ta != tb {
                    return Err(Error::mismatch("dictionary union", SchemaType::dict(ta), SchemaType::dict(tb)));
                }
                SchemaType::dict(ta)
            }
            Expr::DictEmpty(t) => SchemaType::dict(t.clone()),
        })
    }
}

/// Type of a closed expression.
pub fn typecheck(e: &Expr, schema: &Schema, mode: Mode) -> Result<SchemaType> {
    TypeCx::new(schema, mode).check(e)
}

/// Type of an expression with free variables.
pub fn typecheck_in(
    e: &Expr,
    schema: &Schema,
    lets: &[(Name, SchemaType)],
    fors: &[(Name, SchemaType)],
    mode: Mode,
) -> Result<SchemaType> {
    let mut cx = TypeCx::new(schema, mode);
    for (x, t) in lets {
        cx.push_let(x, t.clone(), true);
    }
    for (x, t) in fors {
        cx.push_for(x, t.clone());
    }
    cx.check(e)
}
