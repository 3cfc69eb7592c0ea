//! Types of the calculus and of its label extension.

use std::fmt;

/// A type of the nested relational calculus.
///
/// `Label` and `Dict` only occur in shredded programs. `Dict(c)` is the type of
/// a label dictionary whose definitions are bags of `c`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SchemaType {
    Unit,
    Base,
    Prod(Box<SchemaType>, Box<SchemaType>),
    Bag(Box<SchemaType>),
    Label,
    Dict(Box<SchemaType>),
}

impl SchemaType {
    pub fn bag(elem: SchemaType) -> Self {
        SchemaType::Bag(Box::new(elem))
    }

    pub fn prod(l: SchemaType, r: SchemaType) -> Self {
        SchemaType::Prod(Box::new(l), Box::new(r))
    }

    pub fn dict(elem: SchemaType) -> Self {
        SchemaType::Dict(Box::new(elem))
    }

    /// Right-nested tuple type; `tuple([a])` is `a`, `tuple([])` is `Unit`.
    pub fn tuple(mut items: Vec<SchemaType>) -> Self {
        match items.len() {
            0 => SchemaType::Unit,
            1 => items.pop().unwrap(),
            _ => {
                let last = items.pop().unwrap();
                items.into_iter().rev().fold(last, |acc, t| SchemaType::prod(t, acc))
            }
        }
    }

    /// Element type of a bag type.
    pub fn bag_elem(&self) -> Option<&SchemaType> {
        match self {
            SchemaType::Bag(e) => Some(e),
            _ => None,
        }
    }

    pub fn dict_elem(&self) -> Option<&SchemaType> {
        match self {
            SchemaType::Dict(e) => Some(e),
            _ => None,
        }
    }

    /// Built from `Unit`, `Base` and products only.
    pub fn is_flat_tuple(&self) -> bool {
        match self {
            SchemaType::Unit | SchemaType::Base => true,
            SchemaType::Prod(a, b) => a.is_flat_tuple() && b.is_flat_tuple(),
            _ => false,
        }
    }

    /// Contains no bag or dictionary anywhere (labels allowed).
    pub fn is_flat(&self) -> bool {
        match self {
            SchemaType::Unit | SchemaType::Base | SchemaType::Label => true,
            SchemaType::Prod(a, b) => a.is_flat() && b.is_flat(),
            SchemaType::Bag(_) | SchemaType::Dict(_) => false,
        }
    }

    /// Follows a projection path through products.
    pub fn project(&self, path: &[u8]) -> Option<&SchemaType> {
        let mut t = self;
        for &step in path {
            t = match (t, step) {
                (SchemaType::Prod(a, _), 1) => a,
                (SchemaType::Prod(_, b), 2) => b,
                _ => return None,
            };
        }
        Some(t)
    }

    /// Number of nested bag levels below this type.
    pub fn bag_depth(&self) -> usize {
        match self {
            SchemaType::Unit | SchemaType::Base | SchemaType::Label => 0,
            SchemaType::Prod(a, b) => a.bag_depth().max(b.bag_depth()),
            SchemaType::Bag(e) | SchemaType::Dict(e) => 1 + e.bag_depth(),
        }
    }

    pub fn contains_label(&self) -> bool {
        match self {
            SchemaType::Label => true,
            SchemaType::Unit | SchemaType::Base => false,
            SchemaType::Prod(a, b) => a.contains_label() || b.contains_label(),
            SchemaType::Bag(e) | SchemaType::Dict(e) => e.contains_label(),
        }
    }
}

impl fmt::Display for SchemaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemaType::Unit => write!(f, "Unit"),
            SchemaType::Base => write!(f, "Base"),
            SchemaType::Label => write!(f, "Label"),
            SchemaType::Bag(e) => write!(f, "Bag({e})"),
            SchemaType::Dict(e) => write!(f, "Dict({e})"),
            SchemaType::Prod(a, b) => {
                write!(f, "<{a}")?;
                let mut rest = b.as_ref();
                while let SchemaType::Prod(x, y) = rest {
                    write!(f, ", {x}")?;
                    rest = y;
                }
                write!(f, ", {rest}>")
            }
        }
    }
}

/// One step into a context tree: a product component or the inner context
/// below a dictionary node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CtxStep {
    Fst,
    Snd,
    Inner,
}

pub type CtxPath = Vec<CtxStep>;

/// Renders a context path as `.1.i.2`.
pub fn render_path(path: &[CtxStep]) -> String {
    let mut out = String::new();
    for step in path {
        out.push_str(match step {
            CtxStep::Fst => ".1",
            CtxStep::Snd => ".2",
            CtxStep::Inner => ".i",
        });
    }
    out
}

/// Static shape of a shredded context.
///
/// It mirrors the element type it was built from: scalars become `Unit`,
/// products stay products and every bag becomes a dictionary node carrying a
/// payload `T` plus the context of the bag's elements.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CtxTree<T> {
    Unit,
    Pair(Box<CtxTree<T>>, Box<CtxTree<T>>),
    Dict(T, Box<CtxTree<T>>),
}

impl<T> CtxTree<T> {
    pub fn pair(a: CtxTree<T>, b: CtxTree<T>) -> Self {
        CtxTree::Pair(Box::new(a), Box::new(b))
    }

    pub fn dict(payload: T, inner: CtxTree<T>) -> Self {
        CtxTree::Dict(payload, Box::new(inner))
    }

    pub fn map<U>(&self, f: &mut impl FnMut(&[CtxStep], &T) -> U) -> CtxTree<U> {
        fn go<T, U>(t: &CtxTree<T>, path: &mut CtxPath, f: &mut impl FnMut(&[CtxStep], &T) -> U) -> CtxTree<U> {
            match t {
                CtxTree::Unit => CtxTree::Unit,
                CtxTree::Pair(a, b) => {
                    path.push(CtxStep::Fst);
                    let a = go(a, path, f);
                    path.pop();
                    path.push(CtxStep::Snd);
                    let b = go(b, path, f);
                    path.pop();
                    CtxTree::pair(a, b)
                }
                CtxTree::Dict(x, inner) => {
                    let y = f(path, x);
                    path.push(CtxStep::Inner);
                    let inner = go(inner, path, f);
                    path.pop();
                    CtxTree::dict(y, inner)
                }
            }
        }
        go(self, &mut Vec::new(), f)
    }

    pub fn try_map<U, E>(
        &self,
        f: &mut impl FnMut(&[CtxStep], &T) -> Result<U, E>,
    ) -> Result<CtxTree<U>, E> {
        fn go<T, U, E>(
            t: &CtxTree<T>,
            path: &mut CtxPath,
            f: &mut impl FnMut(&[CtxStep], &T) -> Result<U, E>,
        ) -> Result<CtxTree<U>, E> {
            Ok(match t {
                CtxTree::Unit => CtxTree::Unit,
                CtxTree::Pair(a, b) => {
                    path.push(CtxStep::Fst);
                    let a = go(a, path, f)?;
                    path.pop();
                    path.push(CtxStep::Snd);
                    let b = go(b, path, f)?;
                    path.pop();
                    CtxTree::pair(a, b)
                }
                CtxTree::Dict(x, inner) => {
                    let y = f(path, x)?;
                    path.push(CtxStep::Inner);
                    let inner = go(inner, path, f)?;
                    path.pop();
                    CtxTree::dict(y, inner)
                }
            })
        }
        go(self, &mut Vec::new(), f)
    }

    /// Dictionary payloads in pre-order together with their paths.
    pub fn leaves(&self) -> Vec<(CtxPath, &T)> {
        let mut out = Vec::new();
        fn go<'a, T>(t: &'a CtxTree<T>, path: &mut CtxPath, out: &mut Vec<(CtxPath, &'a T)>) {
            match t {
                CtxTree::Unit => {}
                CtxTree::Pair(a, b) => {
                    path.push(CtxStep::Fst);
                    go(a, path, out);
                    path.pop();
                    path.push(CtxStep::Snd);
                    go(b, path, out);
                    path.pop();
                }
                CtxTree::Dict(x, inner) => {
                    out.push((path.clone(), x));
                    path.push(CtxStep::Inner);
                    go(inner, path, out);
                    path.pop();
                }
            }
        }
        go(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn leaf(&self, path: &[CtxStep]) -> Option<&T> {
        match self.subtree(path)? {
            CtxTree::Dict(x, _) => Some(x),
            _ => None,
        }
    }

    pub fn leaf_mut(&mut self, path: &[CtxStep]) -> Option<&mut T> {
        let mut t = self;
        for step in path {
            t = match (t, step) {
                (CtxTree::Pair(a, _), CtxStep::Fst) => a,
                (CtxTree::Pair(_, b), CtxStep::Snd) => b,
                (CtxTree::Dict(_, inner), CtxStep::Inner) => inner,
                _ => return None,
            };
        }
        match t {
            CtxTree::Dict(x, _) => Some(x),
            _ => None,
        }
    }

    pub fn subtree(&self, path: &[CtxStep]) -> Option<&CtxTree<T>> {
        let mut t = self;
        for step in path {
            t = match (t, step) {
                (CtxTree::Pair(a, _), CtxStep::Fst) => a,
                (CtxTree::Pair(_, b), CtxStep::Snd) => b,
                (CtxTree::Dict(_, inner), CtxStep::Inner) => inner,
                _ => return None,
            };
        }
        Some(t)
    }

    /// Follows a tuple projection path (`1`/`2` steps) through pair nodes.
    pub fn project(&self, path: &[u8]) -> Option<&CtxTree<T>> {
        let mut t = self;
        for &step in path {
            t = match (t, step) {
                (CtxTree::Pair(a, _), 1) => a,
                (CtxTree::Pair(_, b), 2) => b,
                _ => return None,
            };
        }
        Some(t)
    }

    pub fn zip_with<U, V>(
        &self,
        other: &CtxTree<U>,
        f: &mut impl FnMut(&T, &U) -> V,
    ) -> Option<CtxTree<V>> {
        Some(match (self, other) {
            (CtxTree::Unit, CtxTree::Unit) => CtxTree::Unit,
            (CtxTree::Pair(a, b), CtxTree::Pair(c, d)) => {
                CtxTree::pair(a.zip_with(c, f)?, b.zip_with(d, f)?)
            }
            (CtxTree::Dict(x, i), CtxTree::Dict(y, j)) => CtxTree::dict(f(x, y), i.zip_with(j, f)?),
            _ => return None,
        })
    }
}

/// A type split into its flat component and its context shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShredType {
    pub flat: SchemaType,
    /// Dictionary nodes carry the flat element type of the bag they replace.
    pub ctx: CtxTree<SchemaType>,
}

/// Shreds a type: every bag below the top is replaced by `Label` in the flat
/// component and by a dictionary node in the context.
pub fn shred_type(a: &SchemaType) -> ShredType {
    shred_type_depth(a, usize::MAX)
}

/// Like [`shred_type`] but leaves bags nested `depth` or more levels deep
/// unshredded.
pub fn shred_type_depth(a: &SchemaType, depth: usize) -> ShredType {
    match a {
        SchemaType::Unit | SchemaType::Base | SchemaType::Label => {
            ShredType { flat: a.clone(), ctx: CtxTree::Unit }
        }
        SchemaType::Prod(l, r) => {
            let l = shred_type_depth(l, depth);
            let r = shred_type_depth(r, depth);
            ShredType { flat: SchemaType::prod(l.flat, r.flat), ctx: CtxTree::pair(l.ctx, r.ctx) }
        }
        SchemaType::Bag(_) | SchemaType::Dict(_) if depth == 0 => {
            ShredType { flat: a.clone(), ctx: CtxTree::Unit }
        }
        SchemaType::Bag(c) => {
            let c = shred_type_depth(c, depth - 1);
            ShredType { flat: SchemaType::Label, ctx: CtxTree::dict(c.flat, c.ctx) }
        }
        SchemaType::Dict(_) => ShredType { flat: a.clone(), ctx: CtxTree::Unit },
    }
}

/// Type of the dictionary stored at a context path, as `Dict(C^F)`.
pub fn ctx_leaf_type(elem: &SchemaType, path: &[CtxStep]) -> Option<SchemaType> {
    shred_type(elem).ctx.leaf(path).map(|c| SchemaType::dict(c.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuple_is_right_nested() {
        let t = SchemaType::tuple(vec![SchemaType::Base, SchemaType::Base, SchemaType::Unit]);
        assert_eq!(
            t,
            SchemaType::prod(SchemaType::Base, SchemaType::prod(SchemaType::Base, SchemaType::Unit))
        );
        assert_eq!(t.to_string(), "<Base, Base, Unit>");
    }

    #[test]
    fn shred_type_replaces_inner_bags() {
        let inner = SchemaType::bag(SchemaType::Base);
        let a = SchemaType::prod(SchemaType::Base, inner.clone());
        let st = shred_type(&a);
        assert_eq!(st.flat, SchemaType::prod(SchemaType::Base, SchemaType::Label));
        assert_eq!(
            st.ctx,
            CtxTree::pair(CtxTree::Unit, CtxTree::dict(SchemaType::Base, CtxTree::Unit))
        );
        let nested = shred_type(&SchemaType::bag(inner));
        assert_eq!(nested.flat, SchemaType::Label);
        assert_eq!(nested.ctx, CtxTree::dict(SchemaType::Label, CtxTree::dict(SchemaType::Base, CtxTree::Unit)));
        assert_eq!(shred_type(&SchemaType::Base).ctx, CtxTree::Unit);
    }

    #[test]
    fn partial_shredding_keeps_deep_bags() {
        let a = SchemaType::bag(SchemaType::bag(SchemaType::Base));
        let st = shred_type_depth(&a, 1);
        assert_eq!(st.flat, SchemaType::Label);
        assert_eq!(st.ctx, CtxTree::dict(SchemaType::bag(SchemaType::Base), CtxTree::Unit));
    }

    #[test]
    fn flat_tuple_predicate() {
        assert!(SchemaType::prod(SchemaType::Base, SchemaType::Unit).is_flat_tuple());
        assert!(!SchemaType::bag(SchemaType::Base).is_flat_tuple());
        assert!(!SchemaType::Label.is_flat_tuple());
        assert!(SchemaType::Label.is_flat());
    }
}
