//! Symbolic cardinalities: polynomials with positive integer coefficients
//! over named size parameters, each ranging over the positive integers.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul};

use num_bigint::BigUint;
use num_traits::One;

use crate::scalar::Card;

/// Power product of size parameters, e.g. `n^2*d`.
pub type Monomial = BTreeMap<String, u32>;

/// Parameter values used when the coefficient-wise comparison is inconclusive.
pub const GRID: [u64; 3] = [64, 1024, 16384];

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Poly(BTreeMap<Monomial, BigUint>);

impl Poly {
    pub fn constant(n: u64) -> Self {
        let mut m = BTreeMap::new();
        if n > 0 {
            m.insert(Monomial::new(), BigUint::from(n));
        }
        Poly(m)
    }

    pub fn var(v: &str) -> Self {
        let mut mono = Monomial::new();
        mono.insert(v.to_string(), 1);
        Poly(BTreeMap::from([(mono, BigUint::one())]))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigUint)> {
        self.0.iter()
    }

    pub fn is_constant(&self) -> bool {
        self.0.keys().all(|m| m.is_empty())
    }

    pub fn vars(&self) -> Vec<String> {
        let mut vs: Vec<String> = self.0.keys().flat_map(|m| m.keys().cloned()).collect();
        vs.sort();
        vs.dedup();
        vs
    }

    /// Evaluates at a parameter assignment; missing parameters count as 1.
    pub fn eval(&self, at: &BTreeMap<String, u64>) -> BigUint {
        self.0
            .iter()
            .map(|(mono, c)| {
                mono.iter().fold(c.clone(), |acc, (v, k)| acc * BigUint::from(*at.get(v).unwrap_or(&1)).pow(*k))
            })
            .sum()
    }

    fn coeff(&self, m: &Monomial) -> BigUint {
        self.0.get(m).cloned().unwrap_or_default()
    }

    /// Every coefficient of `self` is at most the matching one of `other`.
    fn dominated_by(&self, other: &Poly) -> bool {
        self.0.iter().all(|(m, c)| *c <= other.coeff(m))
    }

    fn grid_points(&self, other: &Poly) -> Vec<BTreeMap<String, u64>> {
        let mut vars = self.vars();
        vars.extend(other.vars());
        vars.sort();
        vars.dedup();
        let mut points = vec![BTreeMap::new()];
        for v in vars {
            points = points
                .into_iter()
                .flat_map(|p| {
                    let v = v.clone();
                    GRID.iter().map(move |g| {
                        let mut q = p.clone();
                        q.insert(v.clone(), *g);
                        q
                    })
                })
                .collect();
        }
        points
    }
}

impl One for Poly {
    fn one() -> Self {
        Poly::constant(1)
    }
}

impl Add for Poly {
    type Output = Poly;

    fn add(mut self, rhs: Poly) -> Poly {
        for (m, c) in rhs.0 {
            *self.0.entry(m).or_default() += c;
        }
        self
    }
}

impl Mul for Poly {
    type Output = Poly;

    fn mul(self, rhs: Poly) -> Poly {
        let mut out: BTreeMap<Monomial, BigUint> = BTreeMap::new();
        for (ma, ca) in &self.0 {
            for (mb, cb) in &rhs.0 {
                let mut m = ma.clone();
                for (v, k) in mb {
                    *m.entry(v.clone()).or_default() += k;
                }
                *out.entry(m).or_default() += ca * cb;
            }
        }
        Poly(out)
    }
}

impl Card for Poly {
    fn from_u64(n: u64) -> Self {
        Poly::constant(n)
    }

    /// Holds when `other` exceeds `self` for all parameter values: decided by
    /// coefficient dominance, else by evaluation on the grid.
    fn card_lt(&self, other: &Self) -> bool {
        if self.dominated_by(other) {
            return self != other;
        }
        self.grid_points(other).iter().all(|p| self.eval(p) < other.eval(p))
    }

    fn card_le(&self, other: &Self) -> bool {
        self.dominated_by(other) || self.grid_points(other).iter().all(|p| self.eval(p) <= other.eval(p))
    }

    fn card_max(&self, other: &Self) -> Self {
        if self.dominated_by(other) {
            return other.clone();
        }
        if other.dominated_by(self) {
            return self.clone();
        }
        let mut out = self.0.clone();
        for (m, c) in &other.0 {
            let e = out.entry(m.clone()).or_default();
            if *c > *e {
                *e = c.clone();
            }
        }
        Poly(out)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("0");
        }
        let mut terms: Vec<_> = self.0.iter().collect();
        terms.sort_by(|(a, _), (b, _)| (b.values().sum::<u32>(), b).cmp(&(a.values().sum::<u32>(), a)));
        for (i, (mono, c)) in terms.into_iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            if mono.is_empty() || !c.is_one() {
                write!(f, "{c}")?;
            }
            for (k, (v, e)) in mono.iter().enumerate() {
                if k > 0 {
                    f.write_str("*")?;
                }
                f.write_str(v)?;
                if *e > 1 {
                    write!(f, "^{e}")?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_and_display() {
        let n = Poly::var("n");
        let p = n.clone() * n.clone() + Poly::constant(2) * n.clone() * Poly::var("d") + Poly::one();
        assert_eq!(p.to_string(), "n^2 + 2d*n + 1");
        assert_eq!(p.eval(&BTreeMap::from([("n".into(), 3), ("d".into(), 2)])), BigUint::from(22u32));
    }

    #[test]
    fn order_by_dominance_and_grid() {
        let n = Poly::var("n");
        let d = Poly::var("d");
        assert!(Poly::one().card_lt(&n));
        assert!(!n.card_lt(&n));
        assert!(n.card_le(&n));
        assert!(d.card_lt(&(n.clone() * d.clone())));
        // 1000 < n^2 only on the grid
        let big = Poly::constant(1000);
        assert!(big.card_lt(&(n.clone() * n.clone())));
        assert!(!n.card_lt(&d));
        assert_eq!(n.card_max(&d), n + d);
    }
}
