//! Scalar domains the calculus is generic over.
//!
//! Multiplicities live in a signed integer ring ([`Multiplicity`]); cost
//! cardinalities live in a positive semiring with a partial order
//! ([`Card`]). Concrete instantiations are re-exported as aliases from the
//! crate root.

use std::fmt::{Debug, Display};
use std::hash::Hash;
use std::ops::{Add, Mul};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_traits::{CheckedAdd, CheckedMul, FromPrimitive, One, Signed, ToPrimitive, Zero};

/// Integer ring used for bag multiplicities.
pub trait Multiplicity:
    Clone
    + Ord
    + Hash
    + Debug
    + Display
    + FromStr
    + Zero
    + One
    + Signed
    + CheckedAdd
    + CheckedMul
    + FromPrimitive
    + ToPrimitive
    + Send
    + Sync
    + 'static
{
}

impl<T> Multiplicity for T where
    T: Clone
        + Ord
        + Hash
        + Debug
        + Display
        + FromStr
        + Zero
        + One
        + Signed
        + CheckedAdd
        + CheckedMul
        + FromPrimitive
        + ToPrimitive
        + Send
        + Sync
        + 'static
{
}

/// Cardinality domain of the cost model: positive naturals, possibly symbolic.
///
/// The order is partial in general; concrete integer types make it total.
pub trait Card:
    Clone + Debug + Display + PartialEq + One + Add<Output = Self> + Mul<Output = Self>
{
    fn from_u64(n: u64) -> Self;
    fn card_lt(&self, other: &Self) -> bool;
    fn card_le(&self, other: &Self) -> bool;
    /// Least upper bound when it exists, otherwise some upper bound.
    fn card_max(&self, other: &Self) -> Self;
}

macro_rules! impl_card_for_ord {
    ($($t:ty => $conv:expr),* $(,)?) => {
        $(
            impl Card for $t {
                fn from_u64(n: u64) -> Self {
                    $conv(n)
                }
                fn card_lt(&self, other: &Self) -> bool {
                    self < other
                }
                fn card_le(&self, other: &Self) -> bool {
                    self <= other
                }
                fn card_max(&self, other: &Self) -> Self {
                    if self >= other { self.clone() } else { other.clone() }
                }
            }
        )*
    };
}

impl_card_for_ord!(
    u64 => |n| n,
    u128 => |n: u64| n as u128,
    BigUint => BigUint::from,
);

/// Default multiplicity ring.
pub type Mult = i64;
/// Unbounded multiplicity ring.
pub type BigMult = BigInt;
