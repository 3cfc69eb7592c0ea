//! Incremental view maintenance for the positive nested relational calculus
//! on bags.
//!
//! The crate evaluates nested queries, derives delta queries, estimates
//! their cost, shreds nested queries and values into flat relations with
//! label dictionaries, and maintains materialized views under updates.
//! Multiplicities and cost cardinalities are generic; the aliases below fix
//! the common instantiations.

pub mod corpus;
pub mod cost;
pub mod delta;
pub mod dict;
pub mod engine;
pub mod error;
pub mod eval;
pub mod expr;
pub mod poly;
pub mod scalar;
pub mod shred;
pub mod simplify;
pub mod syntax;
pub mod typecheck;
pub mod types;
pub mod value;

pub use cost::{cost, size, CostEnv, SngPolicy};
pub use delta::{degree, degree_of, delta, delta_in, delta_stack, DegreeOf, DeltaStack, DeltaTarget};
pub use dict::{dict_add, dict_label_union, DictVal, SupportHint};
pub use engine::{compile, recompute_oracle, AuxView, IvmMode, MaintenancePlan, Maintained, MaterializedState, Stats, UpdateReport};
pub use error::{Error, Result, Span};
pub use eval::{eval, eval_counted, nested_db, Counter, Db, Env, RelKey};
pub use expr::{classify, free_relations, is_input_independent, name, Expr, Name, Part, Pred, RelName, Schema};
pub use poly::Poly;
pub use shred::{
    check_consistency, check_update_consistency, nest_value, shred_db, shred_query, shred_value, shred_value_depth,
    ConsistencyReport, LabelGen, ShreddedParts, ShreddedQuery, ShreddedValue,
};
pub use simplify::{empty_of, simplify};
pub use scalar::{BigMult, Card, Mult, Multiplicity};
pub use typecheck::{typecheck, typecheck_in, Mode};
pub use types::{shred_type, shred_type_depth, CtxPath, CtxStep, CtxTree, SchemaType, ShredType};
pub use value::{bag_add, bag_neg, Atom, Bag, BagBuilder, Label};

/// Values with machine-integer multiplicities.
pub type Value = value::Value<Mult>;
/// Values with unbounded multiplicities.
pub type BigValue = value::Value<BigMult>;
/// Concrete costs.
pub type Cost = cost::CostVal<u64>;
/// Costs with unbounded cardinalities.
pub type BigCost = cost::CostVal<num_bigint::BigUint>;
/// Costs over symbolic size parameters.
pub type SymCost = cost::CostVal<Poly>;
