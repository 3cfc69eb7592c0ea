//! The calculus at other scalar instantiations: unbounded multiplicities,
//! unbounded cardinalities and symbolic costs.

mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::{movies, related};
use nrc_core::syntax::{parse_card, parse_cost, parse_query};
use nrc_core::value::{Bag, Value};
use nrc_core::{
    check_consistency, compile, cost, eval, name, nest_value, nested_db, shred_value, size, BigCost, BigMult, CostEnv,
    Counter, Error, IvmMode, LabelGen, MaterializedState, RelKey, RelName, Schema, SymCost,
};
use num_bigint::{BigInt, BigUint};

fn big(s: &str) -> BigMult {
    s.parse().unwrap()
}

fn sbag<M: nrc_core::Multiplicity>(xs: &[(&str, M)]) -> Bag<M> {
    Bag::from_entries(xs.iter().map(|(x, m)| (Value::str(x), m.clone()))).unwrap()
}

#[test]
fn products_overflow_machine_integers_but_not_big_ones() {
    let schema = Schema::new().with("R", nrc_core::syntax::parse_type("Bag(Base)").unwrap());
    let q = parse_query("R * R").unwrap();
    let m = i64::MAX / 2;
    let small = nested_db([(name("R"), sbag(&[("a", m)]))]);
    assert_eq!(eval(&q, &Arc::new(small)), Err(Error::MultiplicityOverflow));

    let bigdb = nested_db([(name("R"), sbag(&[("a", BigInt::from(m))]))]);
    let out = eval(&q, &Arc::new(bigdb)).unwrap();
    let pair = Value::pair(Value::str("a"), Value::str("a"));
    assert_eq!(out.as_bag().unwrap().get(&pair), BigInt::from(m) * BigInt::from(m));
    nrc_core::typecheck(&q, &schema, nrc_core::Mode::Inc).unwrap();
}

#[test]
fn big_multiplicities_shred_and_nest() {
    let inner: Bag<BigMult> = sbag(&[("x", big("-98765432109876543210"))]);
    let v: Bag<BigMult> =
        Bag::from_entries([(Value::pair(Value::str("a"), Value::Bag(inner)), big("12345678901234567890"))]).unwrap();
    let elem = nrc_core::syntax::parse_type("<Base, Bag(Base)>").unwrap();
    let mut gen = LabelGen::<BigMult>::starting_after(0);
    let sv = shred_value(&v, &elem, &name("X"), &mut gen).unwrap();
    assert!(check_consistency(&sv, &elem).ok());
    assert_eq!(nest_value(&sv.flat, &sv.ctx, &elem, &Counter::default()).unwrap(), v);
}

#[test]
fn maintained_views_over_big_multiplicities() {
    let (schema, db) = movies();
    let db: BTreeMap<_, Bag<BigMult>> = db
        .iter()
        .map(|(r, b)| (r.clone(), Bag::from_entries(b.iter().map(|(x, m)| (widen(x), BigInt::from(*m)))).unwrap()))
        .collect();
    let plan = Arc::new(compile(&related(), &schema, IvmMode::Recursive).unwrap());
    let mut st = MaterializedState::<BigMult>::initialize(plan, &db).unwrap();
    let jarhead = Value::tuple(vec![Value::str("Jarhead"), Value::str("Drama"), Value::str("Mendes")]);
    let huge = big("100000000000000000000");
    st.apply_update("M", &Bag::from_entries([(jarhead.clone(), huge.clone())]).unwrap()).unwrap();
    st.verify().unwrap();
    let view = st.read_view().unwrap();
    let row = view.iter().find(|(x, _)| x.project(&[1]) == Some(&Value::str("Jarhead"))).unwrap();
    assert_eq!(row.1, &huge);
}

/// Flat values carry no multiplicities, so they convert by rebuilding.
fn widen<M: nrc_core::Multiplicity>(x: &Value) -> Value<M> {
    match x {
        Value::Atom(a) => Value::Atom(a.clone()),
        Value::Unit => Value::Unit,
        Value::Pair(p) => Value::pair(widen(&p.0), widen(&p.1)),
        other => panic!("not flat: {other}"),
    }
}

#[test]
fn related_costs_at_every_cardinality_domain() {
    let (schema, _) = movies();
    let ty = &schema.rels["M"];
    let key = RelKey::base(RelName::whole("M"));

    let sym_m = parse_cost("n{<1,<1,1>>}").unwrap().conform(ty).unwrap();
    let sym: SymCost = cost(&related(), &CostEnv::new().with_rel(key.clone(), sym_m).permissive()).unwrap();
    assert_eq!(sym.to_string(), "n{<1,n{1}>}");
    assert_eq!(sym.tcost(), parse_card("n + n^2").unwrap());

    let m3 = size::<i64, u64>(&Value::Bag(movies().1["M"].clone()), ty).unwrap();
    let concrete: nrc_core::Cost = cost(&related(), &CostEnv::new().with_rel(key.clone(), m3).permissive()).unwrap();
    assert_eq!(concrete.tcost(), 12);

    let huge = BigUint::from(10u32).pow(30);
    let mb = parse_cost("1{<1,<1,1>>}").unwrap().conform(ty).unwrap().map_card(&|_| huge.clone());
    let bc: BigCost = cost(&related(), &CostEnv::new().with_rel(key, mb).permissive()).unwrap();
    assert_eq!(bc.tcost(), &huge * &huge + &huge);
}

#[test]
fn strict_costing_rejects_the_nested_query() {
    let (schema, _) = movies();
    let m = parse_cost("n{<1,<1,1>>}").unwrap().conform(&schema.rels["M"]).unwrap();
    let env = CostEnv::new().with_rel(RelKey::base(RelName::whole("M")), m);
    assert!(cost(&related(), &env).is_err());
}
