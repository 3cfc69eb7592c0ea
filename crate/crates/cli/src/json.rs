//! Structured renderings for `--json`.

use nrc_core::cost::CostVal;
use nrc_core::value::Atom;
use nrc_core::{Bag, DictVal, Value};
use serde_json::{json, Value as Json};

pub fn value(v: &Value) -> Json {
    match v {
        Value::Unit => json!([]),
        Value::Atom(Atom::Int(n)) => json!(n),
        Value::Atom(Atom::Str(s)) => json!(s.as_ref()),
        Value::Pair(p) => json!([value(&p.0), value(&p.1)]),
        Value::Bag(b) => bag(b),
        Value::Label(l) => json!({ "label": { "index": l.index, "env": value(&l.env) } }),
        Value::Dict(d) => dict(d),
    }
}

pub fn bag(b: &Bag) -> Json {
    let items: Vec<Json> = b.iter().map(|(x, m)| json!({ "value": value(x), "mult": m })).collect();
    json!({ "bag": items })
}

pub fn dict(d: &DictVal) -> Json {
    match d.as_mat() {
        Some(m) => {
            let entries: Vec<Json> = m
                .iter()
                .map(|(l, b)| json!({ "label": value(&Value::Label(l.clone().into())), "bag": bag(b) }))
                .collect();
            json!({ "dict": entries })
        }
        None => json!({ "dict": d.to_string() }),
    }
}

pub fn cost<N: std::fmt::Display>(c: &CostVal<N>) -> Json {
    match c {
        CostVal::Base | CostVal::Unit | CostVal::Label => json!(1),
        CostVal::Pair(a, b) => json!([cost(a), cost(b)]),
        CostVal::Bag(n, e) => json!({ "card": n.to_string(), "elem": cost(e) }),
    }
}
