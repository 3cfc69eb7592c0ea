#![allow(dead_code)]

use std::collections::BTreeMap;

use nrc_core::syntax::{parse_db, parse_query, parse_value};
use nrc_core::{Bag, Expr, Name, Schema};

/// Movies related to each movie: same genre or same director.
pub const RELATED: &str = "for m in M union <m.1, sng(for m2 in M where m.1 != m2.1 && (m.2.1 == m2.2.1 || m.2.2 == m2.2.2) union m2.1)>";

pub const MOVIES: &str = r#"
M : Bag(<Base, Base, Base>)
{ <"Drive", "Drama", "Refn">, <"Skyfall", "Action", "Mendes">, <"Rush", "Action", "Howard"> }
"#;

pub const NEW_MOVIE: &str = r#"{ <"Jarhead", "Drama", "Mendes"> }"#;

pub fn related() -> Expr {
    parse_query(RELATED).expect("related parses")
}

pub fn movies() -> (Schema, BTreeMap<Name, Bag>) {
    let decls = parse_db(MOVIES).expect("movies parse");
    let mut schema = Schema::new();
    let mut db = BTreeMap::new();
    for d in decls {
        schema.insert(d.name.clone(), d.ty);
        db.insert(d.name, d.value);
    }
    (schema, db)
}

pub fn bag(src: &str) -> Bag {
    parse_value(src).expect("value parses").into_bag("literal").expect("a bag literal")
}

pub fn new_movie() -> Bag {
    bag(NEW_MOVIE)
}
