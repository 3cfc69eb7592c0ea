//! Text syntax for queries, types, values, database files and costs.

mod lexer;
mod parser;
mod print;

pub use parser::{parse_card, parse_cost, parse_db, parse_query, parse_type, parse_value, parse_value_typed, RelDecl};
