//! Named queries and small reference databases.

use crate::provenance::Database;
use crate::query::{parse_query, Query};

/// `(name, source)` for every named query.
pub const NAMED_QUERIES: &[(&str, &str)] = &[
    ("chain2", "Chain2 :- R(x,y), S(y,z)"),
    ("chain3", "Chain3 :- R(x,y), S(y,z), T(z,u)"),
    ("star2", "Star2 :- R(x), S(x,y), T(y)"),
    ("star3", "Star3 :- R(x), S(y), T(z), W(x,y,z)"),
    ("triangle", "Triangle :- R(x,y), S(y,z), T(z,x)"),
    ("triangle-unary", "TriangleUnary :- U(x), R(x,y), S(y,z), T(z,x)"),
    ("chain2-we", "Chain2WE :- A(x), R(x,y), S(y,z), B(z)"),
    (
        "cycle6-we",
        "Cycle6WE :- A(x), R(x,y), B(y), S(y,z), C(z), T(z,u), D(u), U(u,v), E(v), V(v,w), F(w), W(w,x)",
    ),
];

pub fn named_query(name: &str) -> Option<Query> {
    NAMED_QUERIES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, src)| parse_query(src).expect("named queries parse"))
}

/// Unary `R`, `T` and binary `S` over `{1,2,3}`; `s_13` is optional.
pub fn star2_database(with_s13: bool) -> Database {
    let mut text = String::from("[R]\n1\n2\n3\n[S]\n1,1\n1,2\n2,3\n3,3\n[T]\n1\n2\n3\n");
    if with_s13 {
        text.push_str("[S]\n1,3\n");
    }
    Database::parse_text(&text).expect("fixture parses")
}

/// Two 3-chain witnesses sharing `x, y, z`.
pub fn chain3_shared_database() -> Database {
    Database::parse_text("[R]\n1,1\n[S]\n1,1\n[T]\n1,1\n1,2\n").expect("fixture parses")
}

/// Triangle witnesses `r_00 s_00 t_00` and `r_01 s_10 t_00`.
pub fn triangle_pair_database() -> Database {
    Database::parse_text("[R]\n0,0\n0,1\n[S]\n0,0\n1,0\n[T]\n0,0\n").expect("fixture parses")
}

/// Triangle database whose four witnesses leak in every flat ordering.
pub fn triangle_leak_database() -> Database {
    Database::parse_text("[R]\n0,0\n0,1\n1,1\n[S]\n0,0\n1,0\n1,1\n[T]\n0,0\n0,1\n1,1\n").expect("fixture parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provenance::compute_witnesses;

    #[test]
    fn all_named_queries_parse() {
        for (name, _) in NAMED_QUERIES {
            assert!(named_query(name).is_some());
        }
    }

    #[test]
    fn leak_database_has_four_witnesses() {
        let q = named_query("triangle").unwrap();
        let ws = compute_witnesses(&q, &triangle_leak_database()).unwrap();
        assert_eq!(ws.len(), 4);
        assert_eq!(ws.distinct_tuples(&q), 9);
    }
}
