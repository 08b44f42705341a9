//! Random databases and hardness gadgets built from graphs.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fixtures::named_query;
use crate::provenance::Database;
use crate::query::Query;

#[derive(Debug, Clone)]
pub struct GenSpec {
    pub query: Query,
    /// Domain size; values are `0..d`.
    pub d: usize,
    /// Target tuple count per relation.
    pub tuples: usize,
    pub seed: u64,
}

/// Samples distinct tuples per relation uniformly over the domain.
pub fn gen_random(spec: &GenSpec) -> Database {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.d.max(1);
    let mut db = Database::new();
    for atom in &spec.query.atoms {
        let arity = atom.vars.len() as u32;
        let space = (d as u128).checked_pow(arity).unwrap_or(u128::MAX);
        let want = (spec.tuples as u128).min(space) as usize;
        let mut rows: BTreeSet<Vec<String>> = BTreeSet::new();
        while rows.len() < want {
            rows.insert((0..arity).map(|_| rng.gen_range(0..d).to_string()).collect());
        }
        for row in rows {
            db.insert(&atom.relation, &row);
        }
        db.relations.entry(atom.relation.clone()).or_default();
    }
    db
}

/// Simple undirected graph with named vertices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Graph {
    pub vertices: Vec<String>,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Graph> {
        let mut g = Graph {
            vertices: (1..=n).map(|i| i.to_string()).collect(),
            edges: Vec::new(),
        };
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Format(format!("edge ({a}, {b}) out of range")));
            }
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    fn add_edge(&mut self, a: usize, b: usize) -> Result<()> {
        if a == b {
            return Err(Error::Format(format!("self-loop on `{}`", self.vertices[a])));
        }
        let e = (a.min(b), a.max(b));
        if !self.edges.contains(&e) {
            self.edges.push(e);
        }
        Ok(())
    }

    /// One `u v` pair per line; `#` starts a comment.
    pub fn parse_edge_list(text: &str) -> Result<Graph> {
        let mut g = Graph::default();
        let mut ids: BTreeMap<String, usize> = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(Error::Format(format!("line {}: expected `u v`", no + 1)));
            }
            let mut id = |name: &str| -> usize {
                *ids.entry(name.to_string()).or_insert_with(|| {
                    g.vertices.push(name.to_string());
                    g.vertices.len() - 1
                })
            };
            let (a, b) = (id(parts[0]), id(parts[1]));
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    /// Seeded G(n, p) sample.
    pub fn random(n: usize, p: f64, seed: u64) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new(n, &[]).expect("empty graph");
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen_bool(p) {
                    g.edges.push((a, b));
                }
            }
        }
        g
    }

    pub fn non_isolated(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.edges.iter().flat_map(|&(a, b)| [a, b]).collect();
        set.into_iter().collect()
    }

    /// Independence number over the non-isolated vertices, by enumeration.
    pub fn independence_number(&self) -> usize {
        let vs = self.non_isolated();
        assert!(vs.len() <= 24, "brute force is limited to 24 vertices");
        let pos: BTreeMap<usize, usize> = vs.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let masks: Vec<u32> = self.edges.iter().map(|(a, b)| 1 << pos[a] | 1 << pos[b]).collect();
        (0u32..1 << vs.len())
            .filter(|s| masks.iter().all(|e| s & e != *e))
            .map(|s| s.count_ones() as usize)
            .max()
            .unwrap_or(0)
    }
}

/// Per edge, three witnesses chained through the second and third triad atoms.
///
/// The first triad atom carries the vertex constants; the third is shared by
/// the first two witnesses and the second by the last two.
pub fn gen_triad_gadget(q: &Query, g: &Graph) -> Result<Database> {
    let [r, s, t] = q.has_triad().ok_or(Error::NoTriad)?;
    let (rm, sm, tm) = (q.atom_mask(r), q.atom_mask(s), q.atom_mask(t));
    let mut db = Database::new();
    for atom in &q.atoms {
        db.relations.entry(atom.relation.clone()).or_default();
    }
    for (i, &(a, b)) in g.edges.iter().enumerate() {
        let mut next = 0;
        let mut fresh = || {
            next += 1;
            format!("e{}_{}", i + 1, next)
        };
        let mut rows: Vec<Vec<Option<String>>> = vec![vec![None; q.num_vars()]; 3];
        // Values shared between witnesses, keyed by (variable, group).
        let mut shared: BTreeMap<(usize, u8), String> = BTreeMap::new();
        for (w, row) in rows.iter_mut().enumerate() {
            for (v, cell) in row.iter_mut().enumerate() {
                let bit = 1u32 << v;
                let (in_r, in_s, in_t) = (rm & bit != 0, sm & bit != 0, tm & bit != 0);
                let vertex = |k: usize| g.vertices[if k == 0 { a } else { b }].clone();
                let mut share = |grp: u8, fresh: &mut dyn FnMut() -> String| {
                    shared.entry((v, grp)).or_insert_with(fresh).clone()
                };
                let value = match (in_r, in_s, in_t) {
                    (true, true, true) => "g".to_string(),
                    (true, false, true) => vertex(usize::from(w == 2)),
                    (true, true, false) => vertex(usize::from(w != 0)),
                    (false, true, true) => share(0, &mut fresh),
                    (true, false, false) => match w {
                        0 => vertex(0),
                        1 => fresh(),
                        _ => vertex(1),
                    },
                    (false, false, true) => {
                        if w < 2 {
                            share(1, &mut fresh)
                        } else {
                            fresh()
                        }
                    }
                    (false, true, false) => {
                        if w > 0 {
                            share(2, &mut fresh)
                        } else {
                            fresh()
                        }
                    }
                    (false, false, false) => fresh(),
                };
                *cell = Some(value);
            }
        }
        for row in rows {
            let vals: Vec<String> = row.into_iter().map(|c| c.expect("all variables set")).collect();
            for (ai, atom) in q.atoms.iter().enumerate() {
                let tuple: Vec<&str> = q.atom_var_ids(ai).iter().map(|&v| vals[v].as_str()).collect();
                db.insert(&atom.relation, &tuple);
            }
        }
    }
    Ok(db)
}

/// The gadget on `R(x), S(y), T(z), W(x,y,z)`.
pub fn gen_3star_gadget(g: &Graph) -> Database {
    let q = named_query("star3").expect("named query");
    gen_triad_gadget(&q, g).expect("star3 has a triad")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provenance::compute_witnesses;

    #[test]
    fn random_is_deterministic() {
        let q = named_query("triangle").unwrap();
        let spec = GenSpec { query: q.clone(), d: 2, tuples: 3, seed: 7 };
        assert_eq!(gen_random(&spec), gen_random(&spec));
        assert_eq!(gen_random(&spec).relations["R"].len(), 3);
        let one = GenSpec { query: q.clone(), d: 1, tuples: 5, seed: 1 };
        let db = gen_random(&one);
        assert!(db.relations.values().all(|r| r.len() <= 1));
        assert!(compute_witnesses(&q, &db).unwrap().len() <= 1);
    }

    #[test]
    fn star_gadget_edge() {
        let g = Graph::new(2, &[(0, 1)]).unwrap();
        let db = gen_3star_gadget(&g);
        let q = named_query("star3").unwrap();
        let ws = compute_witnesses(&q, &db).unwrap();
        let terms: Vec<String> = ws.iter().map(|w| w.label(&q)).collect();
        assert_eq!(terms, ["x1_ye1_1_ze1_2", "x2_ye1_4_ze1_5", "xe1_3_ye1_4_ze1_2"]);
    }

    #[test]
    fn edge_list_and_alpha() {
        let g = Graph::parse_edge_list("# c5\na b\nb c\nc d\nd e\ne a\n").unwrap();
        assert_eq!((g.vertices.len(), g.edges.len()), (5, 5));
        assert_eq!(g.independence_number(), 2);
        assert!(Graph::parse_edge_list("a a\n").is_err());
        assert!(Graph::parse_edge_list("a b c\n").is_err());
        assert_eq!(Graph::new(3, &[]).unwrap().independence_number(), 0);
    }

    #[test]
    fn no_triad() {
        let q = named_query("chain2").unwrap();
        assert!(matches!(gen_triad_gadget(&q, &Graph::default()), Err(Error::NoTriad)));
    }
}
