//! Query classification and the polynomial algorithms for specific query shapes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::flow::solve_flow;
use crate::matching::Bipartite;
use crate::ordering::Ordering;
use crate::problem::Problem;
use crate::provenance::{assemble, Factorization, WitnessSet};
use crate::query::{parse_query, Query};
use crate::veo::{enumerate_mveo, Veo, DEFAULT_VAR_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    Hierarchical,
    TwoMveo,
    Q2Star,
    TriangleUnary,
    TwoChainWe,
    Linear,
    Triad,
}

impl Tag {
    pub fn name(self) -> &'static str {
        match self {
            Tag::Hierarchical => "hierarchical",
            Tag::TwoMveo => "two-mveo",
            Tag::Q2Star => "q2star",
            Tag::TriangleUnary => "triangle-unary",
            Tag::TwoChainWe => "two-chain-we",
            Tag::Linear => "linear",
            Tag::Triad => "triad",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QueryClass {
    pub tags: BTreeSet<Tag>,
}

impl QueryClass {
    pub fn has(&self, t: Tag) -> bool {
        self.tags.contains(&t)
    }

    /// The shape with a dedicated algorithm, if any.
    pub fn shape(&self) -> Option<Shape> {
        if self.has(Tag::Q2Star) {
            Some(Shape::Q2Star)
        } else if self.has(Tag::TriangleUnary) {
            Some(Shape::TriangleUnary)
        } else if self.has(Tag::TwoChainWe) {
            Some(Shape::TwoChainWe)
        } else {
            None
        }
    }
}

impl fmt::Display for QueryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.tags.iter().map(|t| t.name()).collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Q2Star,
    TriangleUnary,
    TwoChainWe,
}

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::Q2Star => "q2star",
            Shape::TriangleUnary => "triangle-unary",
            Shape::TwoChainWe => "two-chain-we",
        }
    }

    fn pattern(self) -> &'static str {
        match self {
            Shape::Q2Star => "P :- R(x), S(x,y), T(y)",
            Shape::TriangleUnary => "P :- U(x), R(x,y), S(y,z), T(z,x)",
            Shape::TwoChainWe => "P :- A(x), R(x,y), S(y,z), B(z)",
        }
    }
}

/// Pattern variables and atoms mapped onto a query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roles {
    /// Query variable index per pattern variable.
    pub vars: Vec<usize>,
    /// Query atom index per pattern atom.
    pub atoms: Vec<usize>,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut v = p.clone();
            v.insert(i, n - 1);
            out.push(v);
        }
    }
    out.sort();
    out
}

/// Matches `q` against a shape up to renaming of variables and relations.
pub fn match_shape(q: &Query, shape: Shape) -> Option<Roles> {
    let pat = parse_query(shape.pattern()).expect("patterns parse");
    if pat.num_vars() != q.num_vars() || pat.num_atoms() != q.num_atoms() {
        return None;
    }
    if (0..q.num_atoms()).any(|a| q.atom_var_ids(a).len() != q.atom_mask(a).count_ones() as usize) {
        return None;
    }
    for perm in permutations(q.num_vars()) {
        let map_mask = |m: u32| -> u32 {
            (0..pat.num_vars()).filter(|&v| m >> v & 1 == 1).fold(0, |acc, v| acc | 1 << perm[v])
        };
        let atoms: Option<Vec<usize>> = (0..pat.num_atoms())
            .map(|a| {
                let target = map_mask(pat.atom_mask(a));
                (0..q.num_atoms()).find(|&b| q.atom_mask(b) == target)
            })
            .collect();
        if let Some(atoms) = atoms {
            let distinct: BTreeSet<usize> = atoms.iter().copied().collect();
            if distinct.len() == atoms.len() {
                return Some(Roles { vars: perm, atoms });
            }
        }
    }
    None
}

pub fn classify(q: &Query) -> QueryClass {
    let mut tags = BTreeSet::new();
    if q.is_hierarchical() {
        tags.insert(Tag::Hierarchical);
    }
    if let Ok(m) = enumerate_mveo(q, DEFAULT_VAR_LIMIT) {
        if m.len() == 2 {
            tags.insert(Tag::TwoMveo);
        }
    }
    for (shape, tag) in [
        (Shape::Q2Star, Tag::Q2Star),
        (Shape::TriangleUnary, Tag::TriangleUnary),
        (Shape::TwoChainWe, Tag::TwoChainWe),
    ] {
        if match_shape(q, shape).is_some() {
            tags.insert(tag);
        }
    }
    if q.has_triad().is_some() {
        tags.insert(Tag::Triad);
    } else {
        tags.insert(Tag::Linear);
    }
    QueryClass { tags }
}

#[derive(Debug, Clone)]
pub struct SpecialResult {
    pub factorization: Factorization,
    pub shape: Shape,
    /// Size of the vertex cover or the cut behind the choice.
    pub certificate: u64,
}

/// A plan written with pattern variable names, instantiated on `q`.
fn plan(q: &Query, roles: &Roles, text: &str) -> Veo {
    let pattern_vars = ['x', 'y', 'z'];
    let mut s = String::new();
    for c in text.chars() {
        match pattern_vars.iter().position(|&p| p == c) {
            Some(i) => s.push_str(&q.variables[roles.vars[i]]),
            None => s.push(c),
        }
    }
    Veo::parse(q, &s).expect("pattern plans parse")
}

fn roles(q: &Query, shape: Shape) -> Result<Roles> {
    match_shape(q, shape).ok_or(Error::ShapeMismatch(shape.name()))
}

/// Values of the pattern variables in each witness.
fn values<'a>(ws: &'a WitnessSet, roles: &Roles) -> Vec<Vec<&'a str>> {
    ws.iter()
        .map(|w| roles.vars.iter().map(|&v| w.values[v].as_str()).collect())
        .collect()
}

/// Orientation algorithm: roots form a minimum vertex cover of the value graph.
pub fn solve_q2star(p: &Problem) -> Result<SpecialResult> {
    let q = &p.query;
    let r = roles(q, Shape::Q2Star)?;
    let vals = values(&p.witnesses, &r);
    let mut xs: BTreeMap<&str, usize> = BTreeMap::new();
    let mut ys: BTreeMap<&str, usize> = BTreeMap::new();
    for v in &vals {
        let n = xs.len();
        xs.entry(v[0]).or_insert(n);
        let n = ys.len();
        ys.entry(v[1]).or_insert(n);
    }
    let mut g = Bipartite::new(xs.len(), ys.len());
    for v in &vals {
        g.add_edge(xs[v[0]], ys[v[1]]);
    }
    let cover = g.min_vertex_cover();
    let x_root = plan(q, &r, "x <- y");
    let y_root = plan(q, &r, "y <- x");
    let assignment: Vec<Veo> = vals
        .iter()
        .map(|v| if cover.left[xs[v[0]]] { x_root.clone() } else { y_root.clone() })
        .collect();
    let factorization = assemble(q, &p.witnesses, &assignment)?;
    debug_assert_eq!(factorization.length, 2 * p.n() + cover.size());
    Ok(SpecialResult {
        factorization,
        shape: Shape::Q2Star,
        certificate: cover.size() as u64,
    })
}

/// Degree filtering followed by vertex covers on the two decision graphs.
pub fn solve_triangle_unary(p: &Problem) -> Result<SpecialResult> {
    let q = &p.query;
    let r = roles(q, Shape::TriangleUnary)?;
    let vals = values(&p.witnesses, &r);
    let counts = p.witnesses.tuple_counts(q);
    let (ra, ta) = (r.atoms[1], r.atoms[3]);
    let repeated: Vec<bool> = p
        .witnesses
        .iter()
        .map(|w| counts[&w.tuple(q, ra)] > 1 || counts[&w.tuple(q, ta)] > 1)
        .collect();

    // Graph 1: p(x <- y) against p(x <- z) for witnesses with a repeated R or T tuple.
    let mut xy: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    let mut xz: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    let mut first_x: BTreeSet<&str> = BTreeSet::new();
    // Graph 2: p(x) against p(yz) for the others.
    let mut xs: BTreeMap<&str, usize> = BTreeMap::new();
    let mut yz: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for (v, &rep) in vals.iter().zip(&repeated) {
        if rep {
            let n = xy.len();
            xy.entry((v[0], v[1])).or_insert(n);
            let n = xz.len();
            xz.entry((v[0], v[2])).or_insert(n);
            first_x.insert(v[0]);
        } else {
            let n = xs.len();
            xs.entry(v[0]).or_insert(n);
            let n = yz.len();
            yz.entry((v[1], v[2])).or_insert(n);
        }
    }
    let mut g1 = Bipartite::new(xy.len(), xz.len());
    let mut g2 = Bipartite::new(xs.len(), yz.len());
    for (v, &rep) in vals.iter().zip(&repeated) {
        if rep {
            g1.add_edge(xy[&(v[0], v[1])], xz[&(v[0], v[2])]);
        } else if !first_x.contains(v[0]) {
            // Forced p(x) nodes are contracted into the cover before matching.
            g2.add_edge(xs[v[0]], yz[&(v[1], v[2])]);
        }
    }
    let c1 = g1.min_vertex_cover();
    let mut c2 = g2.min_vertex_cover();
    for (x, &i) in &xs {
        if first_x.contains(x) {
            c2.left[i] = true;
        }
    }
    let ur = plan(q, &r, "x <- y <- z");
    let ut = plan(q, &r, "x <- z <- y");
    let s = plan(q, &r, "(y z) <- x");
    let assignment: Vec<Veo> = vals
        .iter()
        .zip(&repeated)
        .map(|(v, &rep)| {
            let pick = if rep {
                if c1.left[xy[&(v[0], v[1])]] {
                    &ur
                } else {
                    &ut
                }
            } else if c2.left[xs[v[0]]] {
                &ur
            } else {
                &s
            };
            pick.clone()
        })
        .collect();
    let factorization = assemble(q, &p.witnesses, &assignment)?;
    Ok(SpecialResult {
        factorization,
        shape: Shape::TriangleUnary,
        certificate: (c1.size() + c2.size()) as u64,
    })
}

/// Plans of the 2-chain query with unary ends, in the flow order used by [`solve_two_chain_we`].
pub const TWO_CHAIN_WE_ORDER: [&str; 4] = ["x <- z <- y", "x <- y <- z", "z <- y <- x", "z <- x <- y"];

pub fn solve_two_chain_we(p: &Problem) -> Result<SpecialResult> {
    solve_two_chain_we_with(p, &TWO_CHAIN_WE_ORDER)
}

/// Witnesses with both middle tuples repeated take `y <- (x, z)`; the rest
/// are decided by a minimum cut under `order`.
pub fn solve_two_chain_we_with(p: &Problem, order: &[&str]) -> Result<SpecialResult> {
    let q = &p.query;
    let r = roles(q, Shape::TwoChainWe)?;
    let counts = p.witnesses.tuple_counts(q);
    let (ra, sa) = (r.atoms[1], r.atoms[2]);
    let center = plan(q, &r, "y <- (x, z)");
    let plans: Vec<Veo> = order.iter().map(|t| plan(q, &r, t)).collect();
    let mut assignment: Vec<Option<Veo>> = vec![None; p.n()];
    let mut rest = WitnessSet::default();
    let mut rest_idx = Vec::new();
    for (i, w) in p.witnesses.iter().enumerate() {
        if counts[&w.tuple(q, ra)] > 1 && counts[&w.tuple(q, sa)] > 1 {
            assignment[i] = Some(center.clone());
        } else {
            rest.witnesses.push(w.clone());
            rest_idx.push(i);
        }
    }
    let mut certificate = 0;
    if !rest.is_empty() {
        let sub = Problem::with_plans(q.clone(), plans.clone(), rest);
        let ord = Ordering::flat(q, plans);
        let fr = solve_flow(&sub, &ord, false)?;
        certificate = fr.cut_value;
        for (k, &i) in rest_idx.iter().enumerate() {
            assignment[i] = Some(fr.factorization.assignment[k].clone());
        }
    }
    let assignment: Vec<Veo> = assignment.into_iter().map(|a| a.expect("every witness assigned")).collect();
    let factorization = assemble(q, &p.witnesses, &assignment)?;
    Ok(SpecialResult {
        factorization,
        shape: Shape::TwoChainWe,
        certificate,
    })
}

/// Runs the algorithm for the shape of `p.query`.
pub fn solve_special(p: &Problem) -> Result<SpecialResult> {
    match classify(&p.query).shape() {
        Some(Shape::Q2Star) => solve_q2star(p),
        Some(Shape::TriangleUnary) => solve_triangle_unary(p),
        Some(Shape::TwoChainWe) => solve_two_chain_we(p),
        None => Err(Error::ShapeMismatch("special")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{solve_exact, DEFAULT_BUDGET};
    use crate::fixtures::*;
    use crate::provenance::{compute_witnesses, verify_equivalence, Database};

    fn problem(name: &str, db: &Database) -> Problem {
        let q = named_query(name).unwrap();
        let ws = compute_witnesses(&q, db).unwrap();
        Problem::new(q, ws).unwrap()
    }

    fn tags(name: &str) -> Vec<&'static str> {
        classify(&named_query(name).unwrap()).tags.iter().map(|t| t.name()).collect()
    }

    #[test]
    fn classification() {
        assert_eq!(tags("star2"), ["two-mveo", "q2star", "linear"]);
        assert_eq!(tags("triangle"), ["triad"]);
        assert_eq!(tags("triangle-unary"), ["triangle-unary", "linear"]);
        assert_eq!(tags("chain2"), ["hierarchical", "linear"]);
        assert!(tags("chain2-we").contains(&"two-chain-we"));
        assert!(tags("star3").contains(&"triad"));
        let renamed = parse_query("Q :- Left(a), E(b,a), Right(b)").unwrap();
        assert!(classify(&renamed).has(Tag::Q2Star));
    }

    #[test]
    fn star_cover() {
        let p = problem("star2", &star2_database(true));
        let r = solve_q2star(&p).unwrap();
        assert_eq!(r.factorization.length, 12);
        assert_eq!(r.certificate, 2);
        assert!(verify_equivalence(&p.query, &r.factorization, &p.witnesses).unwrap());
        let p = problem("star2", &star2_database(false));
        assert_eq!(solve_q2star(&p).unwrap().factorization.length, 10);
        let p = problem("star2", &Database::parse_text("[R]\n1\n[S]\n1,1\n[T]\n1\n").unwrap());
        assert_eq!(solve_q2star(&p).unwrap().factorization.length, 3);
    }

    #[test]
    fn shape_mismatch() {
        let p = problem("triangle", &triangle_pair_database());
        assert!(matches!(solve_q2star(&p), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn triangle_unary_cases() {
        let p = problem(
            "triangle-unary",
            &Database::parse_text("[U]\n1\n[R]\n1,1\n[S]\n1,1\n[T]\n1,1\n").unwrap(),
        );
        let r = solve_triangle_unary(&p).unwrap();
        assert_eq!(r.factorization.length, 4);
        assert!(r.factorization.assignment[0].text().starts_with("x <-"));
        let db = Database::parse_text("[U]\n1\n[R]\n1,1\n[S]\n1,1\n1,2\n[T]\n1,1\n2,1\n").unwrap();
        let p = problem("triangle-unary", &db);
        let r = solve_triangle_unary(&p).unwrap();
        assert!(r.factorization.assignment.iter().all(|v| v.text() != "(yz) <- x"));
        assert_eq!(r.factorization.length, solve_exact(&p, DEFAULT_BUDGET).unwrap().factorization.length);
    }

    #[test]
    fn two_chain_center() {
        let db = Database::parse_text("[A]\n1\n2\n[R]\n1,1\n2,1\n[S]\n1,1\n1,2\n[B]\n1\n2\n").unwrap();
        let p = problem("chain2-we", &db);
        let r = solve_two_chain_we(&p).unwrap();
        assert!(r.factorization.assignment.iter().all(|v| v.text() == "y <- (x, z)"));
        assert_eq!(r.factorization.length, solve_exact(&p, DEFAULT_BUDGET).unwrap().factorization.length);
    }
}
