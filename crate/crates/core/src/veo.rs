//! Variable elimination orders, table prefixes, dissociations and minimal VEOs.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::error::{Error, Result};
use crate::query::{Query, VarSet};

/// Default cap on query variables for brute-force enumeration.
pub const DEFAULT_VAR_LIMIT: usize = 8;

/// A rooted tree over disjoint variable sets, stored in canonical pre-order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Veo {
    text: String,
    nodes: Vec<VarSet>,
    parent: Vec<Option<usize>>,
}

/// The minimal root path of a VEO covering one or more atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TablePrefix {
    pub path: Vec<VarSet>,
    pub atoms: Vec<usize>,
    pub weight: u32,
    pub text: String,
}

/// A root path with every variable replaced by a constant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrefixInstance {
    pub path: Vec<VarSet>,
    pub values: Vec<Vec<String>>,
}

impl PrefixInstance {
    pub fn render(&self, q: &Query) -> String {
        let simple = self.values.iter().flatten().all(|v| v.chars().count() == 1);
        let parts: Vec<String> = self
            .path
            .iter()
            .zip(&self.values)
            .map(|(&mask, vals)| {
                let vars = q.ordered_vars(mask);
                let cells: Vec<String> = vars
                    .iter()
                    .zip(vals)
                    .map(|(&v, c)| {
                        if simple {
                            format!("{}{}", q.variables[v], c)
                        } else {
                            format!("{}={}", q.variables[v], c)
                        }
                    })
                    .collect();
                if simple {
                    cells.concat()
                } else if cells.len() == 1 {
                    cells[0].clone()
                } else {
                    format!("({})", cells.join(","))
                }
            })
            .collect();
        parts.join(" <- ")
    }

    /// Whether every query variable is bound along the path.
    pub fn is_full(&self, q: &Query) -> bool {
        self.path.iter().fold(0, |m, &n| m | n) == q.all_vars()
    }
}

/// Binds the variables along `path` using per-variable `values`.
pub fn instantiate_path(q: &Query, path: &[VarSet], values: &[String]) -> Result<PrefixInstance> {
    let mut vals = Vec::with_capacity(path.len());
    for &mask in path {
        let mut node = Vec::new();
        for v in q.ordered_vars(mask) {
            let c = values
                .get(v)
                .ok_or_else(|| Error::UnboundVariable(q.variables[v].clone()))?;
            node.push(c.clone());
        }
        vals.push(node);
    }
    Ok(PrefixInstance {
        path: path.to_vec(),
        values: vals,
    })
}

fn render_subtree(q: &Query, nodes: &[VarSet], children: &[Vec<usize>], i: usize, memo: &mut Vec<Option<String>>) -> String {
    if let Some(s) = &memo[i] {
        return s.clone();
    }
    let label = q.node_label(nodes[i]);
    let mut kids: Vec<String> = children[i]
        .iter()
        .map(|&c| render_subtree(q, nodes, children, c, memo))
        .collect();
    kids.sort();
    let s = match kids.len() {
        0 => label,
        1 => format!("{label} <- {}", kids[0]),
        _ => format!("{label} <- ({})", kids.join(", ")),
    };
    memo[i] = Some(s.clone());
    s
}

impl Veo {
    /// Builds a canonical VEO from `(node, parent index)` pairs with a single root.
    pub fn from_parts(q: &Query, parts: &[(VarSet, Option<usize>)]) -> Veo {
        let n = parts.len();
        let mut children = vec![Vec::new(); n];
        let mut root = None;
        for (i, &(_, p)) in parts.iter().enumerate() {
            match p {
                Some(p) => children[p].push(i),
                None => {
                    assert!(root.is_none(), "a VEO has exactly one root");
                    root = Some(i);
                }
            }
        }
        let root = root.expect("a VEO has a root");
        let nodes: Vec<VarSet> = parts.iter().map(|p| p.0).collect();
        let mut memo = vec![None; n];
        let text = render_subtree(q, &nodes, &children, root, &mut memo);
        let mut out_nodes = Vec::with_capacity(n);
        let mut out_parent = Vec::with_capacity(n);
        let mut stack = vec![(root, None)];
        while let Some((i, p)) = stack.pop() {
            let idx = out_nodes.len();
            out_nodes.push(nodes[i]);
            out_parent.push(p);
            let mut kids = children[i].clone();
            kids.sort_by(|&a, &b| memo[a].cmp(&memo[b]));
            for &c in kids.iter().rev() {
                stack.push((c, Some(idx)));
            }
        }
        Veo {
            text,
            nodes: out_nodes,
            parent: out_parent,
        }
    }

    /// Builds a VEO from `(node, parent node)` edges keyed by variable set.
    pub fn from_edges(q: &Query, edges: &[(VarSet, Option<VarSet>)]) -> Veo {
        let index: HashMap<VarSet, usize> = edges.iter().enumerate().map(|(i, e)| (e.0, i)).collect();
        let parts: Vec<(VarSet, Option<usize>)> = edges
            .iter()
            .map(|&(m, p)| (m, p.map(|p| index[&p])))
            .collect();
        Veo::from_parts(q, &parts)
    }

    /// Parses a serialization such as `z <- (u, y <- x)` or `(yz) <- x`.
    pub fn parse(q: &Query, text: &str) -> Result<Veo> {
        let mut p = VeoParser { q, s: text.as_bytes(), i: 0, parts: Vec::new() };
        p.tree(None)?;
        p.ws();
        if p.i != p.s.len() {
            return Err(Error::Syntax(format!("trailing input in VEO `{text}`")));
        }
        let veo = Veo::from_parts(q, &p.parts);
        let mut seen: VarSet = 0;
        for &m in &veo.nodes {
            if seen & m != 0 {
                return Err(Error::Syntax(format!("variable repeated in VEO `{text}`")));
            }
            seen |= m;
        }
        Ok(veo)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn nodes(&self) -> &[VarSet] {
        &self.nodes
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&c| self.parent[c] == Some(i)).collect()
    }

    pub fn root(&self) -> VarSet {
        self.nodes[0]
    }

    pub fn vars(&self) -> VarSet {
        self.nodes.iter().fold(0, |m, &n| m | n)
    }

    /// `(node, parent node)` edges keyed by variable set.
    pub fn edges(&self) -> Vec<(VarSet, Option<VarSet>)> {
        (0..self.nodes.len())
            .map(|i| (self.nodes[i], self.parent[i].map(|p| self.nodes[p])))
            .collect()
    }

    /// Node indices from the root to `i`.
    pub fn path_to(&self, i: usize) -> Vec<usize> {
        let mut path = vec![i];
        let mut cur = i;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    fn is_ancestor(&self, a: usize, mut b: usize) -> bool {
        loop {
            if a == b {
                return true;
            }
            match self.parent[b] {
                Some(p) => b = p,
                None => return false,
            }
        }
    }

    /// Minimal root path covering `mask`, or `None` if `mask` is not on one path.
    pub fn covering_path(&self, mask: VarSet) -> Option<Vec<VarSet>> {
        if mask & !self.vars() != 0 {
            return None;
        }
        let hit: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.nodes[i] & mask != 0).collect();
        let deepest = *hit.iter().max_by_key(|&&i| self.path_to(i).len())?;
        if hit.iter().all(|&i| self.is_ancestor(i, deepest)) {
            Some(self.path_to(deepest).into_iter().map(|i| self.nodes[i]).collect())
        } else {
            None
        }
    }

    pub fn atom_prefix(&self, q: &Query, atom: usize) -> Option<Vec<VarSet>> {
        self.covering_path(q.atom_mask(atom))
    }

    /// Node sets partition the query variables and every atom lies on one root path.
    pub fn is_legal(&self, q: &Query) -> bool {
        let mut seen: VarSet = 0;
        for &m in &self.nodes {
            if m == 0 || seen & m != 0 {
                return false;
            }
            seen |= m;
        }
        seen == q.all_vars() && (0..q.num_atoms()).all(|a| self.atom_prefix(q, a).is_some())
    }

    /// One entry per distinct table-prefix path, ordered by first atom.
    pub fn table_prefixes(&self, q: &Query) -> Vec<TablePrefix> {
        let mut out: Vec<TablePrefix> = Vec::new();
        for a in 0..q.num_atoms() {
            let path = self
                .atom_prefix(q, a)
                .unwrap_or_else(|| panic!("atom {} not on a root path of `{}`", a, self.text));
            if let Some(tp) = out.iter_mut().find(|t| t.path == path) {
                tp.atoms.push(a);
                tp.weight += 1;
            } else {
                let text = path.iter().map(|&m| q.node_label(m)).collect::<Vec<_>>().join(" <- ");
                out.push(TablePrefix {
                    path,
                    atoms: vec![a],
                    weight: 1,
                    text,
                });
            }
        }
        out
    }

    /// Per-atom variables added by the plan: `var(prefix) \ var(atom)`.
    pub fn dissociation(&self, q: &Query) -> Vec<VarSet> {
        (0..q.num_atoms())
            .map(|a| {
                let path = self.atom_prefix(q, a).expect("legal VEO");
                path.iter().fold(0, |m, &n| m | n) & !q.atom_mask(a)
            })
            .collect()
    }

    /// Merges trees that agree on shared nodes into one tree.
    pub fn merge(q: &Query, parts: &[&Veo]) -> Veo {
        let mut edges: BTreeMap<VarSet, Option<VarSet>> = BTreeMap::new();
        for v in parts {
            for (m, p) in v.edges() {
                let prev = edges.insert(m, p);
                debug_assert!(prev.is_none() || prev == Some(p), "conflicting merge");
            }
        }
        let edges: Vec<_> = edges.into_iter().collect();
        Veo::from_edges(q, &edges)
    }

    /// The subtree spanned by the nodes intersecting `mask` and their ancestors.
    pub fn restrict(&self, q: &Query, mask: VarSet) -> Veo {
        let mut keep = vec![false; self.nodes.len()];
        for i in 0..self.nodes.len() {
            if self.nodes[i] & mask != 0 {
                for j in self.path_to(i) {
                    keep[j] = true;
                }
            }
        }
        let edges: Vec<_> = self
            .edges()
            .into_iter()
            .enumerate()
            .filter(|(i, _)| keep[*i])
            .map(|(_, e)| e)
            .collect();
        Veo::from_edges(q, &edges)
    }
}

impl fmt::Display for Veo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

struct VeoParser<'a> {
    q: &'a Query,
    s: &'a [u8],
    i: usize,
    parts: Vec<(VarSet, Option<usize>)>,
}

impl VeoParser<'_> {
    fn ws(&mut self) {
        while self.i < self.s.len() && (self.s[self.i] as char).is_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.i).copied()
    }

    fn err(&self, msg: &str) -> Error {
        Error::Syntax(format!("{msg} at offset {} in VEO", self.i))
    }

    fn ident(&mut self) -> Result<String> {
        self.ws();
        let start = self.i;
        while self.i < self.s.len() && ((self.s[self.i] as char).is_ascii_alphanumeric() || self.s[self.i] == b'_') {
            self.i += 1;
        }
        if start == self.i {
            return Err(self.err("expected variable"));
        }
        Ok(String::from_utf8_lossy(&self.s[start..self.i]).into_owned())
    }

    fn var(&self, name: &str) -> Result<VarSet> {
        self.q
            .var_index(name)
            .map(|i| 1 << i)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// A node label: `x`, `(yz)` or `(x1 x2)`.
    fn label(&mut self) -> Result<VarSet> {
        if self.peek() == Some(b'(') {
            self.i += 1;
            let mut mask = 0;
            loop {
                match self.peek() {
                    Some(b')') => {
                        self.i += 1;
                        break;
                    }
                    Some(_) => {
                        let id = self.ident()?;
                        if self.q.var_index(&id).is_some() {
                            mask |= self.var(&id)?;
                        } else {
                            for c in id.chars() {
                                mask |= self.var(&c.to_string())?;
                            }
                        }
                    }
                    None => return Err(self.err("unclosed node")),
                }
            }
            if mask == 0 {
                return Err(self.err("empty node"));
            }
            Ok(mask)
        } else {
            let id = self.ident()?;
            self.var(&id)
        }
    }

    fn arrow(&mut self) -> bool {
        self.ws();
        if self.s[self.i..].starts_with(b"<-") {
            self.i += 2;
            true
        } else if self.s[self.i..].starts_with("←".as_bytes()) {
            self.i += "←".len();
            true
        } else {
            false
        }
    }

    fn tree(&mut self, parent: Option<usize>) -> Result<()> {
        let mask = self.label()?;
        let idx = self.parts.len();
        self.parts.push((mask, parent));
        if !self.arrow() {
            return Ok(());
        }
        // A parenthesized group is either a child list or a multi-variable node;
        // child lists contain a comma or an arrow before the closing paren.
        if self.peek() == Some(b'(') && self.is_child_list() {
            self.i += 1;
            loop {
                self.tree(Some(idx))?;
                match self.peek() {
                    Some(b',') => self.i += 1,
                    Some(b')') => {
                        self.i += 1;
                        break;
                    }
                    _ => return Err(self.err("expected `,` or `)`")),
                }
            }
            Ok(())
        } else {
            self.tree(Some(idx))
        }
    }

    fn is_child_list(&self) -> bool {
        let mut depth = 0;
        let mut j = self.i;
        while j < self.s.len() {
            match self.s[j] {
                b'(' => depth += 1,
                b')' => {
                    depth -= 1;
                    if depth == 0 {
                        return false;
                    }
                }
                b',' if depth == 1 => return true,
                b'<' if depth == 1 => return true,
                _ if depth == 1 && self.s[j..].starts_with("←".as_bytes()) => return true,
                _ => {}
            }
            j += 1;
        }
        false
    }
}

type Forest = Vec<(VarSet, Option<usize>)>;

fn subsets(mask: VarSet) -> impl Iterator<Item = VarSet> {
    let mut sub = mask;
    let mut done = mask == 0;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let cur = sub;
        if sub == 0 {
            done = true;
            return None;
        }
        sub = (sub - 1) & mask;
        Some(cur)
    })
}

/// All set partitions of `items`, each block as the union of its items.
fn set_partitions(items: &[VarSet]) -> Vec<Vec<VarSet>> {
    let mut out = Vec::new();
    fn go(items: &[VarSet], i: usize, blocks: &mut Vec<VarSet>, out: &mut Vec<Vec<VarSet>>) {
        if i == items.len() {
            out.push(blocks.clone());
            return;
        }
        for b in 0..blocks.len() {
            blocks[b] |= items[i];
            go(items, i + 1, blocks, out);
            blocks[b] &= !items[i];
        }
        blocks.push(items[i]);
        go(items, i + 1, blocks, out);
        blocks.pop();
    }
    go(items, 0, &mut Vec::new(), &mut out);
    out
}

struct Enumerator<'a> {
    q: &'a Query,
    minimal_shape: bool,
    memo: HashMap<VarSet, Vec<Forest>>,
}

impl Enumerator<'_> {
    /// Legal trees over `vars`, each a list of `(node, parent index)` with the root first.
    fn trees(&mut self, vars: VarSet) -> Vec<Forest> {
        if let Some(t) = self.memo.get(&vars) {
            return t.clone();
        }
        let mut out = Vec::new();
        for root in subsets(vars) {
            let rest = vars & !root;
            if rest == 0 {
                out.push(vec![(root, None)]);
                continue;
            }
            let comps = self.q.components_of(rest);
            let groupings = if self.minimal_shape {
                vec![comps]
            } else {
                set_partitions(&comps)
            };
            for groups in groupings {
                let mut acc: Vec<Forest> = vec![vec![(root, None)]];
                for &g in &groups {
                    let subs = self.trees(g);
                    let mut next = Vec::with_capacity(acc.len() * subs.len());
                    for base in &acc {
                        for sub in &subs {
                            let off = base.len();
                            let mut t = base.clone();
                            for &(m, p) in sub {
                                t.push((m, Some(p.map_or(0, |p| p + off))));
                            }
                            next.push(t);
                        }
                    }
                    acc = next;
                }
                out.extend(acc);
            }
        }
        self.memo.insert(vars, out.clone());
        out
    }
}

fn check_limit(q: &Query, limit: usize) -> Result<()> {
    if q.num_vars() > limit {
        return Err(Error::TooManyVariables {
            found: q.num_vars(),
            limit,
        });
    }
    Ok(())
}

fn enumerate(q: &Query, limit: usize, minimal_shape: bool) -> Result<Vec<Veo>> {
    check_limit(q, limit)?;
    let mut e = Enumerator {
        q,
        minimal_shape,
        memo: HashMap::new(),
    };
    let mut veos: Vec<Veo> = e
        .trees(q.all_vars())
        .iter()
        .map(|t| Veo::from_parts(q, t))
        .collect();
    veos.sort();
    veos.dedup();
    veos.sort_by(|a, b| a.text.cmp(&b.text));
    Ok(veos)
}

/// Every legal VEO of a connected query, ordered by serialization.
pub fn enumerate_veos(q: &Query, limit: usize) -> Result<Vec<Veo>> {
    enumerate(q, limit, false)
}

fn dominated_or_equal(a: &[VarSet], b: &[VarSet]) -> bool {
    a.iter().zip(b).all(|(x, y)| x & y == *x)
}

/// Pareto-minimal VEOs by dissociation, one per dissociation, ordered by serialization.
pub fn pareto_minimal(q: &Query, candidates: &[Veo]) -> Vec<Veo> {
    let mut by_diss: BTreeMap<Vec<VarSet>, Veo> = BTreeMap::new();
    for v in candidates {
        let d = v.dissociation(q);
        match by_diss.get(&d) {
            Some(cur) if cur.text <= v.text => {}
            _ => {
                by_diss.insert(d, v.clone());
            }
        }
    }
    let entries: Vec<(Vec<VarSet>, Veo)> = by_diss.into_iter().collect();
    let mut out: Vec<Veo> = entries
        .iter()
        .filter(|(d, _)| !entries.iter().any(|(e, _)| e != d && dominated_or_equal(e, d)))
        .map(|(_, v)| v.clone())
        .collect();
    out.sort_by(|a, b| a.text.cmp(&b.text));
    out
}

/// The minimal VEOs of a connected query.
///
/// Only trees that branch exactly at the connected components of the
/// remaining variables are generated; every other legal tree is dominated
/// by one of these, so the Pareto front is unchanged.
pub fn enumerate_mveo(q: &Query, limit: usize) -> Result<Vec<Veo>> {
    let candidates = enumerate(q, limit, true)?;
    Ok(pareto_minimal(q, &candidates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_query;

    fn texts(v: &[Veo]) -> Vec<&str> {
        v.iter().map(|v| v.text()).collect()
    }

    #[test]
    fn serializes_canonically() {
        let q = parse_query("Q :- R(x,y), S(y,z), T(z,u)").unwrap();
        let v = Veo::parse(&q, "z <- (y <- x, u)").unwrap();
        assert_eq!(v.text(), "z <- (u, y <- x)");
        assert!(v.is_legal(&q));
        let w = Veo::parse(&q, "(xyzu)").unwrap();
        assert_eq!(w.nodes().len(), 1);
        assert_eq!(Veo::parse(&q, "x ← y ← z ← u").unwrap().text(), "x <- y <- z <- u");
        let tri = parse_query("Q :- R(x,y), S(y,z), T(z,x)").unwrap();
        assert_eq!(Veo::parse(&tri, "(xz) <- y").unwrap().text(), "(zx) <- y");
    }

    #[test]
    fn one_variable_query() {
        let q = parse_query("Q :- R(x)").unwrap();
        assert_eq!(texts(&enumerate_veos(&q, 8).unwrap()), ["x"]);
    }

    #[test]
    fn mveo_two_star() {
        let q = parse_query("Q :- R(x), S(x,y), T(y)").unwrap();
        assert_eq!(texts(&enumerate_mveo(&q, 8).unwrap()), ["x <- y", "y <- x"]);
    }

    #[test]
    fn dissociations_two_star() {
        let q = parse_query("Q :- R(x), S(x,y), T(y)").unwrap();
        let v = Veo::parse(&q, "x <- y").unwrap();
        assert_eq!(v.dissociation(&q), vec![0, 0, 1]);
        let w = Veo::parse(&q, "(xy)").unwrap();
        assert_eq!(w.dissociation(&q), vec![2, 0, 1]);
    }

    #[test]
    fn table_prefix_weights() {
        let q = parse_query("Q :- R(x), S(x,y), T(y)").unwrap();
        let v = Veo::parse(&q, "x <- y").unwrap();
        let tp: Vec<_> = v.table_prefixes(&q).into_iter().map(|t| (t.text, t.weight)).collect();
        assert_eq!(tp, [("x".to_string(), 1), ("x <- y".to_string(), 2)]);
        let tri = parse_query("Q :- R(x,y), S(y,z), T(z,x)").unwrap();
        let v = Veo::parse(&tri, "(yz) <- x").unwrap();
        let tp: Vec<_> = v.table_prefixes(&tri).into_iter().map(|t| (t.text, t.weight)).collect();
        assert_eq!(tp, [("(yz) <- x".to_string(), 2), ("(yz)".to_string(), 1)]);
    }

    #[test]
    fn instance_rendering() {
        let q = parse_query("Q :- R(x,y), S(y,z), T(z,u)").unwrap();
        let vals: Vec<String> = ["x1", "y1", "z1", "u1"].iter().map(|s| s[1..].to_string()).collect();
        let y = 1 << q.var_index("y").unwrap();
        let z = 1 << q.var_index("z").unwrap();
        let inst = instantiate_path(&q, &[z, y], &vals).unwrap();
        assert_eq!(inst.render(&q), "z1 <- y1");
    }

    #[test]
    fn merge_and_restrict_roundtrip() {
        let q = parse_query("Q :- R(x,y), S(y,z), T(z,u)").unwrap();
        let v = Veo::parse(&q, "y <- (x, z <- u)").unwrap();
        let x = 1 << q.var_index("x").unwrap();
        let u = 1 << q.var_index("u").unwrap();
        let a = v.restrict(&q, x);
        let b = v.restrict(&q, u);
        assert_eq!(a.text(), "y <- x");
        assert_eq!(b.text(), "y <- z <- u");
        assert_eq!(Veo::merge(&q, &[&a, &b]), v);
    }
}
