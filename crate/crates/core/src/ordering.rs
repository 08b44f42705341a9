//! Linear and nested orderings of the minimal VEOs.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::query::{Query, VarSet};
use crate::veo::Veo;

/// One position of an ordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    /// A plan, or in a branch the part of a plan below the split path.
    Leaf(Veo),
    /// Plans sharing `path` that branch into independent components; each
    /// branch orders the choices for one component.
    Split { path: Vec<VarSet>, branches: Vec<Vec<Item>> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    pub items: Vec<Item>,
    pub rp: bool,
}

/// Location of an item: sequence id and index within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Slot {
    pub seq: usize,
    pub item: usize,
}

/// Sequences of an ordering with their nesting and the atoms each item decides.
#[derive(Debug, Clone)]
pub struct Layout<'a> {
    /// For each sequence, the slot of the enclosing split (None for the top).
    pub parent: Vec<Option<Slot>>,
    pub items: Vec<Vec<&'a Item>>,
    /// Atoms whose table prefix is fixed by each slot, with that prefix.
    pub owned: BTreeMap<Slot, Vec<(usize, Vec<VarSet>)>>,
}

fn path_vars(path: &[VarSet]) -> VarSet {
    path.iter().fold(0, |m, &n| m | n)
}

fn covering_prefix(path: &[VarSet], mask: VarSet) -> Option<Vec<VarSet>> {
    let mut acc = 0;
    for (i, &n) in path.iter().enumerate() {
        acc |= n;
        if acc & mask == mask {
            return Some(path[..=i].to_vec());
        }
    }
    None
}

impl<'a> Layout<'a> {
    pub fn new(q: &Query, items: &'a [Item]) -> Layout<'a> {
        let mut l = Layout {
            parent: Vec::new(),
            items: Vec::new(),
            owned: BTreeMap::new(),
        };
        l.walk(q, items, None, &[]);
        l
    }

    fn walk(&mut self, q: &Query, items: &'a [Item], parent: Option<Slot>, scope: &[VarSet]) {
        let seq = self.parent.len();
        self.parent.push(parent);
        self.items.push(items.iter().collect());
        let outer = path_vars(scope);
        for (i, item) in items.iter().enumerate() {
            let slot = Slot { seq, item: i };
            let mut owned = Vec::new();
            match item {
                Item::Leaf(tree) => {
                    let vars = tree.vars();
                    for a in 0..q.num_atoms() {
                        let m = q.atom_mask(a);
                        if m & vars == m && m & outer != m {
                            if let Some(p) = tree.covering_path(m) {
                                owned.push((a, p));
                            }
                        }
                    }
                }
                Item::Split { path, branches } => {
                    let vars = path_vars(path);
                    for a in 0..q.num_atoms() {
                        let m = q.atom_mask(a);
                        if m & vars == m && m & outer != m {
                            owned.push((a, covering_prefix(path, m).expect("atom inside path")));
                        }
                    }
                    for b in branches {
                        self.walk(q, b, Some(slot), path);
                    }
                }
            }
            self.owned.insert(slot, owned);
        }
    }

    /// Sequence ids from `seq` up to the top.
    fn chain(&self, seq: usize) -> Vec<usize> {
        let mut out = vec![seq];
        let mut cur = seq;
        while let Some(p) = self.parent[cur] {
            out.push(p.seq);
            cur = p.seq;
        }
        out
    }

    /// The item of `target` sequence that contains `slot`.
    fn lift(&self, slot: Slot, target: usize) -> Option<usize> {
        let mut cur = slot;
        loop {
            if cur.seq == target {
                return Some(cur.item);
            }
            cur = self.parent[cur.seq]?;
        }
    }

    /// Innermost sequence containing all `slots`, and the item indices they occupy there.
    pub fn span(&self, slots: &[Slot]) -> (usize, BTreeSet<usize>) {
        let mut common = self.chain(slots[0].seq);
        for s in &slots[1..] {
            let c = self.chain(s.seq);
            common.retain(|x| c.contains(x));
        }
        let seq = common[0];
        let idx = slots.iter().map(|&s| self.lift(s, seq).unwrap()).collect();
        (seq, idx)
    }

    /// Whether every table prefix occupies a contiguous run of items.
    pub fn is_running_prefix(&self) -> bool {
        let mut by_path: BTreeMap<&Vec<VarSet>, Vec<Slot>> = BTreeMap::new();
        for (slot, owned) in &self.owned {
            for (_, p) in owned {
                by_path.entry(p).or_default().push(*slot);
            }
        }
        by_path.values().all(|slots| {
            let (_, idx) = self.span(slots);
            let lo = *idx.iter().next().unwrap();
            let hi = *idx.iter().next_back().unwrap();
            hi - lo + 1 == idx.len()
        })
    }
}

/// Splits on commas outside parentheses.
fn split_top(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn sort_key(q: &Query, mask: VarSet) -> Vec<String> {
    let mut names: Vec<String> = (0..q.num_vars())
        .filter(|&v| mask & (1 << v) != 0)
        .map(|v| q.variables[v].clone())
        .collect();
    names.sort();
    names
}

fn flatten_items(q: &Query, items: &[Item]) -> Vec<Vec<Veo>> {
    let mut out = Vec::new();
    for item in items {
        match item {
            Item::Leaf(v) => out.push(vec![v.clone()]),
            Item::Split { branches, .. } => {
                let mut acc: Vec<Vec<Veo>> = vec![Vec::new()];
                for b in branches {
                    let opts = flatten_items(q, b);
                    let mut next = Vec::new();
                    for a in &acc {
                        for o in &opts {
                            let mut c = a.clone();
                            c.extend(o.iter().cloned());
                            next.push(c);
                        }
                    }
                    acc = next;
                }
                out.extend(acc);
            }
        }
    }
    out
}

impl Ordering {
    /// A flat ordering in the given order, with the RP flag computed.
    pub fn flat(q: &Query, veos: Vec<Veo>) -> Ordering {
        let items: Vec<Item> = veos.into_iter().map(Item::Leaf).collect();
        let rp = Layout::new(q, &items).is_running_prefix();
        Ordering { items, rp }
    }

    /// Validates `v1,v3,v2` (1-based positions in `mveo`) or serializations.
    pub fn parse_flat(q: &Query, mveo: &[Veo], spec: &str) -> Result<Ordering> {
        let mut chosen: Vec<Veo> = Vec::new();
        for tok in split_top(spec).into_iter().map(str::trim).filter(|t| !t.is_empty()) {
            let v = match tok.strip_prefix('v').and_then(|n| n.parse::<usize>().ok()) {
                Some(i) if i >= 1 && i <= mveo.len() => mveo[i - 1].clone(),
                Some(i) => return Err(Error::InvalidPermutation(format!("no plan v{i}"))),
                None => {
                    let v = Veo::parse(q, tok)?;
                    if !mveo.contains(&v) {
                        return Err(Error::InvalidPermutation(format!("`{tok}` is not a minimal plan")));
                    }
                    v
                }
            };
            if chosen.contains(&v) {
                return Err(Error::InvalidPermutation(format!("`{v}` listed twice")));
            }
            chosen.push(v);
        }
        if chosen.len() != mveo.len() {
            return Err(Error::InvalidPermutation(format!(
                "{} plans given, {} expected",
                chosen.len(),
                mveo.len()
            )));
        }
        Ok(Ordering::flat(q, chosen))
    }

    /// Groups plans by root, orders groups by variable name and splits into
    /// parallel branches wherever the remaining query falls apart.
    pub fn nested(q: &Query, mveo: &[Veo]) -> Ordering {
        let items = build(q, mveo.to_vec(), &[]);
        let rp = Layout::new(q, &items).is_running_prefix();
        Ordering { items, rp }
    }

    /// The complete plans in ordering order.
    pub fn flatten(&self, q: &Query) -> Vec<Veo> {
        flatten_items(q, &self.items)
            .into_iter()
            .map(|parts| {
                if parts.len() == 1 {
                    parts.into_iter().next().unwrap()
                } else {
                    let refs: Vec<&Veo> = parts.iter().collect();
                    Veo::merge(q, &refs)
                }
            })
            .collect()
    }

    pub fn layout<'a>(&'a self, q: &Query) -> Layout<'a> {
        Layout::new(q, &self.items)
    }

    /// Bracketed rendering, e.g. `[x <- y <- z, x <- z <- y]`.
    pub fn render(&self, q: &Query) -> String {
        fn go(q: &Query, items: &[Item], scope: &[VarSet]) -> String {
            let parts: Vec<String> = items
                .iter()
                .map(|it| match it {
                    Item::Leaf(v) => below(q, v, scope),
                    Item::Split { path, branches } => {
                        let p = path[scope.len()..]
                            .iter()
                            .map(|&m| q.node_label(m))
                            .collect::<Vec<_>>()
                            .join(" <- ");
                        let b = branches.iter().map(|b| go(q, b, path)).collect::<Vec<_>>().join(" x ");
                        format!("{p} <- ({b})")
                    }
                })
                .collect();
            format!("[{}]", parts.join(", "))
        }
        go(q, &self.items, &[])
    }
}

fn end_children(tree: &Veo, path: &[VarSet]) -> Vec<VarSet> {
    match path.last() {
        None => vec![tree.root()],
        Some(end) => {
            let i = tree.nodes().iter().position(|n| n == end).expect("path in tree");
            tree.children(i).into_iter().map(|c| tree.nodes()[c]).collect()
        }
    }
}

/// Serialization of the part of `tree` below `scope`.
fn below(q: &Query, tree: &Veo, scope: &[VarSet]) -> String {
    let Some(end) = scope.last() else {
        return tree.text().to_string();
    };
    let inside = path_vars(scope);
    let edges: Vec<(VarSet, Option<VarSet>)> = tree
        .edges()
        .into_iter()
        .filter(|(m, _)| m & inside == 0)
        .map(|(m, p)| (m, p.filter(|p| p != end)))
        .collect();
    if edges.is_empty() {
        return String::new();
    }
    Veo::from_edges(q, &edges).text().to_string()
}

fn leaves(mut trees: Vec<Veo>) -> Vec<Item> {
    trees.sort_by(|a, b| a.text().cmp(b.text()));
    trees.into_iter().map(Item::Leaf).collect()
}

fn build(q: &Query, trees: Vec<Veo>, path: &[VarSet]) -> Vec<Item> {
    if trees.len() <= 1 {
        return trees.into_iter().map(Item::Leaf).collect();
    }
    let rest = trees[0].vars() & !path_vars(path);
    let comps = if path.is_empty() { vec![rest] } else { q.components_of(rest) };
    if comps.len() >= 2 {
        let mut comps = comps;
        comps.sort_by_key(|&c| sort_key(q, c));
        let mut branches = Vec::new();
        let mut product = 1usize;
        let mut parts: Vec<BTreeSet<Veo>> = Vec::new();
        for &k in &comps {
            let frags: BTreeSet<Veo> = trees.iter().map(|t| t.restrict(q, k)).collect();
            product *= frags.len();
            parts.push(frags);
        }
        let full: BTreeSet<&Veo> = trees.iter().collect();
        if product != trees.len() || full.len() != trees.len() {
            return leaves(trees);
        }
        for frags in parts {
            branches.push(build(q, frags.into_iter().collect(), path));
        }
        return vec![Item::Split {
            path: path.to_vec(),
            branches,
        }];
    }
    let mut groups: BTreeMap<Vec<String>, (VarSet, Vec<Veo>)> = BTreeMap::new();
    for t in trees.iter() {
        let kids = end_children(t, path);
        if kids.len() != 1 {
            return leaves(trees);
        }
        groups
            .entry(sort_key(q, kids[0]))
            .or_insert_with(|| (kids[0], Vec::new()))
            .1
            .push(t.clone());
    }
    let mut out = Vec::new();
    for (_, (node, group)) in groups {
        let mut p = path.to_vec();
        p.push(node);
        out.extend(build(q, group, &p));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::named_query;
    use crate::veo::enumerate_mveo;

    fn texts(v: &[Veo]) -> Vec<String> {
        v.iter().map(|v| v.text().to_string()).collect()
    }

    #[test]
    fn triangle_unary_nested() {
        let q = named_query("triangle-unary").unwrap();
        let m = enumerate_mveo(&q, 8).unwrap();
        let o = Ordering::nested(&q, &m);
        assert!(o.rp);
        assert_eq!(texts(&o.flatten(&q)), ["x <- y <- z", "x <- z <- y", "(yz) <- x"]);
    }

    #[test]
    fn non_rp_flat() {
        let q = named_query("triangle-unary").unwrap();
        let v: Vec<Veo> = ["x <- y <- z", "y <- z <- x", "x <- z <- y"]
            .iter()
            .map(|t| Veo::parse(&q, t).unwrap())
            .collect();
        assert!(!Ordering::flat(&q, v).rp);
    }

    #[test]
    fn parse_flat_permutations() {
        let q = named_query("triangle").unwrap();
        let m = enumerate_mveo(&q, 8).unwrap();
        let o = Ordering::parse_flat(&q, &m, "v3,v1,v2").unwrap();
        assert_eq!(o.flatten(&q)[0], m[2]);
        assert!(Ordering::parse_flat(&q, &m, "v1,v1,v2").is_err());
        assert!(Ordering::parse_flat(&q, &m, "v1,v2").is_err());
        assert!(Ordering::parse_flat(&q, &m, "v1,v2,v4").is_err());
        assert!(Ordering::parse_flat(&q, &m, "(xy) <- z, (zx) <- y, (yz) <- x").is_ok());
        let we = named_query("chain2-we").unwrap();
        let m = enumerate_mveo(&we, 8).unwrap();
        let o = Ordering::parse_flat(&we, &m, "y <- (x, z), v1, v2, v4, v5").unwrap();
        assert_eq!(o.flatten(&we)[0].text(), "y <- (x, z)");
    }

    #[test]
    fn cycle_nests_into_parallel_branches() {
        let q = named_query("cycle6-we").unwrap();
        let m = enumerate_mveo(&q, 8).unwrap();
        let o = Ordering::nested(&q, &m);
        assert!(o.rp);
        let flat = o.flatten(&q);
        assert_eq!(flat.len(), m.len());
        let a: BTreeSet<&Veo> = flat.iter().collect();
        let b: BTreeSet<&Veo> = m.iter().collect();
        assert_eq!(a, b);
        let r = o.render(&q);
        assert!(r.contains("x <- u <- ([v <- w, w <- v] x [y <- z, z <- y])"), "{r}");
    }
}
