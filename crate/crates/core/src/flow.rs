//! Factorization flow graph, minimum node cut and plan extraction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::maxflow::Dinic;
use crate::ordering::{Item, Layout, Ordering, Slot};
use crate::problem::Problem;
use crate::provenance::{assemble, Factorization};
use crate::veo::{PrefixInstance, Veo};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Source,
    Target,
    Connector,
    /// One plan position of one witness.
    Plan { witness: usize, slot: Slot },
    /// A table-prefix instance, shared by every witness that uses it.
    Prefix { instance: PrefixInstance },
}

#[derive(Debug, Clone)]
pub struct FlowNode {
    pub kind: NodeKind,
    /// `None` for uncuttable nodes.
    pub capacity: Option<u64>,
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct FlowGraph {
    pub nodes: Vec<FlowNode>,
    pub edges: Vec<(usize, usize)>,
    pub source: usize,
    pub target: usize,
    pub rp: bool,
    /// Per witness: plan node of every leaf slot.
    plan_nodes: Vec<BTreeMap<Slot, usize>>,
    /// Per witness: prefix instances decided by each slot, with weights.
    slot_instances: Vec<BTreeMap<Slot, Vec<(PrefixInstance, u32)>>>,
    /// Prefix instance to its node, or to the plan node it was folded into.
    carrier: HashMap<(usize, PrefixInstance), usize>,
    combos: Vec<Vec<Slot>>,
    trees: BTreeMap<Slot, Veo>,
}

#[derive(Debug, Clone)]
pub struct Cut {
    pub value: u64,
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FlowResult {
    pub factorization: Factorization,
    pub cut_value: u64,
    pub cut_labels: Vec<String>,
    /// Witnesses with no plan fully inside the cut.
    pub repaired: usize,
    pub rp: bool,
    pub graph_nodes: usize,
    pub graph_edges: usize,
}

/// Leaf slots of every complete choice through `seq`, in ordering order.
fn combos(layout: &Layout, seq: usize) -> Vec<Vec<Slot>> {
    let mut out = Vec::new();
    for (i, item) in layout.items[seq].iter().enumerate() {
        let slot = Slot { seq, item: i };
        match item {
            Item::Leaf(_) => out.push(vec![slot]),
            Item::Split { .. } => {
                let children: Vec<usize> = (0..layout.parent.len())
                    .filter(|&s| layout.parent[s] == Some(slot))
                    .collect();
                let mut acc: Vec<Vec<Slot>> = vec![vec![slot]];
                for c in children {
                    let sub = combos(layout, c);
                    let mut next = Vec::new();
                    for a in &acc {
                        for b in &sub {
                            let mut v = a.clone();
                            v.extend(b);
                            next.push(v);
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

struct Builder<'a> {
    nodes: Vec<FlowNode>,
    edges: BTreeSet<(usize, usize)>,
    layout: &'a Layout<'a>,
    /// Per witness, per (seq, item): connector before and after.
    around: Vec<HashMap<Slot, (usize, usize)>>,
    plan_nodes: Vec<BTreeMap<Slot, usize>>,
}

impl Builder<'_> {
    fn node(&mut self, kind: NodeKind, capacity: Option<u64>, label: String) -> usize {
        self.nodes.push(FlowNode { kind, capacity, label });
        self.nodes.len() - 1
    }

    fn chain(&mut self, p: &Problem, w: usize, seq: usize, start: usize, end: usize) {
        let n = self.layout.items[seq].len();
        let mut conns = vec![start];
        for _ in 1..n {
            let c = self.node(NodeKind::Connector, None, format!("c{}", self.nodes.len()));
            conns.push(c);
        }
        conns.push(end);
        for i in 0..n {
            let slot = Slot { seq, item: i };
            let (a, b) = (conns[i], conns[i + 1]);
            self.around[w].insert(slot, (a, b));
            match self.layout.items[seq][i] {
                Item::Leaf(tree) => {
                    let label = format!("q[{}]{}", tree.text(), p.witnesses.witnesses[w].label(&p.query));
                    let q = self.node(NodeKind::Plan { witness: w, slot }, Some(0), label);
                    self.plan_nodes[w].insert(slot, q);
                    self.edges.insert((a, q));
                    self.edges.insert((q, b));
                }
                Item::Split { .. } => {
                    for c in 0..self.layout.parent.len() {
                        if self.layout.parent[c] == Some(slot) {
                            self.chain(p, w, c, a, b);
                        }
                    }
                }
            }
        }
    }
}

/// Builds the flow graph of `p` under ordering `ord`.
pub fn build_flow_graph(p: &Problem, ord: &Ordering) -> FlowGraph {
    let q = &p.query;
    let layout = ord.layout(q);
    let n = p.n();
    let mut b = Builder {
        nodes: Vec::new(),
        edges: BTreeSet::new(),
        layout: &layout,
        around: vec![HashMap::new(); n],
        plan_nodes: vec![BTreeMap::new(); n],
    };
    let source = b.node(NodeKind::Source, None, "source".into());
    let target = b.node(NodeKind::Target, None, "target".into());
    for w in 0..n {
        let c0 = b.node(NodeKind::Connector, None, format!("c{}", b.nodes.len()));
        let cn = b.node(NodeKind::Connector, None, format!("c{}", b.nodes.len()));
        b.edges.insert((source, c0));
        b.edges.insert((cn, target));
        b.chain(p, w, 0, c0, cn);
    }

    // Prefix instances decided at each slot, per witness.
    let mut slot_instances: Vec<BTreeMap<Slot, Vec<(PrefixInstance, u32)>>> = vec![BTreeMap::new(); n];
    let mut spans: BTreeMap<PrefixInstance, (u32, BTreeMap<usize, Vec<Slot>>)> = BTreeMap::new();
    for (w, wit) in p.witnesses.iter().enumerate() {
        for (slot, owned) in &layout.owned {
            let mut by_path: BTreeMap<&Vec<u32>, u32> = BTreeMap::new();
            for (_, path) in owned {
                *by_path.entry(path).or_insert(0) += 1;
            }
            let mut here = Vec::new();
            for (path, c) in by_path {
                let inst = wit.instance(q, path);
                let e = spans.entry(inst.clone()).or_insert((c, BTreeMap::new()));
                e.1.entry(w).or_default().push(*slot);
                here.push((inst, c));
            }
            slot_instances[w].insert(*slot, here);
        }
    }

    let mut carrier: HashMap<(usize, PrefixInstance), usize> = HashMap::new();
    for (inst, (weight, per_witness)) in spans {
        let resolved: Vec<(usize, usize, usize, usize)> = per_witness
            .iter()
            .map(|(&w, slots)| {
                let (seq, idx) = layout.span(slots);
                (w, seq, *idx.iter().next().unwrap(), *idx.iter().next_back().unwrap())
            })
            .collect();
        if resolved.len() == 1 {
            let (w, seq, lo, hi) = resolved[0];
            let slot = Slot { seq, item: lo };
            if lo == hi {
                if let Some(&qn) = b.plan_nodes[w].get(&slot) {
                    *b.nodes[qn].capacity.as_mut().unwrap() += u64::from(weight);
                    if b.nodes[qn].label.starts_with("q[") {
                        b.nodes[qn].label = inst.render(q);
                    }
                    carrier.insert((w, inst), qn);
                    continue;
                }
            }
        }
        let label = inst.render(q);
        let pn = b.node(NodeKind::Prefix { instance: inst.clone() }, Some(u64::from(weight)), label);
        for (w, seq, lo, hi) in resolved {
            let before = b.around[w][&Slot { seq, item: lo }].0;
            let after = b.around[w][&Slot { seq, item: hi }].1;
            b.edges.insert((before, pn));
            b.edges.insert((pn, after));
            carrier.insert((w, inst.clone()), pn);
        }
    }

    let combos = combos(&layout, 0);
    let trees = layout
        .items
        .iter()
        .enumerate()
        .flat_map(|(seq, items)| {
            items.iter().enumerate().filter_map(move |(i, it)| match it {
                Item::Leaf(t) => Some((Slot { seq, item: i }, t.clone())),
                Item::Split { .. } => None,
            })
        })
        .collect();
    FlowGraph {
        nodes: b.nodes,
        edges: b.edges.into_iter().collect(),
        source,
        target,
        rp: ord.rp,
        plan_nodes: b.plan_nodes,
        slot_instances,
        carrier,
        combos,
        trees,
    }
}

impl FlowGraph {
    fn infinity(&self) -> u64 {
        self.nodes.iter().filter_map(|n| n.capacity).sum::<u64>() + 1
    }

    /// Minimum node cut via node splitting; the cut is the residual frontier.
    pub fn min_cut(&self) -> Cut {
        let inf = self.infinity();
        let mut d = Dinic::new(0);
        let mut inn = vec![0; self.nodes.len()];
        let mut out = vec![0; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            inn[i] = d.add_node();
            out[i] = match n.capacity {
                Some(c) => {
                    let o = d.add_node();
                    d.add_edge(inn[i], o, c);
                    o
                }
                None => inn[i],
            };
        }
        for &(a, b) in &self.edges {
            d.add_edge(out[a], inn[b], inf);
        }
        let value = d.max_flow(inn[self.source], inn[self.target]);
        let side = d.source_side(inn[self.source]);
        let nodes: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].capacity.is_some() && side[inn[i]] && !side[out[i]])
            .collect();
        debug_assert_eq!(value, nodes.iter().map(|&i| self.nodes[i].capacity.unwrap()).sum::<u64>());
        Cut { value, nodes }
    }

    /// Chooses per witness the first plan whose cost carriers are all cut.
    pub fn extract(&self, p: &Problem, cut: &Cut) -> Result<FlowResult> {
        let q = &p.query;
        let in_cut: BTreeSet<usize> = cut.nodes.iter().copied().collect();
        let mut assignment = Vec::with_capacity(p.n());
        let mut repaired = 0;
        for w in 0..p.n() {
            let mut best: Option<(u64, &Vec<Slot>)> = None;
            for combo in &self.combos {
                let mut carriers = BTreeSet::new();
                for slot in combo {
                    if let Some(&qn) = self.plan_nodes[w].get(slot) {
                        carriers.insert(qn);
                    }
                    for (inst, _) in self.slot_instances[w].get(slot).into_iter().flatten() {
                        carriers.insert(self.carrier[&(w, inst.clone())]);
                    }
                }
                let uncut: u64 = carriers
                    .iter()
                    .filter(|c| !in_cut.contains(c))
                    .map(|&c| self.nodes[c].capacity.unwrap())
                    .sum();
                if best.is_none_or(|(b, _)| uncut < b) {
                    best = Some((uncut, combo));
                }
                if uncut == 0 {
                    break;
                }
            }
            let (uncut, combo) = best.ok_or_else(|| Error::ExtractionFailure(p.witnesses.witnesses[w].label(q)))?;
            if uncut > 0 {
                repaired += 1;
                log::warn!(
                    "witness {} has no plan inside the cut; using the cheapest completion",
                    p.witnesses.witnesses[w].label(q)
                );
            }
            let parts: Vec<&Veo> = combo.iter().filter_map(|s| self.trees.get(s)).collect();
            assignment.push(if parts.len() == 1 { parts[0].clone() } else { Veo::merge(q, &parts) });
        }
        let factorization = assemble(q, &p.witnesses, &assignment)?;
        if repaired == 0 && factorization.length as u64 > cut.value {
            log::warn!("extracted length {} exceeds cut value {}", factorization.length, cut.value);
        }
        Ok(FlowResult {
            factorization,
            cut_value: cut.value,
            cut_labels: cut.nodes.iter().map(|&i| self.nodes[i].label.clone()).collect(),
            repaired,
            rp: self.rp,
            graph_nodes: self.nodes.len(),
            graph_edges: self.edges.len(),
        })
    }

    /// Graphviz rendering; cut nodes are drawn filled.
    pub fn to_dot(&self, cut: Option<&Cut>) -> String {
        let in_cut: BTreeSet<usize> = cut.map(|c| c.nodes.iter().copied().collect()).unwrap_or_default();
        let mut s = String::from("digraph flow {\n  rankdir=LR;\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let (shape, cap) = match (&n.kind, n.capacity) {
                (NodeKind::Source | NodeKind::Target, _) => ("doublecircle", String::new()),
                (NodeKind::Connector, _) => ("point", String::new()),
                (_, Some(c)) => ("box", format!(" ({c})")),
                (_, None) => ("box", String::new()),
            };
            let style = if in_cut.contains(&i) { ", style=filled, fillcolor=lightblue" } else { "" };
            let label = n.label.replace('"', "'");
            let _ = writeln!(s, "  n{i} [shape={shape}, label=\"{label}{cap}\"{style}];");
        }
        for &(a, b) in &self.edges {
            let _ = writeln!(s, "  n{a} -> n{b};");
        }
        s.push_str("}\n");
        s
    }
}

/// Builds, cuts and extracts in one step.
pub fn solve_flow(p: &Problem, ord: &Ordering, strict_rp: bool) -> Result<FlowResult> {
    if strict_rp && !ord.rp {
        return Err(Error::NonRpOrdering);
    }
    if !ord.rp {
        log::warn!("ordering is not running-prefix; the cut may leak");
    }
    let g = build_flow_graph(p, ord);
    let cut = g.min_cut();
    g.extract(p, &cut)
}
