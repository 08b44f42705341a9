//! 0-1 integer program over plan and prefix-instance variables, with LP export.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::veo::PrefixInstance;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VarKind {
    /// Witness `witness` uses plan `plan`.
    Plan { witness: usize, plan: usize },
    /// A table-prefix instance is written.
    Prefix { instance: PrefixInstance },
}

#[derive(Debug, Clone)]
pub struct Var {
    pub name: String,
    pub kind: VarKind,
    /// Objective coefficient.
    pub cost: u64,
}

#[derive(Debug, Clone)]
pub struct IlpModel {
    pub vars: Vec<Var>,
    /// Per witness, variables of which at least one must be set.
    pub covers: Vec<Vec<usize>>,
    /// `(a, b)` means `a >= b`.
    pub implications: Vec<(usize, usize)>,
    /// Constant added to the objective.
    pub offset: u64,
    pub n: usize,
    pub k: usize,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelStats {
    pub vars: usize,
    pub constraints: usize,
    pub plan_constraints: usize,
    pub prefix_constraints: usize,
    pub prefix_vars: usize,
    pub objective_vars: usize,
    pub n: usize,
    pub k: usize,
    pub m: usize,
}

fn sanitize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for part in s.split(" <- ") {
        if !out.is_empty() {
            out.push_str("__");
        }
        out.extend(part.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }));
    }
    out
}

/// Builds the plan-cover and prefix-implication program for `p`.
pub fn build_ilp(p: &Problem) -> Result<IlpModel> {
    if p.witnesses.is_empty() {
        return Err(Error::EmptyWitnessSet);
    }
    let q = &p.query;
    let mut vars = Vec::new();
    let mut names: HashMap<String, usize> = HashMap::new();
    let mut unique = |base: String| -> String {
        let c = names.entry(base.clone()).or_insert(0);
        *c += 1;
        if *c == 1 {
            base
        } else {
            format!("{base}_{c}")
        }
    };
    let mut covers = Vec::with_capacity(p.n());
    let mut implications = Vec::new();
    let mut prefix_vars: HashMap<PrefixInstance, usize> = HashMap::new();
    for (i, w) in p.witnesses.iter().enumerate() {
        let label = w.label(q);
        let mut cover = Vec::with_capacity(p.k());
        for j in 0..p.k() {
            let qv = vars.len();
            vars.push(Var {
                name: unique(format!("q_v{}__{}", j + 1, sanitize(&label))),
                kind: VarKind::Plan { witness: i, plan: j },
                cost: 0,
            });
            cover.push(qv);
            for (inst, c) in p.instances(i, j) {
                let pv = match prefix_vars.get(&inst) {
                    Some(&v) => v,
                    None => {
                        let name = unique(format!("p_{}", sanitize(&inst.render(q))));
                        vars.push(Var {
                            name,
                            kind: VarKind::Prefix { instance: inst.clone() },
                            cost: u64::from(c),
                        });
                        prefix_vars.insert(inst, vars.len() - 1);
                        vars.len() - 1
                    }
                };
                implications.push((pv, qv));
            }
        }
        covers.push(cover);
    }
    Ok(IlpModel {
        vars,
        covers,
        implications,
        offset: 0,
        n: p.n(),
        k: p.k(),
        m: q.num_atoms(),
    })
}

impl IlpModel {
    pub fn stats(&self) -> ModelStats {
        let prefix_vars = self.vars.iter().filter(|v| matches!(v.kind, VarKind::Prefix { .. })).count();
        let s = ModelStats {
            vars: self.vars.len(),
            constraints: self.covers.len() + self.implications.len(),
            plan_constraints: self.covers.len(),
            prefix_constraints: self.implications.len(),
            prefix_vars,
            objective_vars: self.vars.iter().filter(|v| v.cost > 0).count(),
            n: self.n,
            k: self.k,
            m: self.m,
        };
        assert!(s.constraints <= s.n * (1 + s.k * s.m), "constraint count exceeds n(1+km)");
        s
    }

    /// Folds full-path prefixes into constants and, for linear plans, names
    /// each plan by its two-variable prefix.
    pub fn reduce(&self, p: &Problem) -> IlpModel {
        let q = &p.query;
        let mut m = self.clone();
        // Full-path prefixes belong to one witness: move their weight onto the plans using them.
        let mut full: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(a, b) in &m.implications {
            if let VarKind::Prefix { instance } = &m.vars[a].kind {
                if instance.is_full(q) {
                    full.entry(a).or_default().push(b);
                }
            }
        }
        for (&pv, users) in &full {
            for &u in users {
                m.vars[u].cost += m.vars[pv].cost;
            }
            m.vars[pv].cost = 0;
        }
        m.implications.retain(|(a, _)| !full.contains_key(a));
        // A plan cost shared by every plan of a witness is a constant.
        for cover in &m.covers {
            let c = m.vars[cover[0]].cost;
            if c > 0 && cover.iter().all(|&v| m.vars[v].cost == c) {
                m.offset += c;
                for &v in cover {
                    m.vars[v].cost = 0;
                }
            }
        }
        if let Some(shorthand) = m.linear_shorthand(p) {
            m = shorthand;
        }
        m.compact();
        m
    }

    fn linear_shorthand(&self, p: &Problem) -> Option<IlpModel> {
        let mut heads: BTreeSet<(usize, usize)> = BTreeSet::new();
        for v in &p.mveo {
            let nodes = v.nodes();
            let chain = nodes.len() >= 2
                && nodes.iter().all(|n| n.count_ones() == 1)
                && (1..nodes.len()).all(|i| v.parent(i) == Some(i - 1));
            if !chain || !heads.insert((nodes[0] as usize, nodes[1] as usize)) {
                return None;
            }
        }
        if self.vars.iter().any(|v| matches!(v.kind, VarKind::Plan { .. }) && v.cost > 0) {
            return None;
        }
        let mut m = self.clone();
        let mut rename: HashMap<usize, usize> = HashMap::new();
        for &(a, b) in &self.implications {
            let VarKind::Prefix { instance } = &self.vars[a].kind else { return None };
            if instance.path.len() > 2 {
                return None;
            }
            if instance.path.len() == 2 {
                rename.insert(b, a);
            }
        }
        if rename.len() != self.covers.iter().map(Vec::len).sum::<usize>() {
            return None;
        }
        for cover in &mut m.covers {
            for v in cover.iter_mut() {
                *v = rename[v];
            }
        }
        let mut seen = BTreeSet::new();
        m.implications = self
            .implications
            .iter()
            .map(|&(a, b)| (a, rename[&b]))
            .filter(|&(a, b)| a != b && seen.insert((a, b)))
            .collect();
        Some(m)
    }

    /// Drops variables that appear nowhere and renumbers the rest.
    fn compact(&mut self) {
        let mut used = vec![false; self.vars.len()];
        for c in &self.covers {
            for &v in c {
                used[v] = true;
            }
        }
        for &(a, b) in &self.implications {
            used[a] = true;
            used[b] = true;
        }
        let mut map = vec![usize::MAX; self.vars.len()];
        let mut vars = Vec::new();
        for (i, v) in self.vars.iter().enumerate() {
            if used[i] {
                map[i] = vars.len();
                vars.push(v.clone());
            }
        }
        self.vars = vars;
        for c in &mut self.covers {
            for v in c.iter_mut() {
                *v = map[*v];
            }
        }
        for (a, b) in &mut self.implications {
            *a = map[*a];
            *b = map[*b];
        }
    }

    /// CPLEX LP text.
    pub fn to_lp(&self) -> String {
        let mut s = String::new();
        if self.offset > 0 {
            let _ = writeln!(s, "\\ constant objective offset: {}", self.offset);
        }
        s.push_str("Minimize\n obj:");
        let terms: Vec<String> = self
            .vars
            .iter()
            .filter(|v| v.cost > 0)
            .map(|v| format!("{} {}", v.cost, v.name))
            .collect();
        if terms.is_empty() {
            s.push_str(" 0");
        }
        for (i, t) in terms.iter().enumerate() {
            if i > 0 && i % 8 == 0 {
                s.push_str("\n     ");
            }
            s.push_str(if i == 0 { " " } else { " + " });
            s.push_str(t);
        }
        s.push_str("\nSubject To\n");
        for (i, c) in self.covers.iter().enumerate() {
            let names: Vec<&str> = c.iter().map(|&v| self.vars[v].name.as_str()).collect();
            let _ = writeln!(s, " plan_{}: {} >= 1", i + 1, names.join(" + "));
        }
        for (i, &(a, b)) in self.implications.iter().enumerate() {
            let _ = writeln!(s, " prefix_{}: {} - {} >= 0", i + 1, self.vars[a].name, self.vars[b].name);
        }
        s.push_str("Binaries\n");
        for v in &self.vars {
            let _ = writeln!(s, " {}", v.name);
        }
        s.push_str("End\n");
        s
    }

    pub fn export_lp<W: Write>(&self, sink: &mut W) -> Result<()> {
        sink.write_all(self.to_lp().as_bytes())?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ModelSolution {
    /// Includes the model's constant offset.
    pub objective: u64,
    /// Variables set to one.
    pub ones: Vec<usize>,
    pub optimal: bool,
    pub nodes: u64,
}

struct ModelSearch<'a> {
    m: &'a IlpModel,
    /// Variables forced by setting each variable, including itself.
    closure: Vec<Vec<usize>>,
    share: Vec<f64>,
    set: Vec<u32>,
    best: u64,
    best_set: Vec<usize>,
    nodes: u64,
    budget: u64,
    exhausted: bool,
}

impl ModelSearch<'_> {
    fn satisfied(&self, g: usize) -> bool {
        self.m.covers[g].iter().any(|&v| self.set[v] > 0)
    }

    fn bound(&self) -> u64 {
        let mut total = 0.0;
        for g in 0..self.m.covers.len() {
            if self.satisfied(g) {
                continue;
            }
            let best = self.m.covers[g]
                .iter()
                .map(|&v| {
                    self.closure[v]
                        .iter()
                        .filter(|&&u| self.set[u] == 0)
                        .map(|&u| self.m.vars[u].cost as f64 / self.share[u])
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            total += best;
        }
        (total - 1e-9).ceil().max(0.0) as u64
    }

    fn toggle(&mut self, v: usize, on: bool) -> u64 {
        let mut added = 0;
        for i in 0..self.closure[v].len() {
            let u = self.closure[v][i];
            if on {
                if self.set[u] == 0 {
                    added += self.m.vars[u].cost;
                }
                self.set[u] += 1;
            } else {
                self.set[u] -= 1;
            }
        }
        added
    }

    fn dfs(&mut self, cost: u64) {
        self.nodes += 1;
        if self.nodes > self.budget {
            self.exhausted = true;
            return;
        }
        let open: Vec<usize> = (0..self.m.covers.len()).filter(|&g| !self.satisfied(g)).collect();
        if open.is_empty() {
            if cost < self.best {
                self.best = cost;
                self.best_set = (0..self.set.len()).filter(|&v| self.set[v] > 0).collect();
            }
            return;
        }
        if cost + self.bound() >= self.best {
            return;
        }
        let g = open[0];
        let mut choices = self.m.covers[g].clone();
        choices.sort_by_key(|&v| {
            self.closure[v]
                .iter()
                .filter(|&&u| self.set[u] == 0)
                .map(|&u| self.m.vars[u].cost)
                .sum::<u64>()
        });
        for v in choices {
            let added = self.toggle(v, true);
            self.dfs(cost + added);
            self.toggle(v, false);
            if self.exhausted {
                return;
            }
        }
    }
}

/// Solves the program by branching on which member of each cover is set.
pub fn solve_model(m: &IlpModel, budget: u64) -> ModelSolution {
    let nv = m.vars.len();
    let mut up: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for &(a, b) in &m.implications {
        up[b].push(a);
    }
    let closure: Vec<Vec<usize>> = (0..nv)
        .map(|v| {
            let mut seen = BTreeSet::from([v]);
            let mut stack = vec![v];
            while let Some(x) = stack.pop() {
                for &y in &up[x] {
                    if seen.insert(y) {
                        stack.push(y);
                    }
                }
            }
            seen.into_iter().collect()
        })
        .collect();
    let mut share = vec![0.0; nv];
    for c in &m.covers {
        let reach: BTreeSet<usize> = c.iter().flat_map(|&v| closure[v].iter().copied()).collect();
        for u in reach {
            share[u] += 1.0;
        }
    }
    let mut s = ModelSearch {
        m,
        closure,
        share,
        set: vec![0; nv],
        best: u64::MAX,
        best_set: Vec::new(),
        nodes: 0,
        budget,
        exhausted: false,
    };
    s.dfs(0);
    ModelSolution {
        objective: s.best.saturating_add(m.offset),
        ones: s.best_set,
        optimal: !s.exhausted,
        nodes: s.nodes,
    }
}
