//! Exact minimal factorization by branch and bound over shared prefix instances.
//!
//! Once every shared instance is decided as written or not, each witness
//! independently takes its cheapest plan. The search branches on the most
//! shared undecided instance and splits into independent components as soon
//! as decisions disconnect the witnesses.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::provenance::{assemble, compute_witnesses, Database, Factorization};
use crate::query::Query;
use crate::veo::PrefixInstance;

pub const DEFAULT_BUDGET: u64 = 5_000_000;

/// Largest assignment space [`solve_brute`] will enumerate.
pub const BRUTE_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone)]
pub struct ExactResult {
    pub factorization: Factorization,
    /// Plan index per witness.
    pub plans: Vec<usize>,
    pub optimal: bool,
    /// Search nodes expanded.
    pub nodes: u64,
    /// Admissible bound on the optimum; equals the length when optimal.
    pub lower_bound: u64,
}

/// Interned prefix instances: per witness and plan, the instance ids it uses.
struct Index {
    weight: Vec<u64>,
    uses: Vec<Vec<Vec<usize>>>,
}

impl Index {
    fn new(p: &Problem) -> Index {
        let mut ids: HashMap<PrefixInstance, usize> = HashMap::new();
        let mut weight = Vec::new();
        let mut uses = Vec::with_capacity(p.n());
        for i in 0..p.n() {
            let mut per_plan = Vec::with_capacity(p.k());
            for j in 0..p.k() {
                let mut v = Vec::new();
                for (inst, c) in p.instances(i, j) {
                    let id = *ids.entry(inst).or_insert_with(|| {
                        weight.push(u64::from(c));
                        weight.len() - 1
                    });
                    v.push(id);
                }
                v.sort_unstable();
                v.dedup();
                per_plan.push(v);
            }
            uses.push(per_plan);
        }
        Index { weight, uses }
    }

    fn cost(&self, plans: &[usize]) -> u64 {
        let mut seen = vec![false; self.weight.len()];
        let mut total = 0;
        for (w, &j) in plans.iter().enumerate() {
            for &id in &self.uses[w][j] {
                if !seen[id] {
                    seen[id] = true;
                    total += self.weight[id];
                }
            }
        }
        total
    }
}

/// Plans of one witness with equal shared instances and private cost.
#[derive(Debug, Clone)]
struct Class {
    /// Smallest plan index in the class.
    plan: usize,
    shared: Vec<usize>,
    private: u64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Undecided,
    Open,
    Closed,
}

struct Search {
    weight: Vec<u64>,
    classes: Vec<Vec<Class>>,
    /// Per witness, the class it is pinned to.
    fixed: Vec<Option<usize>>,
    state: Vec<State>,
    nodes: u64,
    budget: u64,
    deadline: Option<Instant>,
    aborted: bool,
}

/// Cost-relevant view of a witness: feasible classes with their current costs.
struct Options {
    /// (class index, private cost, undecided shared instances)
    plans: Vec<(usize, u64, Vec<usize>)>,
}

impl Search {
    fn new(idx: &Index) -> Search {
        let n = idx.uses.len();
        let mut users: Vec<Vec<usize>> = vec![Vec::new(); idx.weight.len()];
        for (w, plans) in idx.uses.iter().enumerate() {
            for plan in plans {
                for &id in plan {
                    if users[id].last() != Some(&w) {
                        users[id].push(w);
                    }
                }
            }
        }
        let classes = (0..n)
            .map(|w| {
                let mut by_key: BTreeMap<(Vec<usize>, u64), usize> = BTreeMap::new();
                for (j, plan) in idx.uses[w].iter().enumerate() {
                    let shared: Vec<usize> = plan.iter().copied().filter(|&id| users[id].len() > 1).collect();
                    let private = plan.iter().filter(|&&id| users[id].len() <= 1).map(|&id| idx.weight[id]).sum();
                    by_key.entry((shared, private)).or_insert(j);
                }
                let mut v: Vec<Class> = by_key
                    .into_iter()
                    .map(|((shared, private), plan)| Class { plan, shared, private })
                    .collect();
                v.sort_by_key(|c| c.plan);
                v
            })
            .collect();
        Search {
            weight: idx.weight.clone(),
            classes,
            fixed: vec![None; n],
            state: vec![State::Undecided; idx.weight.len()],
            nodes: 0,
            budget: u64::MAX,
            deadline: None,
            aborted: false,
        }
    }

    fn options(&self, w: usize) -> Options {
        let mut plans = Vec::new();
        for (ci, c) in self.classes[w].iter().enumerate() {
            if self.fixed[w].is_some_and(|f| f != ci) {
                continue;
            }
            if c.shared.iter().any(|&id| self.state[id] == State::Closed) {
                continue;
            }
            let open: Vec<usize> = c.shared.iter().copied().filter(|&id| self.state[id] == State::Undecided).collect();
            plans.push((ci, c.private, open));
        }
        Options { plans }
    }

    /// Minimum cost of `ws` below `ub`, with the chosen class per witness.
    fn solve(&mut self, ws: &[usize], ub: u64) -> Option<(u64, Vec<(usize, usize)>)> {
        if self.aborted {
            return None;
        }
        self.nodes += 1;
        let late = self.nodes % 1024 == 0 && self.deadline.is_some_and(|d| Instant::now() >= d);
        if self.nodes > self.budget || late {
            self.aborted = true;
            return None;
        }
        let opts: Vec<Options> = ws.iter().map(|&w| self.options(w)).collect();
        if opts.iter().any(|o| o.plans.is_empty()) {
            return None;
        }
        let mut users: HashMap<usize, Vec<usize>> = HashMap::new();
        for (k, o) in opts.iter().enumerate() {
            for (_, _, open) in &o.plans {
                for &id in open {
                    let u = users.entry(id).or_default();
                    if u.last() != Some(&k) {
                        u.push(k);
                    }
                }
            }
        }
        // Instances with one remaining user cost like private ones.
        let coupling: Vec<(usize, Vec<usize>)> = {
            let mut v: Vec<(usize, Vec<usize>)> = users.into_iter().filter(|(_, u)| u.len() > 1).collect();
            v.sort();
            v
        };
        let local = |id: usize| !coupling.iter().any(|(c, _)| *c == id);
        if coupling.is_empty() {
            let mut total = 0;
            let mut picks = Vec::with_capacity(ws.len());
            for (k, o) in opts.iter().enumerate() {
                let (ci, c) = o
                    .plans
                    .iter()
                    .map(|(ci, p, open)| (*ci, p + open.iter().map(|&id| self.weight[id]).sum::<u64>()))
                    .min_by_key(|&(ci, c)| (c, ci))
                    .expect("nonempty");
                total += c;
                picks.push((ws[k], ci));
            }
            return (total < ub).then_some((total, picks));
        }
        // Split into components linked by coupling instances.
        let mut parent: Vec<usize> = (0..ws.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (_, u) in &coupling {
            for &k in &u[1..] {
                let (a, b) = (find(&mut parent, u[0]), find(&mut parent, k));
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for k in 0..ws.len() {
            let r = find(&mut parent, k);
            comps.entry(r).or_default().push(ws[k]);
        }
        let share: HashMap<usize, f64> = coupling.iter().map(|(id, u)| (*id, u.len() as f64)).collect();
        let bound_of = |ks: &[usize]| -> u64 {
            let mut f = 0.0;
            for &k in ks {
                let best = opts[k]
                    .plans
                    .iter()
                    .map(|(_, p, open)| {
                        *p as f64
                            + open
                                .iter()
                                .map(|&id| {
                                    let w = self.weight[id] as f64;
                                    if local(id) {
                                        w
                                    } else {
                                        w / share[&id]
                                    }
                                })
                                .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min);
                f += best;
            }
            (f - 1e-9).ceil().max(0.0) as u64
        };
        if comps.len() > 1 {
            let pos: HashMap<usize, usize> = ws.iter().enumerate().map(|(k, &w)| (w, k)).collect();
            let groups: Vec<Vec<usize>> = comps.into_values().collect();
            let lbs: Vec<u64> = groups
                .iter()
                .map(|g| bound_of(&g.iter().map(|w| pos[w]).collect::<Vec<_>>()))
                .collect();
            let mut rest: u64 = lbs.iter().sum();
            if rest >= ub {
                return None;
            }
            let mut acc = 0;
            let mut picks = Vec::with_capacity(ws.len());
            for (g, lb) in groups.iter().zip(&lbs) {
                rest -= lb;
                let (c, p) = self.solve(g, ub - acc - rest)?;
                acc += c;
                picks.extend(p);
            }
            return Some((acc, picks));
        }
        let all: Vec<usize> = (0..ws.len()).collect();
        if bound_of(&all) >= ub {
            return None;
        }
        let (id, _) = coupling
            .iter()
            .max_by_key(|(id, u)| (u.len(), std::cmp::Reverse(*id)))
            .expect("nonempty");
        let id = *id;
        let w = self.weight[id];
        let mut best: Option<(u64, Vec<(usize, usize)>)> = None;
        let mut limit = ub;
        self.state[id] = State::Open;
        if w < limit {
            if let Some((c, p)) = self.solve(ws, limit - w) {
                limit = c + w;
                best = Some((c + w, p));
            }
        }
        self.state[id] = State::Closed;
        if let Some(r) = self.solve(ws, limit) {
            best = Some(r);
        }
        self.state[id] = State::Undecided;
        best
    }

    fn run(&mut self, ub: u64) -> Option<(u64, Vec<usize>)> {
        let n = self.classes.len();
        let ws: Vec<usize> = (0..n).collect();
        let (c, picks) = self.solve(&ws, ub)?;
        let mut plans = vec![0; n];
        for (w, ci) in picks {
            plans[w] = ci;
        }
        Some((c, plans))
    }

    fn root_bound(&self) -> u64 {
        let n = self.classes.len();
        let mut users: HashMap<usize, f64> = HashMap::new();
        for w in 0..n {
            let mut ids: Vec<usize> = self.classes[w].iter().flat_map(|c| c.shared.iter().copied()).collect();
            ids.sort_unstable();
            ids.dedup();
            for id in ids {
                *users.entry(id).or_default() += 1.0;
            }
        }
        let f: f64 = (0..n)
            .map(|w| {
                self.classes[w]
                    .iter()
                    .map(|c| c.private as f64 + c.shared.iter().map(|&id| self.weight[id] as f64 / users[&id]).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        (f - 1e-9).ceil().max(0.0) as u64
    }
}

/// Per remaining witness, the cheapest total weight of its full-path instances.
///
/// Such instances bind every variable, so no two witnesses can share them.
pub fn lower_bound(p: &Problem, remaining: &[usize]) -> u64 {
    remaining
        .iter()
        .map(|&i| {
            (0..p.k())
                .map(|j| {
                    p.instances(i, j)
                        .iter()
                        .filter(|(inst, _)| inst.is_full(&p.query))
                        .map(|(_, c)| u64::from(*c))
                        .sum::<u64>()
                })
                .min()
                .unwrap_or(0)
        })
        .sum()
}

/// Best single plan followed by single-witness improvement moves.
fn incumbent(idx: &Index, k: usize) -> Vec<usize> {
    let n = idx.uses.len();
    let mut best = vec![0; n];
    let mut best_cost = idx.cost(&best);
    for j in 1..k {
        let plans = vec![j; n];
        let c = idx.cost(&plans);
        if c < best_cost {
            best_cost = c;
            best = plans;
        }
    }
    let mut improved = true;
    while improved {
        improved = false;
        for w in 0..n {
            for j in 0..k {
                let old = best[w];
                if j == old {
                    continue;
                }
                best[w] = j;
                let c = idx.cost(&best);
                if c < best_cost {
                    best_cost = c;
                    improved = true;
                } else {
                    best[w] = old;
                }
            }
        }
    }
    best
}

/// Minimal-length factorization with a node budget.
///
/// Among optimal assignments the lexicographically smallest plan-index
/// vector (witness order, plan order) is returned. When the budget runs
/// out the best assignment found so far is returned with `optimal == false`.
pub fn solve_exact(p: &Problem, budget: u64) -> Result<ExactResult> {
    solve_exact_until(p, budget, None)
}

/// [`solve_exact`] that also stops at `deadline`.
pub fn solve_exact_until(p: &Problem, budget: u64, deadline: Option<Instant>) -> Result<ExactResult> {
    let idx = Index::new(p);
    let n = p.n();
    let start = incumbent(&idx, p.k());
    let start_cost = idx.cost(&start);
    let mut s = Search::new(&idx);
    s.budget = budget;
    s.deadline = deadline;
    let root = s.root_bound().max(lower_bound(p, &(0..n).collect::<Vec<_>>()));
    let (plans, optimal, lower) = match s.run(start_cost + 1) {
        Some((opt, classes)) => {
            // Pin witnesses in order to the smallest plan that keeps the optimum.
            let mut cur = classes;
            for w in 0..n {
                if s.aborted {
                    break;
                }
                for ci in 0..cur[w] {
                    s.fixed[w] = Some(ci);
                    if let Some((c, next)) = s.run(opt + 1) {
                        if c == opt {
                            cur = next;
                            break;
                        }
                    }
                }
                s.fixed[w] = Some(cur[w]);
            }
            let plans: Vec<usize> = (0..n).map(|w| s.classes[w][cur[w]].plan).collect();
            (plans, true, opt)
        }
        None if s.aborted => (start, false, root.min(start_cost)),
        None => (start, true, start_cost),
    };
    let nodes = s.nodes;
    let assignment: Vec<_> = plans.iter().map(|&j| p.mveo[j].clone()).collect();
    let factorization = assemble(&p.query, &p.witnesses, &assignment)?;
    debug_assert!(!optimal || factorization.length as u64 == lower);
    Ok(ExactResult {
        lower_bound: lower,
        factorization,
        plans,
        optimal,
        nodes,
    })
}

/// Whether some factorization of the provenance of `q` over `db` repeats
/// at most `k` literals.
pub fn fact_decision(q: &Query, db: &Database, k: usize, budget: u64) -> Result<bool> {
    let ws = compute_witnesses(q, db)?;
    let distinct = ws.distinct_tuples(q) as u64;
    let p = Problem::new(q.clone(), ws)?;
    let r = solve_exact(&p, budget)?;
    let limit = distinct + k as u64;
    if r.optimal || r.factorization.length as u64 <= limit || r.lower_bound > limit {
        Ok(r.factorization.length as u64 <= limit)
    } else {
        Err(Error::BudgetExhausted(budget))
    }
}

/// Enumerates every assignment; the lexicographically first minimum wins.
pub fn solve_brute(p: &Problem) -> Result<ExactResult> {
    let n = p.n();
    let k = p.k();
    let space = (k as u64).checked_pow(n as u32).unwrap_or(u64::MAX);
    if space > BRUTE_LIMIT {
        return Err(Error::SearchTooLarge(space));
    }
    let idx = Index::new(p);
    let mut plans = vec![0; n];
    let mut best = (u64::MAX, plans.clone());
    for _ in 0..space {
        let c = idx.cost(&plans);
        if c < best.0 {
            best = (c, plans.clone());
        }
        for w in (0..n).rev() {
            plans[w] += 1;
            if plans[w] < k {
                break;
            }
            plans[w] = 0;
        }
    }
    let assignment: Vec<_> = best.1.iter().map(|&j| p.mveo[j].clone()).collect();
    let factorization = assemble(&p.query, &p.witnesses, &assignment)?;
    Ok(ExactResult {
        lower_bound: factorization.length as u64,
        factorization,
        plans: best.1,
        optimal: true,
        nodes: space,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::*;
    use crate::provenance::{compute_witnesses, verify_equivalence, Database};

    fn problem(name: &str, db: &Database) -> Problem {
        let q = named_query(name).unwrap();
        let ws = compute_witnesses(&q, db).unwrap();
        Problem::new(q, ws).unwrap()
    }

    #[test]
    fn star_examples() {
        let p = problem("star2", &star2_database(false));
        let r = solve_exact(&p, DEFAULT_BUDGET).unwrap();
        assert!(r.optimal);
        assert_eq!((r.factorization.length, r.factorization.repeats), (10, 0));
        let p = problem("star2", &star2_database(true));
        let r = solve_exact(&p, DEFAULT_BUDGET).unwrap();
        assert_eq!((r.factorization.length, r.factorization.repeats), (12, 1));
        assert_eq!(solve_brute(&p).unwrap().plans, r.plans);
    }

    #[test]
    fn leak_optimum() {
        let p = problem("triangle", &triangle_leak_database());
        let r = solve_exact(&p, DEFAULT_BUDGET).unwrap();
        assert_eq!(r.factorization.length, 10);
        assert_eq!(r.factorization.render(&p.query, false), "r_11 (s_10 t_01 ∨ s_11 t_11) ∨ t_00 (r_00 s_00 ∨ r_01 s_10)");
        assert!(verify_equivalence(&p.query, &r.factorization, &p.witnesses).unwrap());
        assert_eq!(solve_brute(&p).unwrap().plans, r.plans);
    }

    #[test]
    fn chain_shared() {
        let p = problem("chain3", &chain3_shared_database());
        let r = solve_exact(&p, DEFAULT_BUDGET).unwrap();
        assert_eq!(r.factorization.length, 4);
        assert_eq!(r.factorization.render(&p.query, false), "r_11 s_11 (t_11 ∨ t_12)");
    }

    #[test]
    fn single_witness_and_bounds() {
        let p = problem("triangle", &triangle_pair_database());
        assert_eq!(lower_bound(&p, &[0, 1]), 4);
        let p = problem("star3", &Database::parse_text("[R]\n1\n[S]\n1\n[T]\n1\n[W]\n1,1,1\n").unwrap());
        assert_eq!(lower_bound(&p, &[0]), 2);
        assert_eq!(solve_exact(&p, DEFAULT_BUDGET).unwrap().factorization.length, 4);
    }

    #[test]
    fn budget_exhaustion() {
        let p = problem("triangle", &triangle_leak_database());
        let r = solve_exact(&p, 1).unwrap();
        assert!(!r.optimal);
        assert!(r.lower_bound <= 10);
        assert!(r.factorization.length >= 10);
    }

    #[test]
    fn decision() {
        let q = named_query("star2").unwrap();
        assert!(fact_decision(&q, &star2_database(true), 1, DEFAULT_BUDGET).unwrap());
        assert!(!fact_decision(&q, &star2_database(true), 0, DEFAULT_BUDGET).unwrap());
        let one = Database::parse_text("[R]\n1\n[S]\n1,1\n[T]\n1\n").unwrap();
        assert!(fact_decision(&q, &one, 0, DEFAULT_BUDGET).unwrap());
    }

    #[test]
    fn brute_limit() {
        let q = named_query("triangle").unwrap();
        let db = crate::gen::gen_random(&crate::gen::GenSpec { query: q.clone(), d: 4, tuples: 14, seed: 3 });
        let p = Problem::new(q.clone(), compute_witnesses(&q, &db).unwrap()).unwrap();
        assert!(p.n() >= 13, "{}", p.n());
        assert!(matches!(solve_brute(&p), Err(Error::SearchTooLarge(_))));
    }
}
