//! Solver strategies behind one trait, selected by name at runtime.

use std::time::Instant;

use crate::bench::single_plan_baseline;
use crate::error::{Error, Result};
use crate::exact::{solve_brute, solve_exact_until, DEFAULT_BUDGET};
use crate::flow::solve_flow;
use crate::ordering::Ordering;
use crate::problem::Problem;
use crate::provenance::Factorization;
use crate::special::{classify, solve_special, Tag};

/// How the flow method orders plans.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum OrderSpec {
    #[default]
    Nested,
    /// Comma-separated `v<i>` positions or plan serializations.
    Flat(String),
}

impl OrderSpec {
    /// Parses `nested-rp` or `flat:<perm>`.
    pub fn parse(text: &str) -> Result<OrderSpec> {
        match text {
            "nested-rp" | "nested" => Ok(OrderSpec::Nested),
            _ => text
                .strip_prefix("flat:")
                .map(|perm| OrderSpec::Flat(perm.to_string()))
                .ok_or_else(|| Error::InvalidPermutation(format!("unknown order `{text}`"))),
        }
    }

    pub fn build(&self, p: &Problem) -> Result<Ordering> {
        match self {
            OrderSpec::Nested => Ok(Ordering::nested(&p.query, &p.mveo)),
            OrderSpec::Flat(perm) => Ordering::parse_flat(&p.query, &p.mveo, perm),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Search node budget for the exact solver.
    pub budget: u64,
    pub order: OrderSpec,
    pub strict_rp: bool,
    pub deadline: Option<Instant>,
}

impl Default for SolveOptions {
    fn default() -> SolveOptions {
        SolveOptions {
            budget: DEFAULT_BUDGET,
            order: OrderSpec::Nested,
            strict_rp: false,
            deadline: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub factorization: Factorization,
    /// Method that produced the factorization; differs from the requested
    /// one only for `auto`.
    pub method: String,
    /// Whether the length is known to be minimal.
    pub optimal: bool,
    /// Proven lower bound on the minimal length.
    pub lower_bound: u64,
    /// Exact-search nodes expanded, if the exact solver ran.
    pub nodes: u64,
    pub note: Option<String>,
}

impl Outcome {
    fn new(method: &str, f: Factorization, optimal: bool) -> Outcome {
        let lower_bound = if optimal { f.length } else { f.distinct } as u64;
        Outcome {
            factorization: f,
            method: method.to_string(),
            optimal,
            lower_bound,
            nodes: 0,
            note: None,
        }
    }
}

pub trait Method: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn solve(&self, p: &Problem, opts: &SolveOptions) -> Result<Outcome>;
}

struct Exact;
struct Brute;
struct Flow;
struct Single;
struct Special;
struct Auto;

impl Method for Exact {
    fn name(&self) -> &'static str {
        "exact"
    }
    fn description(&self) -> &'static str {
        "branch and bound over shared prefix instances"
    }
    fn solve(&self, p: &Problem, opts: &SolveOptions) -> Result<Outcome> {
        let r = solve_exact_until(p, opts.budget, opts.deadline)?;
        let mut out = Outcome::new(self.name(), r.factorization, r.optimal);
        out.lower_bound = r.lower_bound;
        out.nodes = r.nodes;
        Ok(out)
    }
}

impl Method for Brute {
    fn name(&self) -> &'static str {
        "brute"
    }
    fn description(&self) -> &'static str {
        "enumerates every plan assignment"
    }
    fn solve(&self, p: &Problem, _: &SolveOptions) -> Result<Outcome> {
        let r = solve_brute(p)?;
        let mut out = Outcome::new(self.name(), r.factorization, true);
        out.nodes = r.nodes;
        Ok(out)
    }
}

impl Method for Flow {
    fn name(&self) -> &'static str {
        "flow"
    }
    fn description(&self) -> &'static str {
        "minimum cut of the factorization flow graph"
    }
    fn solve(&self, p: &Problem, opts: &SolveOptions) -> Result<Outcome> {
        let ord = opts.order.build(p)?;
        let r = solve_flow(p, &ord, opts.strict_rp)?;
        let optimal = r.factorization.repeats == 0 || (p.k() <= 2 && r.repaired == 0);
        let mut out = Outcome::new(self.name(), r.factorization, optimal);
        if !r.rp {
            out.note = Some("ordering is not running-prefix".to_string());
        }
        Ok(out)
    }
}

impl Method for Single {
    fn name(&self) -> &'static str {
        "single"
    }
    fn description(&self) -> &'static str {
        "best plan applied to every witness"
    }
    fn solve(&self, p: &Problem, _: &SolveOptions) -> Result<Outcome> {
        let f = single_plan_baseline(p)?;
        let optimal = f.repeats == 0 || p.k() == 1;
        Ok(Outcome::new(self.name(), f, optimal))
    }
}

impl Method for Special {
    fn name(&self) -> &'static str {
        "special"
    }
    fn description(&self) -> &'static str {
        "polynomial algorithm for the recognized query shape"
    }
    fn solve(&self, p: &Problem, _: &SolveOptions) -> Result<Outcome> {
        let r = solve_special(p)?;
        let mut out = Outcome::new(self.name(), r.factorization, true);
        out.note = Some(format!("shape {}, certificate {}", r.shape.name(), r.certificate));
        Ok(out)
    }
}

impl Method for Auto {
    fn name(&self) -> &'static str {
        "auto"
    }
    fn description(&self) -> &'static str {
        "routes by query class"
    }
    fn solve(&self, p: &Problem, opts: &SolveOptions) -> Result<Outcome> {
        let class = classify(&p.query);
        if class.has(Tag::Hierarchical) {
            return Single.solve(p, opts);
        }
        if class.shape().is_some() {
            return Special.solve(p, opts);
        }
        let flow = Flow.solve(p, &SolveOptions { order: OrderSpec::Nested, ..opts.clone() });
        if class.has(Tag::TwoMveo) {
            return flow;
        }
        if let Ok(f) = &flow {
            if f.optimal {
                return flow;
            }
        }
        let exact = Exact.solve(p, opts)?;
        if exact.optimal {
            return Ok(exact);
        }
        let mut best = match flow {
            Ok(f) if f.factorization.length < exact.factorization.length => f,
            _ => exact.clone(),
        };
        best.optimal = false;
        best.lower_bound = exact.lower_bound;
        best.nodes = exact.nodes;
        best.note = Some(format!(
            "exact search stopped after {} nodes; gap {}",
            exact.nodes,
            best.factorization.length as u64 - exact.lower_bound
        ));
        Ok(best)
    }
}

pub struct Registry {
    methods: Vec<Box<dyn Method>>,
}

impl Default for Registry {
    fn default() -> Registry {
        let mut r = Registry { methods: Vec::new() };
        r.register(Box::new(Exact));
        r.register(Box::new(Brute));
        r.register(Box::new(Flow));
        r.register(Box::new(Single));
        r.register(Box::new(Special));
        r.register(Box::new(Auto));
        r
    }
}

impl Registry {
    /// Adds a method, replacing any with the same name.
    pub fn register(&mut self, m: Box<dyn Method>) {
        self.methods.retain(|old| old.name() != m.name());
        self.methods.push(m);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Method> {
        self.methods
            .iter()
            .find(|m| m.name() == name)
            .map(|m| m.as_ref())
            .ok_or_else(|| Error::UnknownMethod(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.iter().map(|m| m.name()).collect()
    }

    pub fn solve(&self, name: &str, p: &Problem, opts: &SolveOptions) -> Result<Outcome> {
        self.get(name)?.solve(p, opts)
    }
}

/// Method `auto` would pick for the query, ignoring fallbacks.
pub fn routed_method(class: &crate::special::QueryClass) -> &'static str {
    if class.has(Tag::Hierarchical) {
        "single"
    } else if class.shape().is_some() {
        "special"
    } else if class.has(Tag::TwoMveo) {
        "flow"
    } else if class.has(Tag::Triad) {
        "exact"
    } else {
        "flow"
    }
}
