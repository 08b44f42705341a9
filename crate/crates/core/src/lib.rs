//! Minimal-length factorization of Boolean provenance for self-join-free
//! conjunctive queries.

pub mod bench;
pub mod error;
pub mod exact;
pub mod fixtures;
pub mod ilp;
pub mod flow;
pub mod gen;
pub mod matching;
pub mod maxflow;
pub mod method;
pub mod ordering;
pub mod problem;
pub mod provenance;
pub mod query;
pub mod special;
pub mod veo;

pub use error::{Error, Result};
pub use query::{parse_query, parse_query_with, Atom, ParseOptions, Query, VarSet};
pub use veo::{enumerate_mveo, enumerate_veos, PrefixInstance, TablePrefix, Veo, DEFAULT_VAR_LIMIT};
pub use provenance::{
    assemble, compute_witnesses, detect_p4, verify_equivalence, Database, Expr, Factorization, Tuple, Witness,
    WitnessSet,
};
pub use ordering::{Item, Ordering};
pub use problem::Problem;
pub use flow::{build_flow_graph, solve_flow, FlowGraph, FlowResult};
pub use exact::{fact_decision, solve_brute, solve_exact, solve_exact_until, ExactResult, DEFAULT_BUDGET};
pub use ilp::{build_ilp, solve_model, IlpModel, ModelStats};
pub use special::{classify, solve_q2star, solve_special, solve_triangle_unary, solve_two_chain_we, QueryClass, Shape, Tag};
pub use gen::{gen_3star_gadget, gen_random, gen_triad_gadget, GenSpec, Graph};
pub use method::{Method, OrderSpec, Outcome, Registry, SolveOptions};
pub use bench::{run_sweep, single_plan_baseline, BenchConfig, BenchRow};
