use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use provfact_core::bench::{run_sweep, summarize, write_csv, write_summary_csv, BenchConfig};
use provfact_core::fixtures::named_query;
use provfact_core::method::routed_method;
use provfact_core::{
    build_flow_graph, build_ilp, classify, compute_witnesses, enumerate_mveo, enumerate_veos, gen_3star_gadget,
    gen_random, gen_triad_gadget, parse_query, verify_equivalence, Database, GenSpec, Graph, OrderSpec, Problem,
    Query, Registry, SolveOptions, DEFAULT_BUDGET, DEFAULT_VAR_LIMIT,
};

#[derive(Parser)]
#[command(name = "provfact", version, about = "Minimal factorizations of query provenance")]
struct Cli {
    /// Print `v` instead of `∨`.
    #[arg(long, global = true)]
    ascii: bool,
    /// Extra tables, timings and debug logging.
    #[arg(long, short, global = true)]
    verbose: bool,
    /// Reject flow orderings that are not running-prefix.
    #[arg(long, global = true)]
    strict_rp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct QueryArg {
    /// Query file, or the name of a built-in query.
    #[arg(short, long)]
    query: String,
}

#[derive(Args)]
struct InstanceArgs {
    #[command(flatten)]
    query: QueryArg,
    /// Database text file or directory of CSV files.
    #[arg(short, long)]
    database: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Print the minimal plans of a query.
    Mveo {
        #[command(flatten)]
        query: QueryArg,
        /// Print every legal plan instead.
        #[arg(long)]
        all_veos: bool,
    },
    /// Print the class tags of a query and the method `auto` routes to.
    Classify {
        #[command(flatten)]
        query: QueryArg,
    },
    /// Print the witnesses and the provenance DNF.
    Witnesses {
        #[command(flatten)]
        instance: InstanceArgs,
    },
    /// Compute a factorization.
    Factorize {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value = "auto")]
        method: String,
        /// `nested-rp` or `flat:<v1,v2,...>`.
        #[arg(long, default_value = "nested-rp")]
        order: String,
        /// Node budget for the exact search.
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        /// Write the flow graph and its cut in DOT format.
        #[arg(long)]
        dump_graph: Option<PathBuf>,
    },
    /// Export the integer program in LP format.
    Ilp {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(short, long)]
        output: PathBuf,
        /// Fold constant and private terms.
        #[arg(long)]
        reduce: bool,
    },
    /// Generate a database.
    Gen {
        #[arg(long, conflicts_with = "gadget", required_unless_present = "gadget")]
        random: bool,
        #[arg(long, value_enum)]
        gadget: Option<Gadget>,
        /// Query for `--random` and `--gadget triad`.
        #[arg(short, long)]
        query: Option<String>,
        /// Domain size.
        #[arg(short, long, default_value_t = 10)]
        d: usize,
        /// Tuples per relation.
        #[arg(long, default_value_t = 50)]
        tuples: usize,
        #[arg(long, required_if_eq("random", "true"))]
        seed: Option<u64>,
        /// Edge list with one `u v` pair per line.
        #[arg(long, required_if_eq("gadget", "3star"), required_if_eq("gadget", "triad"))]
        graph: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a benchmark sweep.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write per-bucket medians here.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Gadget {
    #[value(name = "3star")]
    Star3,
    Triad,
}

fn load_query(arg: &str) -> Result<Query> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
        return Ok(parse_query(&text)?);
    }
    named_query(arg).with_context(|| format!("no query file or built-in query `{arg}`"))
}

fn load_problem(a: &InstanceArgs) -> Result<Problem> {
    let q = load_query(&a.query.query)?;
    let db = Database::load(&a.database).with_context(|| format!("reading {}", a.database.display()))?;
    let ws = compute_witnesses(&q, &db)?;
    Ok(Problem::new(q, ws)?)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Exit status of a successful command.
enum Status {
    Done,
    NotOptimal,
}

fn run(cli: &Cli) -> Result<Status> {
    let mut out = std::io::stdout().lock();
    match &cli.command {
        Command::Mveo { query, all_veos } => {
            let q = load_query(&query.query)?;
            let plans = if *all_veos {
                enumerate_veos(&q, DEFAULT_VAR_LIMIT)?
            } else {
                enumerate_mveo(&q, DEFAULT_VAR_LIMIT)?
            };
            for (j, v) in plans.iter().enumerate() {
                writeln!(out, "{v}")?;
                if cli.verbose {
                    for tp in v.table_prefixes(&q) {
                        let rels: Vec<&str> = tp.atoms.iter().map(|&a| q.atoms[a].relation.as_str()).collect();
                        writeln!(out, "  v{} {:<12} {:<20} weight {}", j + 1, rels.join(","), tp.text, tp.weight)?;
                    }
                }
            }
        }
        Command::Classify { query } => {
            let q = load_query(&query.query)?;
            let class = classify(&q);
            writeln!(out, "tags: {class}")?;
            writeln!(out, "method: {}", routed_method(&class))?;
        }
        Command::Witnesses { instance } => {
            let p = load_problem(instance)?;
            writeln!(out, "witnesses: {}", p.n())?;
            writeln!(out, "distinct tuples: {}", p.witnesses.distinct_tuples(&p.query))?;
            writeln!(out, "{}", p.witnesses.dnf(&p.query, cli.ascii))?;
        }
        Command::Factorize {
            instance,
            method,
            order,
            budget,
            dump_graph,
        } => {
            let p = load_problem(instance)?;
            let opts = SolveOptions {
                budget: *budget,
                order: OrderSpec::parse(order)?,
                strict_rp: cli.strict_rp,
                deadline: None,
            };
            if let Some(path) = dump_graph {
                let ord = opts.order.build(&p)?;
                let g = build_flow_graph(&p, &ord);
                let cut = g.min_cut();
                write_file(path, &g.to_dot(Some(&cut)))?;
            }
            let start = Instant::now();
            let r = Registry::default().solve(method, &p, &opts)?;
            let elapsed = start.elapsed();
            let f = &r.factorization;
            if !verify_equivalence(&p.query, f, &p.witnesses)? {
                bail!("internal error: factorization is not equivalent to the provenance");
            }
            writeln!(out, "query: {}", p.query)?;
            writeln!(out, "witnesses: {}", p.n())?;
            writeln!(out, "method: {}", r.method)?;
            writeln!(out, "length: {}", f.length)?;
            writeln!(out, "repeats: {}", f.repeats)?;
            writeln!(out, "optimal: {}", r.optimal)?;
            writeln!(out, "lower bound: {}", r.lower_bound)?;
            if let Some(note) = &r.note {
                writeln!(out, "note: {note}")?;
            }
            if cli.verbose {
                writeln!(out, "time: {:.3} ms", elapsed.as_secs_f64() * 1000.0)?;
                writeln!(out, "search nodes: {}", r.nodes)?;
                for (w, v) in p.witnesses.iter().zip(&f.assignment) {
                    writeln!(out, "  {} : {v}", w.term(&p.query))?;
                }
            }
            writeln!(out, "expression: {}", f.render(&p.query, cli.ascii))?;
            if !r.optimal {
                return Ok(Status::NotOptimal);
            }
        }
        Command::Ilp {
            instance,
            output,
            reduce,
        } => {
            let p = load_problem(instance)?;
            let mut m = build_ilp(&p)?;
            if *reduce {
                m = m.reduce(&p);
            }
            let mut f = fs::File::create(output).with_context(|| format!("writing {}", output.display()))?;
            m.export_lp(&mut f)?;
            let s = m.stats();
            writeln!(
                out,
                "variables: {} ({} in objective, {} prefix)",
                s.vars, s.objective_vars, s.prefix_vars
            )?;
            writeln!(
                out,
                "constraints: {} ({} plan, {} prefix)",
                s.constraints, s.plan_constraints, s.prefix_constraints
            )?;
            writeln!(out, "objective offset: {}", m.offset)?;
        }
        Command::Gen {
            random,
            gadget,
            query,
            d,
            tuples,
            seed,
            graph,
            output,
        } => {
            let db = if *random {
                let q = load_query(query.as_deref().context("--random needs --query")?)?;
                let seed = seed.context("--random needs --seed")?;
                gen_random(&GenSpec {
                    query: q,
                    d: *d,
                    tuples: *tuples,
                    seed,
                })
            } else {
                let path = graph.as_ref().context("--gadget needs --graph")?;
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let g = Graph::parse_edge_list(&text)?;
                match gadget.context("--gadget or --random is required")? {
                    Gadget::Star3 => gen_3star_gadget(&g),
                    Gadget::Triad => {
                        let q = load_query(query.as_deref().context("--gadget triad needs --query")?)?;
                        gen_triad_gadget(&q, &g)?
                    }
                }
            };
            write_file(output, &db.to_text())?;
            writeln!(out, "tuples: {}", db.num_tuples())?;
        }
        Command::Bench { config, output, summary } => {
            let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
            let c = BenchConfig::parse(&text)?;
            let rows = run_sweep(&c)?;
            let f = fs::File::create(output).with_context(|| format!("writing {}", output.display()))?;
            write_csv(&rows, f)?;
            if c.median || summary.is_some() {
                let s = summarize(&rows);
                match summary {
                    Some(path) => {
                        let f = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
                        write_summary_csv(&s, f)?;
                    }
                    None => write_summary_csv(&s, &mut out)?,
                }
            }
            writeln!(out, "rows: {}", rows.len())?;
        }
    }
    Ok(Status::Done)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotOptimal) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
