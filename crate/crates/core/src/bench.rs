//! Sweeps over generated instances comparing methods, written as CSV.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures::named_query;
use crate::gen::{gen_random, GenSpec};
use crate::method::{Registry, SolveOptions};
use crate::problem::Problem;
use crate::provenance::{assemble, compute_witnesses, Factorization};

/// Column order of [`BenchRow`] as written by [`write_csv`].
pub const CSV_HEADER: &str =
    "query,d,tuples,seed,witnesses,method,length,optimal,penalty_pct,build_ms,solve_ms,nodes";

/// Best assignment that gives every witness the same plan; ties go to the
/// earlier plan.
pub fn single_plan_baseline(p: &Problem) -> Result<Factorization> {
    let mut best: Option<Factorization> = None;
    for v in &p.mveo {
        let assignment = vec![v.clone(); p.n()];
        let f = assemble(&p.query, &p.witnesses, &assignment)?;
        if best.as_ref().is_none_or(|b| f.length < b.length) {
            best = Some(f);
        }
    }
    match best {
        Some(f) => Ok(f),
        None => assemble(&p.query, &p.witnesses, &[]),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    /// Named queries.
    pub queries: Vec<String>,
    pub d: Vec<usize>,
    /// Tuples per relation, one sweep point each.
    pub tuples: Vec<usize>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_budget")]
    pub budget: u64,
    /// Wall-clock cap per run of a method.
    #[serde(default = "default_time_cap_ms")]
    pub time_cap_ms: u64,
    /// Also compute per-bucket medians.
    #[serde(default)]
    pub median: bool,
}

fn default_repetitions() -> usize {
    1
}

fn default_methods() -> Vec<String> {
    ["exact", "flow", "single"].map(String::from).to_vec()
}

fn default_budget() -> u64 {
    crate::exact::DEFAULT_BUDGET
}

fn default_time_cap_ms() -> u64 {
    60_000
}

impl BenchConfig {
    pub fn parse(text: &str) -> Result<BenchConfig> {
        let c: BenchConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for q in &c.queries {
            if named_query(q).is_none() {
                return Err(Error::Config(format!("unknown query `{q}`")));
            }
        }
        if c.d.contains(&0) {
            return Err(Error::Config("domain sizes must be at least 1".to_string()));
        }
        let registry = Registry::default();
        for m in &c.methods {
            registry.get(m)?;
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub query: String,
    pub d: usize,
    pub tuples: usize,
    pub seed: u64,
    pub witnesses: usize,
    pub method: String,
    pub length: usize,
    pub optimal: bool,
    /// `100 (length - exact) / exact`, when an optimal exact length is known.
    pub penalty_pct: Option<f64>,
    /// Witness computation and plan enumeration.
    pub build_ms: f64,
    pub solve_ms: f64,
    pub nodes: u64,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// One row per (instance, method), instances in config order.
pub fn run_sweep(c: &BenchConfig) -> Result<Vec<BenchRow>> {
    let registry = Registry::default();
    let mut rows = Vec::new();
    for name in &c.queries {
        let q = named_query(name).ok_or_else(|| Error::Config(format!("unknown query `{name}`")))?;
        for &d in &c.d {
            for &tuples in &c.tuples {
                for rep in 0..c.repetitions {
                    let seed = c.seed + rep as u64;
                    let start = Instant::now();
                    let db = gen_random(&GenSpec { query: q.clone(), d, tuples, seed });
                    let ws = compute_witnesses(&q, &db)?;
                    let p = Problem::new(q.clone(), ws)?;
                    let build_ms = ms(start.elapsed());
                    let mut batch = Vec::new();
                    for m in &c.methods {
                        let opts = SolveOptions {
                            budget: c.budget,
                            deadline: Some(Instant::now() + Duration::from_millis(c.time_cap_ms)),
                            ..SolveOptions::default()
                        };
                        let t = Instant::now();
                        let out = registry.solve(m, &p, &opts)?;
                        batch.push(BenchRow {
                            query: name.clone(),
                            d,
                            tuples,
                            seed,
                            witnesses: p.n(),
                            method: m.clone(),
                            length: out.factorization.length,
                            optimal: out.optimal,
                            penalty_pct: None,
                            build_ms,
                            solve_ms: ms(t.elapsed()),
                            nodes: out.nodes,
                        });
                    }
                    let exact = batch.iter().find(|r| r.method == "exact" && r.optimal).map(|r| r.length);
                    if let Some(e) = exact {
                        for r in &mut batch {
                            r.penalty_pct = Some(penalty(r.length, e));
                        }
                    }
                    rows.extend(batch);
                }
            }
        }
    }
    Ok(rows)
}

pub fn penalty(length: usize, exact: usize) -> f64 {
    if exact == 0 {
        0.0
    } else {
        100.0 * (length as f64 - exact as f64) / exact as f64
    }
}

pub fn write_csv<W: Write>(rows: &[BenchRow], sink: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
    w.write_record(CSV_HEADER.split(','))
        .map_err(|e| Error::Io(e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    })
}

/// Witness-count bucket: the largest power of two not above `n`.
pub fn bucket(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        1 << n.ilog2()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub query: String,
    pub d: usize,
    pub method: String,
    pub bucket: usize,
    pub runs: usize,
    pub median_penalty_pct: Option<f64>,
    pub median_solve_ms: f64,
    pub median_nodes: f64,
}

/// Medians per (query, d, method, witness bucket).
pub fn summarize(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize, String, usize), Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.query.clone(), r.d, r.method.clone(), bucket(r.witnesses)))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((query, d, method, bucket), rs)| {
            let mut pen: Vec<f64> = rs.iter().filter_map(|r| r.penalty_pct).collect();
            let mut solve: Vec<f64> = rs.iter().map(|r| r.solve_ms).collect();
            let mut nodes: Vec<f64> = rs.iter().map(|r| r.nodes as f64).collect();
            SummaryRow {
                query,
                d,
                method,
                bucket,
                runs: rs.len(),
                median_penalty_pct: median(&mut pen),
                median_solve_ms: median(&mut solve).unwrap_or(0.0),
                median_nodes: median(&mut nodes).unwrap_or(0.0),
            }
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

/// Median penalty of `method` over rows with a known exact length.
pub fn median_penalty(rows: &[BenchRow], method: &str) -> Option<f64> {
    let mut v: Vec<f64> = rows.iter().filter(|r| r.method == method).filter_map(|r| r.penalty_pct).collect();
    median(&mut v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::*;

    #[test]
    fn baseline_star() {
        let q = named_query("star2").unwrap();
        let p = Problem::new(q.clone(), compute_witnesses(&q, &star2_database(true)).unwrap()).unwrap();
        assert_eq!(single_plan_baseline(&p).unwrap().length, 13);
        let p = Problem::new(q.clone(), compute_witnesses(&q, &star2_database(false)).unwrap()).unwrap();
        assert!(single_plan_baseline(&p).unwrap().length > 10);
    }

    #[test]
    fn zero_repetitions_gives_header_only() {
        let c = BenchConfig::parse("queries = [\"triangle\"]\nd = [10]\ntuples = [5]\nrepetitions = 0\n").unwrap();
        let rows = run_sweep(&c).unwrap();
        assert!(rows.is_empty());
        let mut out = Vec::new();
        write_csv(&rows, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn sweep_rows_are_ordered() {
        let c = BenchConfig::parse(
            "queries = [\"triangle\", \"triangle-unary\"]\nd = [10]\ntuples = [5, 10, 20]\nseed = 4\n",
        )
        .unwrap();
        let rows = run_sweep(&c).unwrap();
        assert_eq!(rows.len(), 2 * 3 * 3);
        for r in &rows {
            let pen = r.penalty_pct.expect("exact completes");
            assert!(pen >= 0.0);
        }
        for chunk in rows.chunks(3) {
            assert!(chunk[0].length <= chunk[1].length && chunk[1].length <= chunk[2].length);
        }
        let mut out = Vec::new();
        write_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), rows.len() + 1);
        assert!(!summarize(&rows).is_empty());
    }

    #[test]
    fn config_errors() {
        assert!(BenchConfig::parse("queries = [\"nope\"]\nd = [1]\ntuples = [1]\n").is_err());
        assert!(BenchConfig::parse("queries = [\"triangle\"]\nd = [0]\ntuples = [1]\n").is_err());
        assert!(BenchConfig::parse("queries = [\"triangle\"]\nd = [2]\ntuples = [1]\nmethods = [\"magic\"]\n").is_err());
        assert!(BenchConfig::parse("queries = [\"triangle\"]\nd = [2]\ntuples = [1]\ncolour = 3\n").is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
        assert_eq!((bucket(0), bucket(1), bucket(7), bucket(8)), (0, 1, 4, 8));
    }
}
