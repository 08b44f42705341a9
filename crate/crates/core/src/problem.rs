//! A query, its minimal plans and a witness set, with per-plan prefix data.

use crate::error::Result;
use crate::provenance::{compute_witnesses, Database, WitnessSet};
use crate::query::{Query, VarSet};
use crate::veo::{enumerate_mveo, PrefixInstance, TablePrefix, Veo, DEFAULT_VAR_LIMIT};

#[derive(Debug, Clone)]
pub struct Problem {
    pub query: Query,
    pub mveo: Vec<Veo>,
    pub witnesses: WitnessSet,
    prefixes: Vec<Vec<TablePrefix>>,
}

impl Problem {
    pub fn new(query: Query, witnesses: WitnessSet) -> Result<Problem> {
        Problem::with_limit(query, witnesses, DEFAULT_VAR_LIMIT)
    }

    pub fn with_limit(query: Query, witnesses: WitnessSet, limit: usize) -> Result<Problem> {
        let mveo = enumerate_mveo(&query, limit)?;
        Ok(Problem::with_plans(query, mveo, witnesses))
    }

    pub fn with_plans(query: Query, mveo: Vec<Veo>, witnesses: WitnessSet) -> Problem {
        let prefixes = mveo.iter().map(|v| v.table_prefixes(&query)).collect();
        Problem {
            query,
            mveo,
            witnesses,
            prefixes,
        }
    }

    pub fn from_database(query: Query, db: &Database) -> Result<Problem> {
        let ws = compute_witnesses(&query, db)?;
        Problem::new(query, ws)
    }

    pub fn n(&self) -> usize {
        self.witnesses.len()
    }

    pub fn k(&self) -> usize {
        self.mveo.len()
    }

    /// Table prefixes of plan `j`.
    pub fn prefixes(&self, j: usize) -> &[TablePrefix] {
        &self.prefixes[j]
    }

    /// Instances of the table prefixes of plan `j` under witness `i`, with weights.
    pub fn instances(&self, i: usize, j: usize) -> Vec<(PrefixInstance, u32)> {
        let w = &self.witnesses.witnesses[i];
        self.prefixes[j]
            .iter()
            .map(|tp| (w.instance(&self.query, &tp.path), tp.weight))
            .collect()
    }

    /// Whether a path binds every query variable.
    pub fn is_full_path(&self, path: &[VarSet]) -> bool {
        path.iter().fold(0, |m, &n| m | n) == self.query.all_vars()
    }
}
