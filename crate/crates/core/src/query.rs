//! Self-join-free Boolean conjunctive queries and their structural tests.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};

/// Bitmask over query variable indices.
pub type VarSet = u32;

/// Hard ceiling imposed by the [`VarSet`] representation.
pub const MAX_VARS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub relation: String,
    pub vars: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub name: String,
    pub atoms: Vec<Atom>,
    /// Variables in order of first appearance.
    pub variables: Vec<String>,
    atom_vars: Vec<Vec<usize>>,
    atom_masks: Vec<VarSet>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    pub allow_disconnected: bool,
    pub allow_repeated_vars: bool,
}

impl Query {
    /// Builds a query from atoms, checking self-join-freeness and arity.
    pub fn new(name: impl Into<String>, atoms: Vec<Atom>) -> Result<Query> {
        let mut seen = BTreeSet::new();
        let mut variables: Vec<String> = Vec::new();
        for atom in &atoms {
            if !seen.insert(atom.relation.clone()) {
                return Err(Error::SelfJoin(atom.relation.clone()));
            }
            if atom.vars.is_empty() {
                return Err(Error::Syntax(format!("atom `{}` has no variables", atom.relation)));
            }
            for v in &atom.vars {
                if !variables.contains(v) {
                    variables.push(v.clone());
                }
            }
        }
        if atoms.is_empty() {
            return Err(Error::Syntax("query has no atoms".into()));
        }
        if variables.len() > MAX_VARS {
            return Err(Error::TooManyVariables {
                found: variables.len(),
                limit: MAX_VARS,
            });
        }
        let atom_vars: Vec<Vec<usize>> = atoms
            .iter()
            .map(|a| {
                a.vars
                    .iter()
                    .map(|v| variables.iter().position(|x| x == v).unwrap())
                    .collect()
            })
            .collect();
        let atom_masks = atom_vars
            .iter()
            .map(|vs| vs.iter().fold(0, |m, &i| m | (1 << i)))
            .collect();
        Ok(Query {
            name: name.into(),
            atoms,
            variables,
            atom_vars,
            atom_masks,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn all_vars(&self) -> VarSet {
        if self.variables.len() == 32 {
            u32::MAX
        } else {
            (1u32 << self.variables.len()) - 1
        }
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    /// Variable indices of atom `i`, in atom order (may repeat).
    pub fn atom_var_ids(&self, i: usize) -> &[usize] {
        &self.atom_vars[i]
    }

    pub fn atom_mask(&self, i: usize) -> VarSet {
        self.atom_masks[i]
    }

    pub fn atom_index(&self, relation: &str) -> Option<usize> {
        self.atoms.iter().position(|a| a.relation == relation)
    }

    /// Variables of `mask` in display order: an atom's own order if the set
    /// equals that atom's variable set, otherwise first-appearance order.
    pub fn ordered_vars(&self, mask: VarSet) -> Vec<usize> {
        for (i, &m) in self.atom_masks.iter().enumerate() {
            if m == mask {
                let mut out = Vec::new();
                for &v in &self.atom_vars[i] {
                    if !out.contains(&v) {
                        out.push(v);
                    }
                }
                return out;
            }
        }
        (0..self.variables.len()).filter(|&v| mask & (1 << v) != 0).collect()
    }

    /// Renders a variable set as a VEO node label: `x` or `(yz)`.
    pub fn node_label(&self, mask: VarSet) -> String {
        let vars = self.ordered_vars(mask);
        if vars.len() == 1 {
            return self.variables[vars[0]].clone();
        }
        let multi = vars.iter().any(|&v| self.variables[v].chars().count() > 1);
        let names: Vec<&str> = vars.iter().map(|&v| self.variables[v].as_str()).collect();
        if multi {
            format!("({})", names.join(" "))
        } else {
            format!("({})", names.concat())
        }
    }

    fn connected_parts(&self, within: VarSet) -> Vec<VarSet> {
        let mut parts: Vec<VarSet> = Vec::new();
        let mut remaining = within;
        while remaining != 0 {
            let start = remaining.trailing_zeros();
            let mut comp: VarSet = 1 << start;
            loop {
                let mut grown = comp;
                for &m in &self.atom_masks {
                    let r = m & within;
                    if r & comp != 0 {
                        grown |= r;
                    }
                }
                if grown == comp {
                    break;
                }
                comp = grown;
            }
            parts.push(comp);
            remaining &= !comp;
        }
        parts
    }

    /// Connected components of the variables in `within`, where two variables
    /// are linked when some atom contains both.
    pub fn components_of(&self, within: VarSet) -> Vec<VarSet> {
        self.connected_parts(within)
    }

    pub fn is_connected(&self) -> bool {
        self.connected_parts(self.all_vars()).len() <= 1
    }

    /// Splits a disconnected query into one query per connected component.
    pub fn components(&self) -> Vec<Query> {
        let parts = self.connected_parts(self.all_vars());
        if parts.len() <= 1 {
            return vec![self.clone()];
        }
        parts
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let atoms = self
                    .atoms
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| self.atom_masks[*i] & p != 0)
                    .map(|(_, a)| a.clone())
                    .collect();
                Query::new(format!("{}_{}", self.name, k + 1), atoms).expect("component of a valid query")
            })
            .collect()
    }

    /// Atoms containing variable `x`.
    pub fn atoms_of(&self, x: &str) -> Result<Vec<&Atom>> {
        let i = self
            .var_index(x)
            .ok_or_else(|| Error::UnknownVariable(x.to_string()))?;
        Ok(self
            .atoms
            .iter()
            .enumerate()
            .filter(|(a, _)| self.atom_masks[*a] & (1 << i) != 0)
            .map(|(_, a)| a)
            .collect())
    }

    fn at_mask(&self, v: usize) -> u64 {
        self.atom_masks
            .iter()
            .enumerate()
            .filter(|(_, &m)| m & (1 << v) != 0)
            .fold(0u64, |acc, (i, _)| acc | (1 << i))
    }

    pub fn is_hierarchical(&self) -> bool {
        let n = self.num_vars();
        let at: Vec<u64> = (0..n).map(|v| self.at_mask(v)).collect();
        for a in 0..n {
            for b in a + 1..n {
                let (x, y) = (at[a], at[b]);
                let ok = x & y == x || x & y == y || x & y == 0;
                if !ok {
                    return false;
                }
            }
        }
        true
    }

    /// Indices of atoms with no other atom over a strict subset of their variables.
    pub fn independent_atoms(&self) -> Vec<usize> {
        (0..self.num_atoms())
            .filter(|&i| {
                let mi = self.atom_masks[i];
                !(0..self.num_atoms()).any(|j| {
                    let mj = self.atom_masks[j];
                    j != i && mj & mi == mj && mj != mi
                })
            })
            .collect()
    }

    /// Whether some pair of distinct atoms shares an identical variable set.
    pub fn has_equal_varsets(&self) -> bool {
        let n = self.num_atoms();
        (0..n).any(|i| (i + 1..n).any(|j| self.atom_masks[i] == self.atom_masks[j]))
    }

    fn linked_avoiding(&self, a: usize, b: usize, avoid: VarSet) -> bool {
        let m = self.num_atoms();
        let mut seen = vec![false; m];
        let mut queue = VecDeque::from([a]);
        seen[a] = true;
        while let Some(i) = queue.pop_front() {
            if i == b {
                return true;
            }
            let vi = self.atom_masks[i] & !avoid;
            for j in 0..m {
                if !seen[j] && self.atom_masks[j] & vi != 0 {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        false
    }

    /// First triad in atom-index order, if any.
    pub fn has_triad(&self) -> Option<[usize; 3]> {
        let ind = self.independent_atoms();
        for (x, &a) in ind.iter().enumerate() {
            for (y, &b) in ind.iter().enumerate().skip(x + 1) {
                for &c in ind.iter().skip(y + 1) {
                    let (ma, mb, mc) = (self.atom_masks[a], self.atom_masks[b], self.atom_masks[c]);
                    if self.linked_avoiding(a, b, mc)
                        && self.linked_avoiding(b, c, ma)
                        && self.linked_avoiding(a, c, mb)
                    {
                        return Some([a, b, c]);
                    }
                }
            }
        }
        None
    }

    pub fn is_linear(&self) -> bool {
        self.has_triad().is_none()
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} :- ", self.name)?;
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}({})", a.relation, a.vars.join(","))?;
        }
        Ok(())
    }
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_variable(s: &str) -> bool {
    is_ident(s) && s.starts_with(|c: char| c.is_ascii_lowercase())
}

/// Parses `Name :- R(x,y), S(y,z)` with default options.
pub fn parse_query(text: &str) -> Result<Query> {
    parse_query_with(text, ParseOptions::default())
}

pub fn parse_query_with(text: &str, opts: ParseOptions) -> Result<Query> {
    let body: String = text
        .lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join(" ");
    let (head, rest) = body
        .split_once(":-")
        .ok_or_else(|| Error::Syntax("expected `Name :- atoms`".into()))?;
    let head = head.trim();
    let name = match head.split_once('(') {
        Some((n, args)) => {
            let args = args
                .strip_suffix(')')
                .ok_or_else(|| Error::Syntax(format!("malformed head `{head}`")))?;
            if !args.trim().is_empty() {
                return Err(Error::HeadVar(args.trim().to_string()));
            }
            n.trim()
        }
        None => head,
    };
    if !is_ident(name) {
        return Err(Error::Syntax(format!("invalid query name `{name}`")));
    }

    let mut atoms = Vec::new();
    let mut s = rest.trim();
    while !s.is_empty() {
        let open = s
            .find('(')
            .ok_or_else(|| Error::Syntax(format!("expected `(` in `{s}`")))?;
        let rel = s[..open].trim();
        if !is_ident(rel) {
            return Err(Error::Syntax(format!("invalid relation name `{rel}`")));
        }
        let close = s[open..]
            .find(')')
            .map(|c| c + open)
            .ok_or_else(|| Error::Syntax(format!("unclosed atom `{rel}`")))?;
        let mut vars: Vec<String> = Vec::new();
        for arg in s[open + 1..close].split(',') {
            let arg = arg.trim();
            if arg.is_empty() {
                return Err(Error::Syntax(format!("empty argument in `{rel}`")));
            }
            if !is_variable(arg) {
                return Err(Error::Syntax(format!(
                    "`{arg}` in `{rel}` is not a variable (constants are not supported)"
                )));
            }
            if vars.iter().any(|v| v == arg) && !opts.allow_repeated_vars {
                return Err(Error::Syntax(format!("variable `{arg}` repeated in `{rel}`")));
            }
            vars.push(arg.to_string());
        }
        atoms.push(Atom {
            relation: rel.to_string(),
            vars,
        });
        s = s[close + 1..].trim_start();
        if let Some(r) = s.strip_prefix(',') {
            s = r.trim_start();
            if s.is_empty() {
                return Err(Error::Syntax("trailing comma".into()));
            }
        } else if let Some(r) = s.strip_prefix('.') {
            s = r.trim_start();
            if !s.is_empty() {
                return Err(Error::Syntax(format!("unexpected `{s}` after `.`")));
            }
        } else if !s.is_empty() {
            return Err(Error::Syntax(format!("expected `,` before `{s}`")));
        }
    }
    let q = Query::new(name, atoms)?;
    if !opts.allow_disconnected && !q.is_connected() {
        return Err(Error::Disconnected(q.to_string()));
    }
    Ok(q)
}
