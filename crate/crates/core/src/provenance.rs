//! Databases, witnesses, factorized expressions and their checks.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::query::{Query, VarSet};
use crate::veo::{instantiate_path, PrefixInstance, Veo};

/// Relation name to its set of constant tuples.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Database {
    pub relations: BTreeMap<String, BTreeSet<Vec<String>>>,
}

impl Database {
    pub fn new() -> Database {
        Database::default()
    }

    pub fn insert<S: AsRef<str>>(&mut self, relation: &str, row: &[S]) {
        self.relations
            .entry(relation.to_string())
            .or_default()
            .insert(row.iter().map(|s| s.as_ref().to_string()).collect());
    }

    pub fn num_tuples(&self) -> usize {
        self.relations.values().map(|r| r.len()).sum()
    }

    /// Sectioned text: `[Rel]` headers followed by comma-separated rows.
    pub fn parse_text(text: &str) -> Result<Database> {
        let mut db = Database::new();
        let mut current: Option<String> = None;
        let mut arity: HashMap<String, usize> = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Format(format!("line {}: unclosed section header", n + 1)))?
                    .trim();
                if name.is_empty() {
                    return Err(Error::Format(format!("line {}: empty relation name", n + 1)));
                }
                db.relations.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let rel = current
                .as_ref()
                .ok_or_else(|| Error::Format(format!("line {}: row outside a section", n + 1)))?;
            let row: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
            if row.iter().any(|c| c.is_empty()) {
                return Err(Error::Format(format!("line {}: empty value", n + 1)));
            }
            let a = *arity.entry(rel.clone()).or_insert(row.len());
            if a != row.len() {
                return Err(Error::Format(format!(
                    "line {}: relation `{rel}` rows have {a} columns, found {}",
                    n + 1,
                    row.len()
                )));
            }
            db.insert(rel, &row);
        }
        Ok(db)
    }

    /// A directory holding one headerless `Rel.csv` file per relation.
    pub fn load_csv_dir(dir: &Path) -> Result<Database> {
        let mut db = Database::new();
        let mut entries: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        entries.sort();
        for path in entries {
            let rel = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Format(format!("bad file name {}", path.display())))?
                .to_string();
            db.relations.entry(rel.clone()).or_default();
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .comment(Some(b'#'))
                .trim(csv::Trim::All)
                .from_path(&path)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            for rec in reader.records() {
                let rec = rec.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
                let row: Vec<&str> = rec.iter().collect();
                if row.iter().any(|c| c.is_empty()) {
                    return Err(Error::Format(format!("{}: empty value", path.display())));
                }
                db.insert(&rel, &row);
            }
        }
        Ok(db)
    }

    /// Loads a sectioned text file, or a CSV directory when `path` is a directory.
    pub fn load(path: &Path) -> Result<Database> {
        if path.is_dir() {
            Database::load_csv_dir(path)
        } else {
            Database::parse_text(&std::fs::read_to_string(path)?)
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, rows) in &self.relations {
            let _ = writeln!(out, "[{name}]");
            for row in rows {
                let _ = writeln!(out, "{}", row.join(","));
            }
        }
        out
    }
}

/// A database tuple referenced by the atom that matched it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tuple {
    pub atom: usize,
    pub values: Vec<String>,
}

impl Tuple {
    /// `r_1`, `s_11`; multi-character constants are comma-separated.
    pub fn id(&self, q: &Query) -> String {
        let rel = q.atoms[self.atom].relation.to_lowercase();
        if self.values.iter().all(|v| v.chars().count() == 1) {
            format!("{rel}_{}", self.values.concat())
        } else {
            format!("{rel}_{}", self.values.join(","))
        }
    }
}

/// One satisfying valuation; `values` is indexed by query variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Witness {
    pub values: Vec<String>,
}

impl Witness {
    pub fn tuple(&self, q: &Query, atom: usize) -> Tuple {
        Tuple {
            atom,
            values: q.atom_var_ids(atom).iter().map(|&v| self.values[v].clone()).collect(),
        }
    }

    pub fn tuples(&self, q: &Query) -> Vec<Tuple> {
        (0..q.num_atoms()).map(|a| self.tuple(q, a)).collect()
    }

    /// `x1_y2` style binding label.
    pub fn label(&self, q: &Query) -> String {
        q.variables
            .iter()
            .zip(&self.values)
            .map(|(v, c)| format!("{v}{c}"))
            .collect::<Vec<_>>()
            .join("_")
    }

    pub fn instance(&self, q: &Query, path: &[VarSet]) -> PrefixInstance {
        instantiate_path(q, path, &self.values).expect("witness binds every variable")
    }

    /// Conjunction of the witness tuples, e.g. `r_1 s_11 t_1`.
    pub fn term(&self, q: &Query) -> String {
        self.tuples(q).iter().map(|t| t.id(q)).collect::<Vec<_>>().join(" ")
    }
}

/// All witnesses of a query over a database, sorted by binding.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WitnessSet {
    pub witnesses: Vec<Witness>,
}

impl WitnessSet {
    pub fn len(&self) -> usize {
        self.witnesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.witnesses.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Witness> {
        self.witnesses.iter()
    }

    /// Number of witnesses each tuple occurs in.
    pub fn tuple_counts(&self, q: &Query) -> HashMap<Tuple, usize> {
        let mut counts = HashMap::new();
        for w in &self.witnesses {
            for t in w.tuples(q) {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn distinct_tuples(&self, q: &Query) -> usize {
        self.witnesses
            .iter()
            .flat_map(|w| w.tuples(q))
            .collect::<HashSet<_>>()
            .len()
    }

    /// The provenance DNF, one witness term per disjunct.
    pub fn dnf(&self, q: &Query, ascii: bool) -> String {
        let or = if ascii { " v " } else { " ∨ " };
        self.witnesses.iter().map(|w| w.term(q)).collect::<Vec<_>>().join(or)
    }
}

/// Hash join over the atoms in source order.
pub fn compute_witnesses(q: &Query, db: &Database) -> Result<WitnessSet> {
    let empty = BTreeSet::new();
    let nv = q.num_vars();
    let mut partial: Vec<Vec<Option<String>>> = vec![vec![None; nv]];
    let mut bound: VarSet = 0;
    for a in 0..q.num_atoms() {
        let atom = &q.atoms[a];
        let rows = db.relations.get(&atom.relation).unwrap_or(&empty);
        if let Some(row) = rows.iter().next() {
            if row.len() != atom.vars.len() {
                return Err(Error::ArityMismatch {
                    relation: atom.relation.clone(),
                    expected: atom.vars.len(),
                    found: row.len(),
                });
            }
        }
        let ids = q.atom_var_ids(a);
        let key_cols: Vec<usize> = (0..ids.len()).filter(|&c| bound & (1 << ids[c]) != 0).collect();
        let mut index: HashMap<Vec<&str>, Vec<&Vec<String>>> = HashMap::new();
        'rows: for row in rows {
            for c in 0..ids.len() {
                for d in c + 1..ids.len() {
                    if ids[c] == ids[d] && row[c] != row[d] {
                        continue 'rows;
                    }
                }
            }
            let key = key_cols.iter().map(|&c| row[c].as_str()).collect();
            index.entry(key).or_default().push(row);
        }
        let mut next = Vec::new();
        for b in &partial {
            let key: Vec<&str> = key_cols.iter().map(|&c| b[ids[c]].as_deref().unwrap()).collect();
            if let Some(matches) = index.get(&key) {
                for row in matches {
                    let mut nb = b.clone();
                    for (c, &v) in ids.iter().enumerate() {
                        nb[v] = Some(row[c].clone());
                    }
                    next.push(nb);
                }
            }
        }
        partial = next;
        bound |= q.atom_mask(a);
    }
    let mut witnesses: Vec<Witness> = partial
        .into_iter()
        .map(|b| Witness {
            values: b.into_iter().map(|v| v.unwrap()).collect(),
        })
        .collect();
    witnesses.sort();
    witnesses.dedup();
    Ok(WitnessSet { witnesses })
}

/// A monotone AND/OR expression over tuples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Lit(Tuple),
    And(Vec<Expr>),
    Or(Vec<Expr>),
}

impl Expr {
    fn and(mut parts: Vec<Expr>) -> Expr {
        let mut flat = Vec::new();
        for p in parts.drain(..) {
            match p {
                Expr::And(inner) => flat.extend(inner),
                e => flat.push(e),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Expr::And(flat)
        }
    }

    fn or(mut parts: Vec<Expr>) -> Expr {
        let mut flat = Vec::new();
        for p in parts.drain(..) {
            match p {
                Expr::Or(inner) => flat.extend(inner),
                e => flat.push(e),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Expr::Or(flat)
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Expr::Lit(_) => 1,
            Expr::And(c) | Expr::Or(c) => c.iter().map(Expr::leaf_count).sum(),
        }
    }

    pub fn literals(&self) -> Vec<&Tuple> {
        let mut out = Vec::new();
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a Tuple>) {
            match e {
                Expr::Lit(t) => out.push(t),
                Expr::And(c) | Expr::Or(c) => c.iter().for_each(|x| walk(x, out)),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Infix rendering with implicit conjunction, e.g. `t_00 (r_00 s_00 ∨ r_01 s_10)`.
    pub fn render(&self, q: &Query, ascii: bool) -> String {
        let or = if ascii { " v " } else { " ∨ " };
        match self {
            Expr::Lit(t) => t.id(q),
            Expr::Or(c) if c.is_empty() => "false".to_string(),
            Expr::Or(c) => c.iter().map(|e| e.render(q, ascii)).collect::<Vec<_>>().join(or),
            Expr::And(c) => c
                .iter()
                .map(|e| match e {
                    Expr::Or(x) if x.len() > 1 => format!("({})", e.render(q, ascii)),
                    _ => e.render(q, ascii),
                })
                .collect::<Vec<_>>()
                .join(" "),
        }
    }

    /// Distributes into product terms; fails past `limit` terms.
    pub fn expand(&self, limit: usize) -> Result<BTreeSet<BTreeSet<Tuple>>> {
        match self {
            Expr::Lit(t) => Ok(BTreeSet::from([BTreeSet::from([t.clone()])])),
            Expr::Or(c) => {
                let mut out = BTreeSet::new();
                for e in c {
                    out.extend(e.expand(limit)?);
                    if out.len() > limit {
                        return Err(Error::ExpansionTooLarge(limit));
                    }
                }
                Ok(out)
            }
            Expr::And(c) => {
                let mut acc: BTreeSet<BTreeSet<Tuple>> = BTreeSet::from([BTreeSet::new()]);
                for e in c {
                    let part = e.expand(limit)?;
                    if acc.len().saturating_mul(part.len()) > limit {
                        return Err(Error::ExpansionTooLarge(limit));
                    }
                    let mut next = BTreeSet::new();
                    for a in &acc {
                        for b in &part {
                            next.insert(a.union(b).cloned().collect());
                        }
                    }
                    acc = next;
                }
                Ok(acc)
            }
        }
    }
}

/// A witness-to-VEO assignment with its factorized expression.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub assignment: Vec<Veo>,
    pub expression: Expr,
    pub length: usize,
    pub distinct: usize,
    pub repeats: usize,
}

impl Factorization {
    pub fn render(&self, q: &Query, ascii: bool) -> String {
        self.expression.render(q, ascii)
    }
}

/// Table-prefix instances of `veo` under witness `w`, with their weights.
pub fn prefix_instances(q: &Query, w: &Witness, veo: &Veo) -> Vec<(PrefixInstance, u32)> {
    veo.table_prefixes(q)
        .into_iter()
        .map(|tp| (w.instance(q, &tp.path), tp.weight))
        .collect()
}

/// Σ weight over the distinct table-prefix instances the assignment uses.
pub fn objective(q: &Query, ws: &WitnessSet, assignment: &[Veo]) -> usize {
    let mut seen: HashMap<PrefixInstance, u32> = HashMap::new();
    for (w, v) in ws.iter().zip(assignment) {
        for (inst, c) in prefix_instances(q, w, v) {
            seen.insert(inst, c);
        }
    }
    seen.values().map(|&c| c as usize).sum()
}

struct Assembler<'a> {
    q: &'a Query,
    ws: &'a [Witness],
    veos: Vec<&'a Veo>,
    /// Per witness: node mask -> (node index, subtree mask).
    node_info: Vec<HashMap<VarSet, (usize, VarSet)>>,
    prefix_atoms: HashMap<Vec<VarSet>, Vec<usize>>,
}

impl Assembler<'_> {
    fn subtree_mask(v: &Veo, i: usize) -> VarSet {
        let mut m = v.nodes()[i];
        for c in v.children(i) {
            m |= Self::subtree_mask(v, c);
        }
        m
    }

    fn atoms_at(&mut self, w: usize, path: &[VarSet]) -> Vec<usize> {
        if let Some(a) = self.prefix_atoms.get(path) {
            return a.clone();
        }
        let v = self.veos[w];
        let atoms: Vec<usize> = (0..self.q.num_atoms())
            .filter(|&a| v.atom_prefix(self.q, a).as_deref() == Some(path))
            .collect();
        self.prefix_atoms.insert(path.to_vec(), atoms.clone());
        atoms
    }

    /// Children of the end of `path` for witness `w`: `(child node, subtree mask)`.
    fn continuation(&self, w: usize, path: &[VarSet]) -> Vec<(VarSet, VarSet)> {
        let v = self.veos[w];
        let info = &self.node_info[w];
        let kids: Vec<usize> = match path.last() {
            None => vec![0],
            Some(end) => v.children(info[end].0),
        };
        let mut out: Vec<(VarSet, VarSet)> = kids.iter().map(|&c| (v.nodes()[c], Self::subtree_mask(v, c))).collect();
        out.sort_by_key(|k| k.1);
        out
    }

    /// Expression for the witnesses sharing the instance of `path`.
    fn node(&mut self, path: &[VarSet], group: &[usize]) -> Expr {
        let mut parts: Vec<Expr> = Vec::new();
        if !path.is_empty() {
            let w0 = &self.ws[group[0]];
            for a in self.atoms_at(group[0], path) {
                parts.push(Expr::Lit(w0.tuple(self.q, a)));
            }
        }
        if let Some(rest) = self.below(path, group) {
            parts.push(rest);
        }
        Expr::and(parts)
    }

    fn below(&mut self, path: &[VarSet], group: &[usize]) -> Option<Expr> {
        let mut by_sig: BTreeMap<Vec<VarSet>, Vec<usize>> = BTreeMap::new();
        let mut conts: HashMap<usize, Vec<(VarSet, VarSet)>> = HashMap::new();
        for &w in group {
            let c = self.continuation(w, path);
            by_sig.entry(c.iter().map(|x| x.1).collect()).or_default().push(w);
            conts.insert(w, c);
        }
        if by_sig.len() == 1 && by_sig.keys().next().unwrap().is_empty() {
            return None;
        }
        let mut alternatives = Vec::new();
        for (sig, members) in by_sig {
            let mut conj = Vec::new();
            for (pos, _) in sig.iter().enumerate() {
                let mut by_inst: BTreeMap<PrefixInstance, (Vec<VarSet>, Vec<usize>)> = BTreeMap::new();
                for &w in &members {
                    let child = conts[&w][pos].0;
                    let mut p = path.to_vec();
                    p.push(child);
                    let inst = self.ws[w].instance(self.q, &p);
                    by_inst.entry(inst).or_insert_with(|| (p, Vec::new())).1.push(w);
                }
                let mut disj = Vec::new();
                for (_, (p, ws)) in by_inst {
                    disj.push(self.node(&p, &ws));
                }
                conj.push(Expr::or(disj));
            }
            alternatives.push(Expr::and(conj));
        }
        Some(Expr::or(alternatives))
    }
}

/// Builds the factorized expression for a witness-to-VEO assignment.
///
/// Identical prefix instances are written once, whichever VEO produced them.
pub fn assemble(q: &Query, ws: &WitnessSet, assignment: &[Veo]) -> Result<Factorization> {
    if assignment.len() != ws.len() {
        return Err(Error::IllegalAssignment(format!(
            "{} witnesses but {} plans",
            ws.len(),
            assignment.len()
        )));
    }
    let mut legal: HashMap<&str, bool> = HashMap::new();
    for v in assignment {
        if !*legal.entry(v.text()).or_insert_with(|| v.is_legal(q)) {
            return Err(Error::IllegalAssignment(format!("`{v}` is not a legal plan")));
        }
    }
    if ws.is_empty() {
        return Ok(Factorization {
            assignment: Vec::new(),
            expression: Expr::Or(Vec::new()),
            length: 0,
            distinct: 0,
            repeats: 0,
        });
    }
    let node_info = assignment
        .iter()
        .map(|v| {
            (0..v.nodes().len())
                .map(|i| (v.nodes()[i], (i, Assembler::subtree_mask(v, i))))
                .collect()
        })
        .collect();
    let mut asm = Assembler {
        q,
        ws: &ws.witnesses,
        veos: assignment.iter().collect(),
        node_info,
        prefix_atoms: HashMap::new(),
    };
    let all: Vec<usize> = (0..ws.len()).collect();
    let expression = asm.below(&[], &all).expect("nonempty witness set");
    let length = expression.leaf_count();
    let distinct = expression.literals().into_iter().collect::<HashSet<_>>().len();
    Ok(Factorization {
        assignment: assignment.to_vec(),
        expression,
        length,
        distinct,
        repeats: length - distinct,
    })
}

/// Default guard for [`verify_equivalence`].
pub const EXPANSION_LIMIT: usize = 1_000_000;

/// Whether `expr` expands to exactly the witness terms (up to absorption).
pub fn verify_expression(q: &Query, expr: &Expr, ws: &WitnessSet, limit: usize) -> Result<bool> {
    let terms = expr.expand(limit)?;
    let minimal: BTreeSet<&BTreeSet<Tuple>> = terms
        .iter()
        .filter(|t| !terms.iter().any(|o| o != *t && o.is_subset(t)))
        .collect();
    let expected: BTreeSet<BTreeSet<Tuple>> = ws.iter().map(|w| w.tuples(q).into_iter().collect()).collect();
    Ok(minimal.len() == expected.len() && expected.iter().all(|e| minimal.contains(e)))
}

pub fn verify_equivalence(q: &Query, f: &Factorization, ws: &WitnessSet) -> Result<bool> {
    verify_expression(q, &f.expression, ws, EXPANSION_LIMIT)
}

/// A `w1 - r - w2 - s - w3` co-occurrence pattern, as witness indices and tuples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct P4 {
    pub w1: usize,
    pub r: Tuple,
    pub w2: usize,
    pub s: Tuple,
    pub w3: usize,
}

/// Finds an induced path `t - r - s - u` in the tuple co-occurrence graph.
///
/// Returns the three witnesses realizing its edges. `None` means the
/// provenance is read-once.
pub fn detect_p4(q: &Query, ws: &WitnessSet) -> Option<P4> {
    let mut ids: BTreeMap<Tuple, usize> = BTreeMap::new();
    let terms: Vec<Vec<usize>> = ws
        .iter()
        .map(|w| {
            w.tuples(q)
                .into_iter()
                .map(|t| {
                    let n = ids.len();
                    *ids.entry(t).or_insert(n)
                })
                .collect()
        })
        .collect();
    let tuples: Vec<Tuple> = {
        let mut v: Vec<(usize, Tuple)> = ids.iter().map(|(t, &i)| (i, t.clone())).collect();
        v.sort();
        v.into_iter().map(|x| x.1).collect()
    };
    let n = tuples.len();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut edge_witness: HashMap<(usize, usize), usize> = HashMap::new();
    for (wi, t) in terms.iter().enumerate() {
        for &a in t {
            for &b in t {
                if a != b {
                    adj[a].insert(b);
                    edge_witness.entry((a, b)).or_insert(wi);
                }
            }
        }
    }
    for r in 0..n {
        for &s in &adj[r] {
            for &t in &adj[r] {
                if t == s || adj[s].contains(&t) {
                    continue;
                }
                for &u in &adj[s] {
                    if u == r || u == t || adj[r].contains(&u) || adj[t].contains(&u) {
                        continue;
                    }
                    return Some(P4 {
                        w1: edge_witness[&(t, r)],
                        r: tuples[r].clone(),
                        w2: edge_witness[&(r, s)],
                        s: tuples[s].clone(),
                        w3: edge_witness[&(s, u)],
                    });
                }
            }
        }
    }
    None
}
