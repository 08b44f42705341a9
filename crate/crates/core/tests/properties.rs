use proptest::prelude::*;
use provfact_core::exact::BRUTE_LIMIT;
use provfact_core::fixtures::named_query;
use provfact_core::ilp::solve_model;
use provfact_core::provenance::objective;
use provfact_core::*;

const QUERIES: &[&str] = &["chain2", "chain3", "star2", "star3", "triangle", "triangle-unary", "chain2-we"];

/// Random instance of a named query with at most `max_witnesses` witnesses.
fn instance(name: &str, d: usize, tuples: usize, seed: u64, max_witnesses: usize) -> Option<Problem> {
    let q = named_query(name).unwrap();
    let db = gen_random(&GenSpec { query: q.clone(), d, tuples, seed });
    let ws = compute_witnesses(&q, &db).unwrap();
    if ws.len() > max_witnesses {
        return None;
    }
    Some(Problem::new(q, ws).unwrap())
}

fn arb_instance(max_witnesses: usize) -> impl Strategy<Value = Option<Problem>> {
    (0..QUERIES.len(), 1usize..5, 1usize..9, any::<u64>())
        .prop_map(move |(qi, d, t, seed)| instance(QUERIES[qi], d, t, seed, max_witnesses))
}

/// Random connected self-join-free query over at most four variables.
fn arb_query() -> impl Strategy<Value = Query> {
    let var_sets = proptest::collection::vec(proptest::collection::btree_set(0usize..4, 1..4), 1..5);
    var_sets.prop_filter_map("connected", |sets| {
        let vars = ["x", "y", "z", "u"];
        let atoms = sets
            .iter()
            .enumerate()
            .map(|(i, s)| Atom {
                relation: format!("R{i}"),
                vars: s.iter().map(|&v| vars[v].to_string()).collect(),
            })
            .collect();
        Query::new("Q", atoms).ok().filter(|q| q.is_connected())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn assembled_expressions_are_equivalent(p in arb_instance(12), picks in proptest::collection::vec(any::<usize>(), 12)) {
        let Some(p) = p else { return Ok(()) };
        let assignment: Vec<Veo> = (0..p.n()).map(|i| p.mveo[picks[i] % p.k()].clone()).collect();
        let f = assemble(&p.query, &p.witnesses, &assignment).unwrap();
        prop_assert!(verify_equivalence(&p.query, &f, &p.witnesses).unwrap());
        prop_assert_eq!(f.length, objective(&p.query, &p.witnesses, &assignment));
        prop_assert_eq!(f.length, f.expression.leaf_count());
        prop_assert_eq!(f.repeats, f.length - p.witnesses.distinct_tuples(&p.query));
    }

    #[test]
    fn exact_matches_enumeration(p in arb_instance(10)) {
        let Some(p) = p else { return Ok(()) };
        prop_assume!((p.k() as u64).checked_pow(p.n() as u32).is_some_and(|s| s <= BRUTE_LIMIT));
        let e = solve_exact(&p, DEFAULT_BUDGET).unwrap();
        let b = solve_brute(&p).unwrap();
        prop_assert!(e.optimal);
        prop_assert_eq!(e.factorization.length, b.factorization.length);
        prop_assert_eq!(e.plans, b.plans);
    }

    #[test]
    fn flow_is_an_upper_bound(p in arb_instance(12)) {
        let Some(p) = p else { return Ok(()) };
        let e = solve_exact(&p, DEFAULT_BUDGET).unwrap();
        let f = solve_flow(&p, &Ordering::nested(&p.query, &p.mveo), false).unwrap();
        prop_assert!(verify_equivalence(&p.query, &f.factorization, &p.witnesses).unwrap());
        prop_assert!(f.factorization.length >= e.factorization.length);
        prop_assert!(f.repaired > 0 || f.factorization.length as u64 == f.cut_value, "cut {} length {}", f.cut_value, f.factorization.length);
        let s = single_plan_baseline(&p).unwrap();
        prop_assert!(s.length >= e.factorization.length);
    }

    #[test]
    fn read_once_iff_no_p4(p in arb_instance(12)) {
        let Some(p) = p else { return Ok(()) };
        let e = solve_exact(&p, DEFAULT_BUDGET).unwrap();
        prop_assert!(e.optimal);
        prop_assert_eq!(e.factorization.repeats == 0, detect_p4(&p.query, &p.witnesses).is_none());
    }

    #[test]
    fn ilp_optimum_matches_exact(p in arb_instance(8)) {
        let Some(p) = p else { return Ok(()) };
        if p.n() == 0 {
            return Ok(());
        }
        let e = solve_exact(&p, DEFAULT_BUDGET).unwrap();
        let m = build_ilp(&p).unwrap();
        let s = m.stats();
        prop_assert!(s.constraints <= s.n * (1 + s.k * s.m));
        prop_assert_eq!(solve_model(&m, DEFAULT_BUDGET).objective, e.factorization.length as u64);
        let r = m.reduce(&p);
        prop_assert_eq!(solve_model(&r, DEFAULT_BUDGET).objective, e.factorization.length as u64);
    }

    #[test]
    fn nested_orderings_are_running_prefix(q in arb_query()) {
        let m = enumerate_mveo(&q, DEFAULT_VAR_LIMIT).unwrap();
        let ord = Ordering::nested(&q, &m);
        prop_assert!(ord.rp, "{}", ord.render(&q));
        let mut flat = ord.flatten(&q);
        let mut want = m.clone();
        flat.sort_by(|a, b| a.text().cmp(b.text()));
        want.sort_by(|a, b| a.text().cmp(b.text()));
        prop_assert_eq!(flat, want);
    }

    #[test]
    fn generation_is_deterministic(qi in 0..QUERIES.len(), d in 1usize..6, t in 0usize..12, seed in any::<u64>()) {
        let q = named_query(QUERIES[qi]).unwrap();
        let spec = GenSpec { query: q.clone(), d, tuples: t, seed };
        let db = gen_random(&spec);
        prop_assert_eq!(&db, &gen_random(&spec));
        for atom in &q.atoms {
            let space = d.pow(atom.vars.len() as u32);
            prop_assert_eq!(db.relations[&atom.relation].len(), t.min(space));
        }
    }
}
