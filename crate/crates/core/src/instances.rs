//! Instance families: reductions, the FD star family, the FD lift and
//! random stress instances.

use std::collections::BTreeSet;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::query::{Atom, ConjunctiveQuery, Term};
use crate::relational::{
    conflict_graph, is_keys, is_nontrivially_connected, Database, Fact, FunctionalDependency, RelationSchema,
    Schema,
};

/// Database, constraints and query produced by a generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub db: Database,
    pub sigma: Vec<FunctionalDependency>,
    pub query: ConjunctiveQuery,
}

fn schema(relations: Vec<RelationSchema>) -> Arc<Schema> {
    Arc::new(Schema::new(relations).expect("static schema"))
}

fn vars(names: &[&str]) -> Vec<Term> {
    names.iter().map(|n| Term::var(*n)).collect()
}

pub mod fixtures {
    //! Small worked instances used across tests.
    use super::*;

    /// Three facts over `R(A,B,C)` with `A -> B`, `C -> B`; the conflict graph is a path.
    pub fn path_fd_example() -> (Database, Vec<FunctionalDependency>) {
        let s = schema(vec![RelationSchema::new("R", &["A", "B", "C"])]);
        let db = Database::new(
            s,
            vec![
                Fact::new("R", &["a1", "b1", "c1"]),
                Fact::new("R", &["a1", "b2", "c2"]),
                Fact::new("R", &["a2", "b1", "c2"]),
            ],
        )
        .unwrap();
        let sigma = vec![
            FunctionalDependency::new("R", &["A"], &["B"]),
            FunctionalDependency::new("R", &["C"], &["B"]),
        ];
        (db, sigma)
    }

    /// `Ans() :- R(x, 'b1', y)`.
    pub fn path_fd_example_query() -> ConjunctiveQuery {
        ConjunctiveQuery::boolean(vec![Atom::new(
            "R",
            vec![Term::var("x"), Term::constant("b1"), Term::var("y")],
        )])
        .unwrap()
    }

    /// Six facts over `R(A1,A2)` with key `A1 -> A2`; blocks of sizes 3, 1, 2.
    pub fn primary_key_example() -> (Database, Vec<FunctionalDependency>) {
        let s = schema(vec![RelationSchema::new("R", &["A1", "A2"])]);
        let pairs = [("a1", "b1"), ("a1", "b2"), ("a1", "b3"), ("a2", "b1"), ("a3", "b1"), ("a3", "b2")];
        let db = Database::new(s, pairs.iter().map(|(a, b)| Fact::new("R", &[*a, *b]))).unwrap();
        (db, vec![FunctionalDependency::new("R", &["A1"], &["A2"])])
    }

    /// `Ans(x) :- R('a1', x)`.
    pub fn primary_key_example_query() -> ConjunctiveQuery {
        ConjunctiveQuery::new(
            vec!["x".into()],
            vec![Atom::new("R", vec![Term::constant("a1"), Term::var("x")])],
        )
        .unwrap()
    }
}

/// Simple undirected graph; loops allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    pub nodes: Vec<String>,
    pub edges: BTreeSet<(usize, usize)>,
}

impl UndirectedGraph {
    /// Nodes named `v0, v1, ...`.
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = UndirectedGraph {
            nodes: (0..node_count).map(|i| format!("v{i}")).collect(),
            edges: BTreeSet::new(),
        };
        for &(u, v) in edges {
            if u >= node_count || v >= node_count {
                return Err(Error::Precondition(format!("edge ({u},{v}) out of range")));
            }
            g.edges.insert((u.min(v), u.max(v)));
        }
        Ok(g)
    }

    /// Every graph on `n` labelled nodes without loops.
    pub fn all_simple(n: usize) -> Vec<UndirectedGraph> {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        (0u64..1 << pairs.len())
            .map(|mask| {
                let es: Vec<(usize, usize)> = pairs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, &e)| e)
                    .collect();
                UndirectedGraph::new(n, &es).unwrap()
            })
            .collect()
    }
}

/// Instance whose answer probability encodes the number of homomorphisms
/// into the three-node graph `{0, 1, ?}` having every edge but the loop at 1.
pub fn gen_hcoloring_instance(g: &UndirectedGraph) -> Result<Reduction> {
    if let Some((u, _)) = g.edges.iter().find(|(u, v)| u == v) {
        return Err(Error::Precondition(format!("graph has a loop at {}", g.nodes[*u])));
    }
    let s = schema(vec![
        RelationSchema::new("V", &["A", "B"]),
        RelationSchema::new("E", &["A", "B"]),
        RelationSchema::new("T", &["A"]),
    ]);
    let mut facts = vec![Fact::new("T", &["1"])];
    for u in &g.nodes {
        facts.push(Fact::new("V", &[u.as_str(), "0"]));
        facts.push(Fact::new("V", &[u.as_str(), "1"]));
    }
    for &(u, v) in &g.edges {
        facts.push(Fact::new("E", &[g.nodes[u].as_str(), g.nodes[v].as_str()]));
    }
    Ok(Reduction {
        db: Database::new(s, facts).unwrap(),
        sigma: vec![FunctionalDependency::new("V", &["A"], &["B"])],
        query: coloring_query("E"),
    })
}

fn coloring_query(edge_relation: &str) -> ConjunctiveQuery {
    ConjunctiveQuery::boolean(vec![
        Atom::new(edge_relation, vars(&["x", "y"])),
        Atom::new("V", vars(&["x", "z"])),
        Atom::new("V", vars(&["y", "z"])),
        Atom::new("T", vars(&["z"])),
    ])
    .unwrap()
}

fn integer_of(r: BigRational) -> Result<BigUint> {
    if !r.is_integer() || r < BigRational::zero() {
        return Err(Error::Consistency(format!("{r} is not a non-negative integer")));
    }
    Ok(r.to_integer().to_biguint().unwrap())
}

/// `3^|V| · (1 - r)` where `r` is the probability on the coloring instance.
pub fn hom_count_via_cqa(g: &UndirectedGraph, r: &BigRational) -> Result<BigUint> {
    let total = BigRational::from_integer(BigInt::from(3u32).pow(g.nodes.len() as u32));
    integer_of(total * (BigRational::one() - r))
}

/// Maps into `{0, 1, ?}` sending no edge to both endpoints 1.
pub fn brute_force_hom_count(g: &UndirectedGraph) -> Result<u64> {
    let n = g.nodes.len();
    if n > 16 {
        return Err(Error::cap("homomorphism enumeration (nodes)", n, 16));
    }
    let mut count = 0;
    for code in 0..3u64.pow(n as u32) {
        let colour = |i: usize| code / 3u64.pow(i as u32) % 3;
        if g.edges.iter().all(|&(u, v)| !(colour(u) == 1 && colour(v) == 1)) {
            count += 1;
        }
    }
    Ok(count)
}

/// Positive DNF with two variables per clause.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pos2Dnf {
    pub clauses: Vec<(String, String)>,
}

impl Pos2Dnf {
    /// Parses `x&y|x&w`.
    pub fn parse(text: &str) -> Result<Self> {
        let clauses = text
            .split('|')
            .map(|c| {
                let lits: Vec<&str> = c.split('&').map(str::trim).collect();
                match lits.as_slice() {
                    [a, b] if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
                    _ => Err(Error::Parse(format!("clause {c:?} is not of the form x&y"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Pos2Dnf { clauses })
    }

    pub fn variables(&self) -> BTreeSet<&str> {
        self.clauses
            .iter()
            .flat_map(|(a, b)| [a.as_str(), b.as_str()])
            .collect()
    }
}

fn var_constant(x: &str) -> String {
    format!("c_{x}")
}

pub fn gen_pos2dnf_instance(phi: &Pos2Dnf) -> Reduction {
    let s = schema(vec![
        RelationSchema::new("V", &["A", "B"]),
        RelationSchema::new("C", &["A", "B"]),
        RelationSchema::new("T", &["A"]),
    ]);
    let mut facts = vec![Fact::new("T", &["1"])];
    for x in phi.variables() {
        let c = var_constant(x);
        facts.push(Fact::new("V", &[c.as_str(), "0"]));
        facts.push(Fact::new("V", &[c.as_str(), "1"]));
    }
    for (x, y) in &phi.clauses {
        facts.push(Fact::new("C", &[var_constant(x), var_constant(y)]));
    }
    Reduction {
        db: Database::new(s, facts).unwrap(),
        sigma: vec![FunctionalDependency::new("V", &["A"], &["B"])],
        query: coloring_query("C"),
    }
}

pub fn sat_count_brute(phi: &Pos2Dnf) -> Result<u64> {
    let vars: Vec<&str> = phi.variables().into_iter().collect();
    if vars.len() > 20 {
        return Err(Error::cap("assignment enumeration (variables)", vars.len(), 20));
    }
    let idx = |x: &str| vars.iter().position(|v| *v == x).unwrap();
    Ok((0u64..1 << vars.len())
        .filter(|a| {
            phi.clauses
                .iter()
                .any(|(x, y)| a >> idx(x) & 1 == 1 && a >> idx(y) & 1 == 1)
        })
        .count() as u64)
}

/// `r · 2^|var(φ)|`.
pub fn sat_count_via_cqa(phi: &Pos2Dnf, r: &BigRational) -> Result<BigUint> {
    let total = BigRational::from_integer(BigInt::from(2u32).pow(phi.variables().len() as u32));
    integer_of(total * r)
}

/// `{R(0,0,0)} ∪ {R(0,1,i) : 1 ≤ i < n}` with `A1 -> A2` and `Ans() :- R(0,0,0)`.
pub fn gen_fd_star(n: usize) -> Result<Reduction> {
    if n == 0 {
        return Err(Error::Precondition("star size must be at least 1".into()));
    }
    let s = schema(vec![RelationSchema::new("R", &["A1", "A2", "A3"])]);
    let mut facts = vec![Fact::new("R", &["0", "0", "0"])];
    for i in 1..n {
        facts.push(Fact::new("R", &["0".to_string(), "1".to_string(), i.to_string()]));
    }
    Ok(Reduction {
        db: Database::new(s, facts).unwrap(),
        sigma: vec![FunctionalDependency::new("R", &["A1"], &["A2"])],
        query: ConjunctiveQuery::boolean(vec![Atom::new(
            "R",
            vec![Term::constant("0"), Term::constant("0"), Term::constant("0")],
        )])
        .unwrap(),
    })
}

/// Exact uniform-operations probability on the star of size `n`:
/// `P_p = p/(2p+1) · P_{p-1}`, `P_0 = 1`, with `p = n - 1`.
pub fn fd_star_uo_probability(n: usize) -> BigRational {
    (1..n).fold(BigRational::one(), |acc, p| {
        acc * BigRational::new(BigInt::from(p), BigInt::from(2 * p + 1))
    })
}

/// The lifted instance and its distinguished fact.
#[derive(Debug, Clone, PartialEq)]
pub struct FdLift {
    pub reduction: Reduction,
    pub special: Fact,
}

fn fresh(base: &str, taken: &BTreeSet<&str>) -> String {
    let mut name = format!("_{base}");
    while taken.contains(name.as_str()) {
        name.insert(0, '_');
    }
    name
}

/// Lifts a connected instance under keys over one relation to an FD
/// instance whose single extra fact survives with probability `1/(|CORep|+1)`.
pub fn gen_fd_lift(db: &Database, sigma: &[FunctionalDependency]) -> Result<FdLift> {
    let rels: BTreeSet<&str> = sigma.iter().map(|fd| fd.relation.as_str()).collect();
    let relation = match rels.iter().next() {
        Some(r) if rels.len() == 1 => r.to_string(),
        _ => return Err(Error::Precondition("constraints must be keys over exactly one relation".into())),
    };
    if !is_keys(db.schema(), sigma)? {
        return Err(Error::ConstraintClass("lift requires keys".into()));
    }
    if db.facts().any(|f| f.relation != relation) {
        return Err(Error::Precondition(format!("database has facts outside {relation}")));
    }
    if !is_nontrivially_connected(&conflict_graph(db, sigma)?) {
        return Err(Error::Precondition("conflict graph is not non-trivially connected".into()));
    }
    let orig = db.schema().relation(&relation).unwrap();
    let attr_names: BTreeSet<&str> = orig.attributes.iter().map(String::as_str).collect();
    let attr_a = fresh("A", &attr_names);
    let attr_b = fresh("B", &attr_names);
    let adom = db.adom();
    let a = fresh("a", &adom);
    let b = fresh("b", &adom);
    let lifted_name = format!("{relation}_lift");

    let mut attributes = vec![attr_a.clone(), attr_b.clone()];
    attributes.extend(orig.attributes.iter().cloned());
    let arity = attributes.len();
    let s = Arc::new(Schema::new(vec![RelationSchema {
        name: lifted_name.clone(),
        attributes,
    }])?);

    let mut facts: Vec<Fact> = db
        .facts()
        .map(|f| {
            let mut values = vec![a.clone(), b.clone()];
            values.extend(f.values.iter().cloned());
            Fact {
                relation: lifted_name.clone(),
                values,
            }
        })
        .collect();
    let special = Fact {
        relation: lifted_name.clone(),
        values: vec![a.clone(); arity],
    };
    facts.push(special.clone());

    let mut lifted: Vec<FunctionalDependency> = sigma
        .iter()
        .map(|fd| FunctionalDependency {
            relation: lifted_name.clone(),
            lhs: fd.lhs.clone(),
            rhs: fd.rhs.clone(),
        })
        .collect();
    lifted.push(FunctionalDependency::new(lifted_name.as_str(), &[attr_a.as_str()], &[attr_b.as_str()]));

    let query = ConjunctiveQuery::boolean(vec![Atom::new(
        lifted_name.as_str(),
        vec![Term::var("x"); arity],
    )])?;
    Ok(FdLift {
        reduction: Reduction {
            db: Database::new(s, facts)?,
            sigma: lifted,
            query,
        },
        special,
    })
}

pub mod random {
    //! Random instances for stress testing.
    use super::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    use crate::query::answers;

    fn pick<'a, R: Rng + ?Sized>(rng: &mut R, xs: &[&'a str]) -> &'a str {
        xs.choose(rng).unwrap()
    }

    /// Up to `max_facts` facts over `R(A,B)` keyed on `A` and `S(A,B,C)`
    /// keyed on `A,B` or unkeyed.
    pub fn primary_key_instance<R: Rng + ?Sized>(rng: &mut R, max_facts: usize) -> (Database, Vec<FunctionalDependency>) {
        let s = schema(vec![
            RelationSchema::new("R", &["A", "B"]),
            RelationSchema::new("S", &["A", "B", "C"]),
        ]);
        let mut sigma = vec![FunctionalDependency::new("R", &["A"], &["B"])];
        if rng.gen_bool(0.5) {
            sigma.push(FunctionalDependency::new("S", &["A", "B"], &["C"]));
        }
        let keys = ["k1", "k2", "k3"];
        let vals = ["v1", "v2", "v3"];
        // Biased towards larger instances, which are the ones with conflicts.
        let target = rng.gen_range(0..=max_facts).max(rng.gen_range(0..=max_facts));
        let mut facts = BTreeSet::new();
        let mut attempts = 0;
        while facts.len() < target && attempts < 100 {
            attempts += 1;
            let f = if rng.gen_bool(0.65) {
                Fact::new("R", &[pick(rng, &keys), pick(rng, &vals)])
            } else {
                Fact::new("S", &[pick(rng, &keys[..2]), pick(rng, &vals[..2]), pick(rng, &vals)])
            };
            facts.insert(f);
        }
        (Database::new(s, facts).unwrap(), sigma)
    }

    /// Up to `max_facts` facts over `R(A,B,C)` with one to three random FDs.
    pub fn fd_instance<R: Rng + ?Sized>(rng: &mut R, max_facts: usize) -> (Database, Vec<FunctionalDependency>) {
        let s = schema(vec![RelationSchema::new("R", &["A", "B", "C"])]);
        let options = [
            FunctionalDependency::new("R", &["A"], &["B"]),
            FunctionalDependency::new("R", &["C"], &["B"]),
            FunctionalDependency::new("R", &["B"], &["C"]),
            FunctionalDependency::new("R", &["A"], &["C"]),
            FunctionalDependency::new("R", &["A", "B"], &["C"]),
            FunctionalDependency::new("R", &["C"], &["A", "B"]),
        ];
        let k = rng.gen_range(1..=3);
        let sigma: Vec<FunctionalDependency> = options.choose_multiple(rng, k).cloned().collect();
        let dom = ["0", "1", "2"];
        let target = rng.gen_range(0..=max_facts);
        let mut facts = BTreeSet::new();
        while facts.len() < target {
            facts.insert(Fact::new("R", &[pick(rng, &dom), pick(rng, &dom), pick(rng, &dom)]));
        }
        (Database::new(s, facts).unwrap(), sigma)
    }

    /// Rejection-samples [`fd_instance`] until the conflict graph is non-trivially connected.
    pub fn connected_fd_instance<R: Rng + ?Sized>(rng: &mut R, max_facts: usize) -> (Database, Vec<FunctionalDependency>) {
        loop {
            let (db, sigma) = fd_instance(rng, max_facts);
            if is_nontrivially_connected(&conflict_graph(&db, &sigma).unwrap()) {
                return (db, sigma);
            }
        }
    }

    /// Non-trivially connected instance over one relation whose FDs are all keys.
    pub fn connected_key_instance<R: Rng + ?Sized>(rng: &mut R, max_facts: usize) -> (Database, Vec<FunctionalDependency>) {
        let s = schema(vec![RelationSchema::new("R", &["A", "B", "C"])]);
        let options = [
            FunctionalDependency::new("R", &["A"], &["B", "C"]),
            FunctionalDependency::new("R", &["B"], &["A", "C"]),
            FunctionalDependency::new("R", &["C"], &["A", "B"]),
            FunctionalDependency::new("R", &["A", "B"], &["C"]),
        ];
        let dom = ["0", "1", "2"];
        loop {
            let k = rng.gen_range(1..=3);
            let sigma: Vec<FunctionalDependency> = options.choose_multiple(rng, k).cloned().collect();
            let target = rng.gen_range(2..=max_facts.max(2));
            let mut facts = BTreeSet::new();
            while facts.len() < target {
                facts.insert(Fact::new("R", &[pick(rng, &dom), pick(rng, &dom), pick(rng, &dom)]));
            }
            let db = Database::new(Arc::clone(&s), facts).unwrap();
            if is_nontrivially_connected(&conflict_graph(&db, &sigma).unwrap()) {
                return (db, sigma);
            }
        }
    }

    /// A query of one or two atoms and a tuple; the tuple is an answer over
    /// the whole database when one exists.
    pub fn query<R: Rng + ?Sized>(rng: &mut R, db: &Database) -> (ConjunctiveQuery, Vec<String>) {
        let adom: Vec<String> = db.adom().into_iter().map(str::to_string).collect();
        let names = ["x", "y", "z"];
        loop {
            let n_atoms = rng.gen_range(1..=2);
            let mut atoms = Vec::new();
            for _ in 0..n_atoms {
                let rel = db.schema().relations().choose(rng).unwrap();
                let terms = (0..rel.arity())
                    .map(|_| {
                        if !adom.is_empty() && rng.gen_bool(0.3) {
                            Term::Const(adom.choose(rng).unwrap().clone())
                        } else {
                            Term::var(*names.choose(rng).unwrap())
                        }
                    })
                    .collect();
                atoms.push(Atom::new(rel.name.as_str(), terms));
            }
            let body_vars: Vec<String> = ConjunctiveQuery::boolean(atoms.clone())
                .unwrap()
                .variables()
                .into_iter()
                .map(str::to_string)
                .collect();
            let answer_vars: Vec<String> = body_vars.into_iter().filter(|_| rng.gen_bool(0.4)).collect();
            let q = ConjunctiveQuery::new(answer_vars, atoms).unwrap();
            let ans: Vec<Vec<String>> = answers(&q, db).unwrap().into_iter().collect();
            if let Some(t) = ans.choose(rng) {
                return (q, t.clone());
            }
            if adom.is_empty() {
                return (ConjunctiveQuery::boolean(q.atoms().to_vec()).unwrap(), Vec::new());
            }
            if rng.gen_bool(0.5) {
                continue;
            }
            let t = (0..q.answer_vars().len())
                .map(|_| adom.choose(rng).unwrap().clone())
                .collect();
            return (q, t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relational::count_independent_sets;
    use crate::repair::{candidate_repairs, RepairSpace};

    #[test]
    fn single_edge_coloring_instance() {
        let g = UndirectedGraph::new(2, &[(0, 1)]).unwrap();
        let red = gen_hcoloring_instance(&g).unwrap();
        assert_eq!(red.db.len(), 6);
        assert_eq!(candidate_repairs(&red.db, &red.sigma, false).unwrap().len(), 9);
        assert_eq!(brute_force_hom_count(&g).unwrap(), 8);
        let looped = UndirectedGraph::new(1, &[(0, 0)]).unwrap();
        assert!(gen_hcoloring_instance(&looped).is_err());
    }

    #[test]
    fn triangle_hom_count() {
        let g = UndirectedGraph::new(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        // at most one node may map to 1: 2^3 + 3 * 2^2
        assert_eq!(brute_force_hom_count(&g).unwrap(), 20);
        let red = gen_hcoloring_instance(&g).unwrap();
        let space = RepairSpace::new(&red.db, &red.sigma, false).unwrap();
        let r = space.rrfreq(&red.query, &[]).unwrap();
        assert_eq!(hom_count_via_cqa(&g, &r).unwrap(), BigUint::from(20u32));
    }

    #[test]
    fn dnf_parsing_and_counts() {
        let phi = Pos2Dnf::parse("x&y|x&w").unwrap();
        assert_eq!(phi.variables().len(), 3);
        assert_eq!(sat_count_brute(&phi).unwrap(), 3);
        assert!(Pos2Dnf::parse("x&y&z").is_err());
        let red = gen_pos2dnf_instance(&Pos2Dnf::parse("x&y").unwrap());
        let space = RepairSpace::new(&red.db, &red.sigma, true).unwrap();
        assert_eq!(space.rrfreq(&red.query, &[]).unwrap(), BigRational::new(1.into(), 4.into()));
    }

    #[test]
    fn star_closed_form() {
        assert_eq!(fd_star_uo_probability(1), BigRational::one());
        assert_eq!(fd_star_uo_probability(3), BigRational::new(2.into(), 15.into()));
        assert_eq!(fd_star_uo_probability(8), BigRational::new(5040.into(), 2027025.into()));
        assert!(gen_fd_star(0).is_err());
        assert_eq!(gen_fd_star(4).unwrap().db.len(), 4);
    }

    #[test]
    fn lift_of_a_path() {
        let s = schema(vec![RelationSchema::new("R", &["A", "B"])]);
        let db = Database::new(
            s,
            vec![Fact::new("R", &["a1", "b1"]), Fact::new("R", &["a1", "b2"]), Fact::new("R", &["a2", "b2"])],
        )
        .unwrap();
        let sigma = vec![
            FunctionalDependency::new("R", &["A"], &["B"]),
            FunctionalDependency::new("R", &["B"], &["A"]),
        ];
        assert_eq!(count_independent_sets(&conflict_graph(&db, &sigma).unwrap(), false).unwrap(), 5);
        let lift = gen_fd_lift(&db, &sigma).unwrap();
        let red = &lift.reduction;
        let space = RepairSpace::new(&red.db, &red.sigma, false).unwrap();
        assert_eq!(space.candidate_repair_masks(1000).unwrap().len(), 6);
        assert_eq!(space.rrfreq(&red.query, &[]).unwrap(), BigRational::new(1.into(), 6.into()));
    }

    #[test]
    fn lift_preconditions() {
        let (db, sigma) = fixtures::path_fd_example();
        assert!(gen_fd_lift(&db, &sigma).is_err());
    }
}
