//! Schemas, facts, databases, functional dependencies and conflict graphs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default node cap for brute-force independent set counting.
pub const INDEPENDENT_SET_CAP: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSchema {
    pub name: String,
    pub attributes: Vec<String>,
}

impl RelationSchema {
    pub fn new(name: impl Into<String>, attributes: &[&str]) -> Self {
        RelationSchema {
            name: name.into(),
            attributes: attributes.iter().map(|a| a.to_string()).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.attributes.len()
    }

    pub fn position(&self, attribute: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a == attribute)
    }
}

/// A finite set of relation names with attribute lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    relations: Vec<RelationSchema>,
    index: BTreeMap<String, usize>,
}

impl Schema {
    pub fn new(relations: Vec<RelationSchema>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, rel) in relations.iter().enumerate() {
            if rel.name.is_empty() {
                return Err(Error::Schema("relation with empty name".into()));
            }
            let distinct: BTreeSet<&String> = rel.attributes.iter().collect();
            if distinct.len() != rel.attributes.len() {
                return Err(Error::Schema(format!(
                    "relation {} has duplicate attribute names",
                    rel.name
                )));
            }
            if index.insert(rel.name.clone(), i).is_some() {
                return Err(Error::Schema(format!("relation {} declared twice", rel.name)));
            }
        }
        Ok(Schema { relations, index })
    }

    pub fn relations(&self) -> &[RelationSchema] {
        &self.relations
    }

    pub fn relation(&self, name: &str) -> Option<&RelationSchema> {
        self.index.get(name).map(|&i| &self.relations[i])
    }

    pub fn arity(&self, name: &str) -> Option<usize> {
        self.relation(name).map(RelationSchema::arity)
    }

    fn require(&self, name: &str) -> Result<&RelationSchema> {
        self.relation(name)
            .ok_or_else(|| Error::Schema(format!("unknown relation {name}")))
    }
}

/// A ground atom `R(c1, ..., cn)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fact {
    pub relation: String,
    pub values: Vec<String>,
}

impl Fact {
    pub fn new<S: AsRef<str>>(relation: impl Into<String>, values: &[S]) -> Self {
        Fact {
            relation: relation.into(),
            values: values.iter().map(|v| v.as_ref().to_string()).collect(),
        }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.relation, self.values.join(","))
    }
}

/// A finite set of facts over a schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Database {
    schema: Arc<Schema>,
    facts: BTreeSet<Fact>,
}

impl Database {
    pub fn new(schema: Arc<Schema>, facts: impl IntoIterator<Item = Fact>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for fact in facts {
            let rel = schema.require(&fact.relation)?;
            if rel.arity() != fact.values.len() {
                return Err(Error::Schema(format!(
                    "fact {fact} has arity {} but {} has arity {}",
                    fact.values.len(),
                    rel.name,
                    rel.arity()
                )));
            }
            set.insert(fact);
        }
        Ok(Database { schema, facts: set })
    }

    pub fn empty(schema: Arc<Schema>) -> Self {
        Database {
            schema,
            facts: BTreeSet::new(),
        }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn facts(&self) -> impl Iterator<Item = &Fact> + '_ {
        self.facts.iter()
    }

    pub fn fact_set(&self) -> &BTreeSet<Fact> {
        &self.facts
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn contains(&self, fact: &Fact) -> bool {
        self.facts.contains(fact)
    }

    /// Facts of one relation, in canonical order.
    pub fn facts_of<'a>(&'a self, relation: &'a str) -> impl Iterator<Item = &'a Fact> + 'a {
        let start = Fact {
            relation: relation.to_string(),
            values: Vec::new(),
        };
        self.facts
            .range(start..)
            .take_while(move |f| f.relation == relation)
    }

    /// Active domain.
    pub fn adom(&self) -> BTreeSet<&str> {
        self.facts
            .iter()
            .flat_map(|f| f.values.iter().map(String::as_str))
            .collect()
    }

    /// Byte length of the canonical textual fact list (`||D||`).
    pub fn encoding_size(&self) -> usize {
        self.facts.iter().map(|f| f.to_string().len()).sum()
    }

    /// Sub-database over the same schema; facts must come from `self`.
    pub fn restrict<'a>(&self, facts: impl IntoIterator<Item = &'a Fact>) -> Database {
        Database {
            schema: Arc::clone(&self.schema),
            facts: facts.into_iter().cloned().collect(),
        }
    }

    pub fn without(&self, removed: &[Fact]) -> Database {
        let mut facts = self.facts.clone();
        for f in removed {
            facts.remove(f);
        }
        Database {
            schema: Arc::clone(&self.schema),
            facts,
        }
    }

    pub fn is_subset(&self, other: &Database) -> bool {
        self.facts.is_subset(&other.facts)
    }
}

impl fmt::Display for Database {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.facts.iter().map(Fact::to_string).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// `R : X -> Y` with attribute sets `X` (non-empty) and `Y`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FunctionalDependency {
    pub relation: String,
    pub lhs: BTreeSet<String>,
    pub rhs: BTreeSet<String>,
}

impl FunctionalDependency {
    pub fn new(relation: impl Into<String>, lhs: &[&str], rhs: &[&str]) -> Self {
        FunctionalDependency {
            relation: relation.into(),
            lhs: lhs.iter().map(|a| a.to_string()).collect(),
            rhs: rhs.iter().map(|a| a.to_string()).collect(),
        }
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        self.resolve(schema).map(|_| ())
    }

    /// Whether `X ∪ Y` covers every attribute of the relation.
    pub fn is_key(&self, schema: &Schema) -> Result<bool> {
        let rel = schema.require(&self.relation)?;
        Ok(rel
            .attributes
            .iter()
            .all(|a| self.lhs.contains(a) || self.rhs.contains(a)))
    }

    pub(crate) fn resolve(&self, schema: &Schema) -> Result<ResolvedFd> {
        let rel = schema.require(&self.relation)?;
        if self.lhs.is_empty() {
            return Err(Error::Schema(format!("{self} has an empty left-hand side")));
        }
        let pos = |attrs: &BTreeSet<String>| -> Result<Vec<usize>> {
            attrs
                .iter()
                .map(|a| {
                    rel.position(a).ok_or_else(|| {
                        Error::Schema(format!("{} has no attribute {a}", rel.name))
                    })
                })
                .collect()
        };
        Ok(ResolvedFd {
            lhs: pos(&self.lhs)?,
            rhs: pos(&self.rhs)?,
        })
    }
}

impl fmt::Display for FunctionalDependency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lhs: Vec<&str> = self.lhs.iter().map(String::as_str).collect();
        let rhs: Vec<&str> = self.rhs.iter().map(String::as_str).collect();
        write!(f, "{}: {} -> {}", self.relation, lhs.join(","), rhs.join(","))
    }
}

pub(crate) struct ResolvedFd {
    pub lhs: Vec<usize>,
    pub rhs: Vec<usize>,
}

pub fn validate_constraints(schema: &Schema, sigma: &[FunctionalDependency]) -> Result<()> {
    sigma.iter().try_for_each(|fd| fd.validate(schema))
}

/// Every FD is a key.
pub fn is_keys(schema: &Schema, sigma: &[FunctionalDependency]) -> Result<bool> {
    for fd in sigma {
        fd.validate(schema)?;
        if !fd.is_key(schema)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Every FD is a key and no relation has two distinct keys.
pub fn is_primary_keys(schema: &Schema, sigma: &[FunctionalDependency]) -> Result<bool> {
    if !is_keys(schema, sigma)? {
        return Ok(false);
    }
    let distinct: BTreeSet<&FunctionalDependency> = sigma.iter().collect();
    let mut seen = BTreeSet::new();
    Ok(distinct.iter().all(|fd| seen.insert(&fd.relation)))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub fd: FunctionalDependency,
    /// The two facts, smaller first.
    pub pair: (Fact, Fact),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ViolationSet {
    pub entries: BTreeSet<Violation>,
}

impl ViolationSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct conflicting pairs, ignoring which FD they violate.
    pub fn pairs(&self) -> BTreeSet<(Fact, Fact)> {
        self.entries.iter().map(|v| v.pair.clone()).collect()
    }
}

/// Index pairs `(i, j)`, `i < j`, of facts that jointly violate some FD.
fn conflicting_index_pairs(
    facts: &[&Fact],
    schema: &Schema,
    sigma: &[FunctionalDependency],
) -> Result<BTreeMap<(usize, usize), Vec<usize>>> {
    let mut out: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (fd_idx, fd) in sigma.iter().enumerate() {
        let resolved = fd.resolve(schema)?;
        let mut groups: HashMap<Vec<&str>, Vec<usize>> = HashMap::new();
        for (i, f) in facts.iter().enumerate() {
            if f.relation == fd.relation {
                let key: Vec<&str> = resolved.lhs.iter().map(|&p| f.values[p].as_str()).collect();
                groups.entry(key).or_default().push(i);
            }
        }
        for members in groups.values() {
            for (a, &i) in members.iter().enumerate() {
                for &j in &members[a + 1..] {
                    let differ = resolved
                        .rhs
                        .iter()
                        .any(|&p| facts[i].values[p] != facts[j].values[p]);
                    if differ {
                        out.entry((i.min(j), i.max(j))).or_default().push(fd_idx);
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn violations(db: &Database, sigma: &[FunctionalDependency]) -> Result<ViolationSet> {
    let facts: Vec<&Fact> = db.facts().collect();
    let pairs = conflicting_index_pairs(&facts, db.schema(), sigma)?;
    let mut entries = BTreeSet::new();
    for ((i, j), fds) in pairs {
        for fd_idx in fds {
            entries.insert(Violation {
                fd: sigma[fd_idx].clone(),
                pair: (facts[i].clone(), facts[j].clone()),
            });
        }
    }
    Ok(ViolationSet { entries })
}

pub fn satisfies(db: &Database, sigma: &[FunctionalDependency]) -> Result<bool> {
    Ok(violations(db, sigma)?.is_empty())
}

/// Undirected graph on the facts of a database; edges join conflicting facts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictGraph {
    pub nodes: Vec<Fact>,
    pub edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl ConflictGraph {
    pub fn from_edges(nodes: Vec<Fact>, edges: BTreeSet<(usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for &(i, j) in &edges {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        ConflictGraph {
            nodes,
            edges,
            adjacency,
        }
    }

    /// Neighbours of node `i`, ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn index_of(&self, fact: &Fact) -> Option<usize> {
        self.nodes.binary_search(fact).ok()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_independent(&self, set: &[usize]) -> bool {
        let members: BTreeSet<usize> = set.iter().copied().collect();
        members
            .iter()
            .all(|&i| self.adjacency[i].iter().all(|j| !members.contains(j)))
    }
}

pub fn conflict_graph(db: &Database, sigma: &[FunctionalDependency]) -> Result<ConflictGraph> {
    let facts: Vec<&Fact> = db.facts().collect();
    let pairs = conflicting_index_pairs(&facts, db.schema(), sigma)?;
    Ok(ConflictGraph::from_edges(
        facts.into_iter().cloned().collect(),
        pairs.into_keys().collect(),
    ))
}

/// Maximal set of facts agreeing on the key of their relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub relation: String,
    pub facts: Vec<Fact>,
}

impl Block {
    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }
}

/// Partition of `db` into key blocks, ordered by relation then key values.
/// Facts of relations without a key form singleton blocks.
pub fn blocks(db: &Database, sigma: &[FunctionalDependency]) -> Result<Vec<Block>> {
    let schema = db.schema();
    if !is_primary_keys(schema, sigma)? {
        return Err(Error::ConstraintClass(
            "block decomposition requires primary keys".into(),
        ));
    }
    let mut keys: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for fd in sigma {
        keys.insert(&fd.relation, fd.resolve(schema)?.lhs);
    }
    let mut grouped: BTreeMap<(String, Vec<String>), Vec<Fact>> = BTreeMap::new();
    for f in db.facts() {
        let key = match keys.get(f.relation.as_str()) {
            Some(pos) => pos.iter().map(|&p| f.values[p].clone()).collect(),
            None => f.values.clone(),
        };
        grouped
            .entry((f.relation.clone(), key))
            .or_default()
            .push(f.clone());
    }
    Ok(grouped
        .into_iter()
        .map(|((relation, _), facts)| Block { relation, facts })
        .collect())
}

pub fn count_independent_sets(g: &ConflictGraph, nonempty_only: bool) -> Result<u64> {
    count_independent_sets_capped(g, nonempty_only, INDEPENDENT_SET_CAP)
}

/// Brute-force count over all node subsets.
pub fn count_independent_sets_capped(
    g: &ConflictGraph,
    nonempty_only: bool,
    cap: usize,
) -> Result<u64> {
    let n = g.node_count();
    if n > cap || n >= 64 {
        return Err(Error::cap("independent set enumeration (nodes)", n, cap as u64));
    }
    let adj: Vec<u64> = (0..n)
        .map(|i| g.neighbors(i).iter().fold(0u64, |m, &j| m | (1 << j)))
        .collect();
    let mut count = 0u64;
    for subset in 0u64..(1u64 << n) {
        let mut rest = subset;
        let mut ok = true;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            if adj[i] & subset != 0 {
                ok = false;
                break;
            }
            rest &= rest - 1;
        }
        if ok {
            count += 1;
        }
    }
    Ok(if nonempty_only { count - 1 } else { count })
}

/// Connected with at least one edge.
pub fn is_nontrivially_connected(g: &ConflictGraph) -> bool {
    if g.edges.is_empty() {
        return false;
    }
    let mut seen = vec![false; g.node_count()];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &j in g.neighbors(i) {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}
