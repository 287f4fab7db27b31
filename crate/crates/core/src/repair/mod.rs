//! Repairing operations, sequences, trees and Markov chain generators.

mod chain;
mod realize;
mod space;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;

use crate::error::{Error, Result};
use crate::query::ConjunctiveQuery;
use crate::relational::{conflict_graph, Database, Fact, FunctionalDependency};

pub use chain::{ChainNode, RepairDistribution, RepairingChain};
pub use realize::realize_repair;
pub use space::{RepairSpace, DEFAULT_TREE_CAP};

/// Removal of one fact or of two conflicting facts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Operation {
    /// One or two facts, ascending.
    pub removed: Vec<Fact>,
}

impl Operation {
    pub fn single(f: Fact) -> Self {
        Operation { removed: vec![f] }
    }

    pub fn pair(f: Fact, g: Fact) -> Self {
        let mut removed = vec![f, g];
        removed.sort();
        Operation { removed }
    }

    pub fn is_pair(&self) -> bool {
        self.removed.len() == 2
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.removed.as_slice() {
            [a] => write!(f, "-{a}"),
            [a, b] => write!(f, "-{{{a}, {b}}}"),
            _ => write!(f, "-{{}}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RepairingSequence {
    pub ops: Vec<Operation>,
}

impl RepairingSequence {
    pub fn new(ops: Vec<Operation>) -> Self {
        RepairingSequence { ops }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// `s(D)`; fails if some operation is not justified at its step.
    pub fn apply(&self, db: &Database, sigma: &[FunctionalDependency]) -> Result<Database> {
        let mut current = db.clone();
        for (step, op) in self.ops.iter().enumerate() {
            if !is_justified(&current, sigma, op)? {
                return Err(Error::Precondition(format!(
                    "operation {op} at step {step} is not justified"
                )));
            }
            current = current.without(&op.removed);
        }
        Ok(current)
    }

    /// Valid and ends in a consistent database.
    pub fn is_complete(&self, db: &Database, sigma: &[FunctionalDependency]) -> Result<bool> {
        match self.apply(db, sigma) {
            Ok(result) => crate::relational::satisfies(&result, sigma),
            Err(Error::Precondition(_)) => Ok(false),
            Err(e) => Err(e),
        }
    }
}

impl fmt::Display for RepairingSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ops: Vec<String> = self.ops.iter().map(Operation::to_string).collect();
        write!(f, "({})", ops.join(", "))
    }
}

fn is_justified(current: &Database, sigma: &[FunctionalDependency], op: &Operation) -> Result<bool> {
    let g = conflict_graph(current, sigma)?;
    let idx: Option<Vec<usize>> = op.removed.iter().map(|f| g.index_of(f)).collect();
    Ok(match idx.as_deref() {
        Some([i]) => !g.neighbors(*i).is_empty(),
        Some([i, j]) => g.neighbors(*i).contains(j),
        _ => false,
    })
}

/// Which family of generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Uniform over candidate repairs.
    Ur,
    /// Uniform over complete sequences.
    Us,
    /// Uniform over operations at each step.
    Uo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GeneratorKind {
    pub family: Family,
    pub singleton_only: bool,
}

impl GeneratorKind {
    pub const UR: GeneratorKind = GeneratorKind::new(Family::Ur, false);
    pub const US: GeneratorKind = GeneratorKind::new(Family::Us, false);
    pub const UO: GeneratorKind = GeneratorKind::new(Family::Uo, false);
    pub const UR1: GeneratorKind = GeneratorKind::new(Family::Ur, true);
    pub const US1: GeneratorKind = GeneratorKind::new(Family::Us, true);
    pub const UO1: GeneratorKind = GeneratorKind::new(Family::Uo, true);

    pub const ALL: [GeneratorKind; 6] = [
        Self::UR,
        Self::US,
        Self::UO,
        Self::UR1,
        Self::US1,
        Self::UO1,
    ];

    pub const fn new(family: Family, singleton_only: bool) -> Self {
        GeneratorKind {
            family,
            singleton_only,
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.family {
            Family::Ur => "ur",
            Family::Us => "us",
            Family::Uo => "uo",
        };
        write!(f, "{base}{}", if self.singleton_only { "1" } else { "" })
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GeneratorKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown generator {s:?} (expected ur, us, uo, ur1, us1, uo1)")))
    }
}

/// Tie-break among complete sequences reaching the same repair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CanonicalOrdering {
    /// First in depth-first order of the repairing tree.
    #[default]
    DepthFirst,
    /// Last in depth-first order.
    ReverseDepthFirst,
}

/// `Ops_s(D)` at the database `current`, in canonical order.
pub fn justified_ops(
    current: &Database,
    sigma: &[FunctionalDependency],
    singleton_only: bool,
) -> Result<Vec<Operation>> {
    let g = conflict_graph(current, sigma)?;
    let mut ops = Vec::new();
    for i in 0..g.node_count() {
        let nb = g.neighbors(i);
        if nb.is_empty() {
            continue;
        }
        ops.push(Operation::single(g.nodes[i].clone()));
        if !singleton_only {
            for &j in nb.iter().filter(|&&j| j > i) {
                ops.push(Operation::pair(g.nodes[i].clone(), g.nodes[j].clone()));
            }
        }
    }
    Ok(ops)
}

/// All complete sequences, depth-first.
pub fn enumerate_sequences(
    db: &Database,
    sigma: &[FunctionalDependency],
    singleton_only: bool,
) -> Result<Vec<RepairingSequence>> {
    let space = RepairSpace::new(db, sigma, singleton_only)?;
    Ok(space
        .complete_sequences(DEFAULT_TREE_CAP)?
        .iter()
        .map(|ops| space.to_sequence(ops))
        .collect())
}

/// `CORep` (or `CORep¹`), sorted by fact list.
pub fn candidate_repairs(
    db: &Database,
    sigma: &[FunctionalDependency],
    singleton_only: bool,
) -> Result<Vec<Database>> {
    let space = RepairSpace::new(db, sigma, singleton_only)?;
    let mut repairs: Vec<Database> = space
        .candidate_repair_masks(DEFAULT_TREE_CAP)?
        .into_iter()
        .map(|m| space.to_database(m))
        .collect();
    repairs.sort_by_cached_key(|r| r.facts().cloned().collect::<Vec<_>>());
    Ok(repairs)
}

/// One complete sequence per candidate repair.
pub fn canonical_sequences(
    db: &Database,
    sigma: &[FunctionalDependency],
    singleton_only: bool,
    ordering: CanonicalOrdering,
) -> Result<Vec<RepairingSequence>> {
    let space = RepairSpace::new(db, sigma, singleton_only)?;
    let mut all = space.complete_sequences(DEFAULT_TREE_CAP)?;
    if ordering == CanonicalOrdering::ReverseDepthFirst {
        all.reverse();
    }
    let mut seen = BTreeSet::new();
    let mut picked: Vec<Vec<u64>> = all
        .into_iter()
        .filter(|ops| seen.insert(space.result_of(ops)))
        .collect();
    if ordering == CanonicalOrdering::ReverseDepthFirst {
        picked.reverse();
    }
    Ok(picked.iter().map(|ops| space.to_sequence(ops)).collect())
}

pub fn build_chain(
    db: &Database,
    sigma: &[FunctionalDependency],
    kind: GeneratorKind,
) -> Result<RepairingChain> {
    RepairingChain::build(db, sigma, kind, CanonicalOrdering::DepthFirst, DEFAULT_TREE_CAP)
}

/// Probability of each reachable repair (zero-probability repairs omitted).
pub fn repair_distribution(
    db: &Database,
    sigma: &[FunctionalDependency],
    kind: GeneratorKind,
) -> Result<RepairDistribution> {
    build_chain(db, sigma, kind)?.repair_distribution()
}

/// `P_{M,Q}(D, c̄)` computed from the materialised chain.
pub fn exact_answer_probability(
    db: &Database,
    sigma: &[FunctionalDependency],
    kind: GeneratorKind,
    q: &ConjunctiveQuery,
    tuple: &[String],
) -> Result<BigRational> {
    build_chain(db, sigma, kind)?.answer_probability(q, tuple)
}
