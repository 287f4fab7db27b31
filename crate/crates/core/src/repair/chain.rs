use std::collections::{BTreeMap, HashSet};
use std::ops::Range;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde_json::{json, Value};

use super::space::{entails_mask, RepairSpace};
use super::{CanonicalOrdering, Family, GeneratorKind, RepairingSequence};
use crate::error::{Error, Result};
use crate::format::format_rational;
use crate::query::ConjunctiveQuery;
use crate::relational::{Database, FunctionalDependency};

/// A node of the repairing tree; the edge from its parent carries `label`.
#[derive(Debug, Clone)]
pub struct ChainNode {
    pub parent: Option<usize>,
    /// Mask of the removed facts (0 at the root).
    pub op: u64,
    /// Mask of the facts still present.
    pub state: u64,
    first_child: usize,
    child_count: usize,
    pub label: BigRational,
}

/// A repairing Markov chain over the materialised repairing tree.
#[derive(Debug, Clone)]
pub struct RepairingChain {
    kind: GeneratorKind,
    ordering: CanonicalOrdering,
    space: RepairSpace,
    nodes: Vec<ChainNode>,
}

fn frac(num: u64, den: u64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

impl RepairingChain {
    pub fn build(
        db: &Database,
        sigma: &[FunctionalDependency],
        kind: GeneratorKind,
        ordering: CanonicalOrdering,
        cap: u64,
    ) -> Result<Self> {
        let space = RepairSpace::new(db, sigma, kind.singleton_only)?;
        let size = space.tree_size(cap)?;
        let mut nodes = Vec::with_capacity(size as usize);
        nodes.push(ChainNode {
            parent: None,
            op: 0,
            state: space.full(),
            first_child: 0,
            child_count: 0,
            label: BigRational::one(),
        });
        let mut next = 0;
        while next < nodes.len() {
            let state = nodes[next].state;
            let ops = space.ops(state);
            nodes[next].first_child = nodes.len();
            nodes[next].child_count = ops.len();
            for op in ops {
                nodes.push(ChainNode {
                    parent: Some(next),
                    op,
                    state: state & !op,
                    first_child: 0,
                    child_count: 0,
                    label: BigRational::zero(),
                });
            }
            next += 1;
        }
        let mut chain = RepairingChain {
            kind,
            ordering,
            space,
            nodes,
        };
        chain.assign_labels();
        Ok(chain)
    }

    fn assign_labels(&mut self) {
        let weights: Option<Vec<u64>> = match self.kind.family {
            Family::Uo => None,
            Family::Us => Some(self.subtree_sums(|_| 1)),
            Family::Ur => {
                let canonical: HashSet<usize> = self.canonical_leaves().into_iter().collect();
                Some(self.subtree_sums(|i| u64::from(canonical.contains(&i))))
            }
        };
        for i in 1..self.nodes.len() {
            let p = self.nodes[i].parent.unwrap();
            let fanout = self.nodes[p].child_count as u64;
            self.nodes[i].label = match &weights {
                Some(w) if w[p] > 0 => frac(w[i], w[p]),
                _ => frac(1, fanout),
            };
        }
    }

    /// Sum of `leaf_weight` over the leaves of each subtree.
    fn subtree_sums(&self, leaf_weight: impl Fn(usize) -> u64) -> Vec<u64> {
        let mut w = vec![0u64; self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            if self.is_leaf(i) {
                w[i] = leaf_weight(i);
            }
            if let Some(p) = self.nodes[i].parent {
                w[p] += w[i];
            }
        }
        w
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    pub fn ordering(&self) -> CanonicalOrdering {
        self.ordering
    }

    pub fn space(&self) -> &RepairSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &ChainNode {
        &self.nodes[i]
    }

    pub fn children(&self, i: usize) -> Range<usize> {
        let n = &self.nodes[i];
        n.first_child..n.first_child + n.child_count
    }

    pub fn is_leaf(&self, i: usize) -> bool {
        self.nodes[i].child_count == 0
    }

    /// Leaves in depth-first order (children in canonical operation order).
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if self.is_leaf(i) {
                out.push(i);
            }
            stack.extend(self.children(i).rev());
        }
        out
    }

    /// One leaf per candidate repair, chosen by the chain's ordering.
    pub fn canonical_leaves(&self) -> Vec<usize> {
        let mut leaves = self.leaves();
        if self.ordering == CanonicalOrdering::ReverseDepthFirst {
            leaves.reverse();
        }
        let mut seen = HashSet::new();
        let mut picked: Vec<usize> = leaves
            .into_iter()
            .filter(|&l| seen.insert(self.nodes[l].state))
            .collect();
        picked.sort_unstable_by_key(|&l| self.dfs_rank(l));
        picked
    }

    fn dfs_rank(&self, leaf: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut i = leaf;
        while let Some(p) = self.nodes[i].parent {
            path.push(i - self.nodes[p].first_child);
            i = p;
        }
        path.reverse();
        path
    }

    /// The sequence labelling the path from the root to `i`.
    pub fn sequence(&self, i: usize) -> RepairingSequence {
        let mut ops = Vec::new();
        let mut cur = i;
        while let Some(p) = self.nodes[cur].parent {
            ops.push(self.nodes[cur].op);
            cur = p;
        }
        ops.reverse();
        self.space.to_sequence(&ops)
    }

    pub fn result(&self, i: usize) -> Database {
        self.space.to_database(self.nodes[i].state)
    }

    /// Path probability of every node.
    fn path_probabilities(&self) -> Vec<BigRational> {
        let mut pi = vec![BigRational::zero(); self.nodes.len()];
        pi[0] = BigRational::one();
        for i in 1..self.nodes.len() {
            let p = self.nodes[i].parent.unwrap();
            pi[i] = &pi[p] * &self.nodes[i].label;
        }
        pi
    }

    /// `(leaf, π(leaf))` in depth-first order; checks the total is one.
    pub fn leaf_probabilities(&self) -> Result<Vec<(usize, BigRational)>> {
        let pi = self.path_probabilities();
        let out: Vec<(usize, BigRational)> = self
            .leaves()
            .into_iter()
            .map(|l| (l, pi[l].clone()))
            .collect();
        let total: BigRational = out.iter().map(|(_, p)| p.clone()).sum();
        if !total.is_one() {
            return Err(Error::Consistency(format!(
                "leaf probabilities sum to {total}, not 1"
            )));
        }
        Ok(out)
    }

    pub fn leaf_distribution(&self) -> Result<Vec<(RepairingSequence, BigRational)>> {
        Ok(self
            .leaf_probabilities()?
            .into_iter()
            .map(|(l, p)| (self.sequence(l), p))
            .collect())
    }

    pub fn repair_distribution(&self) -> Result<RepairDistribution> {
        let mut by_state: BTreeMap<u64, BigRational> = BTreeMap::new();
        for (l, p) in self.leaf_probabilities()? {
            *by_state.entry(self.nodes[l].state).or_insert_with(BigRational::zero) += p;
        }
        let mut entries: Vec<(Database, BigRational)> = by_state
            .into_iter()
            .filter(|(_, p)| !p.is_zero())
            .map(|(s, p)| (self.space.to_database(s), p))
            .collect();
        entries.sort_by(|a, b| a.0.fact_set().iter().cmp(b.0.fact_set().iter()));
        Ok(RepairDistribution { entries })
    }

    pub fn answer_probability(&self, q: &ConjunctiveQuery, tuple: &[String]) -> Result<BigRational> {
        let w = self.space.witness_masks(q, tuple)?;
        Ok(self
            .leaf_probabilities()?
            .into_iter()
            .filter(|(l, _)| entails_mask(&w, self.nodes[*l].state))
            .map(|(_, p)| p)
            .sum())
    }

    /// Nodes with parent, removed facts, edge label and (for leaves) result and path probability.
    pub fn to_json(&self) -> Value {
        let pi = self.path_probabilities();
        let nodes: Vec<Value> = (0..self.nodes.len())
            .map(|i| {
                let n = &self.nodes[i];
                let op: Vec<String> = self
                    .space
                    .to_operation(n.op)
                    .removed
                    .iter()
                    .map(|f| f.to_string())
                    .collect();
                let mut v = json!({
                    "id": i,
                    "parent": n.parent,
                    "op": op,
                    "label": format_rational(&n.label),
                    "children": self.children(i).collect::<Vec<_>>(),
                });
                if self.is_leaf(i) {
                    let result: Vec<String> = self.result(i).facts().map(|f| f.to_string()).collect();
                    v["result"] = json!(result);
                    v["pi"] = json!(format_rational(&pi[i]));
                }
                v
            })
            .collect();
        json!({
            "generator": self.kind.to_string(),
            "facts": self.space.facts().iter().map(|f| f.to_string()).collect::<Vec<_>>(),
            "nodes": nodes,
        })
    }
}

/// Reachable repairs with their probabilities, sorted by fact list.
#[derive(Debug, Clone, PartialEq)]
pub struct RepairDistribution {
    pub entries: Vec<(Database, BigRational)>,
}

impl RepairDistribution {
    pub fn get(&self, repair: &Database) -> BigRational {
        self.entries
            .iter()
            .find(|(d, _)| d.fact_set() == repair.fact_set())
            .map(|(_, p)| p.clone())
            .unwrap_or_else(BigRational::zero)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> BigRational {
        self.entries.iter().map(|(_, p)| p.clone()).sum()
    }
}
