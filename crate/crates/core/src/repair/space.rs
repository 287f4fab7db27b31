use std::collections::{BTreeSet, HashMap};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::{Operation, RepairingSequence};
use crate::error::{Error, Result};
use crate::query::{witnesses, ConjunctiveQuery};
use crate::relational::{conflict_graph, Database, Fact, FunctionalDependency};

/// Default cap on the number of repairing-tree nodes (or DAG states).
pub const DEFAULT_TREE_CAP: u64 = 10_000_000;

const MAX_FACTS: usize = 64;

/// Indexed view of the repairing DAG of a small database.
///
/// States and operations are bitmasks over the facts in canonical order.
#[derive(Debug, Clone)]
pub struct RepairSpace {
    db: Database,
    facts: Vec<Fact>,
    adjacency: Vec<u64>,
    singleton_only: bool,
}

impl RepairSpace {
    pub fn new(db: &Database, sigma: &[FunctionalDependency], singleton_only: bool) -> Result<Self> {
        if db.len() > MAX_FACTS {
            return Err(Error::cap("exact repair space (facts)", db.len(), MAX_FACTS as u64));
        }
        let g = conflict_graph(db, sigma)?;
        let adjacency = (0..g.node_count())
            .map(|i| g.neighbors(i).iter().fold(0u64, |m, &j| m | (1 << j)))
            .collect();
        Ok(RepairSpace {
            db: db.clone(),
            facts: g.nodes,
            adjacency,
            singleton_only,
        })
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn database(&self) -> &Database {
        &self.db
    }

    pub fn singleton_only(&self) -> bool {
        self.singleton_only
    }

    pub fn full(&self) -> u64 {
        match self.facts.len() {
            64 => u64::MAX,
            n => (1u64 << n) - 1,
        }
    }

    pub fn adjacency(&self, i: usize) -> u64 {
        self.adjacency[i]
    }

    /// Justified operations at `state`, in canonical order.
    pub fn ops(&self, state: u64) -> Vec<u64> {
        let mut out = Vec::new();
        let mut rest = state;
        while rest != 0 {
            let i = rest.trailing_zeros();
            rest &= rest - 1;
            let nb = self.adjacency[i as usize] & state;
            if nb == 0 {
                continue;
            }
            out.push(1 << i);
            if !self.singleton_only {
                let mut higher = nb & !((2u64 << i) - 1);
                while higher != 0 {
                    let j = higher.trailing_zeros();
                    higher &= higher - 1;
                    out.push((1 << i) | (1 << j));
                }
            }
        }
        out
    }

    pub fn is_consistent(&self, state: u64) -> bool {
        let mut rest = state;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            if self.adjacency[i] & state != 0 {
                return false;
            }
            rest &= rest - 1;
        }
        true
    }

    pub fn to_operation(&self, op: u64) -> Operation {
        Operation {
            removed: bits(op).map(|i| self.facts[i].clone()).collect(),
        }
    }

    pub fn to_sequence(&self, ops: &[u64]) -> RepairingSequence {
        RepairingSequence::new(ops.iter().map(|&op| self.to_operation(op)).collect())
    }

    pub fn to_database(&self, mask: u64) -> Database {
        self.db.restrict(bits(mask).map(|i| &self.facts[i]))
    }

    pub fn mask_of(&self, db: &Database) -> Result<u64> {
        db.facts().try_fold(0u64, |m, f| {
            self.facts
                .binary_search(f)
                .map(|i| m | (1 << i))
                .map_err(|_| Error::Precondition(format!("fact {f} is not in the database")))
        })
    }

    pub fn result_of(&self, ops: &[u64]) -> u64 {
        ops.iter().fold(self.full(), |s, &op| s & !op)
    }

    /// Number of nodes of the repairing tree; errors once it exceeds `cap`.
    pub fn tree_size(&self, cap: u64) -> Result<u64> {
        fn go(space: &RepairSpace, s: u64, cap: u64, memo: &mut HashMap<u64, u64>) -> Option<u64> {
            if let Some(&v) = memo.get(&s) {
                return Some(v);
            }
            let mut total = 1u64;
            for op in space.ops(s) {
                total = total.checked_add(go(space, s & !op, cap, memo)?)?;
                if total > cap {
                    return None;
                }
            }
            memo.insert(s, total);
            Some(total)
        }
        let mut memo = HashMap::new();
        go(self, self.full(), cap, &mut memo)
            .ok_or_else(|| Error::cap("repairing tree (nodes)", format!(">{cap}"), cap))
    }

    /// Operation lists of all complete sequences, depth-first.
    pub fn complete_sequences(&self, cap: u64) -> Result<Vec<Vec<u64>>> {
        self.tree_size(cap)?;
        let mut out = Vec::new();
        let mut path = Vec::new();
        self.collect_leaves(self.full(), &mut path, &mut out);
        Ok(out)
    }

    fn collect_leaves(&self, s: u64, path: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        let ops = self.ops(s);
        if ops.is_empty() {
            out.push(path.clone());
            return;
        }
        for op in ops {
            path.push(op);
            self.collect_leaves(s & !op, path, out);
            path.pop();
        }
    }

    /// Results of complete sequences: the consistent reachable states.
    pub fn candidate_repair_masks(&self, cap: u64) -> Result<BTreeSet<u64>> {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.full()];
        seen.insert(self.full());
        let mut out = BTreeSet::new();
        while let Some(s) = stack.pop() {
            let ops = self.ops(s);
            if ops.is_empty() {
                out.insert(s);
            }
            for op in ops {
                let t = s & !op;
                if seen.insert(t) {
                    if seen.len() as u64 > cap {
                        return Err(Error::cap("repairing DAG (states)", format!(">{cap}"), cap));
                    }
                    stack.push(t);
                }
            }
        }
        Ok(out)
    }

    /// `|CRS|` (or `|CRS¹|`) via memoised counting over states.
    pub fn sequence_count(&self) -> BigUint {
        self.sequence_counts(&[]).0
    }

    /// `(all complete sequences, those whose result entails)` from the full state.
    fn sequence_counts(&self, witness: &[u64]) -> (BigUint, BigUint) {
        fn go(
            space: &RepairSpace,
            s: u64,
            witness: &[u64],
            memo: &mut HashMap<u64, (BigUint, BigUint)>,
        ) -> (BigUint, BigUint) {
            if let Some(v) = memo.get(&s) {
                return v.clone();
            }
            let ops = space.ops(s);
            let v = if ops.is_empty() {
                let hit = if entails_mask(witness, s) { 1u32 } else { 0 };
                (BigUint::one(), BigUint::from(hit))
            } else {
                let mut acc = (BigUint::zero(), BigUint::zero());
                for op in ops {
                    let (a, b) = go(space, s & !op, witness, memo);
                    acc.0 += a;
                    acc.1 += b;
                }
                acc
            };
            memo.insert(s, v.clone());
            v
        }
        go(self, self.full(), witness, &mut HashMap::new())
    }

    /// Masks of the image sets `h(Q)` with `h(x̄) = c̄`.
    pub fn witness_masks(&self, q: &ConjunctiveQuery, tuple: &[String]) -> Result<Vec<u64>> {
        let ws = witnesses(q, &self.db, tuple)?;
        Ok(ws
            .iter()
            .map(|w| {
                w.iter()
                    .map(|f| self.facts.binary_search(f).expect("witness fact in database"))
                    .fold(0u64, |m, i| m | (1 << i))
            })
            .collect())
    }

    /// Relative frequency of `c̄` among candidate repairs.
    pub fn rrfreq(&self, q: &ConjunctiveQuery, tuple: &[String]) -> Result<BigRational> {
        let w = self.witness_masks(q, tuple)?;
        let reps = self.candidate_repair_masks(DEFAULT_TREE_CAP)?;
        let hits = reps.iter().filter(|&&r| entails_mask(&w, r)).count();
        Ok(ratio(BigUint::from(hits), BigUint::from(reps.len())))
    }

    /// Relative frequency of `c̄` among complete sequences.
    pub fn srfreq(&self, q: &ConjunctiveQuery, tuple: &[String]) -> Result<BigRational> {
        let w = self.witness_masks(q, tuple)?;
        let (all, hits) = self.sequence_counts(&w);
        Ok(ratio(hits, all))
    }

    /// Exact probability under the uniform-operations chain, by recursion over states.
    pub fn uo_probability(&self, q: &ConjunctiveQuery, tuple: &[String]) -> Result<BigRational> {
        let w = self.witness_masks(q, tuple)?;
        fn go(space: &RepairSpace, s: u64, w: &[u64], memo: &mut HashMap<u64, BigRational>) -> BigRational {
            if let Some(v) = memo.get(&s) {
                return v.clone();
            }
            let ops = space.ops(s);
            let v = if ops.is_empty() {
                if entails_mask(w, s) {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            } else {
                let n = ops.len();
                let sum: BigRational = ops.into_iter().map(|op| go(space, s & !op, w, memo)).sum();
                sum / BigRational::from_integer(BigInt::from(n))
            };
            memo.insert(s, v.clone());
            v
        }
        Ok(go(self, self.full(), &w, &mut HashMap::new()))
    }
}

pub(crate) fn entails_mask(witness: &[u64], state: u64) -> bool {
    witness.iter().any(|&w| w & !state == 0)
}

pub(crate) fn bits(mut mask: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let i = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(i)
        }
    })
}

fn ratio(num: BigUint, den: BigUint) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}
