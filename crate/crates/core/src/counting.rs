//! Closed-form and dynamic-programming counts of repairs and complete
//! repairing sequences under primary keys.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::relational::{blocks, Database, FunctionalDependency};

pub fn factorial(n: usize) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc * k)
}

pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    (0..k).fold(BigUint::one(), |acc, i| acc * (n - i) / (i + 1))
}

/// Complete sequences of one block of size `m` using exactly `i` pair
/// removals, ending with the block empty (`empties`) or with one survivor.
pub fn block_seq_count(m: usize, i: usize, empties: bool) -> Result<BigUint> {
    if m < 2 {
        return Err(Error::Precondition(format!("block size {m} < 2")));
    }
    if 2 * i > m {
        return Err(Error::Precondition(format!(
            "{i} pair removals impossible in a block of size {m}"
        )));
    }
    let num = factorial(m);
    Ok(if empties {
        if i == 0 {
            BigUint::zero()
        } else {
            num * factorial(m - i - 1)
                / (BigUint::from(2u32).pow(i as u32) * factorial(i - 1) * factorial(m - 2 * i))
        }
    } else if 2 * i == m {
        BigUint::zero()
    } else {
        num * factorial(m - i - 1)
            / (BigUint::from(2u32).pow(i as u32) * factorial(i) * factorial(m - 2 * i - 1))
    })
}

/// `P_j^{k,i}`: interleavings of complete sequences of the first `j` blocks
/// with `k` non-emptied blocks and `i` pair removals in total.
#[derive(Debug, Clone)]
pub struct SequenceCountTable {
    sizes: Vec<usize>,
    cells: Vec<Vec<Vec<BigUint>>>,
}

impl SequenceCountTable {
    /// Table over blocks of the given sizes (each at least 2), in order.
    pub fn new(sizes: &[usize]) -> Result<Self> {
        Self::build(sizes, false)
    }

    /// Same recurrence with every pair term zeroed.
    pub fn singleton(sizes: &[usize]) -> Result<Self> {
        Self::build(sizes, true)
    }

    fn build(sizes: &[usize], singleton_only: bool) -> Result<Self> {
        if let Some(&m) = sizes.iter().find(|&&m| m < 2) {
            return Err(Error::Precondition(format!("block size {m} < 2")));
        }
        let mut cells = vec![vec![vec![BigUint::one()]]];
        let mut total_facts = 0usize;
        let mut max_pairs = 0usize;
        for (j, &m) in sizes.iter().enumerate() {
            let pairs_here = if singleton_only { 0 } else { m / 2 };
            let prev = &cells[j];
            let next_max = max_pairs + pairs_here;
            let mut next = vec![vec![BigUint::zero(); next_max + 1]; j + 2];
            let t = total_facts + m;
            for (k, row) in prev.iter().enumerate() {
                for (i1, p) in row.iter().enumerate() {
                    if p.is_zero() {
                        continue;
                    }
                    for i2 in 0..=pairs_here {
                        let i = i1 + i2;
                        let emptied = block_seq_count(m, i2, true)?;
                        if !emptied.is_zero() {
                            let ops = t - i - k;
                            next[k][i] += p * &emptied * binomial(ops, m - i2);
                        }
                        let kept = block_seq_count(m, i2, false)?;
                        if !kept.is_zero() {
                            let ops = t - i - k - 1;
                            next[k + 1][i] += p * &kept * binomial(ops, m - i2 - 1);
                        }
                    }
                }
            }
            cells.push(next);
            total_facts = t;
            max_pairs = next_max;
        }
        Ok(SequenceCountTable {
            sizes: sizes.to_vec(),
            cells,
        })
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// `P_j^{k,i}`; zero outside the table.
    pub fn cell(&self, j: usize, k: usize, i: usize) -> BigUint {
        self.cells
            .get(j)
            .and_then(|rows| rows.get(k))
            .and_then(|row| row.get(i))
            .cloned()
            .unwrap_or_default()
    }

    /// `Σ_{k,i} P_n^{k,i}`.
    pub fn total(&self) -> BigUint {
        self.cells
            .last()
            .map(|rows| rows.iter().flatten().sum())
            .unwrap_or_default()
    }
}

/// Sizes of the blocks with at least two facts, in block order.
pub fn conflicting_block_sizes(db: &Database, sigma: &[FunctionalDependency]) -> Result<Vec<usize>> {
    Ok(blocks(db, sigma)?
        .iter()
        .map(|b| b.len())
        .filter(|&m| m >= 2)
        .collect())
}

/// `|CORep(D, Σ)| = Π (|B|+1)` over blocks with conflicts.
pub fn count_candidate_repairs(db: &Database, sigma: &[FunctionalDependency]) -> Result<BigUint> {
    Ok(conflicting_block_sizes(db, sigma)?
        .into_iter()
        .map(|m| BigUint::from(m + 1))
        .product())
}

/// `|CORep¹(D, Σ)| = Π |B|` over all blocks.
pub fn count_candidate_repairs_singleton(db: &Database, sigma: &[FunctionalDependency]) -> Result<BigUint> {
    Ok(conflicting_block_sizes(db, sigma)?
        .into_iter()
        .map(BigUint::from)
        .product())
}

/// `|CRS(D, Σ)|`.
pub fn count_complete_sequences(db: &Database, sigma: &[FunctionalDependency]) -> Result<BigUint> {
    Ok(SequenceCountTable::new(&conflicting_block_sizes(db, sigma)?)?.total())
}

/// `|CRS¹(D, Σ)|`, closed form.
pub fn count_complete_sequences_singleton(db: &Database, sigma: &[FunctionalDependency]) -> Result<BigUint> {
    Ok(singleton_sequence_count(&conflicting_block_sizes(db, sigma)?))
}

/// `(Σ(m-1))! / Π(m-1)! · Π m!` for block sizes `m`.
pub fn singleton_sequence_count(sizes: &[usize]) -> BigUint {
    let ops: usize = sizes.iter().map(|m| m - 1).sum();
    let mut out = factorial(ops);
    for &m in sizes {
        out /= factorial(m - 1);
    }
    for &m in sizes {
        out *= factorial(m);
    }
    out
}

/// Complete-sequence count for a profile of block sizes (order irrelevant,
/// sizes below 2 ignored).
pub fn sequence_count_for_profile(sizes: &[usize], singleton_only: bool) -> BigUint {
    let s: Vec<usize> = sizes.iter().copied().filter(|&m| m >= 2).collect();
    if singleton_only {
        singleton_sequence_count(&s)
    } else {
        SequenceCountTable::new(&s).expect("sizes >= 2").total()
    }
}

/// `|CRS_s(D, Σ)|` where `current = s(D)`.
pub fn residual_sequence_count(
    current: &Database,
    sigma: &[FunctionalDependency],
    singleton_only: bool,
) -> Result<BigUint> {
    Ok(sequence_count_for_profile(
        &conflicting_block_sizes(current, sigma)?,
        singleton_only,
    ))
}

/// Memoised profile counts, keyed by the sorted multiset of block sizes.
#[derive(Debug, Clone, Default)]
pub struct SequenceCounter {
    singleton_only: bool,
    memo: HashMap<Vec<usize>, BigUint>,
}

impl SequenceCounter {
    pub fn new(singleton_only: bool) -> Self {
        SequenceCounter {
            singleton_only,
            memo: HashMap::new(),
        }
    }

    pub fn count(&mut self, sizes: &[usize]) -> BigUint {
        let mut key: Vec<usize> = sizes.iter().copied().filter(|&m| m >= 2).collect();
        key.sort_unstable();
        if let Some(v) = self.memo.get(&key) {
            return v.clone();
        }
        let v = sequence_count_for_profile(&key, self.singleton_only);
        self.memo.insert(key, v.clone());
        v
    }
}
