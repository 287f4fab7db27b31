//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use ocqa_core::query::entails;
use ocqa_core::repair::{candidate_repairs, enumerate_sequences};
use ocqa_core::{ConjunctiveQuery, Database, FunctionalDependency};

pub fn ratio(num: usize, den: usize) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Fraction of candidate repairs entailing the tuple, by enumeration.
pub fn brute_rrfreq(
    db: &Database,
    sigma: &[FunctionalDependency],
    singleton_only: bool,
    q: &ConjunctiveQuery,
    tuple: &[String],
) -> BigRational {
    let repairs = candidate_repairs(db, sigma, singleton_only).unwrap();
    let hits = repairs.iter().filter(|r| entails(r, q, tuple).unwrap()).count();
    ratio(hits, repairs.len())
}

/// Fraction of complete sequences whose result entails the tuple, by enumeration.
pub fn brute_srfreq(
    db: &Database,
    sigma: &[FunctionalDependency],
    singleton_only: bool,
    q: &ConjunctiveQuery,
    tuple: &[String],
) -> BigRational {
    let seqs = enumerate_sequences(db, sigma, singleton_only).unwrap();
    let hits = seqs
        .iter()
        .filter(|s| entails(&s.apply(db, sigma).unwrap(), q, tuple).unwrap())
        .count();
    ratio(hits, seqs.len())
}

/// Every subset of `0..n` as a mask.
pub fn subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u32..1 << n).map(move |m| (0..n).filter(|i| m >> i & 1 == 1).collect())
}
