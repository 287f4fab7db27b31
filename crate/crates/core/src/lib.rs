//! Operational consistent query answering under functional dependencies.
//!
//! An inconsistent database is repaired by a Markov chain that removes
//! conflicting facts one or two at a time. The answer probability of a
//! tuple is the probability that the chain ends in a repair entailing it.
//! This crate computes those probabilities exactly on small instances,
//! counts repairs and repairing sequences under primary keys, samples from
//! the chains and estimates probabilities with sampling guarantees.

pub mod counting;
pub mod error;
pub mod estimation;
pub mod format;
pub mod instances;
pub mod query;
pub mod relational;
pub mod repair;
pub mod sampling;

pub use error::{Error, Result};
pub use query::{Atom, ConjunctiveQuery, Term};
pub use relational::{Database, Fact, FunctionalDependency, RelationSchema, Schema};
pub use repair::{GeneratorKind, RepairingSequence};
