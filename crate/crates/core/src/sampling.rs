//! Exact samplers for the repairing chains.

use num_bigint::{BigUint, RandBigInt};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::counting::SequenceCounter;
use crate::error::{Error, Result};
use crate::relational::{blocks, conflict_graph, is_primary_keys, Database, Fact, FunctionalDependency};
use crate::repair::{Family, GeneratorKind, Operation, RepairingSequence};

/// Seeded ChaCha8 stream: `seed` fixes the key, `stream` selects an
/// independent stream under that key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomSource {
    pub seed: u64,
    pub stream: u64,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource { seed, stream: 0 }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        RandomSource { stream, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleOutcome {
    /// The sampled complete sequence; `None` for repair-uniform generators.
    pub sequence: Option<RepairingSequence>,
    pub repair: Database,
    /// Always 1: every sampler draws directly from its target distribution.
    pub weight: u32,
}

const NONE: usize = usize::MAX;

/// Reusable sampler over one instance and generator.
#[derive(Debug, Clone)]
pub struct Sampler {
    kind: GeneratorKind,
    db: Database,
    facts: Vec<Fact>,
    neighbors: Vec<Vec<usize>>,
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
    counter: SequenceCounter,
    alive: Vec<bool>,
    remaining: Vec<usize>,
    ops: Vec<(usize, usize)>,
    path: Vec<(usize, usize)>,
}

impl Sampler {
    pub fn new(db: &Database, sigma: &[FunctionalDependency], kind: GeneratorKind) -> Result<Self> {
        let g = conflict_graph(db, sigma)?;
        let n = g.node_count();
        let neighbors: Vec<Vec<usize>> = (0..n).map(|i| g.neighbors(i).to_vec()).collect();
        let mut block_list = Vec::new();
        let mut block_of = vec![NONE; n];
        if kind.family != Family::Uo {
            if !is_primary_keys(db.schema(), sigma)? {
                return Err(Error::Unsupported(format!(
                    "generator {kind} needs primary keys; uo and uo1 accept any FDs"
                )));
            }
            for b in blocks(db, sigma)? {
                let idx: Vec<usize> = b.facts.iter().map(|f| g.index_of(f).unwrap()).collect();
                for &i in &idx {
                    block_of[i] = block_list.len();
                }
                block_list.push(idx);
            }
        }
        Ok(Sampler {
            kind,
            db: db.clone(),
            facts: g.nodes,
            neighbors,
            remaining: vec![0; block_list.len()],
            blocks: block_list,
            block_of,
            counter: SequenceCounter::new(kind.singleton_only),
            alive: vec![true; n],
            ops: Vec::new(),
            path: Vec::new(),
        })
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    /// Draw one outcome; the result is the alive-mask over `facts()`.
    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[bool] {
        self.alive.iter_mut().for_each(|a| *a = true);
        self.path.clear();
        match self.kind.family {
            Family::Ur => self.draw_repair(rng),
            Family::Us => self.draw_sequence_uniform(rng),
            Family::Uo => self.draw_uniform_ops(rng),
        }
        &self.alive
    }

    /// The operations of the last draw, as fact-index pairs (`usize::MAX` for none).
    pub fn last_path(&self) -> &[(usize, usize)] {
        &self.path
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> SampleOutcome {
        self.draw(rng);
        let repair = self.db.restrict(
            self.facts
                .iter()
                .zip(&self.alive)
                .filter(|(_, &a)| a)
                .map(|(f, _)| f),
        );
        let sequence = (self.kind.family != Family::Ur).then(|| {
            RepairingSequence::new(
                self.path
                    .iter()
                    .map(|&(i, j)| {
                        if j == NONE {
                            Operation::single(self.facts[i].clone())
                        } else {
                            Operation::pair(self.facts[i].clone(), self.facts[j].clone())
                        }
                    })
                    .collect(),
            )
        });
        SampleOutcome {
            sequence,
            repair,
            weight: 1,
        }
    }

    fn draw_repair<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for block in &self.blocks {
            let m = block.len();
            if m < 2 {
                continue;
            }
            let choice = if self.kind.singleton_only {
                rng.gen_range(0..m)
            } else {
                rng.gen_range(0..=m)
            };
            for (pos, &i) in block.iter().enumerate() {
                self.alive[i] = pos == choice;
            }
        }
    }

    /// Justified operations at the current alive-mask, canonical order.
    fn collect_ops(&mut self) {
        self.ops.clear();
        for i in 0..self.facts.len() {
            if !self.alive[i] {
                continue;
            }
            let nb = &self.neighbors[i];
            if !nb.iter().any(|&j| self.alive[j]) {
                continue;
            }
            self.ops.push((i, NONE));
            if !self.kind.singleton_only {
                for &j in nb {
                    if j > i && self.alive[j] {
                        self.ops.push((i, j));
                    }
                }
            }
        }
    }

    fn apply(&mut self, op: (usize, usize)) {
        self.alive[op.0] = false;
        if op.1 != NONE {
            self.alive[op.1] = false;
        }
        self.path.push(op);
    }

    fn draw_uniform_ops<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        loop {
            self.collect_ops();
            if self.ops.is_empty() {
                return;
            }
            let op = self.ops[rng.gen_range(0..self.ops.len())];
            self.apply(op);
        }
    }

    fn draw_sequence_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for (b, block) in self.blocks.iter().enumerate() {
            self.remaining[b] = block.len();
        }
        let mut weights: Vec<Option<(BigUint, BigUint)>> = vec![None; self.blocks.len()];
        loop {
            self.collect_ops();
            if self.ops.is_empty() {
                return;
            }
            weights.iter_mut().for_each(|w| *w = None);
            let total = self.counter.count(&self.remaining);
            let mut r = rng.gen_biguint_below(&total);
            let mut chosen = None;
            for &op in &self.ops {
                let b = self.block_of[op.0];
                if weights[b].is_none() {
                    let mut profile = self.remaining.clone();
                    profile[b] -= 1;
                    let single = self.counter.count(&profile);
                    let pair = if profile[b] >= 1 {
                        profile[b] -= 1;
                        self.counter.count(&profile)
                    } else {
                        BigUint::default()
                    };
                    weights[b] = Some((single, pair));
                }
                let (single, pair) = weights[b].as_ref().unwrap();
                let w = if op.1 == NONE { single } else { pair };
                if r < *w {
                    chosen = Some(op);
                    break;
                }
                r -= w;
            }
            let op = chosen.expect("operation weights sum to the sequence count");
            self.remaining[self.block_of[op.0]] -= if op.1 == NONE { 1 } else { 2 };
            self.apply(op);
        }
    }
}

/// Uniform candidate repair (or singleton-operation repair) under primary keys.
pub fn sample_repair_uniform<R: Rng + ?Sized>(
    db: &Database,
    sigma: &[FunctionalDependency],
    rng: &mut R,
    singleton_only: bool,
) -> Result<Database> {
    let kind = GeneratorKind::new(Family::Ur, singleton_only);
    Ok(Sampler::new(db, sigma, kind)?.sample(rng).repair)
}

/// Uniform complete sequence under primary keys.
pub fn sample_sequence_uniform<R: Rng + ?Sized>(
    db: &Database,
    sigma: &[FunctionalDependency],
    rng: &mut R,
    singleton_only: bool,
) -> Result<RepairingSequence> {
    let kind = GeneratorKind::new(Family::Us, singleton_only);
    Ok(Sampler::new(db, sigma, kind)?.sample(rng).sequence.unwrap())
}

/// Complete sequence built by picking a uniform justified operation per step.
pub fn sample_sequence_uo<R: Rng + ?Sized>(
    db: &Database,
    sigma: &[FunctionalDependency],
    rng: &mut R,
    singleton_only: bool,
) -> Result<RepairingSequence> {
    let kind = GeneratorKind::new(Family::Uo, singleton_only);
    Ok(Sampler::new(db, sigma, kind)?.sample(rng).sequence.unwrap())
}

pub fn sample<R: Rng + ?Sized>(
    db: &Database,
    sigma: &[FunctionalDependency],
    kind: GeneratorKind,
    rng: &mut R,
) -> Result<SampleOutcome> {
    Ok(Sampler::new(db, sigma, kind)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::fixtures;
    use crate::relational::satisfies;

    #[test]
    fn same_seed_same_stream() {
        let (db, sigma) = fixtures::primary_key_example();
        for kind in GeneratorKind::ALL {
            let mut a = RandomSource::new(7).rng();
            let mut b = RandomSource::new(7).rng();
            let mut s = Sampler::new(&db, &sigma, kind).unwrap();
            let x: Vec<_> = (0..20).map(|_| s.sample(&mut a)).collect();
            let y: Vec<_> = (0..20).map(|_| s.sample(&mut b)).collect();
            assert_eq!(x, y);
        }
        let mut a = RandomSource::new(7).rng();
        let mut b = RandomSource::new(7).with_stream(1).rng();
        assert_ne!(a.gen::<u64>(), b.gen::<u64>());
    }

    #[test]
    fn samples_are_complete() {
        let (db, sigma) = fixtures::primary_key_example();
        let mut rng = RandomSource::new(1).rng();
        for kind in GeneratorKind::ALL {
            let mut s = Sampler::new(&db, &sigma, kind).unwrap();
            for _ in 0..50 {
                let out = s.sample(&mut rng);
                assert!(satisfies(&out.repair, &sigma).unwrap());
                if let Some(seq) = out.sequence {
                    assert_eq!(seq.apply(&db, &sigma).unwrap(), out.repair);
                }
            }
        }
    }

    #[test]
    fn non_key_constraints_rejected_for_uniform_generators() {
        let (db, sigma) = fixtures::path_fd_example();
        let mut rng = RandomSource::new(1).rng();
        assert!(matches!(
            sample_repair_uniform(&db, &sigma, &mut rng, false),
            Err(Error::Unsupported(_))
        ));
        assert!(sample_sequence_uo(&db, &sigma, &mut rng, true).is_ok());
    }
}
