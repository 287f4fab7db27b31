//! Monte Carlo estimation of answer probabilities.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rayon::prelude::*;
use serde::Serialize;

use crate::counting::factorial;
use crate::error::{Error, Result};
use crate::query::{witnesses, ConjunctiveQuery};
use crate::relational::{is_keys, is_primary_keys, Database, FunctionalDependency};
use crate::repair::{Family, GeneratorKind};
use crate::sampling::{RandomSource, Sampler};

/// Trials per RNG stream; trial `t` always uses stream chunk `t / TRIALS_PER_STREAM`.
pub const TRIALS_PER_STREAM: u64 = 4096;

/// Upper rational approximation of e.
fn e_upper() -> BigRational {
    BigRational::new(BigInt::from(27_182_818_285u64), BigInt::from(10_000_000_000u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimationMode {
    Additive,
    Multiplicative,
    Adaptive,
}

impl fmt::Display for EstimationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimationMode::Additive => "additive",
            EstimationMode::Multiplicative => "multiplicative",
            EstimationMode::Adaptive => "adaptive",
        })
    }
}

impl FromStr for EstimationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "additive" => Ok(EstimationMode::Additive),
            "multiplicative" | "multiplicative_bound" => Ok(EstimationMode::Multiplicative),
            "adaptive" => Ok(EstimationMode::Adaptive),
            _ => Err(Error::Parse(format!(
                "unknown mode {s:?} (expected additive, multiplicative, adaptive)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub mode: EstimationMode,
    pub max_samples: u64,
    /// Worker threads for fixed-size modes; results do not depend on it.
    pub threads: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            epsilon: 0.1,
            delta: 0.05,
            mode: EstimationMode::Adaptive,
            max_samples: 100_000_000,
            threads: 1,
        }
    }
}

impl EstimatorConfig {
    pub fn new(epsilon: f64, delta: f64, mode: EstimationMode) -> Self {
        EstimatorConfig {
            epsilon,
            delta,
            mode,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let open = |x: f64| x > 0.0 && x < 1.0;
        if !open(self.epsilon) || !open(self.delta) {
            return Err(Error::Precondition(format!(
                "epsilon and delta must lie in (0,1), got {} and {}",
                self.epsilon, self.delta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub samples_used: u64,
    pub successes: u64,
    pub mode: EstimationMode,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(serialize_with = "crate::format::serialize_opt_rational")]
    pub lower_bound_used: Option<BigRational>,
    /// Every sample failed; the reported value is 0.
    pub flagged_zero: bool,
    /// The adaptive rule hit `max_samples` before stopping.
    pub budget_exhausted: bool,
}

/// `⌈ln(2/δ) / (2ε²)⌉`.
pub fn additive_sample_size(epsilon: f64, delta: f64) -> u64 {
    ((2.0 / delta).ln() / (2.0 * epsilon * epsilon)).ceil() as u64
}

/// `⌈3 ln(2/δ) / (ε² L)⌉`, saturating at `u64::MAX`.
pub fn multiplicative_sample_size(epsilon: f64, delta: f64, bound: &BigRational) -> u64 {
    let l = bound.to_f64().unwrap_or(0.0);
    let n = (3.0 * (2.0 / delta).ln() / (epsilon * epsilon * l)).ceil();
    if n.is_finite() && n < u64::MAX as f64 {
        n as u64
    } else {
        u64::MAX
    }
}

/// Success count at which the stopping rule halts: `1 + (1+ε)·4(e-2)ln(2/δ)/ε²`.
pub fn stopping_rule_threshold(epsilon: f64, delta: f64) -> f64 {
    let upsilon = 4.0 * (std::f64::consts::E - 2.0) * (2.0 / delta).ln() / (epsilon * epsilon);
    1.0 + (1.0 + epsilon) * upsilon
}

fn unit_over(base: BigRational, power: usize) -> BigRational {
    BigRational::one() / num_traits::pow(base, power)
}

/// Conservative rational for `1 / pol(|D|)`, the bound for the
/// uniform-operations chain over keys: `e` is replaced by 3 and `√|D|` by
/// its ceiling, both of which only shrink the bound.
pub fn uo_keys_bound(db_size: usize, query_atoms: usize, constraint_count: usize) -> BigRational {
    let d = BigUint::from(db_size);
    let q = query_atoms as u32;
    let qs = (query_atoms * constraint_count) as u32;
    let three = BigUint::from(3u32);
    let mut sqrt = d.sqrt();
    if &sqrt * &sqrt != d {
        sqrt += 1u32;
    }
    let fact_arg = ((qs + q + 1) * (qs + q + 1)) as usize;
    let pol2 = factorial(fact_arg) * three.pow(5 * qs) * (sqrt + 5 * qs).pow(5 * qs);
    let pol1 = (&three * q).pow(q + 2)
        * (&three * (&d + q - 1u32)).pow(q)
        * (&three * (&d - BigUint::from(db_size.min(1)))).pow(q);
    let pol = BigUint::one() + pol2 * pol1;
    BigRational::new(BigInt::one(), BigInt::from(pol))
}

/// A guaranteed lower bound on any positive answer probability, when one is known.
pub fn lower_bound(
    kind: GeneratorKind,
    db: &Database,
    sigma: &[FunctionalDependency],
    q: &ConjunctiveQuery,
) -> Result<Option<BigRational>> {
    let n = db.len();
    let m = q.atom_count();
    if n == 0 {
        return Ok(Some(BigRational::one()));
    }
    let size = BigRational::from_integer(BigInt::from(n));
    let primary = is_primary_keys(db.schema(), sigma)?;
    Ok(match (kind.family, kind.singleton_only) {
        (Family::Ur | Family::Us, false) if primary => {
            Some(unit_over(size * BigRational::from_integer(2.into()), m))
        }
        (Family::Ur | Family::Us, true) if primary => Some(unit_over(size, m)),
        (Family::Uo, true) => Some(unit_over(size * e_upper(), m)),
        (Family::Uo, false) if is_keys(db.schema(), sigma)? => Some(uo_keys_bound(n, m, sigma.len())),
        _ => None,
    })
}

#[derive(Clone)]
struct TrialRunner {
    sampler: Sampler,
    witnesses: Vec<Vec<usize>>,
}

impl TrialRunner {
    fn new(
        db: &Database,
        sigma: &[FunctionalDependency],
        kind: GeneratorKind,
        q: &ConjunctiveQuery,
        tuple: &[String],
    ) -> Result<Self> {
        let sampler = Sampler::new(db, sigma, kind)?;
        let facts = sampler.facts();
        let witnesses = witnesses(q, db, tuple)?
            .iter()
            .map(|w| w.iter().map(|f| facts.binary_search(f).unwrap()).collect())
            .collect();
        Ok(TrialRunner { sampler, witnesses })
    }

    fn chunk(&mut self, source: &RandomSource, chunk: u64, trials: u64, stop_at: Option<u64>) -> (u64, u64) {
        let mut rng = source
            .with_stream((source.stream << 32).wrapping_add(chunk))
            .rng();
        let (mut done, mut hits) = (0u64, 0u64);
        while done < trials {
            let alive = self.sampler.draw(&mut rng);
            done += 1;
            if self.witnesses.iter().any(|w| w.iter().all(|&i| alive[i])) {
                hits += 1;
                if stop_at == Some(hits) {
                    break;
                }
            }
        }
        (done, hits)
    }

    fn run_fixed(&self, n: u64, source: &RandomSource, threads: usize) -> Result<u64> {
        let chunks = n.div_ceil(TRIALS_PER_STREAM);
        let size = |c: u64| TRIALS_PER_STREAM.min(n - c * TRIALS_PER_STREAM);
        if threads <= 1 {
            let mut runner = self.clone();
            return Ok((0..chunks).map(|c| runner.chunk(source, c, size(c), None).1).sum());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
        Ok(pool.install(|| {
            (0..chunks)
                .into_par_iter()
                .map_init(|| self.clone(), |r, c| r.chunk(source, c, size(c), None).1)
                .sum()
        }))
    }
}

fn finish(
    config: &EstimatorConfig,
    n: u64,
    successes: u64,
    value: f64,
    lower_bound_used: Option<BigRational>,
) -> Estimate {
    Estimate {
        value,
        samples_used: n,
        successes,
        mode: config.mode,
        epsilon: config.epsilon,
        delta: config.delta,
        lower_bound_used,
        flagged_zero: successes == 0,
        budget_exhausted: false,
    }
}

fn check_budget(n: u64, config: &EstimatorConfig) -> Result<()> {
    if n > config.max_samples {
        return Err(Error::cap("required sample count", n, config.max_samples));
    }
    Ok(())
}

/// Fixed `N` with absolute error at most ε with probability at least 1-δ.
pub fn estimate_additive(
    db: &Database,
    sigma: &[FunctionalDependency],
    kind: GeneratorKind,
    q: &ConjunctiveQuery,
    tuple: &[String],
    config: &EstimatorConfig,
    source: &RandomSource,
) -> Result<Estimate> {
    config.validate()?;
    let runner = TrialRunner::new(db, sigma, kind, q, tuple)?;
    let n = additive_sample_size(config.epsilon, config.delta);
    check_budget(n, config)?;
    let s = runner.run_fixed(n, source, config.threads)?;
    Ok(finish(config, n, s, s as f64 / n as f64, None))
}

/// Fixed `N` from the lower bound; relative error at most ε for positive targets.
pub fn estimate_multiplicative(
    db: &Database,
    sigma: &[FunctionalDependency],
    kind: GeneratorKind,
    q: &ConjunctiveQuery,
    tuple: &[String],
    config: &EstimatorConfig,
    source: &RandomSource,
) -> Result<Estimate> {
    config.validate()?;
    let bound = lower_bound(kind, db, sigma, q)?.ok_or_else(|| {
        Error::Unsupported(format!(
            "no lower bound for generator {kind} under these constraints; use additive or adaptive mode"
        ))
    })?;
    let runner = TrialRunner::new(db, sigma, kind, q, tuple)?;
    let n = multiplicative_sample_size(config.epsilon, config.delta, &bound);
    check_budget(n, config)?;
    let s = runner.run_fixed(n, source, config.threads)?;
    Ok(finish(config, n, s, s as f64 / n as f64, Some(bound)))
}

/// Stopping-rule estimator: sample until the success count reaches the
/// threshold, then report threshold / samples.
pub fn estimate_adaptive(
    db: &Database,
    sigma: &[FunctionalDependency],
    kind: GeneratorKind,
    q: &ConjunctiveQuery,
    tuple: &[String],
    config: &EstimatorConfig,
    source: &RandomSource,
) -> Result<Estimate> {
    config.validate()?;
    let mut runner = TrialRunner::new(db, sigma, kind, q, tuple)?;
    if runner.witnesses.is_empty() {
        return Ok(finish(config, 0, 0, 0.0, None));
    }
    let threshold = stopping_rule_threshold(config.epsilon, config.delta);
    let target = threshold.ceil() as u64;
    let (mut n, mut s) = (0u64, 0u64);
    let mut chunk = 0u64;
    while s < target && n < config.max_samples {
        let trials = TRIALS_PER_STREAM.min(config.max_samples - n);
        let (done, hits) = runner.chunk(source, chunk, trials, Some(target - s));
        n += done;
        s += hits;
        chunk += 1;
    }
    if s >= target {
        Ok(finish(config, n, s, threshold / n as f64, None))
    } else {
        let mut est = finish(config, n, s, s as f64 / n as f64, None);
        est.budget_exhausted = true;
        Ok(est)
    }
}

pub fn estimate(
    db: &Database,
    sigma: &[FunctionalDependency],
    kind: GeneratorKind,
    q: &ConjunctiveQuery,
    tuple: &[String],
    config: &EstimatorConfig,
    source: &RandomSource,
) -> Result<Estimate> {
    let f = match config.mode {
        EstimationMode::Additive => estimate_additive,
        EstimationMode::Multiplicative => estimate_multiplicative,
        EstimationMode::Adaptive => estimate_adaptive,
    };
    f(db, sigma, kind, q, tuple, config, source)
}
