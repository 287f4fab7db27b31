use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use serde_json::{json, Value};

use ocqa_core::counting::{
    count_candidate_repairs, count_candidate_repairs_singleton, count_complete_sequences,
    count_complete_sequences_singleton,
};
use ocqa_core::estimation::{estimate, EstimationMode, EstimatorConfig};
use ocqa_core::format::{parse_instance, parse_query, InstanceFile, QueryFile, ResultRecord};
use ocqa_core::instances::{
    gen_fd_lift, gen_fd_star, gen_hcoloring_instance, gen_pos2dnf_instance, Pos2Dnf, Reduction, UndirectedGraph,
};
use ocqa_core::relational::is_primary_keys;
use ocqa_core::repair::{build_chain, RepairSpace, DEFAULT_TREE_CAP};
use ocqa_core::sampling::{RandomSource, Sampler};
use ocqa_core::{ConjunctiveQuery, Database, Error, FunctionalDependency, GeneratorKind};

#[derive(Parser)]
#[command(name = "ocqa", version, about = "Operational consistent query answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact answer probability from the materialised chain.
    Exact {
        db: PathBuf,
        query: PathBuf,
        #[arg(long, default_value = "ur")]
        generator: String,
        /// Comma-separated answer tuple; omit for Boolean queries.
        #[arg(long, default_value = "")]
        tuple: String,
        /// Report every tuple over the active domain.
        #[arg(long)]
        all_answers: bool,
    },
    /// Count repairs or complete repairing sequences.
    Count {
        db: PathBuf,
        #[arg(long, value_enum, default_value = "repairs")]
        what: CountTarget,
    },
    /// Sampling-based estimate of an answer probability.
    Approx {
        db: PathBuf,
        query: PathBuf,
        #[arg(long, default_value = "ur")]
        generator: String,
        #[arg(long, default_value = "")]
        tuple: String,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value = "adaptive")]
        mode: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000_000)]
        max_samples: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Draw sequences or repairs from a generator, one JSON line each.
    Sample {
        db: PathBuf,
        #[arg(long, default_value = "uo")]
        generator: String,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a reduction or family instance.
    Gen {
        #[command(subcommand)]
        family: GenFamily,
        /// Write the instance here instead of stdout.
        #[arg(long, global = true)]
        out: Option<PathBuf>,
        /// Write the query here instead of stdout.
        #[arg(long, global = true)]
        query_out: Option<PathBuf>,
    },
    /// Dump the repairing tree with edge labels as JSON.
    ChainDump {
        db: PathBuf,
        #[arg(long, default_value = "ur")]
        generator: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CountTarget {
    Repairs,
    Repairs1,
    Sequences,
    Sequences1,
    Canonical,
}

#[derive(Subcommand)]
enum GenFamily {
    /// Coloring instance of a graph, e.g. `--nodes 3 --edges 0-1,1-2`.
    Hcoloring {
        #[arg(long)]
        nodes: usize,
        #[arg(long, default_value = "")]
        edges: String,
    },
    /// Instance of a positive 2DNF formula, e.g. `--formula "x&y|x&w"`.
    Pos2dnf {
        #[arg(long)]
        formula: String,
    },
    /// Star instance with `n` facts.
    #[command(name = "fdstar", alias = "fd-star")]
    FdStar {
        #[arg(long)]
        n: usize,
    },
    /// Lift of a connected key instance.
    #[command(name = "fdlift", alias = "fd-lift")]
    FdLift { db: PathBuf },
}

enum Failure {
    Core(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn load_instance(path: &Path) -> CliResult<(Database, Vec<FunctionalDependency>)> {
    Ok(parse_instance(&read(path)?)?)
}

fn load_query(path: &Path, db: &Database) -> CliResult<ConjunctiveQuery> {
    Ok(parse_query(&read(path)?, db.schema())?)
}

fn parse_tuple(text: &str) -> Vec<String> {
    if text.is_empty() {
        Vec::new()
    } else {
        text.split(',').map(|s| s.trim().to_string()).collect()
    }
}

/// Stdout line; a closed pipe is not an error.
fn out(text: &str) {
    let _ = writeln!(io::stdout(), "{text}");
}

fn emit(v: &impl serde::Serialize) {
    out(&serde_json::to_string(v).expect("serializable"));
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}

fn adom_tuples(db: &Database, arity: usize) -> CliResult<Vec<Vec<String>>> {
    let adom: Vec<String> = db.adom().into_iter().map(str::to_string).collect();
    let total = (adom.len() as u64).checked_pow(arity as u32).unwrap_or(u64::MAX);
    const LIMIT: u64 = 100_000;
    if total > LIMIT {
        return Err(Error::CapExceeded {
            what: "answer tuples".into(),
            estimate: total.to_string(),
            cap: LIMIT,
        }
        .into());
    }
    let mut out = vec![Vec::new()];
    for _ in 0..arity {
        out = out
            .into_iter()
            .flat_map(|t| {
                adom.iter().map(move |c| {
                    let mut t = t.clone();
                    t.push(c.clone());
                    t
                })
            })
            .collect();
    }
    Ok(out)
}

fn exact(db: &Path, query: &Path, generator: &str, tuple: &str, all: bool) -> CliResult<()> {
    let start = Instant::now();
    let kind: GeneratorKind = generator.parse()?;
    let (db, sigma) = load_instance(db)?;
    let q = load_query(query, &db)?;
    let chain = build_chain(&db, &sigma, kind)?;
    let tuples = if all {
        adom_tuples(&db, q.answer_vars().len())?
    } else {
        vec![parse_tuple(tuple)]
    };
    let results: Vec<(Vec<String>, BigRational)> = tuples
        .into_iter()
        .map(|t| chain.answer_probability(&q, &t).map(|p| (t, p)))
        .collect::<Result<_, _>>()?;
    for (t, p) in results {
        let mut rec = ResultRecord::new("exact").with_probability(&p);
        rec.generator = Some(kind.to_string());
        rec.tuple = Some(t);
        rec.wall_time_ms = elapsed_ms(start);
        emit(&rec);
    }
    Ok(())
}

fn count(db: &Path, what: CountTarget) -> CliResult<()> {
    let start = Instant::now();
    let (db, sigma) = load_instance(db)?;
    let primary = is_primary_keys(db.schema(), &sigma)?;
    let singleton = matches!(what, CountTarget::Repairs1 | CountTarget::Sequences1);
    let value = match what {
        CountTarget::Repairs if primary => count_candidate_repairs(&db, &sigma)?,
        CountTarget::Repairs1 if primary => count_candidate_repairs_singleton(&db, &sigma)?,
        CountTarget::Sequences if primary => count_complete_sequences(&db, &sigma)?,
        CountTarget::Sequences1 if primary => count_complete_sequences_singleton(&db, &sigma)?,
        CountTarget::Sequences | CountTarget::Sequences1 => {
            let space = RepairSpace::new(&db, &sigma, singleton)?;
            space.tree_size(DEFAULT_TREE_CAP)?;
            space.sequence_count()
        }
        CountTarget::Repairs | CountTarget::Repairs1 | CountTarget::Canonical => {
            let space = RepairSpace::new(&db, &sigma, singleton)?;
            space.candidate_repair_masks(DEFAULT_TREE_CAP)?.len().into()
        }
    };
    let mut rec = ResultRecord::new("count");
    rec.count = Some(value.to_string());
    rec.wall_time_ms = elapsed_ms(start);
    let mut v = serde_json::to_value(&rec).expect("serializable");
    v["what"] = json!(what.to_possible_value().unwrap().get_name());
    emit(&v);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn approx(
    db: &Path,
    query: &Path,
    generator: &str,
    tuple: &str,
    eps: f64,
    delta: f64,
    mode: &str,
    seed: u64,
    max_samples: u64,
    threads: usize,
) -> CliResult<()> {
    let start = Instant::now();
    let kind: GeneratorKind = generator.parse()?;
    let mode: EstimationMode = mode.parse()?;
    let (db, sigma) = load_instance(db)?;
    let q = load_query(query, &db)?;
    let tuple = parse_tuple(tuple);
    let config = EstimatorConfig {
        epsilon: eps,
        delta,
        mode,
        max_samples,
        threads,
    };
    let est = estimate(&db, &sigma, kind, &q, &tuple, &config, &RandomSource::new(seed))?;
    let mut rec = ResultRecord::new("approx");
    rec.generator = Some(kind.to_string());
    rec.value = Some(est.value);
    rec.tuple = Some(tuple);
    rec.estimate = Some(est);
    rec.seed = Some(seed);
    rec.wall_time_ms = elapsed_ms(start);
    emit(&rec);
    Ok(())
}

fn fact_rows(db: &Database) -> Vec<Vec<String>> {
    InstanceFile::from_instance(db, &[]).facts
}

fn sample(db: &Path, generator: &str, count: u64, seed: u64) -> CliResult<()> {
    let kind: GeneratorKind = generator.parse()?;
    let (db, sigma) = load_instance(db)?;
    let mut sampler = Sampler::new(&db, &sigma, kind)?;
    let mut rng = RandomSource::new(seed).rng();
    for index in 0..count {
        let out = sampler.sample(&mut rng);
        let sequence = out.sequence.map(|s| {
            s.ops
                .iter()
                .map(|op| op.removed.iter().map(|f| f.to_string()).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        });
        emit(&json!({
            "index": index,
            "generator": kind.to_string(),
            "sequence": sequence,
            "repair": fact_rows(&out.repair),
        }));
    }
    Ok(())
}

fn write_or_collect(path: &Option<PathBuf>, text: String) -> CliResult<Option<Value>> {
    match path {
        Some(p) => {
            fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            Ok(None)
        }
        None => Ok(Some(serde_json::from_str(&text).expect("valid json"))),
    }
}

fn gen(family: GenFamily, inst_out: Option<PathBuf>, query_out: Option<PathBuf>) -> CliResult<()> {
    let red: Reduction = match family {
        GenFamily::Hcoloring { nodes, edges } => {
            let parsed = edges
                .split(',')
                .filter(|e| !e.trim().is_empty())
                .map(|e| {
                    let (u, v) = e
                        .split_once('-')
                        .ok_or_else(|| Error::Parse(format!("edge {e:?} is not of the form u-v")))?;
                    let num = |s: &str| {
                        s.trim()
                            .parse::<usize>()
                            .map_err(|_| Error::Parse(format!("bad node index {s:?}")))
                    };
                    Ok((num(u)?, num(v)?))
                })
                .collect::<Result<Vec<_>, Error>>()?;
            gen_hcoloring_instance(&UndirectedGraph::new(nodes, &parsed)?)?
        }
        GenFamily::Pos2dnf { formula } => gen_pos2dnf_instance(&Pos2Dnf::parse(&formula)?),
        GenFamily::FdStar { n } => gen_fd_star(n)?,
        GenFamily::FdLift { db } => {
            let (db, sigma) = load_instance(&db)?;
            gen_fd_lift(&db, &sigma)?.reduction
        }
    };
    let inst = serde_json::to_string_pretty(&InstanceFile::from_instance(&red.db, &red.sigma)).unwrap();
    let query = serde_json::to_string_pretty(&QueryFile::from_query(&red.query)).unwrap();
    let inst = write_or_collect(&inst_out, inst)?;
    let query = write_or_collect(&query_out, query)?;
    if inst.is_some() || query.is_some() {
        let mut v = json!({});
        if let Some(i) = inst {
            v["instance"] = i;
        }
        if let Some(q) = query {
            v["query"] = q;
        }
        out(&serde_json::to_string_pretty(&v).unwrap());
    }
    Ok(())
}

fn chain_dump(db: &Path, generator: &str) -> CliResult<()> {
    let kind: GeneratorKind = generator.parse()?;
    let (db, sigma) = load_instance(db)?;
    let chain = build_chain(&db, &sigma, kind)?;
    chain.leaf_probabilities()?;
    out(&serde_json::to_string_pretty(&chain.to_json()).unwrap());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Exact {
            db,
            query,
            generator,
            tuple,
            all_answers,
        } => exact(&db, &query, &generator, &tuple, all_answers),
        Command::Count { db, what } => count(&db, what),
        Command::Approx {
            db,
            query,
            generator,
            tuple,
            eps,
            delta,
            mode,
            seed,
            max_samples,
            threads,
        } => approx(&db, &query, &generator, &tuple, eps, delta, &mode, seed, max_samples, threads),
        Command::Sample {
            db,
            generator,
            count,
            seed,
        } => sample(&db, &generator, count, seed),
        Command::Gen { family, out, query_out } => gen(family, out, query_out),
        Command::ChainDump { db, generator } => chain_dump(&db, &generator),
    }
}

fn exit_code(e: &Failure) -> u8 {
    match e {
        Failure::Io(_) => 2,
        Failure::Core(Error::Parse(_) | Error::Schema(_)) => 2,
        Failure::Core(Error::CapExceeded { .. }) => 3,
        Failure::Core(Error::Unsupported(_) | Error::ConstraintClass(_)) => 4,
        Failure::Core(_) => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = match &e {
                Failure::Io(m) => m.clone(),
                Failure::Core(c) => c.to_string(),
            };
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
