//! JSON wire formats for instances, queries and results.

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::estimation::Estimate;
use crate::query::{Atom, ConjunctiveQuery};
use crate::relational::{validate_constraints, Database, Fact, FunctionalDependency, RelationSchema, Schema};

/// `"p/q"`, always with a denominator.
pub fn format_rational(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn parse_rational(s: &str) -> Result<BigRational> {
    let bad = || Error::Parse(format!("malformed rational {s:?}"));
    let (n, d) = s.split_once('/').unwrap_or((s, "1"));
    let n: BigInt = n.trim().parse().map_err(|_| bad())?;
    let d: BigInt = d.trim().parse().map_err(|_| bad())?;
    if d == BigInt::from(0) {
        return Err(bad());
    }
    Ok(BigRational::new(n, d))
}

pub(crate) fn serialize_opt_rational<S: Serializer>(
    r: &Option<BigRational>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_str(&format_rational(r)),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub relations: Vec<RelationSchema>,
}

/// Facts are `[relation, value, ...]` arrays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub schema: SchemaFile,
    pub facts: Vec<Vec<String>>,
    #[serde(default)]
    pub fds: Vec<FunctionalDependency>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryFile {
    #[serde(default)]
    pub answer_vars: Vec<String>,
    pub atoms: Vec<Atom>,
}

impl InstanceFile {
    pub fn from_instance(db: &Database, sigma: &[FunctionalDependency]) -> Self {
        InstanceFile {
            schema: SchemaFile {
                relations: db.schema().relations().to_vec(),
            },
            facts: db
                .facts()
                .map(|f| std::iter::once(f.relation.clone()).chain(f.values.iter().cloned()).collect())
                .collect(),
            fds: sigma.to_vec(),
        }
    }

    pub fn into_instance(self) -> Result<(Database, Vec<FunctionalDependency>)> {
        let schema = Arc::new(Schema::new(self.schema.relations).map_err(in_field("schema"))?);
        let mut facts = Vec::with_capacity(self.facts.len());
        for (i, row) in self.facts.into_iter().enumerate() {
            let mut it = row.into_iter();
            let relation = it
                .next()
                .ok_or_else(|| Error::Parse(format!("facts[{i}]: empty fact array")))?;
            let fact = Fact {
                relation,
                values: it.collect(),
            };
            Database::new(Arc::clone(&schema), [fact.clone()]).map_err(in_field(&format!("facts[{i}]")))?;
            facts.push(fact);
        }
        let db = Database::new(Arc::clone(&schema), facts)?;
        for (i, fd) in self.fds.iter().enumerate() {
            fd.validate(&schema).map_err(in_field(&format!("fds[{i}]")))?;
        }
        validate_constraints(&schema, &self.fds)?;
        Ok((db, self.fds))
    }
}

impl QueryFile {
    pub fn from_query(q: &ConjunctiveQuery) -> Self {
        QueryFile {
            answer_vars: q.answer_vars().to_vec(),
            atoms: q.atoms().to_vec(),
        }
    }

    pub fn into_query(self, schema: &Schema) -> Result<ConjunctiveQuery> {
        let q = ConjunctiveQuery::new(self.answer_vars, self.atoms).map_err(in_field("query"))?;
        q.validate(schema).map_err(in_field("query"))?;
        Ok(q)
    }
}

fn in_field(field: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Parse(format!("{field}: {e}"))
}

fn json_error(what: &str, e: serde_json::Error) -> Error {
    Error::Parse(format!("{what} at line {} column {}: {e}", e.line(), e.column()))
}

pub fn parse_instance(text: &str) -> Result<(Database, Vec<FunctionalDependency>)> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| json_error("instance", e))?;
    file.into_instance()
}

pub fn parse_query(text: &str, schema: &Schema) -> Result<ConjunctiveQuery> {
    let file: QueryFile = serde_json::from_str(text).map_err(|e| json_error("query", e))?;
    file.into_query(schema)
}

pub fn instance_to_json(db: &Database, sigma: &[FunctionalDependency]) -> String {
    serde_json::to_string_pretty(&InstanceFile::from_instance(db, sigma)).expect("serializable")
}

pub fn query_to_json(q: &ConjunctiveQuery) -> String {
    serde_json::to_string_pretty(&QueryFile::from_query(q)).expect("serializable")
}

/// One line of command output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuple: Option<Vec<String>>,
    /// Exact value as `"p/q"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub wall_time_ms: f64,
}

impl ResultRecord {
    pub fn new(command: &str) -> Self {
        ResultRecord {
            command: command.to_string(),
            generator: None,
            tuple: None,
            probability: None,
            value: None,
            count: None,
            estimate: None,
            seed: None,
            wall_time_ms: 0.0,
        }
    }

    pub fn with_probability(mut self, p: &BigRational) -> Self {
        self.probability = Some(format_rational(p));
        self.value = p.to_f64();
        self
    }
}
