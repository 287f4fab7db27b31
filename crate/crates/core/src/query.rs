//! Conjunctive queries and homomorphism-based evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relational::{Database, Fact, Schema};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Term {
    Const(String),
    Var(String),
}

impl Term {
    pub fn constant(c: impl Into<String>) -> Self {
        Term::Const(c.into())
    }

    pub fn var(v: impl Into<String>) -> Self {
        Term::Var(v.into())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "'{c}'"),
            Term::Var(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub relation: String,
    pub terms: Vec<Term>,
}

impl Atom {
    pub fn new(relation: impl Into<String>, terms: Vec<Term>) -> Self {
        Atom {
            relation: relation.into(),
            terms,
        }
    }
}

/// `Ans(x̄) :- R1(ȳ1), ..., Rn(ȳn)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConjunctiveQuery {
    answer_vars: Vec<String>,
    atoms: Vec<Atom>,
}

impl ConjunctiveQuery {
    pub fn new(answer_vars: Vec<String>, atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Schema("query needs at least one atom".into()));
        }
        let q = ConjunctiveQuery { answer_vars, atoms };
        let vars = q.variables();
        if let Some(v) = q.answer_vars.iter().find(|v| !vars.contains(v.as_str())) {
            return Err(Error::Schema(format!(
                "answer variable {v} does not occur in the body"
            )));
        }
        Ok(q)
    }

    pub fn boolean(atoms: Vec<Atom>) -> Result<Self> {
        Self::new(Vec::new(), atoms)
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        for atom in &self.atoms {
            let arity = schema
                .arity(&atom.relation)
                .ok_or_else(|| Error::Schema(format!("unknown relation {}", atom.relation)))?;
            if arity != atom.terms.len() {
                return Err(Error::Schema(format!(
                    "atom over {} has {} terms, expected {arity}",
                    atom.relation,
                    atom.terms.len()
                )));
            }
        }
        Ok(())
    }

    pub fn answer_vars(&self) -> &[String] {
        &self.answer_vars
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// `|Q|`, the number of atoms.
    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_boolean(&self) -> bool {
        self.answer_vars.is_empty()
    }

    pub fn variables(&self) -> BTreeSet<&str> {
        self.atoms
            .iter()
            .flat_map(|a| a.terms.iter())
            .filter_map(|t| match t {
                Term::Var(v) => Some(v.as_str()),
                Term::Const(_) => None,
            })
            .collect()
    }

    pub fn constants(&self) -> BTreeSet<&str> {
        self.atoms
            .iter()
            .flat_map(|a| a.terms.iter())
            .filter_map(|t| match t {
                Term::Const(c) => Some(c.as_str()),
                Term::Var(_) => None,
            })
            .collect()
    }
}

impl fmt::Display for ConjunctiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ans({}) :- ", self.answer_vars.join(","))?;
        let body: Vec<String> = self
            .atoms
            .iter()
            .map(|a| {
                let ts: Vec<String> = a.terms.iter().map(Term::to_string).collect();
                format!("{}({})", a.relation, ts.join(","))
            })
            .collect();
        write!(f, "{}", body.join(", "))
    }
}

/// Variable assignment; constants map to themselves.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Homomorphism {
    pub assignment: BTreeMap<String, String>,
}

impl Homomorphism {
    pub fn apply<'a>(&'a self, term: &'a Term) -> &'a str {
        match term {
            Term::Const(c) => c,
            Term::Var(v) => &self.assignment[v],
        }
    }

    /// `h(Q)`: the image facts of the body.
    pub fn image(&self, q: &ConjunctiveQuery) -> BTreeSet<Fact> {
        q.atoms
            .iter()
            .map(|a| Fact {
                relation: a.relation.clone(),
                values: a.terms.iter().map(|t| self.apply(t).to_string()).collect(),
            })
            .collect()
    }

    pub fn answer(&self, q: &ConjunctiveQuery) -> Vec<String> {
        q.answer_vars
            .iter()
            .map(|v| self.assignment[v].clone())
            .collect()
    }
}

struct Search<'a> {
    q: &'a ConjunctiveQuery,
    db: &'a Database,
    var_index: BTreeMap<&'a str, usize>,
    binding: Vec<Option<&'a str>>,
}

impl<'a> Search<'a> {
    fn new(q: &'a ConjunctiveQuery, db: &'a Database) -> Self {
        let var_index: BTreeMap<&str, usize> =
            q.variables().into_iter().enumerate().map(|(i, v)| (v, i)).collect();
        let binding = vec![None; var_index.len()];
        Search {
            q,
            db,
            var_index,
            binding,
        }
    }

    /// Pre-bind the answer variables to `tuple`; false if the tuple is incompatible.
    fn fix_answer(&mut self, tuple: &'a [String]) -> bool {
        for (v, c) in self.q.answer_vars.iter().zip(tuple) {
            let slot = &mut self.binding[self.var_index[v.as_str()]];
            match slot {
                Some(existing) if *existing != c.as_str() => return false,
                _ => *slot = Some(c.as_str()),
            }
        }
        true
    }

    fn snapshot(&self) -> Homomorphism {
        Homomorphism {
            assignment: self
                .var_index
                .iter()
                .map(|(v, &i)| (v.to_string(), self.binding[i].unwrap().to_string()))
                .collect(),
        }
    }

    /// Depth-first over atoms in listed order; `visit` returns false to stop.
    fn run(&mut self, depth: usize, visit: &mut dyn FnMut(&Self) -> bool) -> bool {
        if depth == self.q.atoms.len() {
            return visit(self);
        }
        let atom = &self.q.atoms[depth];
        let mut newly = Vec::new();
        for fact in self.db.facts_of(&atom.relation) {
            newly.clear();
            let mut ok = true;
            for (term, value) in atom.terms.iter().zip(&fact.values) {
                match term {
                    Term::Const(c) => {
                        if c != value {
                            ok = false;
                            break;
                        }
                    }
                    Term::Var(v) => {
                        let idx = self.var_index[v.as_str()];
                        match self.binding[idx] {
                            Some(b) if b != value.as_str() => {
                                ok = false;
                                break;
                            }
                            Some(_) => {}
                            None => {
                                self.binding[idx] = Some(value.as_str());
                                newly.push(idx);
                            }
                        }
                    }
                }
            }
            let cont = !ok || self.run(depth + 1, visit);
            for &idx in &newly {
                self.binding[idx] = None;
            }
            if !cont {
                return false;
            }
        }
        true
    }
}

fn check_tuple(q: &ConjunctiveQuery, tuple: &[String]) -> Result<()> {
    if tuple.len() != q.answer_vars.len() {
        return Err(Error::Precondition(format!(
            "tuple has {} values but the query has {} answer variables",
            tuple.len(),
            q.answer_vars.len()
        )));
    }
    Ok(())
}

/// All homomorphisms from the body of `q` into `db`.
pub fn homomorphisms(q: &ConjunctiveQuery, db: &Database) -> Result<Vec<Homomorphism>> {
    q.validate(db.schema())?;
    let mut out = Vec::new();
    let mut search = Search::new(q, db);
    search.run(0, &mut |s| {
        out.push(s.snapshot());
        true
    });
    Ok(out)
}

/// `Q(D)`.
pub fn answers(q: &ConjunctiveQuery, db: &Database) -> Result<BTreeSet<Vec<String>>> {
    q.validate(db.schema())?;
    let mut out = BTreeSet::new();
    let mut search = Search::new(q, db);
    let vars: Vec<usize> = q
        .answer_vars
        .iter()
        .map(|v| search.var_index[v.as_str()])
        .collect();
    search.run(0, &mut |s| {
        out.insert(vars.iter().map(|&i| s.binding[i].unwrap().to_string()).collect());
        true
    });
    Ok(out)
}

/// `c̄ ∈ Q(D)`, stopping at the first witness.
pub fn entails(db: &Database, q: &ConjunctiveQuery, tuple: &[String]) -> Result<bool> {
    q.validate(db.schema())?;
    check_tuple(q, tuple)?;
    let mut search = Search::new(q, db);
    if !search.fix_answer(tuple) {
        return Ok(false);
    }
    let mut found = false;
    search.run(0, &mut |_| {
        found = true;
        false
    });
    Ok(found)
}

/// Image fact sets `h(Q)` of every homomorphism with `h(x̄) = c̄`.
/// A sub-database entails `c̄` iff it contains one of them.
pub fn witnesses(q: &ConjunctiveQuery, db: &Database, tuple: &[String]) -> Result<Vec<BTreeSet<Fact>>> {
    q.validate(db.schema())?;
    check_tuple(q, tuple)?;
    let mut search = Search::new(q, db);
    if !search.fix_answer(tuple) {
        return Ok(Vec::new());
    }
    let mut out = BTreeSet::new();
    search.run(0, &mut |s| {
        out.insert(s.snapshot().image(q));
        true
    });
    Ok(out.into_iter().collect())
}
