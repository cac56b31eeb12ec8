//! Data model and file ingestion for relations, queries, and run-time
//! environments.
//!
//! Sizes are measured in pages throughout; the selectivity of a join is
//! the factor scaling the page-count product of its inputs into the
//! result's page count.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distributions::{BucketedDistribution, TransitionModel};
use crate::error::{Error, Result};

/// A base relation and the distribution of its size in pages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub name: String,
    pub pages: BucketedDistribution,
}

/// A join predicate between two relations with a selectivity
/// distribution over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub left: String,
    pub right: String,
    pub selectivity: BucketedDistribution,
}

/// The set of declared relations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub relations: Vec<Relation>,
}

/// A join query: which relations to join, the predicates between them,
/// and whether the result must arrive sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub relations: Vec<String>,
    #[serde(default)]
    pub predicates: Vec<Predicate>,
    #[serde(default)]
    pub sorted_result: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_owner: Option<String>,
}

/// Whether memory is modeled as constant per execution or as a Markov
/// chain over phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvMode {
    Static,
    Dynamic,
}

/// The run-time environment: a memory distribution and, for dynamic
/// memory, a transition model over its representatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub memory: BucketedDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<TransitionModel>,
}

impl Environment {
    pub fn mode(&self) -> EnvMode {
        if self.transition.is_some() {
            EnvMode::Dynamic
        } else {
            EnvMode::Static
        }
    }

    pub fn validate(&self, context: &str) -> Result<()> {
        if self.memory.iter().any(|(rep, _)| rep <= 0.0) {
            return Err(Error::Validation {
                path: context.to_string(),
                msg: "memory representatives must be positive".into(),
            });
        }
        if let Some(t) = &self.transition {
            t.validate().map_err(|e| Error::Validation {
                path: context.to_string(),
                msg: e.to_string(),
            })?;
            if t.states != self.memory.reps() {
                return Err(Error::Validation {
                    path: context.to_string(),
                    msg: "transition states do not match memory representatives".into(),
                });
            }
        }
        Ok(())
    }

    /// Static environment over a memory distribution.
    pub fn fixed(memory: BucketedDistribution) -> Self {
        Self {
            memory,
            transition: None,
        }
    }
}

impl Catalog {
    pub fn validate(&self, context: &str) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.relations {
            if !seen.insert(r.name.as_str()) {
                return Err(Error::Validation {
                    path: context.to_string(),
                    msg: format!("duplicate relation `{}`", r.name),
                });
            }
            if r.pages.iter().any(|(rep, _)| rep <= 0.0) {
                return Err(Error::Validation {
                    path: context.to_string(),
                    msg: format!("relation `{}` has a non-positive page count", r.name),
                });
            }
        }
        Ok(())
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.iter().find(|r| r.name == name)
    }
}

impl QuerySpec {
    pub fn validate(&self, context: &str) -> Result<()> {
        if self.relations.is_empty() {
            return Err(Error::Validation {
                path: context.to_string(),
                msg: "query must name at least one relation".into(),
            });
        }
        let declared: HashSet<&str> = self.relations.iter().map(String::as_str).collect();
        if declared.len() != self.relations.len() {
            return Err(Error::Validation {
                path: context.to_string(),
                msg: "query lists a relation twice".into(),
            });
        }
        for p in &self.predicates {
            if p.left == p.right {
                return Err(Error::Validation {
                    path: context.to_string(),
                    msg: format!("predicate joins `{}` to itself", p.left),
                });
            }
            for name in [&p.left, &p.right] {
                if !declared.contains(name.as_str()) {
                    return Err(Error::UnknownRelation {
                        context: context.to_string(),
                        name: name.clone(),
                    });
                }
            }
            if p.selectivity.iter().any(|(rep, _)| !(0.0..=1.0).contains(&rep)) {
                return Err(Error::Validation {
                    path: context.to_string(),
                    msg: format!(
                        "selectivity between `{}` and `{}` outside [0, 1]",
                        p.left, p.right
                    ),
                });
            }
        }
        if let Some(owner) = &self.order_owner {
            if !declared.contains(owner.as_str()) {
                return Err(Error::UnknownRelation {
                    context: context.to_string(),
                    name: owner.clone(),
                });
            }
        }
        Ok(())
    }

    /// Checks that every relation the query names exists in the catalog.
    pub fn check_against(&self, catalog: &Catalog, context: &str) -> Result<()> {
        for name in &self.relations {
            if catalog.relation(name).is_none() {
                return Err(Error::UnknownRelation {
                    context: context.to_string(),
                    name: name.clone(),
                });
            }
        }
        Ok(())
    }

    /// Predicates joining `j` to any member of `others`, in either direction.
    pub fn predicates_between<'a>(
        &'a self,
        j: &'a str,
        others: &'a [&'a str],
    ) -> impl Iterator<Item = &'a Predicate> + 'a {
        self.predicates.iter().filter(move |p| {
            (p.left == j && others.contains(&p.right.as_str()))
                || (p.right == j && others.contains(&p.left.as_str()))
        })
    }
}

/// Selectivity distribution for joining `j` against the set `others`:
/// the product of all connecting predicates' distributions, or a point
/// mass at 1 when no predicate applies (the trivially true predicate).
/// A `budget` caps the bucket count of the result.
pub fn selectivity_between(
    query: &QuerySpec,
    j: &str,
    others: &[&str],
    budget: Option<usize>,
) -> Result<BucketedDistribution> {
    if others.contains(&j) {
        return Err(Error::Usage(format!(
            "relation `{j}` cannot join against a set containing itself"
        )));
    }
    let one = BucketedDistribution::point(1.0)?;
    let mut acc = one.clone();
    for p in query.predicates_between(j, others) {
        acc = BucketedDistribution::product_distribution(&acc, &p.selectivity, &one)?;
        if let Some(k) = budget {
            acc = acc.rebucket(k)?;
        }
    }
    Ok(acc)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog> {
    let path = path.as_ref();
    let catalog: Catalog = read_json(path)?;
    catalog.validate(&path.display().to_string())?;
    Ok(catalog)
}

pub fn load_query(path: impl AsRef<Path>) -> Result<QuerySpec> {
    let path = path.as_ref();
    let query: QuerySpec = read_json(path)?;
    query.validate(&path.display().to_string())?;
    Ok(query)
}

pub fn load_environment(path: impl AsRef<Path>) -> Result<Environment> {
    let path = path.as_ref();
    let env: Environment = read_json(path)?;
    env.validate(&path.display().to_string())?;
    Ok(env)
}
