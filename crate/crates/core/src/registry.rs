//! Kin registry: subjects, families, roles and annotated pairs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Father,
    Mother,
    Son,
    Daughter,
    Brother,
    Sister,
}

/// The seven kin relations, parent-child first, then siblings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "F-S")]
    FatherSon,
    #[serde(rename = "F-D")]
    FatherDaughter,
    #[serde(rename = "M-S")]
    MotherSon,
    #[serde(rename = "M-D")]
    MotherDaughter,
    #[serde(rename = "B-B")]
    BrotherBrother,
    #[serde(rename = "S-B")]
    SisterBrother,
    #[serde(rename = "S-S")]
    SisterSister,
}

impl Relation {
    pub const ALL: [Relation; 7] = [
        Relation::FatherSon,
        Relation::FatherDaughter,
        Relation::MotherSon,
        Relation::MotherDaughter,
        Relation::BrotherBrother,
        Relation::SisterBrother,
        Relation::SisterSister,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Relation::FatherSon => "F-S",
            Relation::FatherDaughter => "F-D",
            Relation::MotherSon => "M-S",
            Relation::MotherDaughter => "M-D",
            Relation::BrotherBrother => "B-B",
            Relation::SisterBrother => "S-B",
            Relation::SisterSister => "S-S",
        }
    }

    /// Roles of the first and second member of a pair.
    pub fn roles(self) -> (Role, Role) {
        match self {
            Relation::FatherSon => (Role::Father, Role::Son),
            Relation::FatherDaughter => (Role::Father, Role::Daughter),
            Relation::MotherSon => (Role::Mother, Role::Son),
            Relation::MotherDaughter => (Role::Mother, Role::Daughter),
            Relation::BrotherBrother => (Role::Brother, Role::Brother),
            Relation::SisterBrother => (Role::Sister, Role::Brother),
            Relation::SisterSister => (Role::Sister, Role::Sister),
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Relation::ALL
            .into_iter()
            .find(|r| r.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown kin relation {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub family: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedPair {
    pub a: String,
    pub b: String,
    pub relation: Relation,
    pub kin: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    pub subjects: Vec<Subject>,
    pub pairs: Vec<AnnotatedPair>,
}

impl Registry {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read_text(path)?;
        let reg: Registry = serde_json::from_str(&text)
            .map_err(|e| Error::format(e.line(), format!("registry JSON: {e}")))?;
        reg.validate()?;
        Ok(reg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("registry serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json().as_bytes())
    }

    pub fn subject(&self, id: &str) -> Option<&Subject> {
        self.subjects.iter().find(|s| s.id == id)
    }

    /// Every pair references known subjects, no pair is a self-pair, and kin
    /// annotations agree with family membership.
    pub fn validate(&self) -> Result<()> {
        let index: BTreeMap<&str, &Subject> = self.subjects.iter().map(|s| (s.id.as_str(), s)).collect();
        if index.len() != self.subjects.len() {
            return Err(Error::Config("duplicate subject id in registry".into()));
        }
        for p in &self.pairs {
            let (a, b) = match (index.get(p.a.as_str()), index.get(p.b.as_str())) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::Config(format!("pair {}/{} names an unknown subject", p.a, p.b))),
            };
            if p.a == p.b {
                return Err(Error::Config(format!("self-pair {}", p.a)));
            }
            if p.kin != (a.family == b.family) {
                return Err(Error::Config(format!(
                    "pair {}/{} kin={} disagrees with families",
                    p.a, p.b, p.kin
                )));
            }
        }
        Ok(())
    }

    pub fn kin_pairs(&self, relation: Relation) -> Vec<&AnnotatedPair> {
        self.pairs
            .iter()
            .filter(|p| p.kin && p.relation == relation)
            .collect()
    }

    pub fn relations(&self) -> Vec<Relation> {
        let mut rels: Vec<Relation> = self.pairs.iter().filter(|p| p.kin).map(|p| p.relation).collect();
        rels.sort();
        rels.dedup();
        rels
    }
}
