//! Journal-title normalization and the alias/exclusion registry.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const STARTER: &str = include_str!("../data/starter_registry.tsv");

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: alias key {key:?} already defined on line {first}")]
    DuplicateAlias { line: usize, first: usize, key: String },
    #[error("line {line}: key {key:?} already refers to {existing:?}")]
    KeyCollision {
        line: usize,
        key: String,
        existing: String,
    },
    #[error("line {line}: {name:?} is not a declared canonical journal")]
    UnknownCanonical { line: usize, name: String },
    #[error("cannot read registry {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Folds a journal string into its lookup key.
///
/// Lower-cases, turns `&` into `and`, collapses whitespace, drops trailing
/// periods and any leading "the ".
pub fn normalize_key(raw: &str) -> String {
    let lowered = raw.to_lowercase().replace('&', " and ");
    let mut key = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    loop {
        let before = key.len();
        let trimmed = key.trim_end_matches(|c: char| c == '.' || c.is_whitespace());
        key.truncate(trimmed.len());
        while let Some(rest) = key.strip_prefix("the ") {
            key = rest.trim_start().to_string();
        }
        if key.len() == before {
            return key;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "lowercase")]
pub enum Resolution {
    Canonical(String),
    Excluded(String),
    Unknown(String),
}

/// An unknown journal string that shares a long prefix with a known key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NearMiss {
    pub raw: String,
    pub count: u64,
    pub candidate: String,
    pub shared_prefix: usize,
}

#[derive(Debug, Clone)]
pub struct JournalRegistry {
    canonical: BTreeSet<String>,
    aliases: BTreeMap<String, String>,
    exclusions: BTreeSet<String>,
    lookup: HashMap<String, String>,
    fingerprint: String,
}

impl JournalRegistry {
    /// The registry shipped with the crate: the journals and exclusions
    /// discussed in the 2007 study.
    pub fn starter() -> Self {
        Self::parse(STARTER).expect("starter registry is valid")
    }

    pub fn starter_text() -> &'static str {
        STARTER
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        let mut canonical: Vec<(usize, String)> = Vec::new();
        let mut aliases: Vec<(usize, String, String)> = Vec::new();
        let mut exclusions: Vec<(usize, String)> = Vec::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let content = strip_comment(raw_line);
            if content.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split('\t').map(str::trim).collect();
            let syntax = |message: &str| RegistryError::Syntax {
                line,
                message: message.to_string(),
            };
            match fields.as_slice() {
                ["canonical", name] if !name.is_empty() => canonical.push((line, name.to_string())),
                ["alias", alias, name] if !alias.is_empty() && !name.is_empty() => {
                    aliases.push((line, alias.to_string(), name.to_string()))
                }
                ["exclude", name] if !name.is_empty() => exclusions.push((line, name.to_string())),
                ["canonical" | "exclude", ..] => return Err(syntax("expected exactly one non-empty name")),
                ["alias", ..] => return Err(syntax("expected alias text and canonical name")),
                [kind, ..] => return Err(syntax(&format!("unknown entry kind {kind:?}"))),
                [] => unreachable!(),
            }
        }

        let mut builder = RegistryBuilder::default();
        for (line, name) in canonical {
            builder.canonical_at(line, &name)?;
        }
        for (line, alias, name) in aliases {
            builder.alias_at(line, &alias, &name)?;
        }
        for (line, name) in exclusions {
            builder.exclude_at(line, &name)?;
        }
        Ok(builder.build())
    }

    pub fn canonical(&self) -> &BTreeSet<String> {
        &self.canonical
    }

    /// Declared aliases, keyed by normalized alias text.
    pub fn aliases(&self) -> &BTreeMap<String, String> {
        &self.aliases
    }

    pub fn exclusions(&self) -> &BTreeSet<String> {
        &self.exclusions
    }

    /// Content digest; equal for registries with the same entries regardless
    /// of line order or comments.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn resolve(&self, raw: &str) -> Resolution {
        match self.lookup.get(&normalize_key(raw)) {
            Some(name) if self.exclusions.contains(name) => Resolution::Excluded(name.clone()),
            Some(name) => Resolution::Canonical(name.clone()),
            None => Resolution::Unknown(raw.to_string()),
        }
    }

    /// Unknown strings whose key shares at least `min_prefix` leading
    /// characters with a registry key. Sorted by count, then text.
    pub fn near_misses(&self, unknown: &BTreeMap<String, u64>, min_prefix: usize) -> Vec<NearMiss> {
        let mut out = Vec::new();
        for (raw, &count) in unknown {
            let key = normalize_key(raw);
            let best = self
                .lookup
                .iter()
                .map(|(k, name)| (shared_prefix(&key, k), name))
                .filter(|&(n, _)| n >= min_prefix)
                .max_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(a.1)));
            if let Some((shared, name)) = best {
                out.push(NearMiss {
                    raw: raw.clone(),
                    count,
                    candidate: name.clone(),
                    shared_prefix: shared,
                });
            }
        }
        out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.raw.cmp(&b.raw)));
        out
    }
}

fn shared_prefix(a: &str, b: &str) -> usize {
    a.chars().zip(b.chars()).take_while(|(x, y)| x == y).count()
}

fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &c) in bytes.iter().enumerate() {
        if c == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

/// Incremental registry construction with the same checks the file loader
/// applies. Canonical names must be added before aliases or exclusions that
/// refer to them.
#[derive(Debug, Default)]
pub struct RegistryBuilder {
    canonical: BTreeMap<String, usize>,
    aliases: BTreeMap<String, (usize, String)>,
    exclusions: BTreeSet<String>,
    lookup: HashMap<String, (usize, String)>,
    next_line: usize,
}

impl RegistryBuilder {
    fn line(&mut self) -> usize {
        self.next_line += 1;
        self.next_line
    }

    pub fn canonical(mut self, name: &str) -> Result<Self, RegistryError> {
        let line = self.line();
        self.canonical_at(line, name)?;
        Ok(self)
    }

    pub fn alias(mut self, alias: &str, name: &str) -> Result<Self, RegistryError> {
        let line = self.line();
        self.alias_at(line, alias, name)?;
        Ok(self)
    }

    pub fn exclude(mut self, name: &str) -> Result<Self, RegistryError> {
        let line = self.line();
        self.exclude_at(line, name)?;
        Ok(self)
    }

    fn canonical_at(&mut self, line: usize, name: &str) -> Result<(), RegistryError> {
        if self.canonical.contains_key(name) {
            return Ok(());
        }
        let key = normalize_key(name);
        if let Some((_, existing)) = self.lookup.get(&key) {
            return Err(RegistryError::KeyCollision {
                line,
                key,
                existing: existing.clone(),
            });
        }
        self.lookup.insert(key, (line, name.to_string()));
        self.canonical.insert(name.to_string(), line);
        Ok(())
    }

    fn alias_at(&mut self, line: usize, alias: &str, name: &str) -> Result<(), RegistryError> {
        if !self.canonical.contains_key(name) {
            return Err(RegistryError::UnknownCanonical {
                line,
                name: name.to_string(),
            });
        }
        let key = normalize_key(alias);
        if let Some((first, _)) = self.aliases.get(&key) {
            return Err(RegistryError::DuplicateAlias {
                line,
                first: *first,
                key,
            });
        }
        match self.lookup.get(&key) {
            Some((_, existing)) if existing != name => {
                return Err(RegistryError::KeyCollision {
                    line,
                    key,
                    existing: existing.clone(),
                })
            }
            _ => {}
        }
        self.lookup.insert(key.clone(), (line, name.to_string()));
        self.aliases.insert(key, (line, name.to_string()));
        Ok(())
    }

    fn exclude_at(&mut self, line: usize, name: &str) -> Result<(), RegistryError> {
        if !self.canonical.contains_key(name) {
            return Err(RegistryError::UnknownCanonical {
                line,
                name: name.to_string(),
            });
        }
        self.exclusions.insert(name.to_string());
        Ok(())
    }

    pub fn build(self) -> JournalRegistry {
        let canonical: BTreeSet<String> = self.canonical.into_keys().collect();
        let aliases: BTreeMap<String, String> =
            self.aliases.into_iter().map(|(k, (_, name))| (k, name)).collect();
        let lookup = self.lookup.into_iter().map(|(k, (_, name))| (k, name)).collect();

        let mut digest_input = String::new();
        for name in &canonical {
            writeln!(digest_input, "canonical\t{name}").unwrap();
        }
        for (key, name) in &aliases {
            writeln!(digest_input, "alias\t{key}\t{name}").unwrap();
        }
        for name in &self.exclusions {
            writeln!(digest_input, "exclude\t{name}").unwrap();
        }
        let fingerprint = hex::encode(Sha256::digest(digest_input.as_bytes()));

        JournalRegistry {
            canonical,
            aliases,
            exclusions: self.exclusions,
            lookup,
            fingerprint,
        }
    }
}
