//! Per-journal citation counts with mergeable partial results.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{CitationRecord, Extraction};
use crate::registry::{JournalRegistry, Resolution};

pub const DEFAULT_UNKNOWN_CAP: usize = 100_000;

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("cannot merge tables built against different registries ({left} vs {right})")]
    RegistryMismatch { left: String, right: String },
    #[error("cannot merge tables with different unknown caps ({left} vs {right})")]
    CapMismatch { left: usize, right: usize },
    #[error("growth dates must be strictly increasing: {previous} is followed by {next}")]
    NonIncreasingDates { previous: NaiveDate, next: NaiveDate },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Citation tallies for one corpus, tied to the registry that resolved them.
///
/// Unknown strings are kept individually up to `unknown_cap` distinct
/// entries. Beyond that the lexicographically largest strings are folded
/// into `unknown_overflow`; the choice depends only on the full set of
/// strings, so merges in any order agree with a single pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    pub registry_fingerprint: String,
    pub template_total: u64,
    pub malformed_total: u64,
    pub duplicate_param_total: u64,
    pub excluded_count: u64,
    pub counts: BTreeMap<String, u64>,
    pub unknown: BTreeMap<String, u64>,
    pub unknown_overflow: u64,
    pub unknown_cap: usize,
}

impl CountTable {
    pub fn empty(registry: &JournalRegistry) -> Self {
        Self::with_unknown_cap(registry, DEFAULT_UNKNOWN_CAP)
    }

    pub fn with_unknown_cap(registry: &JournalRegistry, unknown_cap: usize) -> Self {
        CountTable {
            registry_fingerprint: registry.fingerprint().to_string(),
            template_total: 0,
            malformed_total: 0,
            duplicate_param_total: 0,
            excluded_count: 0,
            counts: BTreeMap::new(),
            unknown: BTreeMap::new(),
            unknown_overflow: 0,
            unknown_cap,
        }
    }

    /// Adds one record. Records without a journal only raise the template total.
    pub fn add_record(&mut self, record: &CitationRecord, registry: &JournalRegistry) {
        self.template_total += 1;
        let Some(journal) = record.journal_raw.as_deref() else {
            return;
        };
        match registry.resolve(journal) {
            Resolution::Canonical(name) => *self.counts.entry(name).or_default() += 1,
            Resolution::Excluded(_) => self.excluded_count += 1,
            Resolution::Unknown(raw) => self.add_unknown(raw, 1),
        }
    }

    /// Adds a page's records together with its malformed and duplicate tallies.
    pub fn add_extraction(&mut self, extraction: &Extraction, registry: &JournalRegistry) {
        for record in &extraction.records {
            self.add_record(record, registry);
        }
        self.malformed_total += extraction.stats.malformed;
        self.duplicate_param_total += extraction.stats.duplicate_params;
    }

    fn add_unknown(&mut self, raw: String, n: u64) {
        *self.unknown.entry(raw).or_default() += n;
        while self.unknown.len() > self.unknown_cap {
            let (_, evicted) = self.unknown.pop_last().expect("non-empty");
            self.unknown_overflow += evicted;
        }
    }

    /// Template instances with no usable `journal` parameter.
    pub fn without_journal(&self) -> u64 {
        self.template_total
            - self.counts.values().sum::<u64>()
            - self.excluded_count
            - self.unknown.values().sum::<u64>()
            - self.unknown_overflow
    }

    /// Canonical journals by count descending, then name ascending.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut rows: Vec<_> = self.counts.iter().map(|(k, &v)| (k.as_str(), v)).collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        rows
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), AggregateError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["journal", "count"])?;
        for (journal, count) in self.ranked() {
            w.write_record([journal, &count.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<(), AggregateError> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, AggregateError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Counts the records against `registry`.
pub fn tally<'a>(
    records: impl IntoIterator<Item = &'a CitationRecord>,
    registry: &JournalRegistry,
) -> CountTable {
    let mut table = CountTable::empty(registry);
    for record in records {
        table.add_record(record, registry);
    }
    table
}

/// Like [`tally`] but over whole page extractions, so the malformed and
/// duplicate-parameter tallies are carried along.
pub fn tally_extractions<'a>(
    extractions: impl IntoIterator<Item = &'a Extraction>,
    registry: &JournalRegistry,
) -> CountTable {
    let mut table = CountTable::empty(registry);
    for extraction in extractions {
        table.add_extraction(extraction, registry);
    }
    table
}

/// Pointwise sum of two tables built against the same registry.
pub fn merge(a: &CountTable, b: &CountTable) -> Result<CountTable, AggregateError> {
    if a.registry_fingerprint != b.registry_fingerprint {
        return Err(AggregateError::RegistryMismatch {
            left: a.registry_fingerprint.clone(),
            right: b.registry_fingerprint.clone(),
        });
    }
    if a.unknown_cap != b.unknown_cap {
        return Err(AggregateError::CapMismatch {
            left: a.unknown_cap,
            right: b.unknown_cap,
        });
    }
    let mut out = a.clone();
    out.template_total += b.template_total;
    out.malformed_total += b.malformed_total;
    out.duplicate_param_total += b.duplicate_param_total;
    out.excluded_count += b.excluded_count;
    out.unknown_overflow += b.unknown_overflow;
    for (name, &n) in &b.counts {
        *out.counts.entry(name.clone()).or_default() += n;
    }
    for (raw, &n) in &b.unknown {
        out.add_unknown(raw.clone(), n);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthPoint {
    pub date: NaiveDate,
    pub template_total: u64,
}

/// Template totals over a dated series of tables.
pub fn growth_report(tables: &[(NaiveDate, CountTable)]) -> Result<Vec<GrowthPoint>, AggregateError> {
    for pair in tables.windows(2) {
        if pair[1].0 <= pair[0].0 {
            return Err(AggregateError::NonIncreasingDates {
                previous: pair[0].0,
                next: pair[1].0,
            });
        }
    }
    Ok(tables
        .iter()
        .map(|(date, table)| GrowthPoint {
            date: *date,
            template_total: table.template_total,
        })
        .collect())
}

pub fn write_growth_csv<W: Write>(points: &[GrowthPoint], out: W) -> Result<(), AggregateError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "template_total"])?;
    for p in points {
        w.write_record([p.date.to_string(), p.template_total.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One-line prose rendering, e.g. `0 in February 2005, 12 in May 2006`.
pub fn growth_summary(points: &[GrowthPoint]) -> String {
    points
        .iter()
        .map(|p| format!("{} in {}", p.template_total, p.date.format("%B %Y")))
        .collect::<Vec<_>>()
        .join(", ")
}
