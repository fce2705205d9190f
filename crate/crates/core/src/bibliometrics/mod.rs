//! Joining Wikipedia counts with journal-level statistics and comparing the
//! two by rank correlation.

pub mod kendall;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::CountTable;
use crate::registry::{JournalRegistry, Resolution};

pub use kendall::{kendall_tau_b, kendall_test, tau_p_value, KendallError, KendallTest};

#[derive(Debug, Error)]
pub enum BiblioError {
    #[error("journal {0:?} appears more than once in the journal statistics")]
    DuplicateJournal(String),
    #[error("journal statistics row {row}: {message}")]
    InvalidRow { row: usize, message: String },
    #[error("top-N sizes out of range (valid 2..={available}): {offending:?}")]
    SweepOutOfRange { offending: Vec<usize>, available: usize },
    #[error("overlap needs k <= m <= {len}, got k={k}, m={m}")]
    OverlapBounds { k: usize, m: usize, len: usize },
    #[error("{series} correlation over the top {n} journals: {source}")]
    Correlation {
        series: Series,
        n: usize,
        #[source]
        source: KendallError,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One journal's row from the external statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JcrRecord {
    pub journal: String,
    pub total_citations: u64,
    pub impact_factor: f64,
    pub articles: u64,
}

/// Reads `journal,total_citations,impact_factor,articles` CSV.
pub fn read_jcr_csv<R: Read>(input: R) -> Result<Vec<JcrRecord>, BiblioError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let expected = ["journal", "total_citations", "impact_factor", "articles"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(BiblioError::InvalidRow {
            row: 1,
            message: format!("expected header {}, found {}", expected.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<JcrRecord>().enumerate() {
        let row_no = i + 2;
        let record = row.map_err(|e| BiblioError::InvalidRow {
            row: row_no,
            message: e.to_string(),
        })?;
        if record.journal.is_empty() {
            return Err(BiblioError::InvalidRow {
                row: row_no,
                message: "empty journal name".into(),
            });
        }
        if !record.impact_factor.is_finite() || record.impact_factor < 0.0 {
            return Err(BiblioError::InvalidRow {
                row: row_no,
                message: format!("impact factor must be finite and >= 0, got {}", record.impact_factor),
            });
        }
        out.push(record);
    }
    Ok(out)
}

/// A journal present on both sides of the join.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalMetrics {
    pub journal: String,
    pub wiki_count: u64,
    pub jcr: JcrRecord,
    /// total citations times impact factor, fixed at join time.
    pub combined: f64,
}

impl JournalMetrics {
    pub fn new(journal: impl Into<String>, wiki_count: u64, jcr: JcrRecord) -> Self {
        let combined = jcr.total_citations as f64 * jcr.impact_factor;
        JournalMetrics {
            journal: journal.into(),
            wiki_count,
            jcr,
            combined,
        }
    }
}

/// Joined rows plus whatever failed to match, for audit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JoinReport {
    /// Ordered by Wikipedia count descending, then name.
    pub rows: Vec<JournalMetrics>,
    /// Counted journals with no statistics row.
    pub wiki_only: Vec<String>,
    /// Statistics rows with no Wikipedia citations.
    pub jcr_only: Vec<String>,
    /// Statistics rows dropped because the registry excludes them.
    pub jcr_excluded: Vec<String>,
}

/// Inner join on canonical journal name. Statistics rows are resolved
/// through the registry first, so any alias spelling works there too.
pub fn join(
    counts: &CountTable,
    jcr: &[JcrRecord],
    registry: &JournalRegistry,
) -> Result<JoinReport, BiblioError> {
    let mut by_name: BTreeMap<String, &JcrRecord> = BTreeMap::new();
    let mut excluded = BTreeSet::new();
    for record in jcr {
        let name = match registry.resolve(&record.journal) {
            Resolution::Canonical(name) => name,
            Resolution::Excluded(name) => {
                if !excluded.insert(name.clone()) {
                    return Err(BiblioError::DuplicateJournal(name));
                }
                continue;
            }
            Resolution::Unknown(raw) => raw,
        };
        if by_name.insert(name.clone(), record).is_some() {
            return Err(BiblioError::DuplicateJournal(name));
        }
    }

    let mut report = JoinReport {
        jcr_excluded: excluded.into_iter().collect(),
        ..JoinReport::default()
    };
    for (name, &count) in &counts.counts {
        if registry.exclusions().contains(name) {
            continue;
        }
        match by_name.get(name) {
            Some(record) => report
                .rows
                .push(JournalMetrics::new(name.clone(), count, (*record).clone())),
            None => report.wiki_only.push(name.clone()),
        }
    }
    report.jcr_only = by_name
        .keys()
        .filter(|name| !counts.counts.contains_key(*name))
        .cloned()
        .collect();
    report.rows.sort_by(by_wiki_rank);
    Ok(report)
}

fn by_wiki_rank(a: &JournalMetrics, b: &JournalMetrics) -> Ordering {
    b.wiki_count.cmp(&a.wiki_count).then_with(|| a.journal.cmp(&b.journal))
}

fn by_combined_rank(a: &JournalMetrics, b: &JournalMetrics) -> Ordering {
    b.combined.total_cmp(&a.combined).then_with(|| a.journal.cmp(&b.journal))
}

/// Journals ordered by Wikipedia count descending, ties by name ascending.
pub fn rank_by_wiki(metrics: &[JournalMetrics]) -> Vec<&JournalMetrics> {
    let mut v: Vec<_> = metrics.iter().collect();
    v.sort_by(|a, b| by_wiki_rank(a, b));
    v
}

/// The external series a Wikipedia count can be compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    TotalCitations,
    ImpactFactor,
    Articles,
    Combined,
}

impl Series {
    pub const ALL: [Series; 4] = [
        Series::TotalCitations,
        Series::ImpactFactor,
        Series::Articles,
        Series::Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Series::TotalCitations => "total_citations",
            Series::ImpactFactor => "impact_factor",
            Series::Articles => "articles",
            Series::Combined => "combined",
        }
    }

    pub fn value(self, m: &JournalMetrics) -> f64 {
        match self {
            Series::TotalCitations => m.jcr.total_citations as f64,
            Series::ImpactFactor => m.jcr.impact_factor,
            Series::Articles => m.jcr.articles as f64,
            Series::Combined => m.combined,
        }
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Series {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Series::ALL
            .into_iter()
            .find(|series| series.as_str() == s)
            .ok_or_else(|| format!("unknown series {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub series: Series,
    pub n: usize,
    pub tau: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Correlates Wikipedia counts with `series` over the given rows.
pub fn correlate(rows: &[&JournalMetrics], series: Series) -> Result<CorrelationResult, BiblioError> {
    let wiki: Vec<f64> = rows.iter().map(|m| m.wiki_count as f64).collect();
    let other: Vec<f64> = rows.iter().map(|m| series.value(m)).collect();
    let test = kendall_test(&wiki, &other).map_err(|source| BiblioError::Correlation {
        series,
        n: rows.len(),
        source,
    })?;
    Ok(CorrelationResult {
        series,
        n: rows.len(),
        tau: test.tau,
        z: test.z,
        p_value: test.p_value,
    })
}

/// For each N, correlates the N most Wikipedia-cited journals.
pub fn topn_sweep(
    metrics: &[JournalMetrics],
    series: Series,
    n_values: &[usize],
) -> Result<Vec<CorrelationResult>, BiblioError> {
    let available = metrics.len();
    let offending: Vec<usize> = n_values
        .iter()
        .copied()
        .filter(|&n| n < 2 || n > available)
        .collect();
    if !offending.is_empty() {
        return Err(BiblioError::SweepOutOfRange { offending, available });
    }
    let ranked = rank_by_wiki(metrics);
    n_values
        .iter()
        .map(|&n| correlate(&ranked[..n], series))
        .collect()
}

/// How many of the top `k` journals by the combined measure are among the
/// top `m` by Wikipedia count.
pub fn combined_top_overlap(metrics: &[JournalMetrics], k: usize, m: usize) -> Result<usize, BiblioError> {
    let len = metrics.len();
    if k > m || m > len {
        return Err(BiblioError::OverlapBounds { k, m, len });
    }
    let top_wiki: BTreeSet<&str> = rank_by_wiki(metrics)
        .into_iter()
        .take(m)
        .map(|r| r.journal.as_str())
        .collect();
    let mut by_combined: Vec<_> = metrics.iter().collect();
    by_combined.sort_by(|a, b| by_combined_rank(a, b));
    Ok(by_combined
        .into_iter()
        .take(k)
        .filter(|r| top_wiki.contains(r.journal.as_str()))
        .count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub journal: String,
    pub wiki_count: u64,
    pub combined: f64,
    pub labeled: bool,
}

/// Rows for a Wikipedia-count vs combined-measure scatter plot, in wiki
/// rank order. The first `label_budget` rows are marked for labelling.
pub fn scatter_export(metrics: &[JournalMetrics], label_budget: usize) -> Vec<ScatterRow> {
    rank_by_wiki(metrics)
        .into_iter()
        .enumerate()
        .map(|(i, m)| ScatterRow {
            journal: m.journal.clone(),
            wiki_count: m.wiki_count,
            combined: m.combined,
            labeled: i < label_budget,
        })
        .collect()
}

pub fn write_correlations_csv<W: Write>(results: &[CorrelationResult], out: W) -> Result<(), BiblioError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "n", "tau", "z", "p_value"])?;
    for r in results {
        w.write_record([
            r.series.as_str().to_string(),
            r.n.to_string(),
            r.tau.to_string(),
            r.z.to_string(),
            r.p_value.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_scatter_csv<W: Write>(rows: &[ScatterRow], out: W) -> Result<(), BiblioError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["journal", "wiki_count", "combined", "labeled"])?;
    for r in rows {
        w.write_record([
            r.journal.clone(),
            r.wiki_count.to_string(),
            r.combined.to_string(),
            r.labeled.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jcr(name: &str, tc: u64, jif: f64, articles: u64) -> JcrRecord {
        JcrRecord {
            journal: name.into(),
            total_citations: tc,
            impact_factor: jif,
            articles,
        }
    }

    fn table(counts: &[(&str, u64)]) -> CountTable {
        let mut t = CountTable::empty(&JournalRegistry::starter());
        for &(name, n) in counts {
            t.counts.insert(name.into(), n);
            t.template_total += n;
        }
        t
    }

    #[test]
    fn join_single_row() {
        let reg = JournalRegistry::starter();
        let report = join(&table(&[("Nature", 787)]), &[jcr("Nature", 1_000, 2.5, 10)], &reg).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].wiki_count, 787);
        assert_eq!(report.rows[0].combined, 2_500.0);
    }

    #[test]
    fn join_empty_statistics() {
        let reg = JournalRegistry::starter();
        let report = join(&table(&[("Nature", 3), ("Science", 2)]), &[], &reg).unwrap();
        assert!(report.rows.is_empty());
        assert_eq!(report.wiki_only, ["Nature", "Science"]);
    }

    #[test]
    fn join_five_by_five() {
        let reg = JournalRegistry::starter();
        let counts = table(&[("Nature", 9), ("Science", 8), ("JAMA", 7), ("Icarus", 6), ("Nuytsia", 5)]);
        let stats = [
            jcr("nature", 1, 1.0, 1),
            jcr("Science", 1, 1.0, 1),
            jcr("Journal of the American Medical Association", 1, 1.0, 1),
            jcr("Cell", 1, 1.0, 1),
            jcr("Neuron", 1, 1.0, 1),
        ];
        let report = join(&counts, &stats, &reg).unwrap();
        let names: Vec<_> = report.rows.iter().map(|r| r.journal.as_str()).collect();
        assert_eq!(names, ["Nature", "Science", "JAMA"]);
        assert_eq!(report.wiki_only, ["Icarus", "Nuytsia"]);
        assert_eq!(report.jcr_only, ["Cell", "Neuron"]);
    }

    #[test]
    fn join_rejects_duplicates_and_drops_excluded() {
        let reg = JournalRegistry::starter();
        let err = join(&table(&[]), &[jcr("Lancet", 1, 1.0, 1), jcr("The Lancet", 2, 1.0, 1)], &reg).unwrap_err();
        assert!(matches!(err, BiblioError::DuplicateJournal(ref j) if j == "The Lancet"));

        let report = join(&table(&[("Nature", 1)]), &[jcr("Scientific American", 1, 1.0, 1)], &reg).unwrap();
        assert_eq!(report.jcr_excluded, ["Scientific American"]);
        assert!(report.jcr_only.is_empty());
    }

    fn metrics(rows: &[(&str, u64, u64, f64)]) -> Vec<JournalMetrics> {
        rows.iter()
            .map(|&(name, wiki, tc, jif)| JournalMetrics::new(name, wiki, jcr(name, tc, jif, 10)))
            .collect()
    }

    #[test]
    fn sweep_full_matches_direct() {
        let m = metrics(&[("A", 10, 100, 1.0), ("B", 7, 90, 3.0), ("C", 5, 20, 2.0), ("D", 5, 50, 0.5)]);
        let sweep = topn_sweep(&m, Series::TotalCitations, &[4]).unwrap();
        let direct = correlate(&rank_by_wiki(&m), Series::TotalCitations).unwrap();
        assert_eq!(sweep[0], direct);
    }

    #[test]
    fn sweep_out_of_range_lists_offenders() {
        let m = metrics(&[("A", 3, 1, 1.0), ("B", 2, 2, 1.0), ("C", 1, 3, 1.0)]);
        match topn_sweep(&m, Series::Combined, &[1, 2, 3, 4]).unwrap_err() {
            BiblioError::SweepOutOfRange { offending, available } => {
                assert_eq!(offending, [1, 4]);
                assert_eq!(available, 3);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn rank_ties_broken_by_name() {
        let m = metrics(&[("Zeta", 5, 1, 1.0), ("Alpha", 5, 1, 1.0), ("Mid", 9, 1, 1.0)]);
        let names: Vec<_> = rank_by_wiki(&m).iter().map(|r| r.journal.as_str()).collect();
        assert_eq!(names, ["Mid", "Alpha", "Zeta"]);
    }

    #[test]
    fn overlap_cases() {
        // Combined order is the reverse of wiki order.
        let m = metrics(&[
            ("A", 60, 1, 1.0),
            ("B", 50, 2, 1.0),
            ("C", 40, 3, 1.0),
            ("D", 30, 4, 1.0),
            ("E", 20, 5, 1.0),
            ("F", 10, 6, 1.0),
        ]);
        assert_eq!(combined_top_overlap(&m, 2, 2).unwrap(), 0);
        assert_eq!(combined_top_overlap(&m, 6, 6).unwrap(), 6);
        assert_eq!(combined_top_overlap(&m, 2, 5).unwrap(), 1);
        assert!(combined_top_overlap(&m, 3, 2).is_err());
        assert!(combined_top_overlap(&m, 2, 7).is_err());
    }

    #[test]
    fn scatter_labels_argmax() {
        assert!(scatter_export(&[], 100).is_empty());
        let m = metrics(&[("A", 3, 1, 2.0), ("B", 9, 1, 1.0), ("C", 5, 1, 1.0)]);
        let rows = scatter_export(&m, 1);
        let labeled: Vec<_> = rows.iter().filter(|r| r.labeled).collect();
        assert_eq!(labeled.len(), 1);
        assert_eq!(labeled[0].journal, "B");
    }

    #[test]
    fn empty_scatter_csv_is_header_only() {
        let mut out = Vec::new();
        write_scatter_csv(&[], &mut out).unwrap();
        assert_eq!(out, b"journal,wiki_count,combined,labeled\n");
    }

    #[test]
    fn jcr_csv_parsing() {
        let text = "journal,total_citations,impact_factor,articles\nNature, 1200,3.5,40\nScience,900,4.25,35\n";
        let rows = read_jcr_csv(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].total_citations, 1200);
        assert!(read_jcr_csv("journal,count\nA,1\n".as_bytes()).is_err());
        assert!(read_jcr_csv("journal,total_citations,impact_factor,articles\nA,-1,1,1\n".as_bytes()).is_err());
        assert!(read_jcr_csv("journal,total_citations,impact_factor,articles\nA,1,NaN,1\n".as_bytes()).is_err());
    }

    #[test]
    fn series_names_round_trip() {
        for s in Series::ALL {
            assert_eq!(s.as_str().parse::<Series>().unwrap(), s);
        }
    }
}
