//! Structured journal citations in MediaWiki dumps, compared against
//! journal-level citation statistics.
//!
//! The pipeline runs in stages, each usable on its own:
//!
//! 1. [`dump`] streams pages out of an XML export.
//! 2. [`extract`] finds `{{cite journal}}` templates and their parameters.
//! 3. [`registry`] maps journal spellings to canonical names.
//! 4. [`aggregate`] folds records into mergeable per-journal counts.
//! 5. [`bibliometrics`] joins counts with external statistics and runs
//!    Kendall rank correlations over top-N subsets.
//!
//! [`fixture`] generates synthetic dumps with known contents.

pub mod aggregate;
pub mod bibliometrics;
pub mod dump;
pub mod extract;
pub mod fixture;
pub mod registry;

pub use aggregate::{growth_report, growth_summary, merge, tally, tally_extractions, CountTable, GrowthPoint};
pub use bibliometrics::{
    combined_top_overlap, join, kendall_tau_b, scatter_export, topn_sweep, CorrelationResult, JcrRecord,
    JoinReport, JournalMetrics, Series,
};
pub use dump::{filter_namespaces, open_dump, DumpError, DumpReader, NamespaceFilter, WikiPage};
pub use extract::{count_template_instances, extract_citations, extract_from_text, CitationRecord, Extraction};
pub use registry::{normalize_key, JournalRegistry, Resolution};
