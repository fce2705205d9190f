//! Streams a dump through the extractor, optionally on a worker pool.
//!
//! Pages are gathered into bounded batches; each batch is extracted in
//! parallel and handed to the sink in document order, so results do not
//! depend on the number of workers.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use wikicite::dump::SkipReason;
use wikicite::{extract_citations, DumpError, DumpReader, Extraction, NamespaceFilter, WikiPage};

use crate::error::{io_error, CliError};
use crate::manifest::{HashingReader, InputDigest};

const BATCH_PAGES: usize = 512;
const BATCH_BYTES: usize = 8 << 20;

/// Page and template tallies for one pass over a dump.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DumpSummary {
    pub pages_encountered: u64,
    pub pages_skipped_missing_title: u64,
    pub pages_skipped_bad_namespace: u64,
    pub pages_outside_namespaces: u64,
    pub pages_processed: u64,
    pub template_total: u64,
    pub malformed_total: u64,
    pub duplicate_param_total: u64,
    pub inside_math_total: u64,
}

impl DumpSummary {
    fn absorb(&mut self, extraction: &Extraction) {
        self.pages_processed += 1;
        self.template_total += extraction.records.len() as u64;
        self.malformed_total += extraction.stats.malformed;
        self.duplicate_param_total += extraction.stats.duplicate_params;
        self.inside_math_total += extraction.stats.inside_math;
    }
}

fn open_source(dump: &Path) -> Result<Box<dyn Read>, CliError> {
    if dump.as_os_str() == "-" {
        Ok(Box::new(io::stdin().lock()))
    } else {
        Ok(Box::new(File::open(dump).map_err(|e| io_error(dump, e))?))
    }
}

fn dump_error(dump: &Path, err: DumpError) -> CliError {
    CliError::input(format!("{}: {err}", dump.display()))
}

/// Reads `dump` (`-` for standard input) and feeds each kept page's
/// extraction to `sink`, in document order.
pub fn for_each_extraction(
    dump: &Path,
    namespaces: &NamespaceFilter,
    jobs: usize,
    mut sink: impl FnMut(Extraction) -> Result<(), CliError>,
) -> Result<(DumpSummary, InputDigest), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::usage(format!("cannot start {jobs} workers: {e}")))?;
    let source = BufReader::with_capacity(256 * 1024, HashingReader::new(open_source(dump)?));
    let mut reader = DumpReader::new(source);
    let mut summary = DumpSummary::default();
    let mut batch: Vec<WikiPage> = Vec::with_capacity(BATCH_PAGES);
    let mut batch_bytes = 0usize;

    let mut flush = |batch: &mut Vec<WikiPage>, summary: &mut DumpSummary| -> Result<(), CliError> {
        let extractions: Vec<Extraction> = if jobs > 1 {
            pool.install(|| batch.par_iter().map(extract_citations).collect())
        } else {
            batch.iter().map(extract_citations).collect()
        };
        batch.clear();
        for extraction in extractions {
            summary.absorb(&extraction);
            sink(extraction)?;
        }
        Ok(())
    };

    for page in reader.by_ref() {
        let page = page.map_err(|e| dump_error(dump, e))?;
        if !namespaces.allows(page.namespace) {
            summary.pages_outside_namespaces += 1;
            continue;
        }
        batch_bytes += page.text.len();
        batch.push(page);
        if batch.len() >= BATCH_PAGES || batch_bytes >= BATCH_BYTES {
            flush(&mut batch, &mut summary)?;
            batch_bytes = 0;
        }
    }
    flush(&mut batch, &mut summary)?;

    summary.pages_encountered = reader.pages_encountered();
    for reason in reader.skip_reasons() {
        match reason {
            SkipReason::MissingTitle => summary.pages_skipped_missing_title += 1,
            SkipReason::BadNamespace(_) => summary.pages_skipped_bad_namespace += 1,
        }
    }
    // Hash whatever trails the root element too, so the digest covers the file.
    let mut rest = reader.into_inner();
    loop {
        let n = rest.fill_buf().map_err(|e| io_error(dump, e))?.len();
        if n == 0 {
            break;
        }
        rest.consume(n);
    }
    let (sha256, bytes) = rest.into_inner().finish();
    let digest = InputDigest::new("dump", dump.display().to_string(), sha256, bytes);
    Ok((summary, digest))
}
