use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;
use serde_json::json;
use wikicite::aggregate::write_growth_csv;
use wikicite::bibliometrics::{read_jcr_csv, write_correlations_csv, write_scatter_csv, BiblioError};
use wikicite::extract::write_jsonl;
use wikicite::fixture::{Fixture, FixtureSpec, SyntheticDump};
use wikicite::{
    combined_top_overlap, growth_report, growth_summary, join, scatter_export, topn_sweep, CountTable,
    JournalRegistry, NamespaceFilter, Series,
};

use crate::config::parse_namespaces;
use crate::error::{io_error, CliError};
use crate::manifest::{json_bytes, write_output, HashingWriter, InputDigest, Manifest};
use crate::pipeline::{for_each_extraction, DumpSummary};
use crate::DumpArgs;

/// Shortest shared prefix for reporting an unknown journal as a near miss.
const NEAR_MISS_PREFIX: usize = 6;
/// Size of the oversized page in streamed synthetic dumps.
const SYNTHETIC_BIG_PAGE: usize = 2 << 20;

#[derive(Debug, Clone, Serialize)]
pub struct DumpOptions {
    pub dump: PathBuf,
    pub namespaces: NamespaceFilter,
    pub jobs: usize,
}

impl DumpOptions {
    pub fn parse(args: &DumpArgs) -> Result<Self, CliError> {
        if args.jobs == 0 {
            return Err(CliError::usage("--jobs must be at least 1"));
        }
        Ok(DumpOptions {
            dump: args.dump.clone(),
            namespaces: parse_namespaces(&args.namespaces).map_err(CliError::usage)?,
            jobs: args.jobs,
        })
    }
}

fn create_out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| io_error(out, e))
}

fn load_registry(path: Option<&Path>) -> Result<(JournalRegistry, InputDigest), CliError> {
    match path {
        None => {
            let text = JournalRegistry::starter_text();
            Ok((
                JournalRegistry::starter(),
                InputDigest::of_bytes("registry", "<starter>".into(), text.as_bytes()),
            ))
        }
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            let registry = JournalRegistry::parse(&text)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            Ok((registry, InputDigest::of_bytes("registry", path.display().to_string(), text.as_bytes())))
        }
    }
}

fn tally_dump(
    options: &DumpOptions,
    registry: &JournalRegistry,
) -> Result<(CountTable, DumpSummary, InputDigest), CliError> {
    let mut table = CountTable::empty(registry);
    let (summary, digest) = for_each_extraction(&options.dump, &options.namespaces, options.jobs, |extraction| {
        table.add_extraction(&extraction, registry);
        Ok(())
    })?;
    Ok((table, summary, digest))
}

pub fn extract(options: DumpOptions, out: &Path) -> Result<(), CliError> {
    create_out_dir(out)?;
    let mut manifest = Manifest::new("extract", &options);
    let mut writer = HashingWriter::create(&out.join("citations.jsonl"))?;
    let (summary, digest) = for_each_extraction(&options.dump, &options.namespaces, options.jobs, |extraction| {
        write_jsonl(&extraction.records, &mut writer).map_err(|e| CliError::input(format!("citations.jsonl: {e}")))
    })?;
    manifest.inputs.push(digest);
    manifest.outputs.push(writer.finish()?);
    manifest
        .outputs
        .push(write_output(out, "extract_summary.json", &json_bytes(&summary))?);
    manifest.write(out)?;
    println!(
        "{} records from {} pages ({} malformed)",
        summary.template_total, summary.pages_processed, summary.malformed_total
    );
    Ok(())
}

#[derive(Serialize)]
struct CountAudit<'a> {
    dump: &'a DumpSummary,
    without_journal: u64,
    excluded_count: u64,
    unknown_distinct: usize,
    unknown_overflow: u64,
    near_misses: Vec<wikicite::registry::NearMiss>,
}

pub fn count(options: DumpOptions, registry_path: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let (registry, registry_digest) = load_registry(registry_path)?;
    create_out_dir(out)?;
    let (table, summary, dump_digest) = tally_dump(&options, &registry)?;

    let mut manifest = Manifest::new("count", &options);
    manifest.inputs.extend([dump_digest, registry_digest]);
    let mut csv = Vec::new();
    table.write_csv(&mut csv).expect("writing to memory");
    manifest.outputs.push(write_output(out, "counts.csv", &csv)?);
    let mut js = Vec::new();
    table.write_json(&mut js).expect("writing to memory");
    js.push(b'\n');
    manifest.outputs.push(write_output(out, "counts.json", &js)?);
    let audit = CountAudit {
        dump: &summary,
        without_journal: table.without_journal(),
        excluded_count: table.excluded_count,
        unknown_distinct: table.unknown.len(),
        unknown_overflow: table.unknown_overflow,
        near_misses: registry.near_misses(&table.unknown, NEAR_MISS_PREFIX),
    };
    manifest.outputs.push(write_output(out, "count_audit.json", &json_bytes(&audit))?);
    manifest.write(out)?;
    println!(
        "{} templates, {} journals, {} excluded, {} unresolved",
        table.template_total,
        table.counts.len(),
        table.excluded_count,
        table.unknown.values().sum::<u64>() + table.unknown_overflow
    );
    Ok(())
}

pub enum CountSource {
    Table(PathBuf),
    Dump(DumpOptions),
}

pub struct CorrelateOptions {
    pub jcr: PathBuf,
    pub source: CountSource,
    pub registry: Option<PathBuf>,
    pub sweep: Option<Vec<usize>>,
    pub labels: usize,
    pub overlap: (usize, usize),
    pub out: PathBuf,
}

fn biblio_error(err: BiblioError) -> CliError {
    match err {
        BiblioError::SweepOutOfRange { .. } | BiblioError::Correlation { .. } | BiblioError::OverlapBounds { .. } => {
            CliError::insufficient(err.to_string())
        }
        other => CliError::input(other.to_string()),
    }
}

pub fn correlate(options: CorrelateOptions) -> Result<(), CliError> {
    let (registry, registry_digest) = load_registry(options.registry.as_deref())?;
    let mut inputs = Vec::new();
    let (table, dump_config) = match &options.source {
        CountSource::Table(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            let table = CountTable::from_json(&text)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            if table.registry_fingerprint != registry.fingerprint() {
                return Err(CliError::input(format!(
                    "{} was counted with a different registry; pass the same --registry used for `count`",
                    path.display()
                )));
            }
            inputs.push(InputDigest::of_bytes("counts", path.display().to_string(), text.as_bytes()));
            (table, None)
        }
        CountSource::Dump(dump) => {
            let (table, _, digest) = tally_dump(dump, &registry)?;
            inputs.push(digest);
            (table, Some(dump))
        }
    };
    let jcr_bytes = fs::read(&options.jcr).map_err(|e| io_error(&options.jcr, e))?;
    let jcr = read_jcr_csv(&jcr_bytes[..]).map_err(|e| CliError::input(format!("{}: {e}", options.jcr.display())))?;
    inputs.push(InputDigest::of_bytes("jcr", options.jcr.display().to_string(), &jcr_bytes));
    inputs.push(registry_digest);

    let report = join(&table, &jcr, &registry).map_err(biblio_error)?;
    let joined = report.rows.len();
    if joined < 2 {
        return Err(CliError::insufficient(format!(
            "only {joined} journal(s) appear in both the counts and the statistics; a correlation needs at least 2"
        )));
    }
    let sweep = options.sweep.clone().unwrap_or_else(|| (2..=joined).collect());
    let mut results = Vec::with_capacity(sweep.len() * Series::ALL.len());
    for series in Series::ALL {
        results.extend(topn_sweep(&report.rows, series, &sweep).map_err(biblio_error)?);
    }

    create_out_dir(&options.out)?;
    let config = json!({
        "counts": match &options.source { CountSource::Table(p) => Some(p.display().to_string()), _ => None },
        "dump": dump_config,
        "sweep": sweep,
        "labels": options.labels,
        "overlap": { "k": options.overlap.0, "m": options.overlap.1 },
    });
    let mut manifest = Manifest::new("correlate", config);
    manifest.inputs = inputs;

    let mut csv = Vec::new();
    write_correlations_csv(&results, &mut csv).map_err(biblio_error)?;
    manifest.outputs.push(write_output(&options.out, "correlation.csv", &csv)?);

    let mut scatter = Vec::new();
    write_scatter_csv(&scatter_export(&report.rows, options.labels), &mut scatter).map_err(biblio_error)?;
    manifest.outputs.push(write_output(&options.out, "scatter.csv", &scatter)?);

    let (k, m) = options.overlap;
    let overlap = combined_top_overlap(&report.rows, k, m).ok();
    let overlap_report = json!({ "k": k, "m": m, "journals_joined": joined, "overlap": overlap });
    manifest
        .outputs
        .push(write_output(&options.out, "overlap.json", &json_bytes(&overlap_report))?);
    let audit = json!({
        "joined": joined,
        "wiki_only": report.wiki_only,
        "jcr_only": report.jcr_only,
        "jcr_excluded": report.jcr_excluded,
    });
    manifest
        .outputs
        .push(write_output(&options.out, "join_audit.json", &json_bytes(&audit))?);
    manifest.write(&options.out)?;
    println!("{joined} journals joined; {} correlations written", results.len());
    Ok(())
}

pub fn growth(tables: &[String], out: &Path) -> Result<(), CliError> {
    let mut dated = Vec::with_capacity(tables.len());
    let mut inputs = Vec::with_capacity(tables.len());
    for arg in tables {
        let (date, path) = arg
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("expected DATE=counts.json, got {arg:?}")))?;
        let date = NaiveDate::parse_from_str(date, "%Y-%m-%d")
            .map_err(|e| CliError::usage(format!("bad date {date:?} ({e}); use YYYY-MM-DD")))?;
        let path = Path::new(path);
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let table = CountTable::from_json(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        inputs.push(InputDigest::of_bytes("counts", path.display().to_string(), text.as_bytes()));
        dated.push((date, table));
    }
    let points = growth_report(&dated).map_err(|e| CliError::usage(e.to_string()))?;
    create_out_dir(out)?;
    let mut manifest = Manifest::new("growth", json!({ "tables": tables }));
    manifest.inputs = inputs;
    let mut csv = Vec::new();
    write_growth_csv(&points, &mut csv).expect("writing to memory");
    manifest.outputs.push(write_output(out, "growth.csv", &csv)?);
    let summary = growth_summary(&points);
    manifest
        .outputs
        .push(write_output(out, "growth.txt", format!("{summary}\n").as_bytes())?);
    manifest.write(out)?;
    println!("{summary}");
    Ok(())
}

pub fn gen_fixture(spec: FixtureSpec, bytes: Option<u64>, out: &Path) -> Result<(), CliError> {
    if spec.nested > spec.citations {
        return Err(CliError::usage("--nested cannot exceed --citations"));
    }
    if spec.malformed > spec.article_pages {
        return Err(CliError::usage("--malformed cannot exceed --pages"));
    }
    create_out_dir(out)?;
    let mut writer = HashingWriter::create(&out.join("dump.xml"))?;
    let mut manifest = Manifest::new("gen-fixture", json!({ "spec": &spec, "bytes": bytes }));
    match bytes {
        Some(target) => {
            let mut stream = SyntheticDump::new(target, spec.seed, SYNTHETIC_BIG_PAGE);
            io::copy(&mut stream, &mut writer).map_err(|e| io_error(out, e))?;
            manifest.outputs.push(writer.finish()?);
        }
        None => {
            let fixture = Fixture::generate(spec);
            fixture.write_xml(&mut writer).map_err(|e| io_error(out, e))?;
            writer.flush().map_err(|e| io_error(out, e))?;
            manifest.outputs.push(writer.finish()?);
            manifest
                .outputs
                .push(write_output(out, "truth.json", &json_bytes(&fixture.truth))?);
        }
    }
    manifest.write(out)?;
    Ok(())
}
