//! `wikicite`: extract, count and correlate journal citations in MediaWiki
//! XML dumps.

mod commands;
mod config;
mod error;
mod manifest;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "wikicite", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DumpArgs {
    /// MediaWiki XML export; `-` reads standard input.
    #[arg(long)]
    dump: PathBuf,
    /// Namespaces to keep: comma-separated numbers, or `all`.
    #[arg(long, default_value = "0")]
    namespaces: String,
    /// Worker threads for template extraction.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct RegistryArg {
    /// Journal registry TSV; the built-in starter registry when omitted.
    #[arg(long)]
    registry: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write every cite journal template as a JSON line.
    Extract {
        #[command(flatten)]
        dump: DumpArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tally citations per canonical journal.
    Count {
        #[command(flatten)]
        dump: DumpArgs,
        #[command(flatten)]
        registry: RegistryArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank-correlate citation counts with journal statistics.
    Correlate {
        /// Journal statistics CSV: journal,total_citations,impact_factor,articles.
        #[arg(long)]
        jcr: PathBuf,
        /// Counts written by `count`.
        #[arg(long, conflicts_with = "dump", required_unless_present = "dump")]
        counts: Option<PathBuf>,
        /// Count straight from a dump instead.
        #[arg(long)]
        dump: Option<PathBuf>,
        #[arg(long, default_value = "0")]
        namespaces: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        registry: RegistryArg,
        /// Top-N sizes, e.g. `2..10` or `5,10,20`; all joined journals by default.
        #[arg(long)]
        sweep: Option<String>,
        /// How many top journals the scatter export marks for labelling.
        #[arg(long, default_value_t = 100)]
        labels: usize,
        /// Overlap report sizes as `K:M`.
        #[arg(long, default_value = "10:19")]
        overlap: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Template totals over dated count tables.
    Growth {
        /// `YYYY-MM-DD=counts.json`, in increasing date order.
        #[arg(required = true)]
        tables: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic dump with known contents.
    GenFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2007)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        pages: usize,
        #[arg(long, default_value_t = 1000)]
        citations: usize,
        #[arg(long, default_value_t = 50)]
        nested: usize,
        #[arg(long, default_value_t = 30)]
        decoys: usize,
        #[arg(long, default_value_t = 20)]
        malformed: usize,
        /// Extra pages outside the article namespace.
        #[arg(long, default_value_t = 0)]
        other_pages: usize,
        /// Omit `<ns>` elements, as in older dumps.
        #[arg(long)]
        no_ns: bool,
        /// Instead of a planted corpus, stream filler pages up to this many bytes.
        #[arg(long)]
        bytes: Option<u64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Extract { dump, out } => commands::extract(commands::DumpOptions::parse(&dump)?, &out),
        Command::Count { dump, registry, out } => {
            commands::count(commands::DumpOptions::parse(&dump)?, registry.registry.as_deref(), &out)
        }
        Command::Correlate {
            jcr,
            counts,
            dump,
            namespaces,
            jobs,
            registry,
            sweep,
            labels,
            overlap,
            out,
        } => {
            let source = match (counts, dump) {
                (Some(path), _) => commands::CountSource::Table(path),
                (None, Some(path)) => commands::CountSource::Dump(commands::DumpOptions::parse(&DumpArgs {
                    dump: path,
                    namespaces,
                    jobs,
                })?),
                (None, None) => return Err(CliError::usage("one of --counts or --dump is required")),
            };
            let sweep = sweep
                .as_deref()
                .map(config::parse_sweep)
                .transpose()
                .map_err(CliError::usage)?;
            let overlap = config::parse_overlap(&overlap).map_err(CliError::usage)?;
            commands::correlate(commands::CorrelateOptions {
                jcr,
                source,
                registry: registry.registry,
                sweep,
                labels,
                overlap,
                out,
            })
        }
        Command::Growth { tables, out } => commands::growth(&tables, &out),
        Command::GenFixture {
            out,
            seed,
            pages,
            citations,
            nested,
            decoys,
            malformed,
            other_pages,
            no_ns,
            bytes,
        } => {
            let spec = wikicite::fixture::FixtureSpec {
                seed,
                article_pages: pages,
                citations,
                nested,
                decoys,
                malformed,
                other_namespace_pages: other_pages,
                emit_ns: !no_ns,
                ..Default::default()
            };
            commands::gen_fixture(spec, bytes, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("wikicite: {err}");
            err.exit_code()
        }
    }
}
