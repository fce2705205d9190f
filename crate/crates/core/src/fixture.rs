//! Synthetic MediaWiki dumps with known ground truth.
//!
//! The generator plants `cite journal` templates (plus decoys and broken
//! ones) into filler wikitext and records exactly what it planted. The
//! expected resolution of each journal spelling is fixed in a table here,
//! independent of the registry code.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use quick_xml::escape::{escape, partial_escape};
use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dump::WikiPage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Planted {
    Canonical(&'static str),
    Excluded,
    Unknown,
}

/// `(as written in wikitext, journal after markup reduction, outcome)`.
const JOURNAL_VARIANTS: &[(&str, &str, Planted)] = &[
    ("Nature", "Nature", Planted::Canonical("Nature")),
    ("[[Nature (journal)|Nature]]", "Nature", Planted::Canonical("Nature")),
    ("''Nature''", "Nature", Planted::Canonical("Nature")),
    ("Science", "Science", Planted::Canonical("Science")),
    ("[[Science (journal)|Science]]", "Science", Planted::Canonical("Science")),
    ("N Engl J Med", "N Engl J Med", Planted::Canonical("New England Journal of Medicine")),
    (
        "[[The New England Journal of Medicine]]",
        "The New England Journal of Medicine",
        Planted::Canonical("New England Journal of Medicine"),
    ),
    ("Astrophysical Journal", "Astrophysical Journal", Planted::Canonical("The Astrophysical Journal")),
    ("Astrophys. J.", "Astrophys. J.", Planted::Canonical("The Astrophysical Journal")),
    ("Astronomy & Astrophysics", "Astronomy & Astrophysics", Planted::Canonical("Astronomy & Astrophysics")),
    ("A&A", "A&A", Planted::Canonical("Astronomy & Astrophysics")),
    ("Icarus", "Icarus", Planted::Canonical("Icarus")),
    ("The Astronomical Journal", "The Astronomical Journal", Planted::Canonical("The Astronomical Journal")),
    ("Lancet", "Lancet", Planted::Canonical("The Lancet")),
    ("'''The Lancet'''", "The Lancet", Planted::Canonical("The Lancet")),
    ("JAMA", "JAMA", Planted::Canonical("JAMA")),
    ("BMJ", "BMJ", Planted::Canonical("British Medical Journal")),
    ("Ann Intern Med", "Ann Intern Med", Planted::Canonical("Annals of Internal Medicine")),
    ("Nuytsia", "Nuytsia", Planted::Canonical("Nuytsia")),
    ("Commun. ACM", "Commun. ACM", Planted::Canonical("Communications of the ACM")),
    ("Annual Review of Immunology", "Annual Review of Immunology", Planted::Canonical("Annual Review of Immunology")),
    ("The New York Times", "The New York Times", Planted::Excluded),
    ("Scientific American", "Scientific American", Planted::Excluded),
    ("Phys. Rev.", "Phys. Rev.", Planted::Excluded),
    ("Journal of Imaginary Results", "Journal of Imaginary Results", Planted::Unknown),
    ("Proc. Obscure Soc.", "Proc. Obscure Soc.", Planted::Unknown),
];

const TEMPLATE_NAMES: &[&str] = &["cite journal", "Cite journal", "cite_journal", "Cite_journal", " cite journal\n"];

const FILLER: &[&str] = &[
    "The genus was described in the eighteenth century and has since been revised several times. ",
    "[[Banksia]] species are pollinated by birds and small mammals, see [[Pollination|pollinators]]. ",
    "{{Infobox journal|title=Example|discipline=Botany|abbreviation=Ex. J.}}\n",
    "Early observations<ref>{{cite book|title=A Flora|year=1810}}</ref> were incomplete. ",
    "== History ==\nMeasurements are given in SI units & converted where needed. ",
    "{{fact}} Some claims remain unsourced; ''italic'' and '''bold''' markup is common. ",
    "<math>E = mc^2</math> relates energy and mass. ",
    "<!-- editor note: expand this section --> ",
    "Ünïcödé text — ελληνικά and 日本語 keep byte offsets honest. ",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub seed: u64,
    pub article_pages: usize,
    /// Well-formed templates planted in article pages.
    pub citations: usize,
    /// How many of those carry a nested template in a parameter value.
    pub nested: usize,
    /// Comment-wrapped templates that must be ignored.
    pub decoys: usize,
    /// Pages ending in an unclosed `cite journal` template.
    pub malformed: usize,
    /// Talk/Category/Template pages, each with one well-formed template.
    pub other_namespace_pages: usize,
    /// Write `<ns>` elements; when false, readers must infer from titles.
    pub emit_ns: bool,
    /// Share of citations that omit the journal parameter, in percent.
    pub missing_journal_percent: u32,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            seed: 2007,
            article_pages: 500,
            citations: 1000,
            nested: 50,
            decoys: 30,
            malformed: 20,
            other_namespace_pages: 0,
            emit_ns: true,
            missing_journal_percent: 5,
        }
    }
}

/// What the generator planted in article-namespace pages.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureTruth {
    pub article_pages: usize,
    pub records: u64,
    pub nested: u64,
    pub decoys: u64,
    pub malformed: u64,
    pub canonical_counts: BTreeMap<String, u64>,
    pub excluded: u64,
    pub unknown: BTreeMap<String, u64>,
    pub without_journal: u64,
    /// Templates planted outside the article namespace.
    pub other_namespace_records: u64,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub spec: FixtureSpec,
    pub pages: Vec<WikiPage>,
    pub truth: FixtureTruth,
}

struct Citation {
    text: String,
    journal: Option<(&'static str, Planted)>,
}

fn citation(rng: &mut ChaCha8Rng, nested: bool, missing_pct: u32) -> Citation {
    let name = TEMPLATE_NAMES.choose(rng).unwrap();
    let journal = if rng.random_range(0..100) < missing_pct {
        None
    } else {
        JOURNAL_VARIANTS.choose(rng).copied()
    };
    let (sep, eq) = match rng.random_range(0..3) {
        0 => ("|", "="),
        1 => (" | ", " = "),
        _ => ("\n| ", " = "),
    };
    let mut params: Vec<String> = vec![
        format!("title{eq}Observations of [[Banksia|banksias]] no. {}", rng.random_range(1..500)),
        format!("year{eq}{}", rng.random_range(1950..2007)),
        format!("pages{eq}{}-{}", rng.random_range(1..100), rng.random_range(100..200)),
    ];
    if nested {
        params.push(format!("author{eq}{{{{aut|Smith J}}}} and {{{{aut|Jones K}}}}"));
    } else {
        params.push(format!("author{eq}Smith J"));
    }
    if let Some((written, _, _)) = journal {
        params.push(format!("journal{eq}{written}"));
    }
    params.shuffle(rng);
    let mut text = format!("{{{{{name}");
    for p in &params {
        text.push_str(sep);
        text.push_str(p);
    }
    text.push_str("}}");
    if rng.random_bool(0.6) {
        text = format!("<ref name=\"r{}\">{text}</ref>", rng.random_range(0..1000));
    }
    Citation {
        text,
        journal: journal.map(|(_, reduced, outcome)| (reduced, outcome)),
    }
}

fn filler(rng: &mut ChaCha8Rng, out: &mut String) {
    for _ in 0..rng.random_range(1..4) {
        out.push_str(FILLER.choose(rng).unwrap());
    }
}

impl Fixture {
    pub fn generate(spec: FixtureSpec) -> Fixture {
        assert!(spec.nested <= spec.citations, "nested must not exceed citations");
        assert!(spec.malformed <= spec.article_pages, "at most one malformed template per page");
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut truth = FixtureTruth {
            article_pages: spec.article_pages,
            ..FixtureTruth::default()
        };
        let mut snippets: Vec<Vec<String>> = vec![Vec::new(); spec.article_pages];

        if spec.article_pages > 0 {
            let nested_idx: std::collections::HashSet<usize> =
                index::sample(&mut rng, spec.citations, spec.nested).into_iter().collect();
            for i in 0..spec.citations {
                let c = citation(&mut rng, nested_idx.contains(&i), spec.missing_journal_percent);
                truth.records += 1;
                match c.journal {
                    None => truth.without_journal += 1,
                    Some((_, Planted::Canonical(name))) => {
                        *truth.canonical_counts.entry(name.to_string()).or_default() += 1
                    }
                    Some((_, Planted::Excluded)) => truth.excluded += 1,
                    Some((reduced, Planted::Unknown)) => *truth.unknown.entry(reduced.to_string()).or_default() += 1,
                }
                let page = rng.random_range(0..spec.article_pages);
                snippets[page].push(c.text);
            }
            truth.nested = spec.nested as u64;
            for _ in 0..spec.decoys {
                let page = rng.random_range(0..spec.article_pages);
                snippets[page].push("<!-- {{cite journal|journal=Decoy Letters|title=Commented out}} -->".to_string());
            }
            truth.decoys = spec.decoys as u64;
        }

        let malformed_pages: std::collections::HashSet<usize> =
            index::sample(&mut rng, spec.article_pages, spec.malformed).into_iter().collect();
        truth.malformed = spec.malformed as u64;

        let mut pages = Vec::with_capacity(spec.article_pages + spec.other_namespace_pages);
        for (i, mut items) in snippets.into_iter().enumerate() {
            items.shuffle(&mut rng);
            let mut text = String::new();
            filler(&mut rng, &mut text);
            for item in items {
                text.push_str(&item);
                text.push(' ');
                filler(&mut rng, &mut text);
            }
            if malformed_pages.contains(&i) {
                text.push_str("\n{{cite journal|journal=Nature|title=Unfinished reference");
            }
            pages.push(WikiPage {
                title: format!("Fixture article {i}"),
                namespace: 0,
                text,
                revision_timestamp: Some("2007-04-02T00:00:00Z".into()),
            });
        }

        const OTHER: &[(&str, u32)] = &[("Talk", 1), ("Category", 14), ("Template", 10), ("User", 2)];
        for i in 0..spec.other_namespace_pages {
            let (prefix, ns) = OTHER[i % OTHER.len()];
            let c = citation(&mut rng, false, 0);
            let mut text = String::new();
            filler(&mut rng, &mut text);
            text.push_str(&c.text);
            truth.other_namespace_records += 1;
            pages.push(WikiPage {
                title: format!("{prefix}:Fixture page {i}"),
                namespace: ns,
                text,
                revision_timestamp: Some("2007-04-02T00:00:00Z".into()),
            });
        }
        pages.shuffle(&mut rng);

        Fixture { spec, pages, truth }
    }

    pub fn write_xml<W: Write>(&self, out: W) -> io::Result<()> {
        write_dump(&self.pages, self.spec.emit_ns, out)
    }

    pub fn to_xml(&self) -> String {
        let mut out = Vec::new();
        self.write_xml(&mut out).expect("writing to a Vec cannot fail");
        String::from_utf8(out).expect("fixture XML is UTF-8")
    }
}

const HEADER: &str = "<mediawiki xmlns=\"http://www.mediawiki.org/xml/export-0.3/\" version=\"0.3\" xml:lang=\"en\">\n  <siteinfo>\n    <sitename>Wikipedia</sitename>\n    <base>http://en.wikipedia.org/wiki/Main_Page</base>\n    <case>first-letter</case>\n  </siteinfo>\n";
const FOOTER: &str = "</mediawiki>\n";

fn render_page(out: &mut Vec<u8>, id: u64, title: &str, ns: Option<u32>, timestamp: &str, escaped_text: &str) {
    // Writing into a Vec is infallible.
    let _ = write!(out, "  <page>\n    <title>{}</title>\n", escape(title));
    if let Some(ns) = ns {
        let _ = writeln!(out, "    <ns>{ns}</ns>");
    }
    let _ = write!(
        out,
        "    <id>{id}</id>\n    <revision>\n      <id>{}</id>\n      <timestamp>{timestamp}</timestamp>\n      <text xml:space=\"preserve\">{escaped_text}</text>\n    </revision>\n  </page>\n",
        id + 1_000_000
    );
}

/// Serializes pages as a MediaWiki export document.
pub fn write_dump<'a, W: Write>(
    pages: impl IntoIterator<Item = &'a WikiPage>,
    emit_ns: bool,
    mut out: W,
) -> io::Result<()> {
    out.write_all(HEADER.as_bytes())?;
    let mut buf = Vec::new();
    for (i, page) in pages.into_iter().enumerate() {
        buf.clear();
        render_page(
            &mut buf,
            i as u64 + 1,
            &page.title,
            emit_ns.then_some(page.namespace),
            page.revision_timestamp.as_deref().unwrap_or("2007-04-02T00:00:00Z"),
            &partial_escape(page.text.as_str()),
        );
        out.write_all(&buf)?;
    }
    out.write_all(FOOTER.as_bytes())
}

/// An arbitrarily large synthetic dump produced lazily, one page at a time.
///
/// Pages cycle through a pre-rendered pool, so generating the stream costs
/// little beyond copying bytes and memory stays flat.
pub struct SyntheticDump {
    pool: Vec<(u32, String)>,
    target_bytes: u64,
    emitted: u64,
    next_page: u64,
    chunk: Vec<u8>,
    pos: usize,
    state: StreamState,
    max_page_bytes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StreamState {
    Header,
    Pages,
    Done,
}

impl SyntheticDump {
    /// A stream of at least `target_bytes` bytes. `big_page_bytes` sets the
    /// approximate size of one oversized page included in the pool.
    pub fn new(target_bytes: u64, seed: u64, big_page_bytes: usize) -> Self {
        let fixture = Fixture::generate(FixtureSpec {
            seed,
            article_pages: 64,
            citations: 192,
            nested: 16,
            decoys: 8,
            malformed: 4,
            other_namespace_pages: 8,
            emit_ns: true,
            missing_journal_percent: 5,
        });
        let mut pool: Vec<(u32, String)> = fixture
            .pages
            .iter()
            .map(|p| (p.namespace, partial_escape(p.text.as_str()).into_owned()))
            .collect();
        if big_page_bytes > 0 {
            let mut big = String::with_capacity(big_page_bytes + 4096);
            let unit = &fixture.pages.iter().find(|p| p.namespace == 0).unwrap().text;
            while big.len() < big_page_bytes {
                big.push_str(unit);
                big.push('\n');
            }
            pool.push((0, partial_escape(big.as_str()).into_owned()));
        }
        let mut dump = SyntheticDump {
            pool,
            target_bytes,
            emitted: 0,
            next_page: 0,
            chunk: Vec::new(),
            pos: 0,
            state: StreamState::Header,
            max_page_bytes: 0,
        };
        let mut probe = Vec::new();
        for (i, (ns, text)) in dump.pool.iter().enumerate() {
            probe.clear();
            render_page(&mut probe, u64::MAX / 2, &dump.title(i as u64), Some(*ns), "2007-04-02T00:00:00Z", text);
            dump.max_page_bytes = dump.max_page_bytes.max(probe.len());
        }
        dump
    }

    fn title(&self, n: u64) -> String {
        let (ns, _) = &self.pool[(n % self.pool.len() as u64) as usize];
        let prefix = match ns {
            0 => "",
            1 => "Talk:",
            2 => "User:",
            10 => "Template:",
            14 => "Category:",
            _ => "",
        };
        format!("{prefix}Synthetic page {n}")
    }

    /// Size in bytes of the largest `<page>` element the stream can emit.
    pub fn max_page_bytes(&self) -> usize {
        self.max_page_bytes
    }

    fn refill(&mut self) {
        self.chunk.clear();
        self.pos = 0;
        match self.state {
            StreamState::Header => {
                self.chunk.extend_from_slice(HEADER.as_bytes());
                self.state = StreamState::Pages;
            }
            StreamState::Pages if self.emitted < self.target_bytes => {
                let n = self.next_page;
                self.next_page += 1;
                let idx = (n % self.pool.len() as u64) as usize;
                let title = self.title(n);
                let (ns, text) = &self.pool[idx];
                render_page(&mut self.chunk, n + 1, &title, Some(*ns), "2007-04-02T00:00:00Z", text);
            }
            StreamState::Pages => {
                self.chunk.extend_from_slice(FOOTER.as_bytes());
                self.state = StreamState::Done;
            }
            StreamState::Done => {}
        }
    }
}

impl Read for SyntheticDump {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if self.pos == self.chunk.len() {
            if self.state == StreamState::Done {
                return Ok(0);
            }
            self.refill();
        }
        let n = buf.len().min(self.chunk.len() - self.pos);
        buf[..n].copy_from_slice(&self.chunk[self.pos..self.pos + n]);
        self.pos += n;
        self.emitted += n as u64;
        Ok(n)
    }
}
