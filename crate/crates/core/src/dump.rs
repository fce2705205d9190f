//! Streaming reader for MediaWiki XML export dumps.
//!
//! Pages are pulled one at a time from any [`BufRead`] source. Only the
//! page currently being assembled is held in memory, so peak usage is
//! bounded by the largest `<page>` element rather than by the dump size.

use std::collections::BTreeSet;
use std::io::BufRead;

use quick_xml::escape::resolve_predefined_entity;
use quick_xml::events::{BytesRef, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One page of a dump, reduced to its latest revision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikiPage {
    pub title: String,
    pub namespace: u32,
    pub text: String,
    pub revision_timestamp: Option<String>,
}

impl WikiPage {
    /// Builds an article-namespace page with no timestamp.
    pub fn article(title: impl Into<String>, text: impl Into<String>) -> Self {
        WikiPage {
            title: title.into(),
            namespace: 0,
            text: text.into(),
            revision_timestamp: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("malformed XML at byte {offset}: {message}")]
    Malformed { offset: u64, message: String },
    #[error("I/O error at byte {offset}: {source}")]
    Io {
        offset: u64,
        #[source]
        source: std::io::Error,
    },
}

impl DumpError {
    pub fn offset(&self) -> u64 {
        match self {
            DumpError::Malformed { offset, .. } | DumpError::Io { offset, .. } => *offset,
        }
    }
}

/// Why a page element was dropped without aborting the stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkipReason {
    MissingTitle,
    BadNamespace(String),
}

/// Standard English-language namespace prefixes, used when a dump predates
/// the `<ns>` element.
const NAMESPACE_PREFIXES: &[(&str, u32)] = &[
    ("Talk", 1),
    ("User", 2),
    ("User talk", 3),
    ("Wikipedia", 4),
    ("Wikipedia talk", 5),
    ("File", 6),
    ("Image", 6),
    ("File talk", 7),
    ("Image talk", 7),
    ("MediaWiki", 8),
    ("MediaWiki talk", 9),
    ("Template", 10),
    ("Template talk", 11),
    ("Help", 12),
    ("Help talk", 13),
    ("Category", 14),
    ("Category talk", 15),
    ("Portal", 100),
    ("Portal talk", 101),
];

/// Infers a namespace id from a title prefix such as `"Talk:"`; titles
/// without a recognised prefix are articles.
pub fn infer_namespace(title: &str) -> u32 {
    let Some((prefix, _)) = title.split_once(':') else {
        return 0;
    };
    let prefix = prefix.replace('_', " ");
    NAMESPACE_PREFIXES
        .iter()
        .find(|(name, _)| *name == prefix)
        .map_or(0, |&(_, ns)| ns)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Root,
    Page,
    Revision,
    Title,
    Ns,
    Timestamp,
    Text,
    Other,
}

impl Tag {
    fn from_name(name: &str) -> Tag {
        match name {
            "mediawiki" => Tag::Root,
            "page" => Tag::Page,
            "revision" => Tag::Revision,
            "title" => Tag::Title,
            "ns" => Tag::Ns,
            "timestamp" => Tag::Timestamp,
            "text" => Tag::Text,
            _ => Tag::Other,
        }
    }
}

#[derive(Default)]
struct PageBuilder {
    title: Option<String>,
    ns: Option<String>,
    text: String,
    timestamp: Option<String>,
}

impl PageBuilder {
    fn finish(self) -> Result<WikiPage, SkipReason> {
        let title = match self.title {
            Some(t) if !t.trim().is_empty() => t,
            _ => return Err(SkipReason::MissingTitle),
        };
        let namespace = match self.ns {
            Some(raw) => raw
                .trim()
                .parse::<u32>()
                .map_err(|_| SkipReason::BadNamespace(raw.clone()))?,
            None => infer_namespace(&title),
        };
        Ok(WikiPage {
            title,
            namespace,
            text: self.text,
            revision_timestamp: self.timestamp,
        })
    }
}

/// Pull iterator over the pages of a dump.
///
/// Yields `Ok(page)` in document order. A fatal XML error is yielded once as
/// `Err` and ends the iteration. Pages without a usable title are skipped
/// and counted in [`DumpReader::skipped`].
pub struct DumpReader<R: BufRead> {
    reader: Reader<R>,
    buf: Vec<u8>,
    stack: Vec<Tag>,
    seen_root: bool,
    done: bool,
    pages_yielded: u64,
    skipped: Vec<SkipReason>,
}

impl<R: BufRead> DumpReader<R> {
    pub fn new(source: R) -> Self {
        let mut reader = Reader::from_reader(source);
        reader.config_mut().check_end_names = true;
        DumpReader {
            reader,
            buf: Vec::with_capacity(64 * 1024),
            stack: Vec::with_capacity(8),
            seen_root: false,
            done: false,
            pages_yielded: 0,
            skipped: Vec::new(),
        }
    }

    /// Number of pages skipped for per-page errors so far.
    pub fn skipped(&self) -> u64 {
        self.skipped.len() as u64
    }

    pub fn skip_reasons(&self) -> &[SkipReason] {
        &self.skipped
    }

    pub fn pages_yielded(&self) -> u64 {
        self.pages_yielded
    }

    /// Every `<page>` element seen so far, yielded or skipped.
    pub fn pages_encountered(&self) -> u64 {
        self.pages_yielded + self.skipped()
    }

    pub fn byte_offset(&self) -> u64 {
        self.reader.buffer_position()
    }

    /// Returns the underlying source, positioned wherever parsing stopped.
    pub fn into_inner(self) -> R {
        self.reader.into_inner()
    }

    fn malformed(&self, message: impl Into<String>) -> DumpError {
        DumpError::Malformed {
            offset: self.reader.buffer_position(),
            message: message.into(),
        }
    }

    fn convert(&self, err: quick_xml::Error) -> DumpError {
        let offset = self.reader.error_position();
        match err {
            quick_xml::Error::Io(io) => DumpError::Io {
                offset,
                source: std::io::Error::new(io.kind(), io.to_string()),
            },
            other => DumpError::Malformed {
                offset,
                message: other.to_string(),
            },
        }
    }

    /// Which field, if any, character data should currently go to.
    fn capture_target(&self) -> Option<Tag> {
        let n = self.stack.len();
        if n < 2 {
            return None;
        }
        let (parent, top) = (self.stack[n - 2], self.stack[n - 1]);
        match (parent, top) {
            (Tag::Page, Tag::Title) | (Tag::Page, Tag::Ns) => Some(top),
            (Tag::Revision, Tag::Text) | (Tag::Revision, Tag::Timestamp)
                if n >= 3 && self.stack[n - 3] == Tag::Page =>
            {
                Some(top)
            }
            _ => None,
        }
    }

    fn read_page(&mut self) -> Result<Option<WikiPage>, DumpError> {
        let mut buf = std::mem::take(&mut self.buf);
        let result = self.read_page_with(&mut buf);
        self.buf = buf;
        result
    }

    fn read_page_with(&mut self, buf: &mut Vec<u8>) -> Result<Option<WikiPage>, DumpError> {
        let mut page: Option<PageBuilder> = None;
        loop {
            buf.clear();
            let event = match self.reader.read_event_into(buf) {
                Ok(ev) => ev,
                Err(e) => return Err(self.convert(e)),
            };
            match event {
                Event::Start(start) => {
                    let tag = Tag::from_name(start.local_name().as_ref());
                    if !self.seen_root {
                        if tag != Tag::Root {
                            return Err(self.malformed(format!(
                                "expected <mediawiki> root, found <{}>",
                                start.name().as_ref()
                            )));
                        }
                        self.seen_root = true;
                    }
                    let parent = self.stack.last().copied();
                    match (parent, tag) {
                        (Some(Tag::Root), Tag::Page) => page = Some(PageBuilder::default()),
                        (Some(Tag::Page), Tag::Revision) => {
                            if let Some(p) = page.as_mut() {
                                p.text.clear();
                                p.timestamp = None;
                            }
                        }
                        _ => {}
                    }
                    self.stack.push(tag);
                    if let (Some(target), Some(p)) = (self.capture_target(), page.as_mut()) {
                        match target {
                            Tag::Title => p.title = Some(String::new()),
                            Tag::Ns => p.ns = Some(String::new()),
                            Tag::Timestamp => p.timestamp = Some(String::new()),
                            Tag::Text => p.text.clear(),
                            _ => {}
                        }
                    }
                }
                Event::Empty(empty) => {
                    if !self.seen_root {
                        return Err(self.malformed(format!(
                            "expected <mediawiki> root, found <{}/>",
                            empty.name().as_ref()
                        )));
                    }
                    // `<text deleted="deleted" />` and friends carry no content.
                }
                Event::End(_) => {
                    let closed = self.stack.pop();
                    if closed == Some(Tag::Page) && self.stack.last() == Some(&Tag::Root) {
                        let Some(builder) = page.take() else {
                            continue;
                        };
                        match builder.finish() {
                            Ok(p) => return Ok(Some(p)),
                            Err(reason) => self.skipped.push(reason),
                        }
                    }
                }
                Event::Text(text) => {
                    if let (Some(target), Some(p)) = (self.capture_target(), page.as_mut()) {
                        append(p, target, &text.xml10_content());
                    }
                }
                Event::CData(cdata) => {
                    if let (Some(target), Some(p)) = (self.capture_target(), page.as_mut()) {
                        append(p, target, &cdata.xml10_content());
                    }
                }
                Event::GeneralRef(reference) => {
                    let target = self.capture_target();
                    let resolved = resolve_reference(&reference)
                        .ok_or_else(|| self.malformed(format!("unknown entity &{};", &*reference)))?;
                    if let (Some(target), Some(p)) = (target, page.as_mut()) {
                        let mut tmp = [0u8; 4];
                        let s: &str = match resolved {
                            Resolved::Char(c) => c.encode_utf8(&mut tmp),
                            Resolved::Str(s) => s,
                        };
                        append(p, target, s);
                    }
                }
                Event::Eof => {
                    if let Some(open) = self.stack.last() {
                        return Err(self.malformed(format!(
                            "unexpected end of document inside {open:?} element"
                        )));
                    }
                    return Ok(None);
                }
                Event::Comment(_) | Event::Decl(_) | Event::PI(_) | Event::DocType(_) => {}
            }
        }
    }
}

enum Resolved {
    Char(char),
    Str(&'static str),
}

fn resolve_reference(reference: &BytesRef<'_>) -> Option<Resolved> {
    if reference.is_char_ref() {
        return reference.resolve_char_ref().ok().flatten().map(Resolved::Char);
    }
    resolve_predefined_entity(reference).map(Resolved::Str)
}

fn append(page: &mut PageBuilder, target: Tag, s: &str) {
    let slot = match target {
        Tag::Title => page.title.get_or_insert_with(String::new),
        Tag::Ns => page.ns.get_or_insert_with(String::new),
        Tag::Timestamp => page.timestamp.get_or_insert_with(String::new),
        Tag::Text => &mut page.text,
        _ => return,
    };
    slot.push_str(s);
}

impl<R: BufRead> Iterator for DumpReader<R> {
    type Item = Result<WikiPage, DumpError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_page() {
            Ok(Some(page)) => {
                self.pages_yielded += 1;
                Some(Ok(page))
            }
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Opens a dump for page-by-page reading.
pub fn open_dump<R: BufRead>(source: R) -> DumpReader<R> {
    DumpReader::new(source)
}

/// Set of namespaces a pipeline keeps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamespaceFilter {
    All,
    Only(BTreeSet<u32>),
}

impl Default for NamespaceFilter {
    fn default() -> Self {
        NamespaceFilter::Only(BTreeSet::from([0]))
    }
}

impl NamespaceFilter {
    pub fn allows(&self, namespace: u32) -> bool {
        match self {
            NamespaceFilter::All => true,
            NamespaceFilter::Only(set) => set.contains(&namespace),
        }
    }
}

/// Keeps pages whose namespace is allowed, in order. Errors pass through so
/// the caller still sees a fatal parse failure.
pub fn filter_namespaces<I, E>(
    pages: I,
    allowed: NamespaceFilter,
) -> impl Iterator<Item = Result<WikiPage, E>>
where
    I: IntoIterator<Item = Result<WikiPage, E>>,
{
    pages
        .into_iter()
        .filter(move |item| item.as_ref().map_or(true, |p| allowed.allows(p.namespace)))
}
