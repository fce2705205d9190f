//! Locating `{{cite journal}}` invocations in wikitext.
//!
//! Comments and `<nowiki>` spans are removed first; the remaining text is
//! scanned for balanced `{{ ... }}` pairs with a stack, so a template nested
//! inside a parameter value stays inside the value of its parent. Removed
//! spans act as token barriers: `{<nowiki/>{` is never a template opener.

use std::borrow::Cow;
use std::io::{self, Write};

use indexmap::IndexMap;
use memchr::{memchr, memchr2, memmem};
use serde::{Deserialize, Serialize};

use crate::dump::WikiPage;

/// One `cite journal` template instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationRecord {
    pub page_title: String,
    pub template_name_raw: String,
    pub params: IndexMap<String, String>,
    pub journal_raw: Option<String>,
    /// Byte offsets `[start, end)` into the page text.
    pub span: (usize, usize),
}

/// Per-page counters kept alongside the records.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractStats {
    /// `cite journal` openers left without a closing `}}` at end of page.
    pub malformed: u64,
    /// Parameter names repeated within one template.
    pub duplicate_params: u64,
    /// Records whose opening braces sit inside a `<math>` element.
    pub inside_math: u64,
}

impl ExtractStats {
    pub fn add(&mut self, other: &ExtractStats) {
        self.malformed += other.malformed;
        self.duplicate_params += other.duplicate_params;
        self.inside_math += other.inside_math;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub records: Vec<CitationRecord>,
    pub stats: ExtractStats,
}

/// Wikitext with comments and nowiki spans removed, plus the bookkeeping
/// needed to map positions back to the original.
struct Cleaned<'a> {
    text: Cow<'a, str>,
    /// `(clean_start, orig_start)` of each retained run.
    segments: Vec<(usize, usize)>,
    /// Clean offsets where removed material used to sit.
    barriers: Vec<usize>,
}

impl Cleaned<'_> {
    fn to_orig(&self, clean: usize) -> usize {
        let idx = self.segments.partition_point(|&(c, _)| c <= clean) - 1;
        let (c, o) = self.segments[idx];
        o + (clean - c)
    }

    fn barrier_at(&self, clean: usize) -> bool {
        !self.barriers.is_empty() && self.barriers.binary_search(&clean).is_ok()
    }

    /// True when `bytes[i]` and `bytes[i + 1]` are both `c` and were adjacent
    /// in the original text.
    fn pair_at(&self, i: usize, end: usize, c: u8) -> bool {
        let b = self.text.as_bytes();
        i + 1 < end && b[i] == c && b[i + 1] == c && !self.barrier_at(i + 1)
    }
}

fn starts_with_ci(hay: &[u8], needle: &[u8]) -> bool {
    hay.len() >= needle.len() && hay[..needle.len()].eq_ignore_ascii_case(needle)
}

fn find_ci(hay: &[u8], from: usize, needle: &[u8]) -> Option<usize> {
    let mut i = from;
    while let Some(off) = memchr(needle[0], &hay[i..]) {
        let p = i + off;
        if starts_with_ci(&hay[p..], needle) {
            return Some(p);
        }
        i = p + 1;
    }
    None
}

/// Byte ranges of comments and `<nowiki>` elements. An unterminated comment
/// or nowiki runs to the end of the text.
fn ignored_ranges(text: &str) -> Vec<(usize, usize)> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(off) = memchr(b'<', &b[i..]) {
        let p = i + off;
        if b[p..].starts_with(b"<!--") {
            let end = memmem::find(&b[p + 4..], b"-->").map_or(b.len(), |e| p + 4 + e + 3);
            out.push((p, end));
            i = end;
            continue;
        }
        if starts_with_ci(&b[p..], b"<nowiki")
            && matches!(b.get(p + 7), Some(b'>' | b'/' | b' ' | b'\t' | b'\n'))
        {
            let Some(gt) = memchr(b'>', &b[p + 7..]).map(|g| p + 7 + g) else {
                i = p + 1;
                continue;
            };
            if b[gt - 1] == b'/' {
                out.push((p, gt + 1));
                i = gt + 1;
                continue;
            }
            let end = find_ci(b, gt + 1, b"</nowiki")
                .and_then(|c| memchr(b'>', &b[c..]).map(|g| c + g + 1))
                .unwrap_or(b.len());
            out.push((p, end));
            i = end;
            continue;
        }
        i = p + 1;
    }
    out
}

fn clean(text: &str) -> Cleaned<'_> {
    let ignored = ignored_ranges(text);
    if ignored.is_empty() {
        return Cleaned {
            text: Cow::Borrowed(text),
            segments: vec![(0, 0)],
            barriers: Vec::new(),
        };
    }
    let mut out = String::with_capacity(text.len());
    let mut segments = vec![(0, 0)];
    let mut barriers = Vec::with_capacity(ignored.len());
    let mut pos = 0;
    for (start, end) in ignored {
        out.push_str(&text[pos..start]);
        barriers.push(out.len());
        segments.push((out.len(), end));
        pos = end;
    }
    out.push_str(&text[pos..]);
    barriers.dedup();
    Cleaned {
        text: Cow::Owned(out),
        segments,
        barriers,
    }
}

/// MediaWiki-style template-name comparison: only the first letter is
/// case-insensitive, underscores equal spaces, and a `Template:` prefix is
/// allowed.
pub fn is_cite_journal(name: &str) -> bool {
    let mut norm = String::with_capacity(name.len());
    for ch in name.trim().chars() {
        let ch = if ch == '_' { ' ' } else { ch };
        if ch.is_whitespace() {
            if !norm.is_empty() && !norm.ends_with(' ') {
                norm.push(' ');
            }
        } else {
            norm.push(ch);
        }
    }
    let mut rest = norm.trim_end();
    if rest.len() >= 9 && rest.as_bytes()[..9].eq_ignore_ascii_case(b"template:") {
        rest = rest[9..].trim_start();
    }
    let mut chars = rest.chars();
    matches!(chars.next(), Some('c' | 'C')) && chars.as_str() == "ite journal"
}

#[derive(Debug)]
struct Part {
    start: usize,
    end: usize,
    eq: Option<usize>,
}

/// Splits a template body on top-level `|`, ignoring pipes inside nested
/// templates and wiki links.
fn split_parts(cl: &Cleaned<'_>, from: usize, to: usize, stop_after_name: bool) -> Vec<Part> {
    let b = cl.text.as_bytes();
    let mut parts = Vec::new();
    let (mut templates, mut links) = (0u32, 0u32);
    let mut part_start = from;
    let mut eq = None;
    let mut i = from;
    while i < to {
        if cl.pair_at(i, to, b'{') {
            templates += 1;
            i += 2;
            continue;
        }
        if templates > 0 && cl.pair_at(i, to, b'}') {
            templates -= 1;
            i += 2;
            continue;
        }
        if cl.pair_at(i, to, b'[') {
            links += 1;
            i += 2;
            continue;
        }
        if links > 0 && cl.pair_at(i, to, b']') {
            links -= 1;
            i += 2;
            continue;
        }
        if templates == 0 && links == 0 {
            match b[i] {
                b'|' => {
                    parts.push(Part {
                        start: part_start,
                        end: i,
                        eq,
                    });
                    if stop_after_name {
                        return parts;
                    }
                    part_start = i + 1;
                    eq = None;
                }
                b'=' if eq.is_none() => eq = Some(i),
                _ => {}
            }
        }
        i += 1;
    }
    parts.push(Part {
        start: part_start,
        end: to,
        eq,
    });
    parts
}

fn template_name<'c>(cl: &'c Cleaned<'_>, body_start: usize, body_end: usize) -> &'c str {
    let first = &split_parts(cl, body_start, body_end, true)[0];
    &cl.text[first.start..first.end]
}

/// Reduces wiki markup in a field value: `[[target|shown]]` becomes
/// `shown`, `[[target]]` becomes `target`, `[url label]` becomes `label`,
/// and bold/italic quote runs are dropped.
pub fn reduce_markup(value: &str) -> String {
    let mut linked = String::with_capacity(value.len());
    let mut rest = value;
    while let Some(p) = rest.find("[[") {
        linked.push_str(&rest[..p]);
        let after = &rest[p + 2..];
        let Some(q) = after.find("]]") else {
            linked.push_str(&rest[p..]);
            rest = "";
            break;
        };
        let inner = &after[..q];
        let shown = match inner.split_once('|') {
            Some((target, shown)) if shown.trim().is_empty() => target,
            Some((_, shown)) => shown,
            None => inner,
        };
        linked.push_str(shown);
        rest = &after[q + 2..];
    }
    linked.push_str(rest);

    let mut out = String::with_capacity(linked.len());
    let mut rest = linked.as_str();
    while let Some(p) = rest.find('[') {
        out.push_str(&rest[..p]);
        let after = &rest[p + 1..];
        let is_url = after.starts_with("http://")
            || after.starts_with("https://")
            || after.starts_with("ftp://")
            || after.starts_with("//");
        match (is_url, after.find(']')) {
            (true, Some(q)) => {
                let inner = &after[..q];
                if let Some((_, label)) = inner.split_once(' ') {
                    out.push_str(label);
                } else {
                    out.push_str(inner);
                }
                rest = &after[q + 1..];
            }
            _ => {
                out.push('[');
                rest = after;
            }
        }
    }
    out.push_str(rest);

    out.replace("'''", "").replace("''", "").trim().to_string()
}

fn math_ranges(text: &str) -> Vec<(usize, usize)> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(p) = find_ci(b, i, b"<math") {
        if !matches!(b.get(p + 5), Some(b'>' | b' ' | b'\t' | b'\n')) {
            i = p + 1;
            continue;
        }
        let end = find_ci(b, p + 5, b"</math>").map_or(b.len(), |e| e + 7);
        out.push((p, end));
        i = end;
    }
    out
}

/// Extracts every `cite journal` template from one piece of wikitext.
pub fn extract_from_text(page_title: &str, text: &str) -> Extraction {
    let mut result = Extraction::default();
    if memmem::find(text.as_bytes(), b"{{").is_none() {
        return result;
    }
    let cl = clean(text);
    let b = cl.text.as_bytes();
    let len = b.len();

    let mut open: Vec<usize> = Vec::new();
    let mut closed: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i + 1 < len {
        let Some(off) = memchr2(b'{', b'}', &b[i..len - 1]) else {
            break;
        };
        i += off;
        if cl.pair_at(i, len, b'{') {
            open.push(i);
            i += 2;
        } else if cl.pair_at(i, len, b'}') {
            if let Some(start) = open.pop() {
                closed.push((start, i + 2));
            }
            i += 2;
        } else {
            i += 1;
        }
    }

    for &start in &open {
        if is_cite_journal(template_name(&cl, start + 2, len)) {
            result.stats.malformed += 1;
        }
    }

    closed.sort_unstable_by_key(|&(start, _)| start);
    let maths = math_ranges(text);
    for (start, end) in closed {
        let (body_start, body_end) = (start + 2, end - 2);
        let name = template_name(&cl, body_start, body_end);
        if !is_cite_journal(name) {
            continue;
        }
        let parts = split_parts(&cl, body_start, body_end, false);
        let mut params = IndexMap::with_capacity(parts.len().saturating_sub(1));
        let mut positional = 0;
        for part in &parts[1..] {
            let (key, value) = match part.eq {
                Some(eq) => (
                    cl.text[part.start..eq].trim().to_lowercase(),
                    cl.text[eq + 1..part.end].trim().to_string(),
                ),
                None => {
                    positional += 1;
                    (positional.to_string(), cl.text[part.start..part.end].to_string())
                }
            };
            if params.insert(key, value).is_some() {
                result.stats.duplicate_params += 1;
            }
        }
        let journal_raw = params
            .get("journal")
            .map(|v: &String| reduce_markup(v))
            .filter(|j| !j.is_empty());
        let span = (cl.to_orig(start), cl.to_orig(end - 1) + 1);
        if maths.iter().any(|&(ms, me)| ms <= span.0 && span.0 < me) {
            result.stats.inside_math += 1;
        }
        result.records.push(CitationRecord {
            page_title: page_title.to_string(),
            template_name_raw: name.trim().to_string(),
            params,
            journal_raw,
            span,
        });
    }
    result
}

/// Extracts every `cite journal` template from a page's text.
pub fn extract_citations(page: &WikiPage) -> Extraction {
    extract_from_text(&page.title, &page.text)
}

/// Total template instances across pages, whether or not they name a journal.
pub fn count_template_instances<'a>(pages: impl IntoIterator<Item = &'a WikiPage>) -> u64 {
    pages
        .into_iter()
        .map(|p| extract_citations(p).records.len() as u64)
        .sum()
}

/// Writes records as JSON lines, one object per line.
pub fn write_jsonl<'a, W: Write>(
    records: impl IntoIterator<Item = &'a CitationRecord>,
    mut out: W,
) -> io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
