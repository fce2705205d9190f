//! Python bindings: registry lookups, template extraction, dump counting and
//! Kendall correlation.
//!
//! Long-running calls (`count_dump`, `correlate`) release the interpreter
//! lock while they work.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use indexmap::IndexMap;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use wikicite::bibliometrics::kendall::{self, KendallError};
use wikicite::bibliometrics::read_jcr_csv;
use wikicite::{
    extract_citations as extract_page, filter_namespaces, join, open_dump, topn_sweep, CountTable, DumpError,
    JournalRegistry, NamespaceFilter, Resolution, Series, WikiPage,
};

fn value_error(err: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn dump_error(err: DumpError) -> PyErr {
    match err {
        DumpError::Io { .. } => PyOSError::new_err(err.to_string()),
        DumpError::Malformed { .. } => value_error(err),
    }
}

fn namespace_filter(namespaces: Option<Vec<u32>>) -> NamespaceFilter {
    namespaces.map_or_else(NamespaceFilter::default, |ns| NamespaceFilter::Only(ns.into_iter().collect()))
}

#[pyclass(name = "Registry", module = "wikicite", frozen)]
struct PyRegistry {
    inner: JournalRegistry,
}

#[pymethods]
impl PyRegistry {
    /// The bundled starter registry.
    #[staticmethod]
    fn starter() -> Self {
        PyRegistry { inner: JournalRegistry::starter() }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        JournalRegistry::load(path).map(|inner| PyRegistry { inner }).map_err(value_error)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        JournalRegistry::parse(text).map(|inner| PyRegistry { inner }).map_err(value_error)
    }

    #[getter]
    fn fingerprint(&self) -> &str {
        self.inner.fingerprint()
    }

    fn canonical(&self) -> Vec<String> {
        self.inner.canonical().iter().cloned().collect()
    }

    fn exclusions(&self) -> Vec<String> {
        self.inner.exclusions().iter().cloned().collect()
    }

    /// Returns `(kind, name)`, kind being "canonical", "excluded" or "unknown".
    fn resolve(&self, raw: &str) -> (&'static str, String) {
        match self.inner.resolve(raw) {
            Resolution::Canonical(name) => ("canonical", name),
            Resolution::Excluded(name) => ("excluded", name),
            Resolution::Unknown(name) => ("unknown", name),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Registry(canonical={}, aliases={}, exclusions={})",
            self.inner.canonical().len(),
            self.inner.aliases().len(),
            self.inner.exclusions().len()
        )
    }
}

#[pyclass(name = "CitationRecord", module = "wikicite", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyCitation {
    page_title: String,
    template_name: String,
    params: IndexMap<String, String>,
    journal: Option<String>,
    span: (usize, usize),
}

#[pymethods]
impl PyCitation {
    fn __repr__(&self) -> String {
        format!("CitationRecord(page_title={:?}, journal={:?}, span={:?})", self.page_title, self.journal, self.span)
    }
}

#[pyclass(name = "Extraction", module = "wikicite", frozen, get_all)]
struct PyExtraction {
    records: Vec<PyCitation>,
    malformed: u64,
    duplicate_params: u64,
    inside_math: u64,
}

/// Finds every `cite journal` template in one page of wikitext.
#[pyfunction]
fn extract_citations(title: &str, text: &str) -> PyExtraction {
    let extraction = wikicite::extract_from_text(title, text);
    PyExtraction {
        records: extraction
            .records
            .into_iter()
            .map(|r| PyCitation {
                page_title: r.page_title,
                template_name: r.template_name_raw,
                params: r.params,
                journal: r.journal_raw,
                span: r.span,
            })
            .collect(),
        malformed: extraction.stats.malformed,
        duplicate_params: extraction.stats.duplicate_params,
        inside_math: extraction.stats.inside_math,
    }
}

#[pyfunction]
fn normalize_key(raw: &str) -> String {
    wikicite::normalize_key(raw)
}

#[pyclass(name = "CountTable", module = "wikicite", frozen, eq)]
#[derive(PartialEq)]
struct PyCountTable {
    inner: CountTable,
}

#[pymethods]
impl PyCountTable {
    #[getter]
    fn template_total(&self) -> u64 {
        self.inner.template_total
    }

    #[getter]
    fn malformed_total(&self) -> u64 {
        self.inner.malformed_total
    }

    #[getter]
    fn excluded_count(&self) -> u64 {
        self.inner.excluded_count
    }

    #[getter]
    fn without_journal(&self) -> u64 {
        self.inner.without_journal()
    }

    #[getter]
    fn counts(&self) -> BTreeMap<String, u64> {
        self.inner.counts.clone()
    }

    #[getter]
    fn unknown(&self) -> BTreeMap<String, u64> {
        self.inner.unknown.clone()
    }

    /// `(journal, count)` by count descending, then name.
    fn ranked(&self) -> Vec<(String, u64)> {
        self.inner.ranked().into_iter().map(|(n, c)| (n.to_string(), c)).collect()
    }

    fn merge(&self, other: &PyCountTable) -> PyResult<PyCountTable> {
        wikicite::merge(&self.inner, &other.inner)
            .map(|inner| PyCountTable { inner })
            .map_err(value_error)
    }

    fn to_json(&self) -> String {
        let mut out = Vec::new();
        self.inner.write_json(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("JSON is UTF-8")
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<PyCountTable> {
        CountTable::from_json(text).map(|inner| PyCountTable { inner }).map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!(
            "CountTable(template_total={}, journals={}, excluded={})",
            self.inner.template_total,
            self.inner.counts.len(),
            self.inner.excluded_count
        )
    }
}

fn pages(path: PathBuf, namespaces: Option<Vec<u32>>) -> PyResult<impl Iterator<Item = Result<WikiPage, DumpError>>> {
    let file = File::open(&path).map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))?;
    Ok(filter_namespaces(open_dump(BufReader::new(file)), namespace_filter(namespaces)))
}

/// `(title, namespace, text)` for each page of a small dump.
#[pyfunction]
#[pyo3(signature = (path, namespaces=None))]
fn read_pages(path: PathBuf, namespaces: Option<Vec<u32>>) -> PyResult<Vec<(String, u32, String)>> {
    pages(path, namespaces)?
        .map(|p| p.map(|p| (p.title, p.namespace, p.text)).map_err(dump_error))
        .collect()
}

/// Streams a dump and tallies its citations. Namespaces default to articles.
#[pyfunction]
#[pyo3(signature = (path, registry=None, namespaces=None))]
fn count_dump(
    py: Python<'_>,
    path: PathBuf,
    registry: Option<&PyRegistry>,
    namespaces: Option<Vec<u32>>,
) -> PyResult<PyCountTable> {
    let starter;
    let registry = match registry {
        Some(r) => &r.inner,
        None => {
            starter = JournalRegistry::starter();
            &starter
        }
    };
    let iter = pages(path, namespaces)?;
    py.detach(|| {
        let mut table = CountTable::empty(registry);
        for page in iter {
            table.add_extraction(&extract_page(&page?), registry);
        }
        Ok(PyCountTable { inner: table })
    })
    .map_err(dump_error)
}

fn kendall_error(err: KendallError) -> PyErr {
    value_error(err)
}

#[pyfunction]
fn kendall_tau_b(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    kendall::kendall_tau_b(&x, &y).map_err(kendall_error)
}

/// `(tau, z, p_value)` with the tie-corrected normal approximation.
#[pyfunction]
fn kendall_test(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let t = kendall::kendall_test(&x, &y).map_err(kendall_error)?;
    Ok((t.tau, t.z, t.p_value))
}

/// Two-sided p-value from the exact permutation distribution (no ties).
#[pyfunction]
fn exact_p_value(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    kendall::exact_p_value(&x, &y).map_err(kendall_error)
}

/// Top-N sweep of every statistic against Wikipedia counts.
///
/// Returns `(series, n, tau, z, p_value)` rows. The sweep defaults to every
/// N from 2 to the number of joined journals.
#[pyfunction]
#[pyo3(signature = (counts, jcr_path, sweep=None, registry=None))]
fn correlate(
    py: Python<'_>,
    counts: &PyCountTable,
    jcr_path: PathBuf,
    sweep: Option<Vec<usize>>,
    registry: Option<&PyRegistry>,
) -> PyResult<Vec<(String, usize, f64, f64, f64)>> {
    let file = File::open(&jcr_path).map_err(|e| PyOSError::new_err(format!("{}: {e}", jcr_path.display())))?;
    let jcr = read_jcr_csv(file).map_err(value_error)?;
    let starter;
    let registry = match registry {
        Some(r) => &r.inner,
        None => {
            starter = JournalRegistry::starter();
            &starter
        }
    };
    py.detach(|| {
        let report = join(&counts.inner, &jcr, registry).map_err(value_error)?;
        let sweep = sweep.unwrap_or_else(|| (2..=report.rows.len()).collect());
        let mut rows = Vec::new();
        for series in Series::ALL {
            for r in topn_sweep(&report.rows, series, &sweep).map_err(value_error)? {
                rows.push((series.to_string(), r.n, r.tau, r.z, r.p_value));
            }
        }
        Ok(rows)
    })
}

#[pymodule]
#[pyo3(name = "wikicite")]
fn wikicite_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRegistry>()?;
    m.add_class::<PyCitation>()?;
    m.add_class::<PyExtraction>()?;
    m.add_class::<PyCountTable>()?;
    m.add_function(wrap_pyfunction!(normalize_key, m)?)?;
    m.add_function(wrap_pyfunction!(extract_citations, m)?)?;
    m.add_function(wrap_pyfunction!(read_pages, m)?)?;
    m.add_function(wrap_pyfunction!(count_dump, m)?)?;
    m.add_function(wrap_pyfunction!(kendall_tau_b, m)?)?;
    m.add_function(wrap_pyfunction!(kendall_test, m)?)?;
    m.add_function(wrap_pyfunction!(exact_p_value, m)?)?;
    m.add_function(wrap_pyfunction!(correlate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
