//! Run manifests: what went in, what came out, and with which settings.
//!
//! Manifests hold no timestamps or absolute host state, so identical runs
//! write identical manifests.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{io_error, CliError};

/// Passes bytes through while hashing them.
pub struct HashingReader<R> {
    inner: R,
    hasher: Sha256,
    bytes: u64,
}

impl<R: Read> HashingReader<R> {
    pub fn new(inner: R) -> Self {
        HashingReader { inner, hasher: Sha256::new(), bytes: 0 }
    }
}

impl<R> HashingReader<R> {
    pub fn finish(self) -> (String, u64) {
        (hex::encode(self.hasher.finalize()), self.bytes)
    }
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        self.bytes += n as u64;
        Ok(n)
    }
}

/// Buffered file writer that hashes everything written.
pub struct HashingWriter {
    inner: BufWriter<File>,
    hasher: Sha256,
    bytes: u64,
    path: PathBuf,
}

impl HashingWriter {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let file = File::create(path).map_err(|e| io_error(path, e))?;
        Ok(HashingWriter {
            inner: BufWriter::new(file),
            hasher: Sha256::new(),
            bytes: 0,
            path: path.to_path_buf(),
        })
    }

    pub fn finish(mut self) -> Result<FileDigest, CliError> {
        self.inner.flush().map_err(|e| io_error(&self.path, e))?;
        Ok(FileDigest {
            path: file_name(&self.path),
            sha256: hex::encode(self.hasher.finalize()),
            bytes: self.bytes,
        })
    }
}

impl Write for HashingWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        self.bytes += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub role: String,
    #[serde(flatten)]
    pub file: FileDigest,
}

impl InputDigest {
    pub fn new(role: &str, path: String, sha256: String, bytes: u64) -> Self {
        InputDigest { role: role.to_string(), file: FileDigest { path, sha256, bytes } }
    }

    pub fn of_bytes(role: &str, path: String, bytes: &[u8]) -> Self {
        Self::new(role, path, hex::encode(Sha256::digest(bytes)), bytes.len() as u64)
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: C,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<FileDigest>,
}

impl<C: Serialize> Manifest<C> {
    pub fn new(command: &'static str, config: C) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Writes `<command>.manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(format!("{}.manifest.json", self.command));
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io_error(&path, e))
    }
}

/// Writes an in-memory artifact and returns its digest.
pub fn write_output(dir: &Path, name: &str, bytes: &[u8]) -> Result<FileDigest, CliError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
    Ok(FileDigest {
        path: name.to_string(),
        sha256: hex::encode(Sha256::digest(bytes)),
        bytes: bytes.len() as u64,
    })
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("value serializes");
    v.push(b'\n');
    v
}
