//! Files in a run directory:
//!
//! - `config.txt`: resolved configuration with its hash;
//! - `measurements.jsonl`: one measurement record per line;
//! - `summary.tsv`: tab-separated table behind a `#` header block;
//! - `checkpoint.bin`: latest chain checkpoint (chain experiments only).

use crate::config::RunConfig;
use sigma_core::stats::MeasurementRecord;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub const CONFIG_FILE: &str = "config.txt";
pub const STREAM_FILE: &str = "measurements.jsonl";
pub const SUMMARY_FILE: &str = "summary.tsv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// Prefix of records holding exact identity checks (1 = pass, 0 = fail).
pub const CHECK_PREFIX: &str = "check/";
/// Prefix of records holding statistical checks; a miss is a warning.
pub const FLAG_PREFIX: &str = "flag/";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Identity,
    Statistical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub kind: CheckKind,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn identity(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: CheckKind::Identity,
            pass,
            detail: detail.into(),
        }
    }

    pub fn statistical(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: CheckKind::Statistical,
            pass,
            detail: detail.into(),
        }
    }

    pub fn record(&self, sweep: u64) -> MeasurementRecord {
        let prefix = match self.kind {
            CheckKind::Identity => CHECK_PREFIX,
            CheckKind::Statistical => FLAG_PREFIX,
        };
        MeasurementRecord::new(
            format!("{prefix}{}", self.name),
            sweep,
            if self.pass { 1.0 } else { 0.0 },
            0.0,
            0.0,
        )
    }
}

/// A columnar table. Values are written with full round-trip precision.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Extra `# key = value` lines after the hash.
    pub notes: Vec<String>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, config_hash: &str) -> String {
        let mut s = format!(
            "# config_hash = {config_hash}\n# schema_version = {}\n",
            sigma_core::stats::SCHEMA_VERSION
        );
        for n in &self.notes {
            s.push_str(&format!("# {n}\n"));
        }
        s.push_str(&self.columns.join("\t"));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join("\t"));
            s.push('\n');
        }
        s
    }
}

pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub struct RunDir {
    pub path: PathBuf,
    pub config_hash: String,
}

impl RunDir {
    pub fn create(path: &Path, config: &RunConfig) -> io::Result<Self> {
        fs::create_dir_all(path)?;
        fs::write(path.join(CONFIG_FILE), config.resolved_text())?;
        Ok(Self {
            path: path.to_path_buf(),
            config_hash: config.hash(),
        })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// A fresh, empty measurement stream.
    pub fn stream(&self) -> io::Result<RecordWriter> {
        RecordWriter::open(&self.file(STREAM_FILE), &self.config_hash, false)
    }

    pub fn append_stream(&self) -> io::Result<RecordWriter> {
        RecordWriter::open(&self.file(STREAM_FILE), &self.config_hash, true)
    }

    pub fn write_summary(&self, table: &Table) -> io::Result<()> {
        write_atomic(
            &self.file(SUMMARY_FILE),
            table.render(&self.config_hash).as_bytes(),
        )
    }
}

/// Replace `path` by `bytes` so that a reader never sees a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("partial");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

pub struct RecordWriter {
    out: BufWriter<File>,
    hash: String,
}

impl RecordWriter {
    fn open(path: &Path, hash: &str, append: bool) -> io::Result<Self> {
        let f = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)?;
        Ok(Self {
            out: BufWriter::new(f),
            hash: hash.to_string(),
        })
    }

    pub fn write(&mut self, record: MeasurementRecord) -> io::Result<()> {
        let r = record.with_hash(&self.hash);
        serde_json::to_writer(&mut self.out, &r)?;
        self.out.write_all(b"\n")
    }

    pub fn write_all(
        &mut self,
        records: impl IntoIterator<Item = MeasurementRecord>,
    ) -> io::Result<()> {
        records.into_iter().try_for_each(|r| self.write(r))
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()?;
        self.out.get_ref().sync_data()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StreamError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Read every record of a stream; a missing file reads as `None`.
pub fn read_stream(path: &Path) -> Result<Option<Vec<MeasurementRecord>>, StreamError> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(source) => {
            return Err(StreamError::Io {
                path: path.into(),
                source,
            })
        }
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|source| StreamError::Io {
            path: path.into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let r: MeasurementRecord =
            serde_json::from_str(&line).map_err(|e| StreamError::Malformed {
                path: path.into(),
                line: i + 1,
                message: e.to_string(),
            })?;
        out.push(r);
    }
    Ok(Some(out))
}

/// Keep only per-sweep records up to and including `sweep`; derived records
/// (names containing '/') are recomputed at the end of a run. Kept lines are
/// copied byte for byte.
pub fn truncate_stream(path: &Path, sweep: u64) -> Result<usize, StreamError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
        Err(source) => {
            return Err(StreamError::Io {
                path: path.into(),
                source,
            })
        }
    };
    let mut kept = 0;
    let mut buf = String::new();
    // a process killed mid-write can leave an unterminated last line
    for (i, line) in text.split_inclusive('\n').enumerate() {
        let Some(line) = line.strip_suffix('\n') else {
            break;
        };
        if line.trim().is_empty() {
            continue;
        }
        let r: MeasurementRecord =
            serde_json::from_str(line).map_err(|e| StreamError::Malformed {
                path: path.into(),
                line: i + 1,
                message: e.to_string(),
            })?;
        if r.sweep <= sweep && !r.observable.contains('/') {
            buf.push_str(line);
            buf.push('\n');
            kept += 1;
        }
    }
    write_atomic(path, buf.as_bytes()).map_err(|source| StreamError::Io {
        path: path.into(),
        source,
    })?;
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_has_hash_header() {
        let mut t = Table::new(&["a", "b"]);
        t.notes.push("experiment = scan".into());
        t.push(vec![num(0.1), num(2.0)]);
        assert_eq!(
            t.render("ff"),
            "# config_hash = ff\n# schema_version = 1\n# experiment = scan\na\tb\n0.1\t2.0\n"
        );
    }

    #[test]
    fn check_records_use_prefixes() {
        assert_eq!(
            CheckResult::identity("x", true, "").record(3).observable,
            "check/x"
        );
        let r = CheckResult::statistical("y", false, "").record(0);
        assert_eq!((r.observable.as_str(), r.value), ("flag/y", 0.0));
    }
}
