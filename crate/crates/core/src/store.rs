//! Append-only record stores with optional line-oriented persistence.
//!
//! Used for the performance levels, the data-quality levels and the trust
//! history. A store file starts with a header line followed by one record
//! per line; reopening a file replays it.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use parking_lot::{Mutex, RwLock};
use thiserror::Error;

use crate::ServiceId;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record on line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("unexpected header {found:?}, expected {expected:?}")]
    Header {
        expected: &'static str,
        found: String,
    },
}

/// A record that can live in an [`AppendLog`].
pub trait LogRecord: Clone + Send + Sync {
    const HEADER: &'static str;

    fn service_id(&self) -> &ServiceId;
    fn timestamp(&self) -> f64;
    fn to_line(&self) -> String;
    fn from_line(line: &str) -> Result<Self, String>;
}

struct Inner<R> {
    records: Vec<R>,
    by_service: HashMap<ServiceId, Vec<usize>>,
}

impl<R: LogRecord> Inner<R> {
    fn push(&mut self, record: R) {
        let idx = self.records.len();
        self.by_service
            .entry(record.service_id().clone())
            .or_default()
            .push(idx);
        self.records.push(record);
    }
}

/// Append-only store, safe for concurrent writers and readers.
///
/// Readers only ever observe fully appended records: the in-memory append
/// and the file write happen under the same write lock.
pub struct AppendLog<R> {
    inner: RwLock<Inner<R>>,
    file: Option<Mutex<BufWriter<File>>>,
}

impl<R: LogRecord> Default for AppendLog<R> {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl<R: LogRecord> AppendLog<R> {
    pub fn in_memory() -> Self {
        AppendLog {
            inner: RwLock::new(Inner {
                records: Vec::new(),
                by_service: HashMap::new(),
            }),
            file: None,
        }
    }

    /// Opens (or creates) a persistent store, replaying existing records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let mut inner = Inner {
            records: Vec::new(),
            by_service: HashMap::new(),
        };
        let mut needs_header = true;
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if n == 0 {
                    if line != R::HEADER {
                        return Err(StoreError::Header {
                            expected: R::HEADER,
                            found: line,
                        });
                    }
                    needs_header = false;
                    continue;
                }
                if line.is_empty() {
                    continue;
                }
                let record = R::from_line(&line).map_err(|reason| StoreError::Malformed {
                    line: n + 1,
                    reason,
                })?;
                inner.push(record);
            }
        }
        let mut writer = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
        if needs_header {
            writeln!(writer, "{}", R::HEADER)?;
            writer.flush()?;
        }
        Ok(AppendLog {
            inner: RwLock::new(inner),
            file: Some(Mutex::new(writer)),
        })
    }

    pub fn append(&self, record: R) -> Result<(), StoreError> {
        let mut inner = self.inner.write();
        if let Some(file) = &self.file {
            let mut w = file.lock();
            writeln!(w, "{}", record.to_line())?;
            w.flush()?;
        }
        inner.push(record);
        Ok(())
    }

    /// The record with the greatest timestamp for `service`; ties go to the
    /// most recently appended one.
    pub fn latest(&self, service: &ServiceId) -> Option<R> {
        let inner = self.inner.read();
        let idxs = inner.by_service.get(service)?;
        idxs.iter()
            .map(|&i| &inner.records[i])
            .fold(None::<&R>, |best, r| match best {
                Some(b) if b.timestamp() > r.timestamp() => Some(b),
                _ => Some(r),
            })
            .cloned()
    }

    /// Records of `service` with timestamp in `[start, end]`, in timestamp
    /// order (stable for equal timestamps).
    pub fn range(&self, service: &ServiceId, start: f64, end: f64) -> Vec<R> {
        let inner = self.inner.read();
        let mut out: Vec<R> = inner
            .by_service
            .get(service)
            .map(|idxs| {
                idxs.iter()
                    .map(|&i| &inner.records[i])
                    .filter(|r| r.timestamp() >= start && r.timestamp() <= end)
                    .cloned()
                    .collect()
            })
            .unwrap_or_default();
        out.sort_by(|a, b| a.timestamp().total_cmp(&b.timestamp()));
        out
    }

    pub fn records_for(&self, service: &ServiceId) -> Vec<R> {
        self.range(service, f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Every record in append order.
    pub fn all(&self) -> Vec<R> {
        self.inner.read().records.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.read().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn services(&self) -> Vec<ServiceId> {
        let mut ids: Vec<ServiceId> = self.inner.read().by_service.keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Writes header and records to `w` in the persisted format.
    pub fn export<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", R::HEADER)?;
        for r in self.inner.read().records.iter() {
            writeln!(w, "{}", r.to_line())?;
        }
        Ok(())
    }
}

/// Splits a comma-separated line into exactly `n` fields.
pub(crate) fn split_fields(line: &str, n: usize) -> Result<Vec<&str>, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != n {
        return Err(format!("expected {n} fields, found {}", fields.len()));
    }
    Ok(fields)
}

pub(crate) fn parse_f64(field: &str, name: &str) -> Result<f64, String> {
    field.parse::<f64>().map_err(|e| format!("{name}: {e}"))
}
