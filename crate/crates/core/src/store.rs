//! CSV ingestion and persistence, and the two relational operators the
//! rewrites need: projection with duplicate elimination, and union with
//! attribute renaming.
//!
//! Duplicate detection is exact per-field string equality. Empty cells are
//! nulls and two nulls are equal. Outputs keep first-occurrence order.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::hash::{BuildHasher, Hash, Hasher};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use hashbrown::{DefaultHashBuilder, HashTable};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, SourceRelation, SourceSignature};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Csv { path: PathBuf, line: u64, message: String },
    #[error("{path}:{line}: row has {found} fields, header has {expected}")]
    Ragged { path: PathBuf, line: u64, expected: usize, found: usize },
    #[error("{path}: missing header row")]
    MissingHeader { path: PathBuf },
    #[error("{path}: invalid header: {source}")]
    Header { path: PathBuf, source: ModelError },
    #[error("source {source_name:?} has no attribute {attribute:?}")]
    UnknownAttribute { source_name: String, attribute: String },
    #[error("invalid projection of {source_name:?}: {reason}")]
    InvalidProjection { source_name: String, reason: String },
    #[error("rename map for part {part} is not a bijection onto the target: {reason}")]
    RenameNotBijective { part: usize, reason: String },
    #[error("part {part} maps {found} attributes onto a target of arity {expected}")]
    ArityMismatch { part: usize, expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// CSV dialect. A header row is always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvDialect {
    pub delimiter: u8,
    pub quote: u8,
}

impl Default for CsvDialect {
    fn default() -> Self {
        CsvDialect { delimiter: b',', quote: b'"' }
    }
}

impl CsvDialect {
    pub fn with_delimiter(delimiter: u8) -> Self {
        CsvDialect { delimiter, ..Default::default() }
    }

    fn check(&self) -> Result<(), String> {
        if self.delimiter == self.quote {
            return Err("delimiter and quote must differ".into());
        }
        Ok(())
    }

    fn reader<R: Read>(&self, input: R) -> csv::Reader<R> {
        csv::ReaderBuilder::new()
            .delimiter(self.delimiter)
            .quote(self.quote)
            .has_headers(false)
            .flexible(true)
            .from_reader(input)
    }

    fn writer<W: Write>(&self, output: W) -> csv::Writer<W> {
        csv::WriterBuilder::new()
            .delimiter(self.delimiter)
            .quote(self.quote)
            .quote_style(csv::QuoteStyle::Necessary)
            .from_writer(output)
    }
}

/// Attributes kept by a projection, in output order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub source: String,
    pub keep_attributes: Vec<String>,
}

impl ProjectionSpec {
    pub fn new(source: impl Into<String>, keep: impl IntoIterator<Item = impl Into<String>>) -> Self {
        ProjectionSpec { source: source.into(), keep_attributes: keep.into_iter().map(Into::into).collect() }
    }

    /// Positions of the kept attributes in `signature`.
    pub fn positions(&self, signature: &SourceSignature) -> Result<Vec<usize>, StoreError> {
        let invalid = |reason: &str| StoreError::InvalidProjection {
            source_name: signature.name().to_string(),
            reason: reason.to_string(),
        };
        if self.keep_attributes.is_empty() {
            return Err(invalid("no attributes kept"));
        }
        let distinct: BTreeSet<&String> = self.keep_attributes.iter().collect();
        if distinct.len() != self.keep_attributes.len() {
            return Err(invalid("attribute listed twice"));
        }
        self.keep_attributes
            .iter()
            .map(|a| {
                signature.position(a).ok_or_else(|| StoreError::UnknownAttribute {
                    source_name: signature.name().to_string(),
                    attribute: a.clone(),
                })
            })
            .collect()
    }
}

/// Insertion-ordered set of rows. Memory is proportional to the number of
/// distinct rows; probing with a projection of a wider row does not allocate.
#[derive(Default)]
pub struct DistinctRows {
    hasher: DefaultHashBuilder,
    table: HashTable<usize>,
    rows: Vec<Vec<String>>,
}

impl DistinctRows {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts the row whose `i`th value is `field(i)` for `i < arity`.
    /// Returns false when an equal row is already present.
    pub fn insert_with<'a>(&mut self, arity: usize, field: impl Fn(usize) -> &'a str) -> bool {
        let mut h = self.hasher.build_hasher();
        for i in 0..arity {
            field(i).hash(&mut h);
        }
        let hash = h.finish();
        let rows = &self.rows;
        if self.table.find(hash, |&idx| (0..arity).all(|i| rows[idx][i] == field(i))).is_some() {
            return false;
        }
        self.rows.push((0..arity).map(|i| field(i).to_string()).collect());
        let idx = self.rows.len() - 1;
        let (rows, hasher) = (&self.rows, &self.hasher);
        self.table.insert_unique(hash, idx, |&i| {
            let mut h = hasher.build_hasher();
            for v in &rows[i] {
                v.as_str().hash(&mut h);
            }
            h.finish()
        });
        true
    }

    pub fn insert_projected(&mut self, row: &[String], positions: &[usize]) -> bool {
        self.insert_with(positions.len(), |i| row[positions[i]].as_str())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn into_rows(self) -> Vec<Vec<String>> {
        self.rows
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path, err: csv::Error) -> StoreError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(source) => StoreError::Io { path: path.to_path_buf(), source },
        kind => StoreError::Csv { path: path.to_path_buf(), line, message: format!("{kind:?}") },
    }
}

/// Source name derived from a file path: the file stem.
pub fn source_name_for(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.to_string_lossy().into_owned())
}

/// Streams the data records of a CSV file to `visit`, after validating the
/// header. Ragged records are rejected with their line number.
fn scan_csv(
    path: &Path,
    name: &str,
    dialect: CsvDialect,
    mut visit: impl FnMut(&csv::StringRecord),
) -> Result<SourceSignature, StoreError> {
    dialect.check().map_err(|message| StoreError::Csv { path: path.to_path_buf(), line: 0, message })?;
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = dialect.reader(io::BufReader::with_capacity(1 << 16, file));
    let mut record = csv::StringRecord::new();
    if !reader.read_record(&mut record).map_err(|e| csv_err(path, e))? {
        return Err(StoreError::MissingHeader { path: path.to_path_buf() });
    }
    let signature = SourceSignature::new(name, record.iter())
        .map_err(|source| StoreError::Header { path: path.to_path_buf(), source })?;
    let arity = signature.arity();
    while reader.read_record(&mut record).map_err(|e| csv_err(path, e))? {
        if record.len() != arity {
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            return Err(StoreError::Ragged { path: path.to_path_buf(), line, expected: arity, found: record.len() });
        }
        visit(&record);
    }
    Ok(signature)
}

/// Reads only the header row.
pub fn read_header(path: &Path, dialect: CsvDialect) -> Result<Vec<String>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = dialect.reader(io::BufReader::new(file));
    let mut record = csv::StringRecord::new();
    if !reader.read_record(&mut record).map_err(|e| csv_err(path, e))? {
        return Err(StoreError::MissingHeader { path: path.to_path_buf() });
    }
    let sig = SourceSignature::new(source_name_for(path), record.iter())
        .map_err(|source| StoreError::Header { path: path.to_path_buf(), source })?;
    Ok(sig.attributes().to_vec())
}

/// Loads a CSV file; the relation is named after the file stem.
pub fn load_csv(path: impl AsRef<Path>, dialect: CsvDialect) -> Result<SourceRelation, StoreError> {
    let path = path.as_ref();
    load_csv_named(path, &source_name_for(path), dialect)
}

pub fn load_csv_named(path: &Path, name: &str, dialect: CsvDialect) -> Result<SourceRelation, StoreError> {
    let mut rows = Vec::new();
    let signature = scan_csv(path, name, dialect, |rec| rows.push(rec.iter().map(str::to_string).collect()))?;
    Ok(SourceRelation::new(signature, rows)?)
}

/// Single-pass projection with duplicate elimination straight from a file.
/// Memory is bounded by the distinct projected tuples.
pub fn project_distinct_csv(
    path: &Path,
    name: &str,
    dialect: CsvDialect,
    keep: &[String],
) -> Result<(SourceRelation, usize), StoreError> {
    // The header is needed before the first record can be projected.
    let header = read_header(path, dialect)?;
    let sig = SourceSignature::new(name, header.iter().cloned())?;
    let positions = ProjectionSpec::new(name, keep.iter().cloned()).positions(&sig)?;
    let mut distinct = DistinctRows::new();
    let mut total = 0usize;
    scan_csv(path, name, dialect, |rec| {
        total += 1;
        distinct.insert_with(positions.len(), |i| &rec[positions[i]]);
    })?;
    let out_sig = SourceSignature::new(name, keep.iter().cloned())?;
    Ok((SourceRelation::new(out_sig, distinct.into_rows())?, total))
}

/// π_keep(rel) with set semantics; the result keeps the relation's name.
pub fn project_distinct(rel: &SourceRelation, spec: &ProjectionSpec) -> Result<SourceRelation, StoreError> {
    let positions = spec.positions(rel.signature())?;
    let mut distinct = DistinctRows::new();
    for row in rel.rows() {
        distinct.insert_projected(row, &positions);
    }
    let sig = SourceSignature::new(rel.name(), spec.keep_attributes.iter().cloned())?;
    Ok(SourceRelation::new(sig, distinct.into_rows())?)
}

/// Duplicate-free union of each part projected onto the keys of its rename
/// map and renamed onto `target`. Parts are consumed in order and the first
/// occurrence of a tuple wins.
pub fn union_rename(
    parts: &[(&SourceRelation, &BTreeMap<String, String>)],
    target: &SourceSignature,
) -> Result<SourceRelation, StoreError> {
    let mut plans = Vec::with_capacity(parts.len());
    for (idx, (rel, rename)) in parts.iter().enumerate() {
        if rename.len() != target.arity() {
            return Err(StoreError::ArityMismatch { part: idx, expected: target.arity(), found: rename.len() });
        }
        let mut positions = vec![usize::MAX; target.arity()];
        for (from, to) in rename.iter() {
            let src = rel.signature().position(from).ok_or_else(|| StoreError::UnknownAttribute {
                source_name: rel.name().to_string(),
                attribute: from.clone(),
            })?;
            let dst = target.position(to).ok_or_else(|| StoreError::RenameNotBijective {
                part: idx,
                reason: format!("{to:?} is not a target attribute"),
            })?;
            if positions[dst] != usize::MAX {
                return Err(StoreError::RenameNotBijective {
                    part: idx,
                    reason: format!("two attributes map onto {to:?}"),
                });
            }
            positions[dst] = src;
        }
        plans.push((rel, positions));
    }
    let mut distinct = DistinctRows::new();
    for (rel, positions) in plans {
        for row in rel.rows() {
            distinct.insert_projected(row, &positions);
        }
    }
    Ok(SourceRelation::new(target.clone(), distinct.into_rows())?)
}

fn write_rows<W: Write>(rel: &SourceRelation, out: W, dialect: CsvDialect) -> Result<W, csv::Error> {
    let mut writer = dialect.writer(out);
    writer.write_record(rel.attributes())?;
    for row in rel.rows() {
        writer.write_record(row)?;
    }
    writer.flush()?;
    writer.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

/// Writes a header row followed by every row. Values are quoted only when
/// they need it; nulls become empty cells.
pub fn write_csv(rel: &SourceRelation, path: impl AsRef<Path>, dialect: CsvDialect) -> Result<(), StoreError> {
    let path = path.as_ref();
    dialect.check().map_err(|message| StoreError::Csv { path: path.to_path_buf(), line: 0, message })?;
    let file = File::create(path).map_err(io_err(path))?;
    write_rows(rel, io::BufWriter::new(file), dialect).map_err(|e| csv_err(path, e))?.flush().map_err(io_err(path))
}

struct CountingSink(u64);

impl Write for CountingSink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0 += buf.len() as u64;
        Ok(buf.len())
    }
    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Exact size in bytes of what [`write_csv`] would produce.
pub fn csv_size(rel: &SourceRelation, dialect: CsvDialect) -> u64 {
    write_rows(rel, CountingSink(0), dialect).map(|s| s.0).unwrap_or(0)
}
