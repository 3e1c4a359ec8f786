//! Records, corpora and query sets, plus their on-disk formats.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{first_non_finite, DistanceMetric};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Benign,
    Injected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: u64,
    pub vector: Vec<f32>,
    #[serde(default)]
    pub content: Option<String>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl Record {
    pub fn benign(id: u64, vector: Vec<f32>) -> Self {
        Record {
            id,
            vector,
            content: None,
            provenance: Provenance::Benign,
        }
    }
}

/// An ordered collection of records sharing one dimension and metric.
///
/// Immutable once built; operations that change membership return a new
/// corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<Record>,
    dim: usize,
    metric: DistanceMetric,
}

fn validate_vector(v: &[f32], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: v.len(),
        });
    }
    if let Some(pos) = first_non_finite(v) {
        return Err(Error::NonFinite(pos));
    }
    Ok(())
}

impl Corpus {
    pub fn new(dim: usize, metric: DistanceMetric, records: Vec<Record>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("corpus dimension must be positive"));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            validate_vector(&r.vector, dim)?;
            if !seen.insert(r.id) {
                return Err(Error::DuplicateId(r.id));
            }
        }
        Ok(Corpus {
            records,
            dim,
            metric,
        })
    }

    /// Builds a corpus taking the dimension from the first record.
    pub fn from_records(records: Vec<Record>, metric: DistanceMetric) -> Result<Self> {
        let dim = records
            .first()
            .map(|r| r.vector.len())
            .ok_or(Error::Empty("corpus"))?;
        Corpus::new(dim, metric, records)
    }

    /// Benign records with ids `0..n`.
    pub fn from_vectors(vectors: Vec<Vec<f32>>, metric: DistanceMetric) -> Result<Self> {
        let records = vectors
            .into_iter()
            .enumerate()
            .map(|(i, v)| Record::benign(i as u64, v))
            .collect();
        Corpus::from_records(records, metric)
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn with_metric(mut self, metric: DistanceMetric) -> Self {
        self.metric = metric;
        self
    }

    pub fn vector(&self, pos: usize) -> &[f32] {
        &self.records[pos].vector
    }

    pub fn vectors(&self) -> impl ExactSizeIterator<Item = &[f32]> + Clone + '_ {
        self.records.iter().map(|r| r.vector.as_slice())
    }

    pub fn ids(&self) -> impl ExactSizeIterator<Item = u64> + '_ {
        self.records.iter().map(|r| r.id)
    }

    pub fn max_id(&self) -> Option<u64> {
        self.ids().max()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.records
            .iter()
            .filter(|r| r.provenance == provenance)
            .count()
    }

    pub fn is_poisoned(&self) -> bool {
        self.records
            .iter()
            .any(|r| r.provenance == Provenance::Injected)
    }

    pub fn injected_ids(&self) -> BTreeSet<u64> {
        self.records
            .iter()
            .filter(|r| r.provenance == Provenance::Injected)
            .map(|r| r.id)
            .collect()
    }

    /// The benign subset V.
    pub fn benign(&self) -> Corpus {
        self.filter(|r| r.provenance == Provenance::Benign)
    }

    pub fn filter(&self, mut keep: impl FnMut(&Record) -> bool) -> Corpus {
        Corpus {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            dim: self.dim,
            metric: self.metric,
        }
    }

    /// Returns a new corpus with `extra` appended after validation.
    pub fn extended(&self, extra: Vec<Record>) -> Result<Corpus> {
        let mut records = self.records.clone();
        records.extend(extra);
        Corpus::new(self.dim, self.metric, records)
    }

    /// Uniform sample of `n` records without replacement, kept in corpus order.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Corpus> {
        if n == 0 || n > self.len() {
            return Err(Error::invalid(format!(
                "subsample size {n} outside 1..={}",
                self.len()
            )));
        }
        let mut rng = stream_rng(seed, 0);
        let mut picked = sample(&mut rng, self.len(), n).into_vec();
        picked.sort_unstable();
        Ok(Corpus {
            records: picked.into_iter().map(|i| self.records[i].clone()).collect(),
            dim: self.dim,
            metric: self.metric,
        })
    }

    /// Splits off the last `count` records' vectors as a query set.
    pub fn split_queries(&self, count: usize) -> Result<(Corpus, QuerySet)> {
        if count == 0 || count >= self.len() {
            return Err(Error::invalid(format!(
                "held-out query count {count} must be in 1..{}",
                self.len()
            )));
        }
        let cut = self.len() - count;
        let queries = self.records[cut..]
            .iter()
            .map(|r| Query {
                id: Some(r.id),
                vector: r.vector.clone(),
            })
            .collect();
        Ok((
            Corpus {
                records: self.records[..cut].to_vec(),
                dim: self.dim,
                metric: self.metric,
            },
            QuerySet::new(self.dim, queries)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: Option<u64>,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet {
    queries: Vec<Query>,
    dim: usize,
}

impl QuerySet {
    pub fn new(dim: usize, queries: Vec<Query>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("query dimension must be positive"));
        }
        for q in &queries {
            validate_vector(&q.vector, dim)?;
        }
        Ok(QuerySet { queries, dim })
    }

    /// Queries with ids `0..n`.
    pub fn from_vectors(vectors: Vec<Vec<f32>>) -> Result<Self> {
        let dim = vectors.first().map(Vec::len).ok_or(Error::Empty("query set"))?;
        let queries = vectors
            .into_iter()
            .enumerate()
            .map(|(i, vector)| Query {
                id: Some(i as u64),
                vector,
            })
            .collect();
        QuerySet::new(dim, queries)
    }

    /// Every record of a corpus, as queries.
    pub fn from_corpus(corpus: &Corpus) -> QuerySet {
        QuerySet {
            queries: corpus
                .records()
                .iter()
                .map(|r| Query {
                    id: Some(r.id),
                    vector: r.vector.clone(),
                })
                .collect(),
            dim: corpus.dim(),
        }
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vectors(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.queries.iter().map(|q| q.vector.as_slice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// fvecs-compatible: per record a little-endian `u32` dimension followed by
    /// that many `f32`. Ids are positional; no payload or provenance.
    #[serde(alias = "fvecs")]
    VecBinary,
    /// One JSON object per line carrying the full record.
    Jsonl,
    /// Headerless rows: id, then the vector components.
    Csv,
}

impl CorpusFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "fvecs" | "vecs" | "bin" => Some(CorpusFormat::VecBinary),
            "jsonl" | "ndjson" => Some(CorpusFormat::Jsonl),
            "csv" => Some(CorpusFormat::Csv),
            _ => None,
        }
    }
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vecbinary" | "fvecs" => Ok(CorpusFormat::VecBinary),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(Error::invalid(format!("unknown corpus format '{other}'"))),
        }
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Loads a corpus. Records in VecBinary and CSV files are Benign; JSONL keeps
/// the provenance it carries. The metric defaults to Euclidean.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let records = match format {
        CorpusFormat::VecBinary => read_vecbinary(path, reader)?,
        CorpusFormat::Jsonl => read_jsonl(path, reader)?,
        CorpusFormat::Csv => read_csv(path, reader)?,
    };
    if records.is_empty() {
        return Err(parse_err(path, 0, "file contains no records"));
    }
    let dim = records[0].vector.len();
    if dim == 0 {
        return Err(parse_err(path, 1, "record has zero dimension"));
    }
    Corpus::new(dim, DistanceMetric::Euclidean, records)
}

fn read_vecbinary(path: &Path, mut reader: impl Read) -> Result<Vec<Record>> {
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut offset = 0usize;
    let mut dim = None;
    while offset < bytes.len() {
        let index = records.len();
        let header = bytes
            .get(offset..offset + 4)
            .ok_or_else(|| parse_err(path, index + 1, "truncated dimension prefix"))?;
        let d = u32::from_le_bytes(header.try_into().expect("4 bytes")) as usize;
        if *dim.get_or_insert(d) != d {
            return Err(parse_err(
                path,
                index + 1,
                format!("dimension {d} differs from first record's {}", dim.unwrap()),
            ));
        }
        offset += 4;
        let body = bytes
            .get(offset..offset + 4 * d)
            .ok_or_else(|| parse_err(path, index + 1, "truncated vector body"))?;
        let vector = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect::<Vec<_>>();
        if let Some(pos) = first_non_finite(&vector) {
            return Err(parse_err(path, index + 1, format!("non-finite component {pos}")));
        }
        offset += 4 * d;
        records.push(Record::benign(index as u64, vector));
    }
    Ok(records)
}

fn read_jsonl(path: &Path, reader: impl BufRead) -> Result<Vec<Record>> {
    let mut records: Vec<Record> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(&line).map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        if let Some(first) = records.first() {
            if first.vector.len() != record.vector.len() {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!(
                        "dimension {} differs from first record's {}",
                        record.vector.len(),
                        first.vector.len()
                    ),
                ));
            }
        }
        if let Some(pos) = first_non_finite(&record.vector) {
            return Err(parse_err(path, i + 1, format!("non-finite component {pos}")));
        }
        records.push(record);
    }
    Ok(records)
}

fn read_csv(path: &Path, reader: impl Read) -> Result<Vec<Record>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records: Vec<Record> = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = row.position().map_or(records.len() + 1, |p| p.line() as usize);
        let mut cells = row.iter();
        let id = cells
            .next()
            .ok_or_else(|| parse_err(path, line, "empty row"))?
            .trim()
            .parse::<u64>()
            .map_err(|e| parse_err(path, line, format!("bad id: {e}")))?;
        let vector = cells
            .enumerate()
            .map(|(col, cell)| {
                cell.trim()
                    .parse::<f32>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| {
                        parse_err(path, line, format!("column {}: '{cell}' is not a finite number", col + 1))
                    })
            })
            .collect::<Result<Vec<f32>>>()?;
        if let Some(first) = records.first() {
            if first.vector.len() != vector.len() {
                return Err(parse_err(
                    path,
                    line,
                    format!(
                        "dimension {} differs from first record's {}",
                        vector.len(),
                        first.vector.len()
                    ),
                ));
            }
        }
        records.push(Record::benign(id, vector));
    }
    Ok(records)
}

/// Writes a corpus. VecBinary drops ids, payloads and provenance; CSV drops
/// payloads and provenance. Only JSONL is lossless.
pub fn save_corpus(corpus: &Corpus, path: &Path, format: CorpusFormat) -> Result<()> {
    if format != CorpusFormat::Jsonl && corpus.is_poisoned() {
        log::warn!(
            "{}: {:?} cannot store provenance; injected records will load as benign",
            path.display(),
            format
        );
    }
    write_atomically(path, |w| match format {
        CorpusFormat::VecBinary => {
            for r in corpus.records() {
                w.write_all(&(r.vector.len() as u32).to_le_bytes())?;
                for x in &r.vector {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            Ok(())
        }
        CorpusFormat::Jsonl => {
            for r in corpus.records() {
                serde_json::to_writer(&mut *w, r)?;
                w.write_all(b"\n")?;
            }
            Ok(())
        }
        CorpusFormat::Csv => {
            let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
            for r in corpus.records() {
                let mut row = Vec::with_capacity(r.vector.len() + 1);
                row.push(r.id.to_string());
                row.extend(r.vector.iter().map(|x| x.to_string()));
                wtr.write_record(&row).map_err(std::io::Error::other)?;
            }
            wtr.flush()
        }
    })
}

/// Writes through a sibling temporary file and renames it over `path`, so
/// readers never observe a partial file.
pub fn write_atomically<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let tmp = temp_sibling(path);
    let result = (|| {
        let file = File::create(&tmp)?;
        let mut w = BufWriter::new(file);
        write(&mut w)?;
        w.flush()?;
        w.get_ref().sync_all()?;
        drop(w);
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}
