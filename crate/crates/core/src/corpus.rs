//! Newline-delimited JSON corpus of crawl records.
//!
//! Line 1 is a header object; every following line is one [`PageRecord`].
//! Paths ending in `.gz` are gzip-compressed transparently. Page bodies are
//! never stored.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crawler::PageRecord;

pub const SCHEMA_NAME: &str = "cspsop-corpus";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("unsupported corpus schema {name} v{version} (expected {SCHEMA_NAME} v{SCHEMA_VERSION})")]
    UnsupportedSchema { name: String, version: u32 },
    #[error("corpus is empty (missing header line)")]
    MissingHeader,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusHeader {
    pub schema: String,
    pub version: u32,
    /// Crawl date, free-form (RFC 3339 recommended).
    pub created: String,
    pub config_hash: String,
    #[serde(default)]
    pub tool: String,
}

impl CorpusHeader {
    pub fn new(created: impl Into<String>, config_hash: impl Into<String>) -> Self {
        CorpusHeader {
            schema: SCHEMA_NAME.to_string(),
            version: SCHEMA_VERSION,
            created: created.into(),
            config_hash: config_hash.into(),
            tool: concat!("cspsop ", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }
}

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

enum Sink {
    Plain(Box<dyn Write>),
    Gzip(GzEncoder<BufWriter<File>>),
}

impl Write for Sink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Sink::Plain(w) => w.write(buf),
            Sink::Gzip(w) => w.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Sink::Plain(w) => w.flush(),
            Sink::Gzip(w) => w.flush(),
        }
    }
}

/// Streaming writer; call [`CorpusWriter::finish`] to flush.
pub struct CorpusWriter {
    out: Sink,
}

impl CorpusWriter {
    pub fn create(path: &Path, header: &CorpusHeader) -> Result<Self, CorpusError> {
        let file = BufWriter::new(File::create(path)?);
        let out = if is_gzip(path) {
            Sink::Gzip(GzEncoder::new(file, Compression::default()))
        } else {
            Sink::Plain(Box::new(file))
        };
        Self::start(out, header)
    }

    pub fn from_writer(out: Box<dyn Write>, header: &CorpusHeader) -> Result<Self, CorpusError> {
        Self::start(Sink::Plain(out), header)
    }

    fn start(mut out: Sink, header: &CorpusHeader) -> Result<Self, CorpusError> {
        serde_json::to_writer(&mut out, header).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
        Ok(CorpusWriter { out })
    }

    pub fn write(&mut self, record: &PageRecord) -> Result<(), CorpusError> {
        serde_json::to_writer(&mut self.out, record).map_err(io::Error::from)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(self) -> Result<(), CorpusError> {
        match self.out {
            Sink::Plain(mut w) => w.flush()?,
            Sink::Gzip(enc) => enc.finish()?.flush()?,
        }
        Ok(())
    }
}

/// Streaming reader yielding one record per line.
pub struct CorpusReader {
    lines: io::Lines<Box<dyn BufRead>>,
    header: CorpusHeader,
    line: usize,
}

impl CorpusReader {
    pub fn open(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path)?;
        let inner: Box<dyn Read> = if is_gzip(path) {
            Box::new(GzDecoder::new(file))
        } else {
            Box::new(file)
        };
        Self::from_reader(Box::new(BufReader::new(inner)))
    }

    pub fn from_reader(reader: Box<dyn BufRead>) -> Result<Self, CorpusError> {
        let mut lines = reader.lines();
        let first = lines.next().ok_or(CorpusError::MissingHeader)??;
        let header: CorpusHeader = serde_json::from_str(&first).map_err(|e| CorpusError::Malformed {
            line: 1,
            message: format!("bad header: {e}"),
        })?;
        if header.schema != SCHEMA_NAME || header.version != SCHEMA_VERSION {
            return Err(CorpusError::UnsupportedSchema {
                name: header.schema,
                version: header.version,
            });
        }
        Ok(CorpusReader {
            lines,
            header,
            line: 1,
        })
    }

    pub fn header(&self) -> &CorpusHeader {
        &self.header
    }
}

impl Iterator for CorpusReader {
    type Item = Result<PageRecord, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            return Some(serde_json::from_str(&text).map_err(|e| CorpusError::Malformed {
                line: self.line,
                message: e.to_string(),
            }));
        }
    }
}

pub fn write_corpus(records: &[PageRecord], path: &Path, header: &CorpusHeader) -> Result<(), CorpusError> {
    let mut w = CorpusWriter::create(path, header)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()
}

pub fn read_corpus(path: &Path) -> Result<(CorpusHeader, Vec<PageRecord>), CorpusError> {
    let reader = CorpusReader::open(path)?;
    let header = reader.header().clone();
    let records = reader.collect::<Result<Vec<_>, _>>()?;
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crawler::{Depth, FetchStatus};
    use crate::origin::{origin_of, SiteKey};
    use crate::policy::{parse_policy, Delivery, Disposition};
    use url::Url;

    fn records() -> Vec<PageRecord> {
        (0..3)
            .map(|i| {
                let url = format!("http://main.com/p{i}");
                let mut r = PageRecord::new(
                    Url::parse(&url).unwrap(),
                    origin_of(&url).unwrap(),
                    SiteKey("main.com".into()),
                    if i == 0 { Depth::Home } else { Depth::Linked },
                );
                r.policies = vec![parse_policy("script-src 'self'", Disposition::ReportOnly, Delivery::HttpHeader)];
                if i == 2 {
                    r.fetch_status = FetchStatus::HttpError { code: 404 };
                }
                r
            })
            .collect()
    }

    fn header() -> CorpusHeader {
        CorpusHeader::new("2016-08-31T00:00:00Z", "abc")
    }

    #[test]
    fn round_trip_plain_and_gzip() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["c.jsonl", "c.jsonl.gz"] {
            let path = dir.path().join(name);
            write_corpus(&records(), &path, &header()).unwrap();
            let (h, back) = read_corpus(&path).unwrap();
            assert_eq!(h, header());
            assert_eq!(back, records());
        }
    }

    #[test]
    fn corrupted_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut recs = records();
        recs.push(recs[0].clone());
        write_corpus(&recs, &path, &header()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[4] = "{not json";
        std::fs::write(&path, lines.join("\n")).unwrap();
        match read_corpus(&path) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "{\"schema\":\"cspsop-corpus\",\"version\":99,\"created\":\"\",\"config_hash\":\"\"}\n").unwrap();
        assert!(matches!(read_corpus(&path), Err(CorpusError::UnsupportedSchema { version: 99, .. })));
        std::fs::write(&path, "").unwrap();
        assert!(matches!(read_corpus(&path), Err(CorpusError::MissingHeader)));
    }
}
