// SPDX-License-Identifier: Apache-2.0

//! JSON-lines run trace and its sinks.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest as _, Sha256};

pub const TRACE_FORMAT: u32 = 1;

/// One trace line as written.
#[derive(Serialize)]
pub struct TraceLine<'a> {
    pub t: u64,
    pub kind: &'a str,
    pub from: Option<u32>,
    pub to: Option<u32>,
    pub round: Option<u64>,
    pub stage: Option<&'a str>,
    pub detail: Value,
}

impl TraceLine<'_> {
    pub fn render(&self) -> String {
        serde_json::to_string(self).expect("trace line serializes")
    }
}

/// One trace line as read back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    pub kind: String,
    pub from: Option<u32>,
    pub to: Option<u32>,
    pub round: Option<u64>,
    pub stage: Option<String>,
    pub detail: Value,
}

pub fn parse_line(line: &str) -> Result<TraceRecord, serde_json::Error> {
    serde_json::from_str(line)
}

pub fn read_trace(path: &Path) -> io::Result<Vec<String>> {
    BufReader::new(File::open(path)?).lines().collect()
}

/// Receives rendered trace lines. Returning `false` stops the run.
pub trait TraceSink {
    fn record(&mut self, line: String) -> bool;
}

#[derive(Default)]
pub struct VecSink {
    pub lines: Vec<String>,
}

impl TraceSink for VecSink {
    fn record(&mut self, line: String) -> bool {
        self.lines.push(line);
        true
    }
}

/// Keeps only a running hash and line count.
#[derive(Default)]
pub struct DigestSink {
    hasher: Sha256,
    pub lines: u64,
}

impl DigestSink {
    pub fn finish(self) -> String {
        hex::encode(self.hasher.finalize())
    }
}

impl TraceSink for DigestSink {
    fn record(&mut self, line: String) -> bool {
        self.hasher.update(line.as_bytes());
        self.hasher.update(b"\n");
        self.lines += 1;
        true
    }
}

pub struct FileSink {
    out: BufWriter<File>,
    pub error: Option<io::Error>,
}

impl FileSink {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(FileSink { out: BufWriter::new(File::create(path)?), error: None })
    }

    pub fn finish(mut self) -> io::Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()
    }
}

impl TraceSink for FileSink {
    fn record(&mut self, line: String) -> bool {
        if let Err(e) = writeln!(self.out, "{line}") {
            self.error = Some(e);
            return false;
        }
        true
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Divergence {
    /// One-based line number in the expected trace.
    pub line: usize,
    pub expected: Option<String>,
    pub actual: Option<String>,
}

/// Compares produced lines against an expected trace and stops at the first difference.
pub struct CompareSink<'a> {
    expected: &'a [String],
    next: usize,
    pub divergence: Option<Divergence>,
}

impl<'a> CompareSink<'a> {
    pub fn new(expected: &'a [String]) -> Self {
        CompareSink { expected, next: 0, divergence: None }
    }

    /// Closes the comparison: a shorter reproduction is also a divergence.
    pub fn finish(mut self) -> Option<Divergence> {
        if self.divergence.is_none() && self.next < self.expected.len() {
            self.divergence = Some(Divergence {
                line: self.next + 1,
                expected: Some(self.expected[self.next].clone()),
                actual: None,
            });
        }
        self.divergence
    }
}

impl TraceSink for CompareSink<'_> {
    fn record(&mut self, line: String) -> bool {
        if self.divergence.is_some() {
            return false;
        }
        let expected = self.expected.get(self.next);
        if expected.map(|e| e.as_str()) != Some(line.as_str()) {
            self.divergence = Some(Divergence { line: self.next + 1, expected: expected.cloned(), actual: Some(line) });
            return false;
        }
        self.next += 1;
        true
    }
}
