//! Line-delimited JSON prediction traces.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::RunRecord;

/// Writes one JSON object per record and flushes after each line.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        TraceWriter { out }
    }

    pub fn write(&mut self, record: &RunRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parses a trace; blank lines are skipped.
pub fn read_trace<R: BufRead>(input: R, path: &Path) -> Result<Vec<RunRecord>> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: i + 1,
            column: String::new(),
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<RunRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace(std::io::BufReader::new(file), path)
}
