//! Line-delimited JSON reading and writing.
//!
//! Every record file carries a `schema_version` field on each line. Readers
//! accept records without it (treated as version 1) and reject any other
//! version; writers always emit it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version stamped on every emitted record.
pub const SCHEMA_VERSION: u32 = 1;

fn default_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Deserialize)]
struct Incoming<T> {
    #[serde(default = "default_version")]
    schema_version: u32,
    #[serde(flatten)]
    record: T,
}

#[derive(Serialize)]
struct Outgoing<'a, T> {
    schema_version: u32,
    #[serde(flatten)]
    record: &'a T,
}

/// Parse one JSONL line into a record, checking its schema version.
pub fn parse_line<T: DeserializeOwned>(line: &str, source_name: &str, line_no: usize) -> Result<T> {
    let incoming: Incoming<T> =
        serde_json::from_str(line).map_err(|e| Error::schema(source_name, line_no, e.to_string()))?;
    if incoming.schema_version != SCHEMA_VERSION {
        return Err(Error::schema(
            source_name,
            line_no,
            format!("unsupported schema_version {}", incoming.schema_version),
        ));
    }
    Ok(incoming.record)
}

/// Visit each non-blank line of a JSONL stream with its 1-based line number.
pub fn for_each_line<R, F>(reader: R, mut f: F) -> Result<()>
where
    R: BufRead,
    F: FnMut(usize, &str) -> Result<()>,
{
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        f(idx + 1, trimmed)?;
    }
    Ok(())
}

/// Stream records out of a JSONL reader.
pub fn for_each_record<T, R, F>(reader: R, source_name: &str, mut f: F) -> Result<()>
where
    T: DeserializeOwned,
    R: BufRead,
    F: FnMut(usize, T) -> Result<()>,
{
    for_each_line(reader, |line_no, line| {
        let record = parse_line(line, source_name, line_no)?;
        f(line_no, record)
    })
}

pub fn read_records<T: DeserializeOwned, R: BufRead>(reader: R, source_name: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for_each_record(reader, source_name, |_, record| {
        out.push(record);
        Ok(())
    })?;
    Ok(out)
}

pub fn read_path<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path)?;
    read_records(BufReader::new(file), &path.display().to_string())
}

pub fn write_record<T: Serialize, W: Write>(writer: &mut W, record: &T) -> Result<()> {
    serde_json::to_writer(
        &mut *writer,
        &Outgoing {
            schema_version: SCHEMA_VERSION,
            record,
        },
    )?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn write_records<'a, T, W, I>(writer: W, records: I) -> Result<()>
where
    T: Serialize + 'a,
    W: Write,
    I: IntoIterator<Item = &'a T>,
{
    let mut writer = BufWriter::new(writer);
    for record in records {
        write_record(&mut writer, record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_path<'a, T, I>(path: &Path, records: I) -> Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    write_records(File::create(path)?, records)
}
