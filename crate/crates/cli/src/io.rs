use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use hb_core::generation::ResponseRecord;
use hb_core::index::SentenceIndex;
use hb_core::registry::Registry;
use hb_core::{jsonl, Error, Result};
use serde::Serialize;

pub fn registry(data_dir: Option<&Path>) -> Result<Registry> {
    match data_dir {
        Some(dir) => Registry::load_dir(dir),
        None => Ok(Registry::shipped()),
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Lookup(format!("{}: {e}", path.display())))
}

pub fn name(path: &Path) -> String {
    path.display().to_string()
}

/// Buffered writer to `path`, or stdout.
pub fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Output directory, created if needed; defaults to the working directory.
pub fn out_dir(path: Option<&Path>) -> Result<PathBuf> {
    let dir = path.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub fn sentences(path: &Path) -> Result<SentenceIndex> {
    SentenceIndex::read(open(path)?, &name(path))
}

pub fn responses(path: &Path) -> Result<Vec<ResponseRecord>> {
    jsonl::read_records(open(path)?, &name(path))
}

pub fn manifest(path: &Path) -> Result<Vec<String>> {
    hb_core::generation::read_manifest(open(path)?)
}

pub fn write_csv<T: Serialize, W: Write>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with a header computed at run time.
pub fn write_table<W: Write>(writer: W, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Value(format!("csv: {other:?}")),
    }
}

/// Shortest representation that round-trips, for stable CSV output.
pub fn num(x: f64) -> String {
    format!("{x}")
}
