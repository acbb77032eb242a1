//! COO text format: one `i,j,k,value` record per line, optional header.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{bounding_shape, Entry, SparseTensor, TensorShape};
use crate::error::{Error, Result};

pub const COO_HEADER: &str = "i,j,k,value";

/// Reads a COO stream. The first non-blank line is treated as a header
/// when its first field is not a number. Without a `shape_hint` the shape
/// is the bounding box of the indices read.
pub fn load_coo<R: BufRead>(source: R, shape_hint: Option<TensorShape>) -> Result<SparseTensor> {
    let mut entries = Vec::new();
    let mut first = true;
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if std::mem::take(&mut first) && is_header(trimmed) {
            continue;
        }
        entries.push(parse_record(trimmed, line_no)?);
    }
    if entries.is_empty() {
        return Err(Error::NoEntries);
    }
    let shape = match shape_hint {
        Some(shape) => shape,
        None => bounding_shape(&entries)?,
    };
    SparseTensor::new(shape, entries)
}

pub fn load_coo_path(
    path: impl AsRef<Path>,
    shape_hint: Option<TensorShape>,
) -> Result<SparseTensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    load_coo(BufReader::new(file), shape_hint).map_err(|e| e.context(path.display().to_string()))
}

/// Writes the tensor in COO form with a header line. Values carry 17
/// significant digits so that reading them back is exact.
pub fn save<W: Write>(t: &SparseTensor, mut sink: W) -> Result<()> {
    writeln!(sink, "{COO_HEADER}")?;
    for e in t.entries() {
        writeln!(sink, "{},{},{},{:.16e}", e.i, e.j, e.k, e.value)?;
    }
    sink.flush()?;
    Ok(())
}

pub fn save_path(t: &SparseTensor, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    save(t, BufWriter::new(file))
}

fn is_header(line: &str) -> bool {
    let first = line.split(',').next().unwrap_or("").trim();
    first.parse::<f64>().is_err()
}

fn parse_record(line: &str, line_no: usize) -> Result<Entry> {
    let bad = |reason: String| Error::Parse {
        line: line_no,
        reason,
    };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(bad(format!(
            "expected 4 fields `i,j,k,value`, found {}",
            fields.len()
        )));
    }
    let index = |s: &str, name: &str| {
        s.parse::<usize>()
            .map_err(|_| bad(format!("{name} index `{s}` is not a non-negative integer")))
    };
    let i = index(fields[0], "i")?;
    let j = index(fields[1], "j")?;
    let k = index(fields[2], "k")?;
    let value = fields[3]
        .parse::<f64>()
        .map_err(|_| bad(format!("value `{}` is not a number", fields[3])))?;
    Ok(Entry { i, j, k, value })
}
