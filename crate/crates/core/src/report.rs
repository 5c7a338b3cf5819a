//! Shared CSV conventions: 17 significant digits, `#`-prefixed preambles.

use std::io::Write;

use crate::error::{Error, Result};

/// Round-trip exact float formatting.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV writer that first emits `# ` comment lines.
pub fn csv_writer<W: Write>(mut out: W, preamble: &[String]) -> Result<csv::Writer<W>> {
    for line in preamble {
        writeln!(out, "# {line}")?;
    }
    Ok(csv::Writer::from_writer(out))
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes a header and rows of pre-formatted fields.
pub fn write_table<W: Write>(out: W, preamble: &[String], header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(out, preamble)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
