use crate::args::ReportFormat;
use crate::error::CmdResult;
use serde::Serialize;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// Writes `rows` as CSV with a header, or as a JSON array.
pub fn write_rows<T: Serialize>(rows: &[T], format: ReportFormat, out: Option<&Path>) -> CmdResult {
    let sink: Box<dyn Write> = match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    };
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        ReportFormat::Json => {
            let mut sink = sink;
            serde_json::to_writer_pretty(&mut sink, rows)?;
            writeln!(sink)?;
            sink.flush()?;
        }
    }
    Ok(())
}
