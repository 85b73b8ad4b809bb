//! Macro series as CSV.
//!
//! Columns are exactly `cycle,Ke,Kt,drift`. `cycle` is a decimal integer;
//! the floats use Rust's shortest round-trip representation (the `{:?}`
//! form, e.g. `0.5`, `1e-17`, `0.0`), so parsing a written file recovers
//! every value bit for bit.

use thiserror::Error;

use crate::analysis::MacroRecord;

pub const SERIES_HEADER: [&str; 4] = ["cycle", "Ke", "Kt", "drift"];

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("header must be `cycle,Ke,Kt,drift`")]
    BadHeader,
    #[error("line {line}: {message}")]
    BadRow { line: u64, message: String },
}

pub fn write_series(records: &[MacroRecord]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(SERIES_HEADER).expect("writing to memory");
    for r in records {
        w.write_record([
            r.cycle.to_string(),
            format!("{:?}", r.exchange_rate),
            format!("{:?}", r.turnover_rate),
            format!("{:?}", r.drift),
        ])
        .expect("writing to memory");
    }
    w.into_inner().expect("flushing to memory")
}

pub fn read_series(bytes: &[u8]) -> Result<Vec<MacroRecord>, SeriesError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    if r.headers()?.iter().ne(SERIES_HEADER) {
        return Err(SeriesError::BadHeader);
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |message: String| SeriesError::BadRow { line, message };
        if row.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", row.len())));
        }
        let float = |i: usize| {
            row[i]
                .parse::<f64>()
                .map_err(|_| bad(format!("`{}` is not a number", &row[i])))
        };
        out.push(MacroRecord {
            cycle: row[0].parse().map_err(|_| bad(format!("`{}` is not a cycle", &row[0])))?,
            exchange_rate: float(1)?,
            turnover_rate: float(2)?,
            drift: float(3)?,
        });
    }
    Ok(out)
}
