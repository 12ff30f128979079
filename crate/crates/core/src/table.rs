//! Shared plumbing for the per-family feature CSV artifacts. Missing values
//! are empty cells; floats use the shortest round-trip representation.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, TableError>;

pub fn format_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn parse<T: std::str::FromStr>(cell: &str, line: usize, what: &str) -> Result<T> {
    cell.trim().parse().map_err(|_| TableError::Parse {
        line,
        message: format!("bad {what} {cell:?}"),
    })
}

pub fn parse_opt(cell: &str, line: usize, what: &str) -> Result<Option<f64>> {
    if cell.trim().is_empty() {
        Ok(None)
    } else {
        parse(cell, line, what).map(Some)
    }
}

/// Check that `header` is exactly `expected`.
pub fn expect_header(header: &csv::StringRecord, expected: &[String]) -> Result<()> {
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(TableError::Parse {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    Ok(())
}
