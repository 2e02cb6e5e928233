//! Minimal CSV plumbing: comma-separated, one header row, LF endings.
//! No field we read or write contains a comma or quote, so no quoting
//! layer is needed.

use std::fs;
use std::path::Path;

use crate::error::{usage, CliError};

pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    /// Column index by header name.
    pub fn col(&self, name: &str, origin: &str) -> Result<usize, CliError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| usage(format!("{origin}: missing column `{name}`")))
    }
}

pub fn read_csv(path: &Path) -> Result<CsvTable, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    parse_csv(&text, &path.display().to_string())
}

pub fn parse_csv(text: &str, origin: &str) -> Result<CsvTable, CliError> {
    let mut lines = text.lines();
    let header_line = lines.next().ok_or_else(|| usage(format!("{origin}: empty CSV")))?;
    let header: Vec<String> = header_line.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if fields.len() != header.len() {
            return Err(usage(format!(
                "{origin}: row {} has {} fields, expected {}",
                i + 2,
                fields.len(),
                header.len()
            )));
        }
        rows.push(fields);
    }
    Ok(CsvTable { header, rows })
}

pub fn parse_field<T: std::str::FromStr>(
    value: &str,
    column: &str,
    origin: &str,
) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| usage(format!("{origin}: bad `{column}` value `{value}`")))
}
