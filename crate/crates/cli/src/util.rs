use std::path::Path;

use map_core::{Error, Result};

/// Shortest round-trip f64 formatting (`15.0`, `0.8333333333333334`), the
/// serialization used for every float this binary emits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Parses a comma-separated list of unsigned integers (`"1,2,4,8,16"`).
pub fn parse_u64_list(text: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(
            part.parse::<u64>()
                .map_err(|_| Error::Domain(format!("not an unsigned integer: {part:?}")))?,
        );
    }
    if out.is_empty() {
        return Err(Error::Domain("expected a non-empty list of integers".into()));
    }
    Ok(out)
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes rows as CSV with quoting where needed; fields arrive pre-formatted.
pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header).expect("csv header");
    for row in rows {
        writer.write_record(row).expect("csv row");
    }
    String::from_utf8(writer.into_inner().expect("csv flush")).expect("csv utf8")
}

/// Reads a CSV file, checking the exact header before returning records.
pub fn read_csv_records(path: &Path, expected_header: &[&str]) -> Result<Vec<Vec<String>>> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let got: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Domain(format!("{}: {e}", path.display())))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    if got != expected_header {
        return Err(Error::SchemaMismatch {
            path: path.to_path_buf(),
            expected: expected_header.join(","),
            got: got.join(","),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Domain(format!("{}: {e}", path.display())))?;
        rows.push(record.iter().map(|s| s.to_string()).collect());
    }
    Ok(rows)
}

pub fn parse_f64_field(path: &Path, field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::Domain(format!("{}: not a number: {field:?}", path.display())))
}

/// Seed precedence: flag > config file > MAP_SEED > built-in default.
pub fn resolve_seed(flag: Option<u64>, file_seed: Option<u64>, default: u64) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    if let Some(seed) = file_seed {
        return Ok(seed);
    }
    match std::env::var("MAP_SEED") {
        Ok(raw) => raw
            .parse::<u64>()
            .map_err(|_| Error::Domain(format!("MAP_SEED must be an unsigned integer, got {raw:?}"))),
        Err(_) => Ok(default),
    }
}
