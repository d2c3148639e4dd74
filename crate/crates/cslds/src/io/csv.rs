//! Minimal CSV reading/writing with round-trip-exact float formatting.
//!
//! Floats are written with Rust's shortest round-trip representation, so
//! parsing a written value recovers the exact f64. Infinities serialize as
//! `inf` / `-inf`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub fn format_float(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v}")
    }
}

pub fn parse_float(s: &str) -> Result<f64> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        other => other
            .parse()
            .map_err(|_| Error::Format(format!("bad float '{other}'"))),
    }
}

/// Writes a header row plus data rows. Fields must not contain commas or
/// newlines; the schemas used here never do.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Config(format!(
                "csv row has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`]: returns the header and rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{}: empty csv", path.display())))?
        .split(',')
        .map(str::to_owned)
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_owned).collect();
        if fields.len() != header.len() {
            return Err(Error::Format(format!(
                "{}: row with {} fields, expected {}",
                path.display(),
                fields.len(),
                header.len()
            )));
        }
        rows.push(fields);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for v in [
            0.1,
            -1.0 / 3.0,
            std::f64::consts::PI,
            1.0e-300,
            6.02214076e23,
            f64::INFINITY,
            f64::NEG_INFINITY,
            0.0,
        ] {
            let s = format_float(v);
            let back = parse_float(&s).unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "value {v} via '{s}'");
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rows = vec![
            vec!["1".to_string(), format_float(0.1)],
            vec!["2".to_string(), format_float(f64::INFINITY)],
        ];
        write_csv(&path, &["trial", "value"], &rows).unwrap();
        let (header, back) = read_csv(&path).unwrap();
        assert_eq!(header, vec!["trial", "value"]);
        assert_eq!(back, rows);
        assert_eq!(parse_float(&back[1][1]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn mismatched_row_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rows = vec![vec!["1".to_string()]];
        assert!(write_csv(&path, &["a", "b"], &rows).is_err());
    }
}
