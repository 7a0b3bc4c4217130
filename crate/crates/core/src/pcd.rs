//! ASCII PCD (v0.7) reader/writer plus a loose `x y z` text reader used when
//! converting third-party datasets.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead};
use std::path::Path;

use thiserror::Error;

use crate::cloud::{Point3, PointCloud};

#[derive(Debug, Error)]
pub enum PcdError {
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: header declares {expected} points but the body has {found} rows")]
    CountMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: bad row: {reason}")]
    BadRow { line: usize, reason: String },
    #[error("cannot serialize an empty cloud")]
    EmptyCloud,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Result of parsing a point file. Non-finite rows are dropped and counted.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCloud {
    pub cloud: PointCloud,
    pub dropped_non_finite: usize,
}

const HEADER_KEYS: [&str; 10] = [
    "VERSION",
    "FIELDS",
    "SIZE",
    "TYPE",
    "COUNT",
    "WIDTH",
    "HEIGHT",
    "VIEWPOINT",
    "POINTS",
    "DATA",
];

fn header_err(line: usize, reason: impl Into<String>) -> PcdError {
    PcdError::MalformedHeader {
        line,
        reason: reason.into(),
    }
}

/// Column offsets of x, y, z given the FIELDS and optional COUNT lines.
fn xyz_columns(
    fields: &[String],
    counts: Option<&Vec<String>>,
    line: usize,
) -> Result<([usize; 3], usize), PcdError> {
    let counts: Vec<usize> = match counts {
        Some(c) => {
            if c.len() != fields.len() {
                return Err(header_err(line, "COUNT length differs from FIELDS"));
            }
            c.iter()
                .map(|s| {
                    s.parse::<usize>()
                        .ok()
                        .filter(|&n| n > 0)
                        .ok_or_else(|| header_err(line, format!("invalid COUNT entry {s:?}")))
                })
                .collect::<Result<_, _>>()?
        }
        None => vec![1; fields.len()],
    };
    let mut offsets = HashMap::new();
    let mut col = 0;
    for (name, n) in fields.iter().zip(&counts) {
        offsets.entry(name.as_str()).or_insert(col);
        col += n;
    }
    let mut out = [0usize; 3];
    for (slot, axis) in out.iter_mut().zip(["x", "y", "z"]) {
        *slot = *offsets
            .get(axis)
            .ok_or_else(|| header_err(line, format!("FIELDS lacks {axis}")))?;
    }
    Ok((out, col))
}

/// Parse an ASCII PCD document.
pub fn parse_pcd<R: BufRead>(reader: R) -> Result<ParsedCloud, PcdError> {
    let mut header: HashMap<&'static str, (usize, Vec<String>)> = HashMap::new();
    let mut lines = reader.lines().enumerate();
    let mut data_line = 0;

    for (idx, line) in lines.by_ref() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let key = tokens.next().unwrap_or_default().to_ascii_uppercase();
        let key = HEADER_KEYS
            .iter()
            .copied()
            .find(|k| *k == key)
            .ok_or_else(|| header_err(lineno, format!("unknown header key {key:?}")))?;
        let values: Vec<String> = tokens.map(str::to_owned).collect();
        if header.insert(key, (lineno, values)).is_some() {
            return Err(header_err(lineno, format!("duplicate key {key}")));
        }
        if key == "DATA" {
            data_line = lineno;
            break;
        }
    }

    let Some((_, data)) = header.get("DATA") else {
        return Err(header_err(data_line.max(1), "missing DATA line"));
    };
    if data.len() != 1 || !data[0].eq_ignore_ascii_case("ascii") {
        return Err(header_err(
            data_line,
            format!("only DATA ascii is supported, got {:?}", data.join(" ")),
        ));
    }
    let (fields_line, fields) = header
        .get("FIELDS")
        .ok_or_else(|| header_err(data_line, "missing FIELDS"))?;
    let (cols, n_cols) = xyz_columns(
        fields,
        header.get("COUNT").map(|(_, c)| c),
        *fields_line,
    )?;
    let expected = match (header.get("POINTS"), header.get("WIDTH")) {
        (Some((l, v)), _) => parse_count(v, *l, "POINTS")?,
        (None, Some((l, w))) => {
            let width = parse_count(w, *l, "WIDTH")?;
            let height = match header.get("HEIGHT") {
                Some((hl, h)) => parse_count(h, *hl, "HEIGHT")?,
                None => 1,
            };
            width * height
        }
        (None, None) => return Err(header_err(data_line, "missing POINTS")),
    };

    let mut points = Vec::with_capacity(expected);
    let mut dropped = 0;
    let mut rows = 0;
    let mut last_line = data_line;
    for (idx, line) in lines {
        let lineno = idx + 1;
        last_line = lineno;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        rows += 1;
        if rows > expected {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() != n_cols {
            return Err(PcdError::BadRow {
                line: lineno,
                reason: format!("expected {n_cols} values, found {}", tokens.len()),
            });
        }
        let mut xyz = [0.0; 3];
        for (v, &c) in xyz.iter_mut().zip(&cols) {
            *v = parse_number(tokens[c], lineno)?;
        }
        for t in &tokens {
            parse_number(t, lineno)?;
        }
        if xyz.iter().all(|v| v.is_finite()) {
            points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
        } else {
            dropped += 1;
        }
    }
    if rows != expected {
        return Err(PcdError::CountMismatch {
            line: last_line,
            expected,
            found: rows,
        });
    }
    Ok(ParsedCloud {
        cloud: PointCloud::new(points),
        dropped_non_finite: dropped,
    })
}

fn parse_count(values: &[String], line: usize, key: &str) -> Result<usize, PcdError> {
    match values {
        [v] => v
            .parse()
            .map_err(|_| header_err(line, format!("{key} is not a count: {v:?}"))),
        _ => Err(header_err(line, format!("{key} takes exactly one value"))),
    }
}

fn parse_number(token: &str, line: usize) -> Result<f64, PcdError> {
    token.parse::<f64>().map_err(|_| PcdError::BadRow {
        line,
        reason: format!("non-numeric token {token:?}"),
    })
}

/// Serialize as an ASCII PCD document.
///
/// Coordinates use the shortest decimal form that parses back to the same
/// `f64`, so `parse_pcd(serialize_pcd(c))` reproduces `c` exactly.
pub fn serialize_pcd(cloud: &PointCloud) -> Result<String, PcdError> {
    if cloud.is_empty() {
        return Err(PcdError::EmptyCloud);
    }
    let n = cloud.len();
    let mut out = String::with_capacity(160 + n * 40);
    out.push_str("# .PCD v0.7 - Point Cloud Data file format\n");
    out.push_str("VERSION .7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n");
    let _ = writeln!(out, "WIDTH {n}");
    out.push_str("HEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\n");
    let _ = writeln!(out, "POINTS {n}");
    out.push_str("DATA ascii\n");
    for p in &cloud.points {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    Ok(out)
}

pub fn read_pcd_file(path: &Path) -> Result<ParsedCloud, PcdError> {
    let file = fs::File::open(path)?;
    let mut parsed = parse_pcd(io::BufReader::new(file))?;
    if let Some(stem) = path.file_stem() {
        parsed.cloud.frame_label = stem.to_string_lossy().into_owned();
    }
    Ok(parsed)
}

pub fn write_pcd_file(cloud: &PointCloud, path: &Path) -> Result<(), PcdError> {
    fs::write(path, serialize_pcd(cloud)?)?;
    Ok(())
}

/// Parse plain `x y z` rows (whitespace or comma separated).
///
/// Columns beyond the third are ignored, blank lines and `#` comments are
/// skipped, and a single non-numeric first line is treated as a column header.
pub fn parse_xyz<R: BufRead>(reader: R) -> Result<ParsedCloud, PcdError> {
    let mut points = Vec::new();
    let mut dropped = 0;
    let mut seen_row = false;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.len() < 3 {
            return Err(PcdError::BadRow {
                line: lineno,
                reason: format!("expected at least 3 values, found {}", tokens.len()),
            });
        }
        let parsed: Result<Vec<f64>, _> =
            tokens[..3].iter().map(|t| parse_number(t, lineno)).collect();
        let xyz = match parsed {
            Ok(v) => v,
            Err(_) if !seen_row => {
                seen_row = true;
                continue;
            }
            Err(e) => return Err(e),
        };
        seen_row = true;
        if xyz.iter().all(|v| v.is_finite()) {
            points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
        } else {
            dropped += 1;
        }
    }
    Ok(ParsedCloud {
        cloud: PointCloud::new(points),
        dropped_non_finite: dropped,
    })
}
