//! Text formats: point files (one point per line, comma- or
//! whitespace-separated reals, `#` comments) and integer vectors (one value
//! per line, `#` comments).

use std::fmt;
use std::path::Path;

use emdcp::PointSet;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub path: String,
    /// 1-based; 0 when the error concerns the whole file.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}: {}", self.path, self.message)
        } else {
            write!(f, "{}:{}: {}", self.path, self.line, self.message)
        }
    }
}

impl std::error::Error for ParseError {}

fn read(path: &Path) -> Result<String, ParseError> {
    std::fs::read_to_string(path).map_err(|e| ParseError { path: path.display().to_string(), line: 0, message: e.to_string() })
}

/// Non-comment, non-blank lines with their 1-based numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(k, l)| (k + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn parse_points(text: &str, path: &str) -> Result<PointSet, ParseError> {
    let err = |line: usize, message: String| ParseError { path: path.to_string(), line, message };
    let mut dim = None;
    let mut coords = Vec::new();
    for (line, l) in data_lines(text) {
        let fields: Vec<&str> = l.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        for f in &fields {
            let v: f64 = f.parse().map_err(|_| err(line, format!("'{f}' is not a number")))?;
            if !v.is_finite() {
                return Err(err(line, format!("non-finite coordinate '{f}'")));
            }
            coords.push(v);
        }
        match dim {
            None => dim = Some(fields.len()),
            Some(d) if d != fields.len() => {
                return Err(err(line, format!("ragged row: {} coordinates, expected {d}", fields.len())));
            }
            Some(_) => {}
        }
    }
    let dim = dim.ok_or_else(|| err(0, "no points".to_string()))?;
    PointSet::new(dim, coords).map_err(|e| err(0, e.to_string()))
}

pub fn parse_ints(text: &str, path: &str) -> Result<Vec<i64>, ParseError> {
    data_lines(text)
        .map(|(line, l)| {
            l.parse::<i64>().map_err(|_| ParseError { path: path.to_string(), line, message: format!("'{l}' is not an integer") })
        })
        .collect::<Result<Vec<_>, _>>()
        .and_then(
            |v| {
                if v.is_empty() {
                    Err(ParseError { path: path.to_string(), line: 0, message: "no values".to_string() })
                } else {
                    Ok(v)
                }
            },
        )
}

pub fn load_points(path: &Path) -> Result<PointSet, ParseError> {
    parse_points(&read(path)?, &path.display().to_string())
}

pub fn load_ints(path: &Path) -> Result<Vec<i64>, ParseError> {
    parse_ints(&read(path)?, &path.display().to_string())
}
