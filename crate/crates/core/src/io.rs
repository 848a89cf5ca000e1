//! Plain-text input and output: observation tables, summary-statistics files
//! and labelled matrices.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::SampleStats;

/// Observations in rows, variables in columns.
#[derive(Clone, Debug, PartialEq)]
pub struct DataTable {
    pub labels: Vec<String>,
    pub values: DMatrix<f64>,
}

impl DataTable {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }
}

/// Delimiter and header handling for [`load_data`].
#[derive(Clone, Copy, Debug)]
pub struct DataOptions {
    pub delimiter: u8,
    pub header: bool,
}

impl Default for DataOptions {
    fn default() -> Self {
        Self { delimiter: b',', header: true }
    }
}

pub fn load_data(path: impl AsRef<Path>, opts: DataOptions) -> Result<DataTable> {
    parse_data(&fs::read_to_string(path)?, opts)
}

/// Parses a delimited table. Lines starting with `#` are skipped; without a
/// header the columns are labelled `X1..Xp`.
pub fn parse_data(text: &str, opts: DataOptions) -> Result<DataTable> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut labels: Option<Vec<String>> = None;
    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            column: None,
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if labels.is_none() && opts.header {
            labels = Some(record.iter().map(str::to_string).collect());
            continue;
        }
        let width = labels.get_or_insert_with(|| (1..=record.len()).map(|i| format!("X{i}")).collect()).len();
        if record.len() != width {
            return Err(Error::Parse {
                line,
                column: None,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                column: Some(c + 1),
                message: format!("non-numeric value {cell:?}"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let labels = labels.ok_or_else(|| Error::Parse { line: 1, column: None, message: "empty file".into() })?;
    if rows == 0 {
        return Err(Error::Parse { line: 1, column: None, message: "no data rows".into() });
    }
    Ok(DataTable { values: DMatrix::from_row_slice(rows, labels.len(), &values), labels })
}

/// Labelled summary statistics read from a stats file.
#[derive(Clone, Debug)]
pub struct StatsFile {
    pub labels: Vec<String>,
    pub stats: SampleStats,
}

pub fn load_stats(path: impl AsRef<Path>) -> Result<StatsFile> {
    parse_stats(&fs::read_to_string(path)?)
}

/// Parses a stats file:
///
/// ```text
/// n 134
/// labels A B C
/// sd 0.39 0.36 0.47
/// corr
/// 0.12
/// -0.05 0.30
/// ```
///
/// The rows after `corr` hold the strict lower triangle of the correlation
/// matrix. `#` starts a comment.
pub fn parse_stats(text: &str) -> Result<StatsFile> {
    let mut n: Option<usize> = None;
    let mut labels: Option<Vec<String>> = None;
    let mut sd: Option<Vec<f64>> = None;
    let mut corr_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut in_corr = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut parts = content.split_whitespace();
        let head = parts.next().unwrap_or_default();
        if in_corr && head != "n" && head != "labels" && head != "sd" {
            corr_rows.push((line, parse_numbers(line, content.split_whitespace(), 0)?));
            continue;
        }
        match head {
            "n" => {
                let v = parts.next().ok_or_else(|| stats_err(line, "missing value for n"))?;
                n = Some(v.parse().map_err(|_| stats_err(line, &format!("invalid sample size {v:?}")))?);
            }
            "labels" => labels = Some(parts.map(str::to_string).collect()),
            "sd" => sd = Some(parse_numbers(line, parts, 1)?),
            "corr" => in_corr = true,
            other => return Err(stats_err(line, &format!("unknown key {other:?}"))),
        }
    }

    let n = n.ok_or_else(|| stats_err(0, "missing `n`"))?;
    let sd = sd.ok_or_else(|| stats_err(0, "missing `sd`"))?;
    let p = sd.len();
    let labels = labels.unwrap_or_else(|| (1..=p).map(|i| format!("X{i}")).collect());
    if labels.len() != p {
        return Err(stats_err(0, &format!("{} labels for {p} standard deviations", labels.len())));
    }
    if let Some(bad) = sd.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(stats_err(0, &format!("standard deviation {} is not positive", bad + 1)));
    }
    if corr_rows.len() != p.saturating_sub(1) {
        return Err(stats_err(
            0,
            &format!("expected {} correlation rows, found {}", p.saturating_sub(1), corr_rows.len()),
        ));
    }
    let mut cov = DMatrix::from_diagonal(&DVector::from_iterator(p, sd.iter().map(|s| s * s)));
    for (r, (line, row)) in corr_rows.iter().enumerate() {
        let i = r + 1;
        if row.len() != i {
            return Err(stats_err(*line, &format!("correlation row {} needs {i} entries, found {}", i + 1, row.len())));
        }
        for (j, &rho) in row.iter().enumerate() {
            if rho.abs() > 1.0 {
                return Err(Error::Parse {
                    line: *line,
                    column: Some(j + 1),
                    message: format!("correlation {rho} exceeds 1 in magnitude"),
                });
            }
            let v = rho * sd[i] * sd[j];
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    if !linalg::is_positive_definite(&cov) {
        return Err(Error::NotPositiveDefinite("covariance reconstructed from the stats file"));
    }
    Ok(StatsFile { labels, stats: SampleStats::from_covariance(n, cov)? })
}

fn parse_numbers<'a>(line: usize, items: impl Iterator<Item = &'a str>, offset: usize) -> Result<Vec<f64>> {
    items
        .enumerate()
        .map(|(c, s)| {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line,
                column: Some(c + 1 + offset),
                message: format!("non-numeric value {s:?}"),
            })
        })
        .collect()
}

fn stats_err(line: usize, message: &str) -> Error {
    Error::Parse { line, column: None, message: message.to_string() }
}

/// Formats a labelled matrix as comma-separated text.
///
/// With `digits = None` values carry 17 significant digits, enough to read
/// back the identical `f64`; otherwise they are rounded to `digits` decimals.
pub fn format_matrix(labels: &[String], m: &DMatrix<f64>, digits: Option<usize>) -> String {
    let fmt = |v: f64| match digits {
        None => format!("{v:.16e}"),
        Some(d) => format!("{v:.d$}"),
    };
    let mut out = String::new();
    let _ = writeln!(out, ",{}", labels.join(","));
    for (i, label) in labels.iter().enumerate() {
        let cells: Vec<String> = m.row(i).iter().map(|&v| fmt(v)).collect();
        let _ = writeln!(out, "{label},{}", cells.join(","));
    }
    out
}

pub fn write_matrix(path: impl AsRef<Path>, labels: &[String], m: &DMatrix<f64>, digits: Option<usize>) -> Result<()> {
    fs::write(path, format_matrix(labels, m, digits))?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<(Vec<String>, DMatrix<f64>)> {
    parse_matrix(&fs::read_to_string(path)?)
}

/// Inverse of [`format_matrix`]; lines starting with `#` are ignored.
pub fn parse_matrix(text: &str) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut lines =
        text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (_, header) = lines.next().ok_or_else(|| stats_err(1, "empty matrix file"))?;
    let labels: Vec<String> = header.split(',').skip(1).map(|s| s.trim().to_string()).collect();
    let p = labels.len();
    let mut values = Vec::with_capacity(p * p);
    let mut rows = 0;
    for (line, content) in lines {
        let mut cells = content.split(',');
        let name = cells.next().unwrap_or_default().trim();
        if rows >= p || name != labels[rows] {
            return Err(stats_err(line, &format!("unexpected row label {name:?}")));
        }
        let row = parse_numbers(line, cells.map(str::trim), 1)?;
        if row.len() != p {
            return Err(stats_err(line, &format!("expected {p} values, found {}", row.len())));
        }
        values.extend(row);
        rows += 1;
    }
    if rows != p {
        return Err(stats_err(0, &format!("expected {p} rows, found {rows}")));
    }
    Ok((labels, DMatrix::from_row_slice(p, p, &values)))
}
