use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use dhlcm::{ModelFamily, ObservationMatrix};
use nalgebra::DMatrix;

use crate::error::CliError;

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Splits a dense table into string fields. Files whose first data line
/// contains a comma are parsed as CSV, anything else as whitespace-delimited.
fn read_records(path: &Path) -> Result<Vec<(usize, Vec<String>)>, CliError> {
    let text = read_text(path)?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let mut out = Vec::new();
    if first.contains(',') {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        for rec in reader.records() {
            let rec = rec.map_err(|e| CliError::parse(path, e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.iter().all(str::is_empty) {
                continue;
            }
            out.push((line, rec.iter().map(str::to_owned).collect()));
        }
    } else {
        for (i, line) in text.lines().enumerate() {
            let fields: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
            if !fields.is_empty() {
                out.push((i + 1, fields));
            }
        }
    }
    Ok(out)
}

/// Parses every record with `parse`, skipping a leading header row when its
/// first field does not parse.
fn parse_table<T>(path: &Path, parse: impl Fn(&str) -> Option<T>, what: &str) -> Result<Vec<Vec<T>>, CliError> {
    let records = read_records(path)?;
    let mut rows = Vec::with_capacity(records.len());
    for (idx, (line, fields)) in records.into_iter().enumerate() {
        if idx == 0 && fields.first().is_some_and(|f| parse(f).is_none()) {
            continue;
        }
        let row = fields
            .iter()
            .enumerate()
            .map(|(c, f)| {
                parse(f).ok_or_else(|| CliError::parse(path, line, format!("column {}: '{f}' is not {what}", c + 1)))
            })
            .collect::<Result<Vec<T>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::parse(path, 0, "no data rows".into()));
    }
    Ok(rows)
}

pub fn read_observations(path: &Path, family: ModelFamily) -> Result<ObservationMatrix, CliError> {
    let rows = parse_table(path, |s| s.parse::<u32>().ok(), "a nonnegative integer")?;
    ObservationMatrix::from_rows(&rows, family).map_err(|e| CliError::data(path, e))
}

pub fn read_real_matrix(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let rows = parse_table(path, |s| s.parse::<f64>().ok().filter(|v| v.is_finite()), "a finite number")?;
    let cols = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(CliError::parse(path, i + 1, format!("expected {cols} columns, found {}", rows[i].len())));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Reads 1-based labels, one per line, and returns them 0-based.
pub fn read_labels(path: &Path) -> Result<Vec<usize>, CliError> {
    let text = read_text(path)?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        match t.parse::<usize>() {
            Ok(l) if l >= 1 => labels.push(l - 1),
            _ => return Err(CliError::parse(path, i + 1, format!("'{t}' is not a label >= 1"))),
        }
    }
    Ok(labels)
}

pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| CliError::io(path, e))
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<(), CliError> {
    let body: String = labels.iter().map(|l| format!("{}\n", l + 1)).collect();
    write_file(path, &body)
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<(), CliError> {
    let mut body = String::new();
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|&v| fmt_float(v)).collect();
        body.push_str(&fields.join(","));
        body.push('\n');
    }
    write_file(path, &body)
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<(), CliError> {
    let body: String = v.iter().map(|&x| fmt_float(x) + "\n").collect();
    write_file(path, &body)
}

pub fn write_text(path: &Path, body: &str) -> Result<(), CliError> {
    write_file(path, body)
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
