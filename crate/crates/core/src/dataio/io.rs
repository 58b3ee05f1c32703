use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::{AvailabilityMask, MultiViewDataset};
use crate::error::{Error, Result};

fn view_path(dir: &Path, v: usize) -> std::path::PathBuf {
    dir.join(format!("view_{v}.csv"))
}

/// Reads a headerless numeric CSV. `view` only labels error messages.
pub fn read_matrix_csv(path: &Path, view: usize) -> Result<Array2<f64>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Malformed {
                    what: "view csv",
                    line: row + 1,
                    message: format!("expected {w} columns, found {}", record.len()),
                })
            }
            _ => {}
        }
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                view,
                row,
                col,
                cell: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("view {view}, row {row}, col {col}")));
            }
            data.push(value);
        }
        rows += 1;
    }
    let width = width.unwrap_or(0);
    Array2::from_shape_vec((rows, width), data).map_err(|e| Error::Malformed {
        what: "view csv",
        line: 0,
        message: e.to_string(),
    })
}

/// Writes rows with the shortest representation that parses back to the
/// same bits.
pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut out = String::with_capacity(m.len() * 12);
    for row in m.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<usize>().map_err(|_| Error::Malformed {
                what: "labels.csv",
                line: i + 1,
                message: format!("expected a non-negative integer, found {:?}", l.trim()),
            })
        })
        .collect()
}

/// Loads `view_0.csv`, `view_1.csv`, ... and `labels.csv` if present.
pub fn load_dataset(dir: &Path) -> Result<MultiViewDataset> {
    if !view_path(dir, 0).exists() {
        return Err(Error::MissingFile(view_path(dir, 0)));
    }
    let mut views = Vec::new();
    while view_path(dir, views.len()).exists() {
        let v = views.len();
        views.push(read_matrix_csv(&view_path(dir, v), v)?);
    }
    let labels_path = dir.join("labels.csv");
    let labels = if labels_path.exists() {
        Some(read_labels(&labels_path)?)
    } else {
        None
    };
    MultiViewDataset::new(views, labels)
}

pub fn save_dataset(ds: &MultiViewDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (v, x) in ds.views().iter().enumerate() {
        write_matrix_csv(&view_path(dir, v), x)?;
    }
    if let Some(labels) = ds.labels() {
        let mut f = fs::File::create(dir.join("labels.csv"))?;
        for l in labels {
            writeln!(f, "{l}")?;
        }
    }
    Ok(())
}

pub fn load_mask(path: &Path) -> Result<AvailabilityMask> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let mut flags = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<bool> = line
            .split(',')
            .map(|c| match c.trim() {
                "1" => Ok(true),
                "0" => Ok(false),
                other => Err(Error::Malformed {
                    what: "mask.csv",
                    line: i + 1,
                    message: format!("expected 0 or 1, found {other:?}"),
                }),
            })
            .collect::<Result<_>>()?;
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(Error::Malformed {
                what: "mask.csv",
                line: i + 1,
                message: "ragged row".into(),
            });
        }
        flags.extend(row);
        rows += 1;
    }
    let entries = Array2::from_shape_vec((rows, width.unwrap_or(0)), flags).map_err(|e| Error::Malformed {
        what: "mask.csv",
        line: 0,
        message: e.to_string(),
    })?;
    AvailabilityMask::new(entries)
}

pub fn save_mask(mask: &AvailabilityMask, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(mask.n() * mask.n_views() * 2);
    for row in mask.entries().rows() {
        let cells: Vec<&str> = row.iter().map(|&a| if a { "1" } else { "0" }).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
