use std::fmt;
use std::path::Path;
use std::str::FromStr;

use exact_coreset::{MomentModel, RegressionProblem};
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, Result};

/// A rectangular numeric CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub data: DMatrix<f64>,
}

/// Which column holds the regression target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Last,
    Index(usize),
    Name(String),
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim() {
            "last" => LabelColumn::Last,
            t => match t.parse() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(t.to_string()),
            },
        })
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Last => f.write_str("last"),
            LabelColumn::Index(i) => write!(f, "{i}"),
            LabelColumn::Name(n) => f.write_str(n),
        }
    }
}

fn parse_cell(s: &str) -> Option<f64> {
    s.parse::<f64>().ok()
}

/// Reads a comma-separated numeric file. The first row is taken as a header
/// when any of its cells is not a number.
pub fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let mut header = None;
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        if i == 0 && record.iter().any(|c| parse_cell(c).is_none()) {
            header = Some(record.iter().map(str::to_string).collect::<Vec<_>>());
            width = Some(record.len());
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(CliError::input(format!(
                "{}: row {line} has {} fields, expected {expected}",
                path.display(),
                record.len()
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            match parse_cell(cell) {
                Some(v) if v.is_finite() => values.push(v),
                Some(_) => {
                    return Err(CliError::input(format!(
                        "{}: row {line}, column {}: non-finite value {cell:?}",
                        path.display(),
                        c + 1
                    )))
                }
                None => {
                    return Err(CliError::input(format!(
                        "{}: row {line}, column {}: cannot parse {cell:?} as a number",
                        path.display(),
                        c + 1
                    )))
                }
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::input(format!("{}: no data rows", path.display())));
    }
    let cols = width.unwrap_or(0);
    if cols == 0 {
        return Err(CliError::input(format!("{}: no columns", path.display())));
    }
    Ok(Table {
        header,
        data: DMatrix::from_row_slice(rows, cols, &values),
    })
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if !e.is_io_error() {
        return CliError::input(format!("{}: {e}", path.display()));
    }
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        _ => unreachable!("checked is_io_error"),
    }
}

impl Table {
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn label_index(&self, label: &LabelColumn) -> Result<usize> {
        let cols = self.ncols();
        let idx = match label {
            LabelColumn::Last => cols - 1,
            LabelColumn::Index(i) => *i,
            LabelColumn::Name(name) => self
                .header
                .as_ref()
                .and_then(|h| h.iter().position(|c| c == name))
                .ok_or_else(|| CliError::input(format!("no column named {name:?}")))?,
        };
        if idx >= cols {
            return Err(CliError::input(format!(
                "label column {idx} out of range for {cols} columns"
            )));
        }
        if cols < 2 {
            return Err(CliError::input(
                "regression needs at least one feature column",
            ));
        }
        Ok(idx)
    }

    /// Splits the table into features and the label column.
    pub fn split_label(&self, label: usize) -> (DMatrix<f64>, DVector<f64>) {
        let x = self.data.clone().remove_column(label);
        let y = self.data.column(label).into_owned();
        (x, y)
    }
}

/// Loads a regression problem; returns it with the resolved label column.
pub fn load_regression(
    path: &Path,
    label: &LabelColumn,
    lambda: f64,
    p: usize,
) -> Result<(RegressionProblem, usize)> {
    let table = read_table(path)?;
    let idx = table.label_index(label)?;
    let (x, y) = table.split_label(idx);
    Ok((RegressionProblem::new(x, y, lambda, p)?, idx))
}

pub fn load_moments(path: &Path, k: usize) -> Result<MomentModel> {
    let table = read_table(path)?;
    Ok(MomentModel::new(table.data, k)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn numeric_label_last() {
        let f = file("1,2,3\n4,5,6\n7,8,9\n");
        let (prob, idx) = load_regression(f.path(), &LabelColumn::Last, 0.0, 2).unwrap();
        assert_eq!(idx, 2);
        assert_eq!(prob.x.shape(), (3, 2));
        assert_eq!(prob.y.as_slice(), &[3.0, 6.0, 9.0]);
    }

    #[test]
    fn header_is_skipped() {
        let f = file("a,b,y\n1,2,3\n4,5,6\n");
        let t = read_table(f.path()).unwrap();
        assert_eq!(
            t.header.as_deref(),
            Some(&["a".to_string(), "b".into(), "y".into()][..])
        );
        assert_eq!(t.data.shape(), (2, 3));
        let idx = t.label_index(&"a".parse().unwrap()).unwrap();
        assert_eq!(idx, 0);
        let (x, y) = t.split_label(idx);
        assert_eq!(x.row(1).iter().copied().collect::<Vec<_>>(), vec![5.0, 6.0]);
        assert_eq!(y.as_slice(), &[1.0, 4.0]);
    }

    #[test]
    fn ragged_row_is_named() {
        let f = file("1,2,3\n4,5\n7,8,9\n");
        let err = read_table(f.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn bad_cell_is_located() {
        let f = file("x,y\n1,2\n3,oops\n");
        let err = read_table(f.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3") && msg.contains("column 2"), "{msg}");
        let f = file("1,2\nnan,3\n");
        assert!(read_table(f.path())
            .unwrap_err()
            .to_string()
            .contains("non-finite"));
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(read_table(file("").path()).unwrap_err().exit_code(), 2);
        assert!(read_table(file("a,b\n").path())
            .unwrap_err()
            .to_string()
            .contains("no data"));
        let missing = read_table(Path::new("/nonexistent/data.csv")).unwrap_err();
        assert_eq!(missing.exit_code(), 2);
    }

    #[test]
    fn label_out_of_range() {
        let f = file("1,2\n3,4\n");
        let t = read_table(f.path()).unwrap();
        assert!(t.label_index(&LabelColumn::Index(5)).is_err());
        assert!(t.label_index(&"y".parse().unwrap()).is_err());
    }
}
