//! Observations and the CSV loader.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Name of the column carrying the 1-based sample label.
pub const SAMPLE_COLUMN: &str = "sample";

/// One observation handed to an estimating function.
#[derive(Debug, Clone, Copy)]
pub struct Obs<'a, T> {
    /// Row index in the dataset (0-based).
    pub index: usize,
    pub x: &'a [T],
    pub y: Option<T>,
    /// Sample label `k_i` in `1..=K`.
    pub label: Option<usize>,
}

impl<T: Scalar> Obs<'_, T> {
    /// Response, or zero when the dataset has none.
    #[inline]
    pub fn y_or_zero(&self) -> T {
        self.y.unwrap_or_else(T::zero)
    }
}

/// `n` observations of a feature vector with optional response and sample label.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    columns: Vec<String>,
    response_name: Option<String>,
    arity: usize,
    features: Vec<T>,
    response: Option<Vec<T>>,
    labels: Option<Vec<usize>>,
    label_rows: Vec<Vec<usize>>,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset from feature rows. All rows must have the same arity.
    pub fn from_rows(columns: Vec<String>, rows: Vec<Vec<T>>) -> Result<Self> {
        let arity = rows.first().map(Vec::len).ok_or(Error::EmptyData)?;
        let mut features = Vec::with_capacity(rows.len() * arity);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != arity {
                return Err(Error::InvalidData(format!(
                    "row {i} has {} values, expected {arity}",
                    row.len()
                )));
            }
            features.extend_from_slice(row);
        }
        Self::from_flat(columns, arity, features)
    }

    /// Builds a dataset from a row-major feature buffer.
    pub fn from_flat(columns: Vec<String>, arity: usize, features: Vec<T>) -> Result<Self> {
        if features.is_empty() && arity > 0 {
            return Err(Error::EmptyData);
        }
        if arity == 0 {
            return Err(Error::InvalidData("zero-width rows".into()));
        }
        if features.len() % arity != 0 {
            return Err(Error::InvalidData(format!(
                "buffer of length {} is not a multiple of arity {arity}",
                features.len()
            )));
        }
        let columns = if columns.is_empty() {
            (0..arity).map(|j| format!("x{}", j + 1)).collect()
        } else {
            columns
        };
        if columns.len() != arity {
            return Err(Error::DimensionMismatch {
                expected: arity,
                got: columns.len(),
                context: "column names",
            });
        }
        if let Some(row) = features
            .chunks(arity)
            .position(|r| r.iter().any(|v| !v.is_finite_value()))
        {
            return Err(Error::NonFinite {
                what: "features",
                row,
            });
        }
        Ok(Self {
            columns,
            response_name: None,
            arity,
            features,
            response: None,
            labels: None,
            label_rows: Vec::new(),
        })
    }

    /// Single-column dataset, handy for scalar location models.
    pub fn from_values(values: &[T]) -> Result<Self> {
        Self::from_flat(vec!["x".into()], 1, values.to_vec())
    }

    pub fn with_response(mut self, name: &str, response: Vec<T>) -> Result<Self> {
        if response.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: response.len(),
                context: "response",
            });
        }
        if let Some(row) = response.iter().position(|v| !v.is_finite_value()) {
            return Err(Error::NonFinite {
                what: "response",
                row,
            });
        }
        self.response_name = Some(name.to_string());
        self.response = Some(response);
        Ok(self)
    }

    /// Attaches 1-based sample labels. Every label in `1..=K` must occur.
    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: labels.len(),
                context: "sample labels",
            });
        }
        if labels.contains(&0) {
            return Err(Error::InvalidData("sample labels are 1-based".into()));
        }
        let k = labels.iter().copied().max().unwrap_or(0);
        let mut rows = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            rows[l - 1].push(i);
        }
        if let Some(missing) = rows.iter().position(Vec::is_empty) {
            return Err(Error::EmptySample(missing + 1));
        }
        self.label_rows = rows;
        self.labels = Some(labels);
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.features.len() / self.arity
    }

    #[inline]
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn response_name(&self) -> Option<&str> {
        self.response_name.as_deref()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.arity..(i + 1) * self.arity]
    }

    pub fn response(&self) -> Option<&[T]> {
        self.response.as_deref()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of distinct sample labels `K` (0 without labels).
    pub fn n_labels(&self) -> usize {
        self.label_rows.len()
    }

    /// Rows carrying label `k` (1-based).
    pub fn rows_with_label(&self, k: usize) -> &[usize] {
        k.checked_sub(1)
            .and_then(|j| self.label_rows.get(j))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// `n_k`, the size of sample `k`.
    pub fn label_count(&self, k: usize) -> usize {
        self.rows_with_label(k).len()
    }

    #[inline]
    pub fn obs(&self, i: usize) -> Obs<'_, T> {
        Obs {
            index: i,
            x: self.row(i),
            y: self.response.as_ref().map(|r| r[i]),
            label: self.labels.as_ref().map(|l| l[i]),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Obs<'_, T>> + '_ {
        (0..self.n()).map(move |i| self.obs(i))
    }

    /// Feature column `j` as an owned vector.
    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.n()).map(|i| self.row(i)[j]).collect()
    }

    /// Sub-dataset with the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(rows.len() * self.arity);
        for &i in rows {
            features.extend_from_slice(self.row(i));
        }
        let mut out = Self::from_flat(self.columns.clone(), self.arity, features)?;
        if let (Some(name), Some(resp)) = (&self.response_name, &self.response) {
            out = out.with_response(name, rows.iter().map(|&i| resp[i]).collect())?;
        }
        if let Some(labels) = &self.labels {
            let sel: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
            if let Ok(labelled) = out.clone().with_labels(sel) {
                out = labelled;
            }
        }
        Ok(out)
    }

    /// Converts every value to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        let conv = |v: &T| U::lit(v.as_f64());
        Dataset {
            columns: self.columns.clone(),
            response_name: self.response_name.clone(),
            arity: self.arity,
            features: self.features.iter().map(conv).collect(),
            response: self.response.as_ref().map(|r| r.iter().map(conv).collect()),
            labels: self.labels.clone(),
            label_rows: self.label_rows.clone(),
        }
    }
}

/// Reads a CSV file with a header row.
///
/// The column named `response` (when given) becomes the response; a column
/// named `sample` becomes the 1-based sample label; every other column is a
/// feature, in file order. Values must be finite 64-bit floats.
pub fn load_csv(path: impl AsRef<Path>, response: Option<&str>) -> Result<Dataset<f64>> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_csv(file, response)
}

pub fn read_csv<R: Read>(reader: R, response: Option<&str>) -> Result<Dataset<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Io(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let resp_col = match response {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::InvalidData(format!("no response column `{name}`")))?,
        ),
        None => None,
    };
    let label_col = headers.iter().position(|h| h == SAMPLE_COLUMN);
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&j| Some(j) != resp_col && Some(j) != label_col)
        .collect();

    let mut features = Vec::new();
    let mut resp = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Io(e.to_string()))?;
        if record.len() != headers.len() {
            return Err(Error::InvalidData(format!(
                "row {row} has {} fields, header has {}",
                record.len(),
                headers.len()
            )));
        }
        let parse = |j: usize| -> Result<f64> {
            let field = &record[j];
            let v: f64 = field.parse().map_err(|_| {
                Error::InvalidData(format!("row {row}, column `{}`: `{field}`", headers[j]))
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite { what: "csv value", row })
            }
        };
        for &j in &feature_cols {
            features.push(parse(j)?);
        }
        if let Some(j) = resp_col {
            resp.push(parse(j)?);
        }
        if let Some(j) = label_col {
            let v = parse(j)?;
            if v < 1.0 || v.fract() != 0.0 {
                return Err(Error::InvalidData(format!(
                    "row {row}: sample label `{v}` is not a positive integer"
                )));
            }
            labels.push(v as usize);
        }
    }
    if features.is_empty() && resp.is_empty() {
        return Err(Error::EmptyData);
    }
    let columns: Vec<String> = feature_cols.iter().map(|&j| headers[j].clone()).collect();
    if columns.is_empty() {
        return Err(Error::InvalidData("no feature columns".into()));
    }
    let mut data = Dataset::from_flat(columns, feature_cols.len(), features)?;
    if let Some(name) = response {
        data = data.with_response(name, resp)?;
    }
    if label_col.is_some() {
        data = data.with_labels(labels)?;
    }
    Ok(data)
}
