//! Observational data: covariates, a binary treatment and a real outcome per unit.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1, ArrayView2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset has no rows")]
    Empty,
    #[error("dataset has no covariate columns")]
    NoCovariates,
    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: treatment must be 0 or 1, got {value}")]
    InvalidTreatment { row: usize, value: String },
    #[error("row {row}: non-finite value in {what}")]
    NonFinite { what: String, row: usize },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("index {index} out of range for {n} rows")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("duplicate row index {0}")]
    DuplicateIndex(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

/// An immutable, validated set of `n` observations `(X, D, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariates: Array2<f64>,
    treatments: Vec<u8>,
    outcomes: Vec<f64>,
}

/// Checks every structural invariant of a dataset given as loose parts.
///
/// Arm coverage is not checked here: a dataset where every unit is treated is
/// structurally fine and is rejected later, at training time.
pub fn validate(
    covariates: ArrayView2<f64>,
    treatments: &[u8],
    outcomes: &[f64],
) -> Result<(), DataError> {
    let (n, p) = covariates.dim();
    if n == 0 {
        return Err(DataError::Empty);
    }
    if p == 0 {
        return Err(DataError::NoCovariates);
    }
    if treatments.len() != n {
        return Err(DataError::LengthMismatch {
            what: "treatments",
            expected: n,
            found: treatments.len(),
        });
    }
    if outcomes.len() != n {
        return Err(DataError::LengthMismatch {
            what: "outcomes",
            expected: n,
            found: outcomes.len(),
        });
    }
    for (row, &d) in treatments.iter().enumerate() {
        if d > 1 {
            return Err(DataError::InvalidTreatment {
                row,
                value: d.to_string(),
            });
        }
    }
    for (row, x) in covariates.outer_iter().enumerate() {
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                what: format!("covariate {j}"),
                row,
            });
        }
    }
    if let Some(row) = outcomes.iter().position(|v| !v.is_finite()) {
        return Err(DataError::NonFinite {
            what: "outcome".into(),
            row,
        });
    }
    Ok(())
}

impl Dataset {
    pub fn new(
        covariates: Array2<f64>,
        treatments: Vec<u8>,
        outcomes: Vec<f64>,
    ) -> Result<Self, DataError> {
        validate(covariates.view(), &treatments, &outcomes)?;
        Ok(Self {
            covariates,
            treatments,
            outcomes,
        })
    }

    /// Re-checks the invariants. Always succeeds for a constructed dataset.
    pub fn validate(&self) -> Result<(), DataError> {
        validate(self.covariates.view(), &self.treatments, &self.outcomes)
    }

    pub fn n(&self) -> usize {
        self.treatments.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn covariates(&self) -> ArrayView2<'_, f64> {
        self.covariates.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.covariates.row(i)
    }

    #[inline]
    pub fn x(&self, i: usize, feature: usize) -> f64 {
        self.covariates[[i, feature]]
    }

    pub fn treatments(&self) -> &[u8] {
        &self.treatments
    }

    #[inline]
    pub fn treated(&self, i: usize) -> bool {
        self.treatments[i] == 1
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    #[inline]
    pub fn y(&self, i: usize) -> f64 {
        self.outcomes[i]
    }

    /// `(n_treated, n_control)` over the whole dataset.
    pub fn arm_counts(&self) -> (usize, usize) {
        let treated = self.treatments.iter().filter(|&&d| d == 1).count();
        (treated, self.n() - treated)
    }

    /// Returns a copy with the outcomes replaced.
    pub fn with_outcomes(&self, outcomes: Vec<f64>) -> Result<Self, DataError> {
        Self::new(self.covariates.clone(), self.treatments.clone(), outcomes)
    }
}

/// Ordered, duplicate-free row indices into a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self, DataError> {
        let mut seen = HashSet::with_capacity(indices.len());
        for &i in &indices {
            if i >= n {
                return Err(DataError::IndexOutOfRange { index: i, n });
            }
            if !seen.insert(i) {
                return Err(DataError::DuplicateIndex(i));
            }
        }
        Ok(Self(indices))
    }

    /// All rows `0..n`.
    pub fn all(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

impl AsRef<[usize]> for IndexSet {
    fn as_ref(&self) -> &[usize] {
        &self.0
    }
}

/// Column roles for CSV ingestion, declared by name.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub outcome: String,
    pub treatment: String,
    /// Explicit covariate columns. `None` takes every other column not listed in `ignore`.
    pub covariates: Option<Vec<String>>,
    pub ignore: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            outcome: "y".into(),
            treatment: "d".into(),
            covariates: None,
            ignore: crate::synth::GROUND_TRUTH_COLUMNS
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl CsvSchema {
    /// Positions of the covariate columns, in header order.
    fn covariate_columns(&self, header: &csv::StringRecord) -> Result<Vec<usize>, DataError> {
        match &self.covariates {
            Some(names) => {
                for name in names {
                    if !header.iter().any(|h| h == name) {
                        return Err(DataError::MissingColumn(name.clone()));
                    }
                }
                Ok(header
                    .iter()
                    .enumerate()
                    .filter(|(_, h)| names.iter().any(|n| n == h))
                    .map(|(j, _)| j)
                    .collect())
            }
            None => Ok(header
                .iter()
                .enumerate()
                .filter(|(_, h)| {
                    *h != self.outcome
                        && *h != self.treatment
                        && !self.ignore.iter().any(|ig| ig == h)
                })
                .map(|(j, _)| j)
                .collect()),
        }
    }
}

pub(crate) fn column_index(header: &csv::StringRecord, name: &str) -> Result<usize, DataError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| DataError::MissingColumn(name.to_string()))
}

pub(crate) fn parse_f64(
    record: &csv::StringRecord,
    col: usize,
    header: &csv::StringRecord,
    row: usize,
) -> Result<f64, DataError> {
    let raw = record.get(col).unwrap_or("").trim();
    let err = || DataError::Parse {
        row,
        column: header[col].to_string(),
        value: raw.to_string(),
    };
    let v: f64 = raw.parse().map_err(|_| err())?;
    if !v.is_finite() {
        return Err(DataError::NonFinite {
            what: header[col].to_string(),
            row,
        });
    }
    Ok(v)
}

pub(crate) fn open_csv(path: &Path) -> Result<csv::Reader<File>, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file))
}

pub(crate) fn csv_err(path: &Path) -> impl Fn(csv::Error) -> DataError + '_ {
    move |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a dataset from a headered CSV file. Row numbers in errors are
/// 1-based data rows (the header is not counted).
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let header = reader.headers().map_err(csv_err(path))?.clone();
    let y_col = column_index(&header, &schema.outcome)?;
    let d_col = column_index(&header, &schema.treatment)?;
    let x_cols = schema.covariate_columns(&header)?;
    if x_cols.is_empty() {
        return Err(DataError::NoCovariates);
    }

    let mut xs = Vec::new();
    let mut treatments = Vec::new();
    let mut outcomes = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(csv_err(path))?;
        for &j in &x_cols {
            xs.push(parse_f64(&record, j, &header, row)?);
        }
        let raw_d = record.get(d_col).unwrap_or("").trim();
        let d = match raw_d.parse::<i64>() {
            Ok(0) => 0,
            Ok(1) => 1,
            _ => {
                return Err(DataError::InvalidTreatment {
                    row,
                    value: raw_d.to_string(),
                })
            }
        };
        treatments.push(d);
        outcomes.push(parse_f64(&record, y_col, &header, row)?);
    }
    let n = treatments.len();
    if n == 0 {
        return Err(DataError::Empty);
    }
    let covariates =
        Array2::from_shape_vec((n, x_cols.len()), xs).expect("row-major buffer has n * p entries");
    Dataset::new(covariates, treatments, outcomes)
}

/// Reads only covariate columns. Columns named in `schema.ignore`, and the
/// outcome and treatment columns if present, are skipped.
pub fn load_covariates_csv(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
) -> Result<Array2<f64>, DataError> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let header = reader.headers().map_err(csv_err(path))?.clone();
    let x_cols = schema.covariate_columns(&header)?;
    if x_cols.is_empty() {
        return Err(DataError::NoCovariates);
    }
    let mut xs = Vec::new();
    let mut n = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        for &j in &x_cols {
            xs.push(parse_f64(&record, j, &header, i + 1)?);
        }
        n += 1;
    }
    if n == 0 {
        return Err(DataError::Empty);
    }
    Ok(Array2::from_shape_vec((n, x_cols.len()), xs).expect("n * p entries"))
}

/// Writes `x0..x{p-1},d,y`. Floats use the shortest representation that
/// parses back to the same value.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err(path))?);
    write_rows(&mut out, ds, &[], |_| Vec::new()).map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

pub(crate) fn write_rows<W: Write>(
    out: &mut W,
    ds: &Dataset,
    extra_columns: &[&str],
    extra: impl Fn(usize) -> Vec<f64>,
) -> std::io::Result<()> {
    let mut header: Vec<String> = (0..ds.p()).map(|j| format!("x{j}")).collect();
    header.push("d".into());
    header.push("y".into());
    header.extend(extra_columns.iter().map(|s| s.to_string()));
    writeln!(out, "{}", header.join(","))?;
    for i in 0..ds.n() {
        let mut fields: Vec<String> = ds.row(i).iter().map(|v| v.to_string()).collect();
        fields.push(ds.treatments[i].to_string());
        fields.push(ds.outcomes[i].to_string());
        fields.extend(extra(i).iter().map(|v| v.to_string()));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
