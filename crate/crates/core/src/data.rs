//! Design matrices, CSV ingestion and standardization bookkeeping.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column centering and scaling. Identity for the intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub center: f64,
    pub scale: f64,
}

impl ColumnScale {
    pub const IDENTITY: ColumnScale = ColumnScale {
        center: 0.0,
        scale: 1.0,
    };
}

/// Response plus a design matrix whose first column is the intercept.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: DVector<f64>,
    /// n x (p+1), column 0 all ones.
    pub x: DMatrix<f64>,
    pub col_names: Vec<String>,
    pub standardization: Vec<ColumnScale>,
}

impl Dataset {
    /// Build from a response and covariates without the intercept column.
    pub fn new(y: Vec<f64>, covariates: &DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let n = covariates.nrows();
        let p = covariates.ncols();
        if y.len() != n {
            return Err(Error::Data(format!(
                "response has {} rows but covariates have {n}",
                y.len()
            )));
        }
        if names.len() != p {
            return Err(Error::Data(format!("{} names for {p} covariates", names.len())));
        }
        let mut x = DMatrix::from_element(n, p + 1, 1.0);
        x.view_mut((0, 1), (n, p)).copy_from(covariates);
        let mut col_names = Vec::with_capacity(p + 1);
        col_names.push("(Intercept)".to_string());
        col_names.extend(names);
        Self::from_design(DVector::from_vec(y), x, col_names)
    }

    /// Build from a design that already carries the intercept column.
    pub fn from_design(y: DVector<f64>, x: DMatrix<f64>, col_names: Vec<String>) -> Result<Self> {
        let d = Dataset {
            standardization: vec![ColumnScale::IDENTITY; x.ncols()],
            y,
            x,
            col_names,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = self.x.shape();
        if n < 2 {
            return Err(Error::Data(format!("need at least 2 rows, got {n}")));
        }
        if k < 2 {
            return Err(Error::Data("need at least one covariate".into()));
        }
        if self.y.len() != n {
            return Err(Error::Data("response and design lengths differ".into()));
        }
        if self.col_names.len() != k {
            return Err(Error::Data("column name count does not match design".into()));
        }
        if let Some(i) = self.y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("response row {i} is not finite")));
        }
        if self.x.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::Data("first design column must be the intercept".into()));
        }
        for j in 1..k {
            let col = self.x.column(j);
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "column '{}' row {i} is not finite",
                    self.col_names[j]
                )));
            }
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                return Err(Error::DegenerateColumn {
                    column: j,
                    reason: format!("column '{}' is constant", self.col_names[j]),
                });
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Number of covariates, excluding the intercept.
    pub fn p(&self) -> usize {
        self.x.ncols() - 1
    }

    pub fn is_standardized(&self) -> bool {
        self.standardization
            .iter()
            .skip(1)
            .any(|s| *s != ColumnScale::IDENTITY)
    }

    /// Subset of rows, keeping columns and standardization record.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            y: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i])),
            x: self.x.select_rows(rows),
            col_names: self.col_names.clone(),
            standardization: self.standardization.clone(),
        }
    }
}

/// Map from coefficients on the standardized scale back to the original one.
///
/// With `x_std = (x - c) / s`, a coefficient vector `xi_std` corresponds to
/// `beta_j = beta_std_j / s_j` and `beta_0 = beta_std_0 - sum_j beta_std_j c_j / s_j`.
/// The map is linear, `xi = T xi_std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefMap {
    pub scales: Vec<ColumnScale>,
}

impl CoefMap {
    pub fn identity(dim: usize) -> Self {
        CoefMap {
            scales: vec![ColumnScale::IDENTITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    pub fn to_original(&self, xi_std: &DVector<f64>) -> DVector<f64> {
        let mut out = xi_std.clone();
        let mut shift = 0.0;
        for j in 1..self.dim() {
            let s = self.scales[j];
            out[j] = xi_std[j] / s.scale;
            shift += out[j] * s.center;
        }
        out[0] = xi_std[0] - shift;
        out
    }

    pub fn to_standardized(&self, xi: &DVector<f64>) -> DVector<f64> {
        let mut out = xi.clone();
        let mut shift = 0.0;
        for j in 1..self.dim() {
            let s = self.scales[j];
            out[j] = xi[j] * s.scale;
            shift += xi[j] * s.center;
        }
        out[0] = xi[0] + shift;
        out
    }

    /// The matrix `T` with `xi = T xi_std`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let k = self.dim();
        let mut t = DMatrix::identity(k, k);
        for j in 1..k {
            let s = self.scales[j];
            t[(j, j)] = 1.0 / s.scale;
            t[(0, j)] = -s.center / s.scale;
        }
        t
    }

    /// Transform a covariance of standardized coefficients, `T V T'`.
    pub fn covariance_to_original(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let t = self.matrix();
        &t * v * t.transpose()
    }

    /// A contrast `alpha` on the original scale acts on standardized
    /// coefficients as `T' alpha`.
    pub fn contrast_to_standardized(&self, alpha: &DVector<f64>) -> DVector<f64> {
        self.matrix().transpose() * alpha
    }
}

/// Center non-intercept columns to mean zero and scale to unit population SD.
pub fn standardize(d: &Dataset) -> Result<(Dataset, CoefMap)> {
    let n = d.n() as f64;
    let mut out = d.clone();
    let mut scales = vec![ColumnScale::IDENTITY; d.x.ncols()];
    for j in 1..d.x.ncols() {
        let mut col = out.x.column_mut(j);
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        if !(sd > 1e-12 * (1.0 + mean.abs())) {
            return Err(Error::DegenerateColumn {
                column: j,
                reason: format!("column '{}' has zero variance", d.col_names[j]),
            });
        }
        col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
        // compose with any earlier standardization
        let prev = d.standardization[j];
        scales[j] = ColumnScale {
            center: prev.center + prev.scale * mean,
            scale: prev.scale * sd,
        };
    }
    out.standardization = scales.clone();
    Ok((out, CoefMap { scales }))
}

/// Options for [`load_csv`].
#[derive(Debug, Clone, Default)]
pub struct CsvOptions<'a> {
    pub response: &'a str,
    pub drop: &'a [String],
}

enum ColumnKind {
    Numeric(Vec<f64>),
    /// level index per row, levels in first-observed order
    Factor(Vec<usize>, Vec<String>),
}

/// Load a CSV file with a header row.
///
/// Non-numeric covariate columns are dummy coded against their first-observed
/// level. Empty cells and `NA` are rejected.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions<'_>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, opts)
}

pub fn read_csv<R: std::io::Read>(reader: R, opts: &CsvOptions<'_>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let resp_idx = headers
        .iter()
        .position(|h| h == opts.response)
        .ok_or_else(|| Error::Data(format!("response column '{}' not found", opts.response)))?;
    for d in opts.drop {
        if !headers.contains(d) {
            return Err(Error::Data(format!("drop column '{d}' not found")));
        }
    }

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::Data(format!(
                "row {} has {} fields, expected {}",
                row + 1,
                rec.len(),
                headers.len()
            )));
        }
        for (j, field) in rec.iter().enumerate() {
            let f = field.trim();
            if f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan") {
                return Err(Error::Data(format!(
                    "missing value at row {}, column '{}'",
                    row + 1,
                    headers[j]
                )));
            }
            raw[j].push(f.to_string());
        }
    }

    let n = raw[resp_idx].len();
    let y = parse_numeric(&raw[resp_idx]).ok_or_else(|| {
        Error::Data(format!("response column '{}' is not numeric", opts.response))
    })?;

    let mut names = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for (j, h) in headers.iter().enumerate() {
        if j == resp_idx || opts.drop.contains(h) {
            continue;
        }
        match classify(&raw[j]) {
            ColumnKind::Numeric(v) => {
                names.push(h.clone());
                cols.push(v);
            }
            ColumnKind::Factor(idx, levels) => {
                for (l, level) in levels.iter().enumerate().skip(1) {
                    names.push(format!("{h}={level}"));
                    cols.push(idx.iter().map(|&k| if k == l { 1.0 } else { 0.0 }).collect());
                }
            }
        }
    }
    let p = cols.len();
    let x = DMatrix::from_fn(n, p, |i, j| cols[j][i]);
    Dataset::new(y, &x, names)
}

fn parse_numeric(col: &[String]) -> Option<Vec<f64>> {
    col.iter().map(|s| s.parse::<f64>().ok()).collect()
}

fn classify(col: &[String]) -> ColumnKind {
    if let Some(v) = parse_numeric(col) {
        return ColumnKind::Numeric(v);
    }
    let mut levels: Vec<String> = Vec::new();
    let mut lookup: HashMap<&str, usize> = HashMap::new();
    let idx = col
        .iter()
        .map(|s| {
            *lookup.entry(s.as_str()).or_insert_with(|| {
                levels.push(s.clone());
                levels.len() - 1
            })
        })
        .collect();
    ColumnKind::Factor(idx, levels)
}
