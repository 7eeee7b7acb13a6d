use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;

/// Numeric regression data: `N x p` features and `N x D` targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub features: Matrix,
    pub targets: Matrix,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        feature_names: Vec<String>,
        target_names: Vec<String>,
        features: Matrix,
        targets: Matrix,
    ) -> Result<Self> {
        check_dim("dataset rows", features.rows(), targets.rows())?;
        check_dim("feature names", features.cols(), feature_names.len())?;
        check_dim("target names", targets.cols(), target_names.len())?;
        if !features.is_finite() || !targets.is_finite() {
            return Err(Error::InvalidConfig("dataset contains non-finite values".into()));
        }
        Ok(Self {
            name: name.into(),
            feature_names,
            target_names,
            features,
            targets,
        })
    }

    /// Unnamed dataset with generated column names `x0.. / y0..`.
    pub fn from_matrices(name: impl Into<String>, features: Matrix, targets: Matrix) -> Result<Self> {
        let f = (0..features.cols()).map(|i| format!("x{i}")).collect();
        let t = (0..targets.cols()).map(|i| format!("y{i}")).collect();
        Self::new(name, f, t, features, targets)
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.cols()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
            features: self.features.select_rows(rows),
            targets: self.targets.select_rows(rows),
        }
    }

    /// Seeded random subsample keeping `⌈fraction · N⌉` rows.
    pub fn subsample(&self, fraction: f64, seed: u64) -> Self {
        let n = ((fraction * self.len() as f64) - 1e-9).ceil().max(1.0) as usize;
        let mut rows = super::split::seeded_permutation(self.len(), seed);
        rows.truncate(n.min(self.len()));
        self.subset(&rows)
    }
}

/// Reads a comma-separated file with a header row. `target_columns` become the targets;
/// every other column becomes a feature, in file order.
pub fn load_csv(path: impl AsRef<Path>, target_columns: &[&str]) -> Result<Dataset> {
    load_csv_excluding(path, target_columns, &[])
}

/// Like [`load_csv`], additionally dropping the columns named in `exclude`.
pub fn load_csv_excluding(path: impl AsRef<Path>, target_columns: &[&str], exclude: &[&str]) -> Result<Dataset> {
    let path = path.as_ref();
    let data_err = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();

    if target_columns.is_empty() {
        return Err(data_err("no target column given".into()));
    }
    let mut target_idx = Vec::with_capacity(target_columns.len());
    for t in target_columns {
        let i = header
            .iter()
            .position(|h| h == t)
            .ok_or_else(|| data_err(format!("target column {t:?} not in header {header:?}")))?;
        target_idx.push(i);
    }
    for e in exclude {
        if !header.iter().any(|h| h == e) {
            return Err(data_err(format!("excluded column {e:?} not in header")));
        }
    }
    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|i| !target_idx.contains(i) && !exclude.contains(&header[*i].as_str()))
        .collect();

    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = r + 1;
        if record.len() != header.len() {
            return Err(data_err(format!(
                "row {row_no} has {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        let mut values = Vec::with_capacity(header.len());
        for (c, cell) in record.iter().enumerate() {
            let parse_err = |message: &str| Error::Parse {
                path: path.to_path_buf(),
                row: row_no,
                column: header[c].clone(),
                message: message.to_owned(),
            };
            if cell.is_empty() || cell == "?" || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                return Err(parse_err("missing value"));
            }
            let v: f64 = cell.parse().map_err(|_| parse_err(&format!("not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_err("non-finite value"));
            }
            values.push(v);
        }
        features.extend(feature_idx.iter().map(|&i| values[i]));
        targets.extend(target_idx.iter().map(|&i| values[i]));
        rows += 1;
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(
        name,
        feature_idx.iter().map(|&i| header[i].clone()).collect(),
        target_idx.iter().map(|&i| header[i].clone()).collect(),
        Matrix::from_vec(rows, feature_idx.len(), features)?,
        Matrix::from_vec(rows, target_idx.len(), targets)?,
    )
}
