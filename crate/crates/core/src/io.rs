//! Dataset ingestion.
//!
//! CSV: a header row is required, the last column is `y`, every earlier
//! column is one input coordinate (`x_1, ..., x_d`).
//!
//! JSON: `{"x": [[x_11, ...], ...], "y": [y_1, ...]}`.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::Dataset;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetJson {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl DatasetJson {
    pub fn into_dataset<T: Scalar>(self) -> Result<Dataset<T>> {
        let rows: Vec<Vec<T>> = self
            .x
            .into_iter()
            .map(|r| r.into_iter().map(T::lit).collect())
            .collect();
        let inputs = if rows.is_empty() {
            Matrix::zeros(0, 0)
        } else {
            Matrix::from_rows(&rows)?
        };
        Dataset::new(inputs, self.y.into_iter().map(T::lit).collect())
    }

    pub fn from_dataset<T: Scalar>(ds: &Dataset<T>) -> Self {
        Self {
            x: (0..ds.len())
                .map(|n| ds.input(n).iter().map(|v| v.to_f64_lossy()).collect())
                .collect(),
            y: ds.outputs().iter().map(|v| v.to_f64_lossy()).collect(),
        }
    }
}

pub fn dataset_from_json_str<T: Scalar>(s: &str) -> Result<Dataset<T>> {
    serde_json::from_str::<DatasetJson>(s)?.into_dataset()
}

pub fn dataset_from_csv_reader<T: Scalar, R: Read>(reader: R) -> Result<Dataset<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let width = rdr.headers()?.len();
    if width < 2 {
        return Err(Error::Parse(format!(
            "CSV needs at least one input column and a y column, header has {width}"
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: {f:?}: {e}", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let (y, x) = vals.split_last().expect("width >= 2");
        xs.push(x.iter().copied().map(T::lit).collect::<Vec<T>>());
        ys.push(T::lit(*y));
    }
    let inputs = if xs.is_empty() {
        Matrix::zeros(0, width - 1)
    } else {
        Matrix::from_rows(&xs)?
    };
    Dataset::new(inputs, ys)
}

/// Reads `.json` or CSV (anything else) from disk.
pub fn load_dataset<T: Scalar>(path: &Path) -> Result<Dataset<T>> {
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let mut s = String::new();
        File::open(path)?.read_to_string(&mut s)?;
        dataset_from_json_str(&s)
    } else {
        dataset_from_csv_reader(File::open(path)?)
    }
}
