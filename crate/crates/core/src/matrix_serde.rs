//! Serde representation for dense matrices: dimensions plus column-major data.

use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    Dense {
        rows: m.nrows(),
        cols: m.ncols(),
        data: m.as_slice().to_vec(),
    }
    .serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
    let dense = Dense::deserialize(d)?;
    if dense.rows * dense.cols != dense.data.len() {
        return Err(D::Error::custom(format!(
            "matrix data has {} entries, expected {}x{}",
            dense.data.len(),
            dense.rows,
            dense.cols
        )));
    }
    Ok(DMatrix::from_vec(dense.rows, dense.cols, dense.data))
}
