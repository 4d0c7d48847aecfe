//! Conversions between ndarray types and the nested-vector shapes used in
//! the JSON model formats.

use ndarray::Array2;

use crate::error::{Error, Result};

pub fn matrix_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn rows_to_matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<Array2<f64>> {
    if rows.len() != nrows {
        return Err(Error::Invalid(format!(
            "expected {nrows} rows, got {}",
            rows.len()
        )));
    }
    let mut flat = Vec::with_capacity(nrows * ncols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::Invalid(format!(
                "row {i} has {} entries, expected {ncols}",
                row.len()
            )));
        }
        flat.extend_from_slice(row);
    }
    Array2::from_shape_vec((nrows, ncols), flat).map_err(|e| Error::Invalid(e.to_string()))
}
