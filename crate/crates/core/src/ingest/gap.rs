use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Global average pooling of an `[n, units, height, width]` row-major tensor
/// to an `[n, units]` matrix.
pub fn gap_pool(spatial: &[f32], n: usize, units: usize, height: usize, width: usize) -> Result<Matrix<f32>> {
    let area = height * width;
    if area == 0 {
        return Err(Error::EmptySpatialExtent);
    }
    if spatial.len() != n * units * area {
        return Err(Error::ShapeMismatch(format!(
            "tensor has {} values, expected {n}x{units}x{height}x{width}",
            spatial.len()
        )));
    }
    let pooled = spatial
        .chunks_exact(area)
        .map(|map| (map.iter().map(|&v| f64::from(v)).sum::<f64>() / area as f64) as f32)
        .collect();
    Matrix::from_vec(n, units, pooled)
}
