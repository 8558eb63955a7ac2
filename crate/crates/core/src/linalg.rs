//! Small dense helpers shared by the flow and diagnostics code.
//!
//! Agent blocks are stored row-major as flat slices (`rows * cols`, row `i`
//! occupying `i*cols..(i+1)*cols`), which is what the integrator works on.

use nalgebra::DMatrix;

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.ncols() == 1 || m.nrows() == 1 {
        return m.norm();
    }
    m.singular_values().max()
}

/// Spectral norm of a row-major `rows x cols` block.
pub fn block_spectral_norm(data: &[f64], rows: usize, cols: usize) -> f64 {
    debug_assert_eq!(data.len(), rows * cols);
    if cols == 1 {
        return data.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    spectral_norm(&DMatrix::from_row_slice(rows, cols, data))
}

/// `max_i ||row_i||_2` of a row-major block.
pub fn max_row_norm(data: &[f64], rows: usize, cols: usize) -> f64 {
    (0..rows)
        .map(|i| row_norm(&data[i * cols..(i + 1) * cols]))
        .fold(0.0, f64::max)
}

pub fn row_norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Column means of a row-major block.
pub fn row_average(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut avg = vec![0.0; cols];
    for i in 0..rows {
        for (a, v) in avg.iter_mut().zip(&data[i * cols..(i + 1) * cols]) {
            *a += v;
        }
    }
    for a in &mut avg {
        *a /= rows as f64;
    }
    avg
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
