use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    /// Top two covariance eigenvalues.
    pub eigenvalues: [f64; 2],
    /// Each eigenvalue over the total variance.
    pub explained_variance_ratio: [f64; 2],
}

/// Projects rows of `x` onto the top two principal components. Each
/// component's sign makes its largest-magnitude coordinate positive.
pub fn pca_project_2d(x: &[Vec<f64>]) -> Result<Projection> {
    if x.len() < 3 {
        return Err(Error::Analysis(format!(
            "PCA needs at least 3 points, got {}",
            x.len()
        )));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|v| v.len() != d) {
        return Err(Error::Shape(
            "PCA points must share one non-zero dimension".into(),
        ));
    }
    let n = x.len();
    let data = DMatrix::from_fn(n, d, |i, j| x[i][j]);
    let mean = data.row_mean();
    let centred = DMatrix::from_fn(n, d, |i, j| data[(i, j)] - mean[j]);
    let cov = centred.transpose() * &centred / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();

    let mut coords = vec![[0.0; 2]; n];
    let mut eigenvalues = [0.0; 2];
    for (c, &k) in order.iter().take(2).enumerate() {
        eigenvalues[c] = eig.eigenvalues[k].max(0.0);
        let proj = &centred * eig.eigenvectors.column(k);
        let pivot = proj
            .iter()
            .copied()
            .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (i, p) in proj.iter().enumerate() {
            coords[i][c] = sign * p;
        }
    }
    let ratio = |v: f64| if total > 0.0 { v / total } else { 0.0 };
    Ok(Projection {
        coords,
        eigenvalues,
        explained_variance_ratio: [ratio(eigenvalues[0]), ratio(eigenvalues[1])],
    })
}
