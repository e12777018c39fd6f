use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative ridge added to a singular within-class scatter.
pub const WITHIN_RIDGE: f64 = 1e-6;

/// Class-mean and within-class scatter, both normalised by the sample count.
pub fn scatter_matrices(
    x: &[DVector<f64>],
    labels: &[usize],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = x.first().map_or(0, |v| v.len());
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut sums = vec![DVector::zeros(d); n_classes];
    let mut counts = vec![0usize; n_classes];
    for (v, &l) in x.iter().zip(labels) {
        sums[l] += v;
        counts[l] += 1;
    }
    let n = x.len() as f64;
    let mean = sums.iter().fold(DVector::zeros(d), |a, s| a + s) / n;
    let means: Vec<DVector<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| {
            if c > 0 {
                s / c as f64
            } else {
                DVector::zeros(d)
            }
        })
        .collect();
    let mut between = DMatrix::zeros(d, d);
    for (m, &c) in means.iter().zip(&counts) {
        let dm = m - &mean;
        between += (&dm * dm.transpose()) * c as f64;
    }
    let mut within = DMatrix::zeros(d, d);
    for (v, &l) in x.iter().zip(labels) {
        let dv = v - &means[l];
        within += &dv * dv.transpose();
    }
    Ok((between / n, within / n))
}

/// Cholesky factor of `within`, ridged by `WITHIN_RIDGE * trace / d` if it
/// is not positive definite.
pub(crate) fn robust_cholesky(
    within: &DMatrix<f64>,
    what: &str,
) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = within.clone().cholesky() {
        return Ok(c);
    }
    let d = within.nrows();
    let lambda = WITHIN_RIDGE * within.trace().abs().max(f64::MIN_POSITIVE) / d as f64;
    log::warn!("{what} is singular, adding ridge {lambda:e}");
    (within + DMatrix::identity(d, d) * lambda)
        .cholesky()
        .ok_or_else(|| Error::Numeric(format!("{what} is singular even after regularisation")))
}

/// Rows of the returned `P x D` matrix are the top `p` solutions of
/// `Sb v = lambda Sw v`, scaled so that `v' Sw v = 1`.
pub fn fit_lda(x: &[DVector<f64>], labels: &[usize], p: usize) -> Result<DMatrix<f64>> {
    let d = x.first().map_or(0, |v| v.len());
    if p == 0 || p > d {
        return Err(Error::Config(format!("lda_dim {p} outside 1..={d}")));
    }
    let (sb, sw) = scatter_matrices(x, labels)?;
    let chol = robust_cholesky(&sw, "within-class scatter")?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("cholesky factor not invertible".into()))?;
    let m = &l_inv * sb * l_inv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut proj = DMatrix::zeros(p, d);
    let l_inv_t = l_inv.transpose();
    for (row, &k) in order.iter().take(p).enumerate() {
        let v = &l_inv_t * eig.eigenvectors.column(k);
        proj.set_row(row, &v.transpose());
    }
    Ok(proj)
}
