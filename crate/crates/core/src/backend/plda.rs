//! Two-covariance PLDA: `x = mu + y + e` with speaker variable
//! `y ~ N(0, B)` and residual `e ~ N(0, W)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lda::{robust_cholesky, scatter_matrices};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plda {
    pub mu: DVector<f64>,
    pub between: DMatrix<f64>,
    pub within: DMatrix<f64>,
}

/// Precomputed quadratic form of the log-likelihood ratio:
/// `s(a, b) = a'Qa/2 + b'Qb/2 + a'Pb + c` for centred `a`, `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PldaScorer {
    mu: DVector<f64>,
    q: DMatrix<f64>,
    p: DMatrix<f64>,
    c: f64,
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<(DMatrix<f64>, f64)> {
    let chol = robust_cholesky(m, what)?;
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok((sym(chol.inverse()), logdet))
}

fn group(labels: &[usize]) -> Vec<Vec<usize>> {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

impl Plda {
    /// Starting point for EM: the class-mean and within-class covariances.
    pub fn initial(x: &[DVector<f64>], labels: &[usize]) -> Result<Plda> {
        let n = x.len() as f64;
        let d = x[0].len();
        let mu = x.iter().fold(DVector::zeros(d), |a, v| a + v) / n;
        let (between, within) = scatter_matrices(x, labels)?;
        Ok(Plda {
            mu,
            between: sym(between),
            within: sym(within),
        })
    }

    /// Observed-data log-likelihood of the whole set under the model.
    pub fn log_likelihood(&self, x: &[DVector<f64>], labels: &[usize]) -> Result<f64> {
        let d = self.mu.len() as f64;
        let (w_inv, logdet_w) = spd_inverse(&self.within, "PLDA within covariance")?;
        let (b_inv, logdet_b) = spd_inverse(&self.between, "PLDA between covariance")?;
        let mut total = 0.0;
        for g in group(labels) {
            let n = g.len() as f64;
            let mut sum = DVector::zeros(self.mu.len());
            let mut quad = 0.0;
            for &i in &g {
                let z = &x[i] - &self.mu;
                quad += z.dot(&(&w_inv * &z));
                sum += z;
            }
            let h = &w_inv * sum;
            let (lambda_inv, logdet_lambda) =
                spd_inverse(&(&b_inv + &w_inv * n), "posterior precision")?;
            total += -0.5 * n * d * LN_2PI
                - 0.5 * n * logdet_w
                - 0.5 * logdet_b
                - 0.5 * logdet_lambda
                - 0.5 * quad
                + 0.5 * h.dot(&(&lambda_inv * &h));
        }
        Ok(total)
    }

    /// One EM update of `between` and `within` with `mu` held fixed.
    pub fn em_step(&self, x: &[DVector<f64>], labels: &[usize]) -> Result<Plda> {
        let dim = self.mu.len();
        let (w_inv, _) = spd_inverse(&self.within, "PLDA within covariance")?;
        let (b_inv, _) = spd_inverse(&self.between, "PLDA between covariance")?;
        let groups = group(labels);
        let mut between = DMatrix::zeros(dim, dim);
        let mut within = DMatrix::zeros(dim, dim);
        for g in &groups {
            let n = g.len() as f64;
            let sum = g
                .iter()
                .fold(DVector::zeros(dim), |a, &i| a + (&x[i] - &self.mu));
            let (cov, _) = spd_inverse(&(&b_inv + &w_inv * n), "posterior precision")?;
            let m = &cov * (&w_inv * sum);
            between += &m * m.transpose() + &cov;
            for &i in g {
                let r = &x[i] - &self.mu - &m;
                within += &r * r.transpose() + &cov;
            }
        }
        Ok(Plda {
            mu: self.mu.clone(),
            between: sym(between / groups.len() as f64),
            within: sym(within / x.len() as f64),
        })
    }

    /// Runs `iters` EM updates from [`Plda::initial`], returning the model
    /// and the log-likelihood before the first and after every update.
    pub fn fit(x: &[DVector<f64>], labels: &[usize], iters: usize) -> Result<(Plda, Vec<f64>)> {
        let mut model = Plda::initial(x, labels)?;
        let mut history = vec![model.log_likelihood(x, labels)?];
        for _ in 0..iters {
            model = model.em_step(x, labels)?;
            history.push(model.log_likelihood(x, labels)?);
        }
        Ok((model, history))
    }

    pub fn scorer(&self) -> Result<PldaScorer> {
        let total = &self.between + &self.within;
        let (t_inv, logdet_t) = spd_inverse(&total, "PLDA total covariance")?;
        let schur = sym(&total - &self.between * &t_inv * &self.between);
        let (s_inv, logdet_s) = spd_inverse(&schur, "PLDA conditional covariance")?;
        Ok(PldaScorer {
            mu: self.mu.clone(),
            q: sym(&t_inv - &s_inv),
            p: sym(&t_inv * &self.between * &s_inv),
            c: 0.5 * logdet_t - 0.5 * logdet_s,
        })
    }

    /// Condition number of the within-class covariance.
    pub fn within_condition(&self) -> f64 {
        let ev = self.within.symmetric_eigenvalues();
        let max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }
}

impl PldaScorer {
    /// Same-speaker versus different-speaker log-likelihood ratio.
    pub fn score(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
        if a.len() != self.mu.len() || b.len() != self.mu.len() {
            return Err(Error::Shape(format!(
                "PLDA expects {}-d vectors, got {} and {}",
                self.mu.len(),
                a.len(),
                b.len()
            )));
        }
        let a = a - &self.mu;
        let b = b - &self.mu;
        Ok(0.5 * a.dot(&(&self.q * &a))
            + 0.5 * b.dot(&(&self.q * &b))
            + a.dot(&(&self.p * &b))
            + self.c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_between_scores_zero() {
        let plda = Plda {
            mu: DVector::zeros(2),
            between: DMatrix::zeros(2, 2),
            within: DMatrix::identity(2, 2),
        };
        let s = plda.scorer().unwrap();
        let a = DVector::from_row_slice(&[0.3, -1.0]);
        let b = DVector::from_row_slice(&[2.0, 0.5]);
        assert!(s.score(&a, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let plda = Plda {
            mu: DVector::zeros(2),
            between: DMatrix::identity(2, 2),
            within: DMatrix::identity(2, 2),
        };
        let s = plda.scorer().unwrap();
        assert!(matches!(
            s.score(&DVector::zeros(2), &DVector::zeros(3)),
            Err(Error::Shape(_))
        ));
    }
}
