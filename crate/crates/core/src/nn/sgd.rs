use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Vanilla SGD with a step-decayed learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub initial_lr: f64,
    /// Multiplicative decay applied every `decay_every` updates.
    pub decay: f64,
    pub decay_every: u64,
    pub updates: u64,
}

impl Sgd {
    pub fn new(initial_lr: f64, decay: f64, decay_every: u64) -> Self {
        Sgd {
            initial_lr,
            decay,
            decay_every: decay_every.max(1),
            updates: 0,
        }
    }

    pub fn lr_at(&self, updates: u64) -> f64 {
        let steps = (updates / self.decay_every) as i32;
        self.initial_lr * self.decay.powi(steps)
    }

    /// Learning rate for the next update.
    pub fn lr(&self) -> f64 {
        self.lr_at(self.updates)
    }

    /// `p -= lr * g` for every pair. Nothing is modified if any gradient is
    /// non-finite or any shape differs.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "parameter {i}: {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            g.check_finite(&format!("gradient {i}"))?;
        }
        let lr = self.lr();
        for (p, g) in params.iter_mut().zip(grads) {
            p.axpy(-lr, g)?;
        }
        self.updates += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step() {
        let mut sgd = Sgd::new(0.1, 0.98, 50_000);
        let mut p = Tensor::from_vec(vec![1.0]).unwrap();
        let g = Tensor::from_vec(vec![1.0]).unwrap();
        sgd.step(&mut [&mut p], &[&g]).unwrap();
        assert!((p.data()[0] - 0.9).abs() < 1e-15);
        assert_eq!(sgd.updates, 1);
    }

    #[test]
    fn decay_boundaries() {
        let sgd = Sgd::new(0.001, 0.98, 50_000);
        assert_eq!(sgd.lr_at(49_999), 0.001);
        assert_eq!(sgd.lr_at(50_000), 0.001 * 0.98);
        assert_eq!(sgd.lr_at(100_000), 0.001 * 0.98 * 0.98);
    }

    #[test]
    fn decay_after_real_updates() {
        let mut sgd = Sgd::new(0.001, 0.98, 50_000);
        let mut p = Tensor::from_vec(vec![0.0]).unwrap();
        let g = Tensor::from_vec(vec![0.0]).unwrap();
        for _ in 0..50_000 {
            sgd.step(&mut [&mut p], &[&g]).unwrap();
        }
        assert_eq!(sgd.lr(), 0.001 * 0.98);
    }

    #[test]
    fn zero_gradient_leaves_bits_alone() {
        let mut sgd = Sgd::new(0.5, 0.98, 10);
        let orig = Tensor::from_vec(vec![0.1, -3.7e-200, 5e300]).unwrap();
        let mut p = orig.clone();
        sgd.step(&mut [&mut p], &[&Tensor::zeros(&[3])]).unwrap();
        assert_eq!(p, orig);
    }

    #[test]
    fn nan_gradient_refused() {
        let mut sgd = Sgd::new(0.1, 0.98, 10);
        let mut a = Tensor::from_vec(vec![1.0]).unwrap();
        let mut b = Tensor::from_vec(vec![1.0]).unwrap();
        let ga = Tensor::from_vec(vec![1.0]).unwrap();
        let gb = Tensor::from_vec(vec![f64::NAN]).unwrap();
        let err = sgd.step(&mut [&mut a, &mut b], &[&ga, &gb]).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(a.data()[0], 1.0);
        assert_eq!(sgd.updates, 0);
    }
}
