//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

/// Per-parameter-set optimizer state. Moment buffers are laid out in the
/// same order as the parameter list passed to [`AdamState::step`], which must
/// therefore stay stable across steps.
#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar = f64> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamState<T> {
    /// Fresh state for `params`, zero moments, step counter 0.
    pub fn new(params: &[Tensor<T>], lr: T) -> Self {
        AdamState {
            m: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            t: 0,
            lr,
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            eps: T::from_f64(1e-8),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Apply one update in place from each parameter's accumulated `.grad`.
    /// Parameters without a gradient (e.g. unused this step) are skipped but
    /// must still be present to keep the buffer alignment.
    pub fn step(&mut self, params: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::InvalidArgument {
                op: "adam_step",
                msg: format!(
                    "state built for {} parameters, got {}",
                    self.m.len(),
                    params.len()
                ),
            });
        }
        self.t += 1;
        let t = T::from_f64(self.t as f64);
        let bc1 = T::one() - self.beta1.powf(t);
        let bc2 = T::one() - self.beta2.powf(t);
        for (i, p) in params.iter().enumerate() {
            let Some(grad) = p.grad() else { continue };
            if grad.len() != self.m[i].len() {
                return Err(Error::InvalidArgument {
                    op: "adam_step",
                    msg: format!(
                        "parameter {} changed size: state has {}, grad has {}",
                        i,
                        self.m[i].len(),
                        grad.len()
                    ),
                });
            }
            let mut data = p.data();
            for (j, &g) in grad.iter().enumerate() {
                let m = self.beta1 * self.m[i][j] + (T::one() - self.beta1) * g;
                let v = self.beta2 * self.v[i][j] + (T::one() - self.beta2) * g * g;
                self.m[i][j] = m;
                self.v[i][j] = v;
                let mhat = m / bc1;
                let vhat = v / bc2;
                data[j] = data[j] - self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            p.set_data(&data)?;
        }
        Ok(())
    }
}
