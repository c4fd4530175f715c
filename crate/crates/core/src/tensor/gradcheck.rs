//! Finite-difference gradient verification.
//!
//! The checker rebuilds the loss graph through a user closure, so parameters
//! must be leaf tensors that the closure reads fresh on every call.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

/// Worst observed disagreement for one named parameter.
#[derive(Debug, Clone)]
pub struct GradCheckEntry<T: Scalar = f64> {
    pub name: String,
    /// Flat index within the parameter where the worst error occurred.
    pub index: usize,
    pub analytic: T,
    pub numeric: T,
    pub rel_err: T,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport<T: Scalar = f64> {
    /// One entry per checked parameter, in input order.
    pub entries: Vec<GradCheckEntry<T>>,
    pub tol: T,
}

impl<T: Scalar> GradCheckReport<T> {
    pub fn max_rel_err(&self) -> T {
        self.entries
            .iter()
            .map(|e| e.rel_err)
            .fold(T::zero(), T::max)
    }

    pub fn worst(&self) -> Option<&GradCheckEntry<T>> {
        self.entries
            .iter()
            .max_by(|a, b| a.rel_err.partial_cmp(&b.rel_err).unwrap())
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tol
    }
}

/// Compare analytic gradients against central differences for every element
/// of every parameter. `forward` must rebuild the scalar loss from the
/// parameters' current values and be deterministic; this is probed by
/// evaluating it twice and requiring bit-identical results.
///
/// Relative error uses the denominator `max(|analytic| + |numeric|, 1e-4)`;
/// the floor keeps near-zero gradients from inflating the ratio with pure
/// round-off noise.
pub fn finite_diff_check<T: Scalar, F>(
    mut forward: F,
    params: &[(String, Tensor<T>)],
    h: T,
    tol: T,
) -> Result<GradCheckReport<T>>
where
    F: FnMut() -> Result<Tensor<T>>,
{
    let probe_a = forward()?.item()?;
    let probe_b = forward()?.item()?;
    if probe_a.to_f64().to_bits() != probe_b.to_f64().to_bits() {
        return Err(Error::NonDeterministicClosure);
    }

    for (_, p) in params {
        p.zero_grad();
    }
    let loss = forward()?;
    loss.backward()?;
    let analytic: Vec<Vec<T>> = params
        .iter()
        .map(|(_, p)| p.grad().unwrap_or_else(|| vec![T::zero(); p.numel()]))
        .collect();

    let floor = T::from_f64(1e-4);
    let two_h = h + h;
    let mut entries = Vec::with_capacity(params.len());
    for ((name, p), grads) in params.iter().zip(&analytic) {
        let base = p.data();
        let mut worst = GradCheckEntry {
            name: name.clone(),
            index: 0,
            analytic: grads.first().copied().unwrap_or_else(T::zero),
            numeric: T::zero(),
            rel_err: T::zero(),
        };
        let mut probe = base.clone();
        for i in 0..base.len() {
            probe[i] = base[i] + h;
            p.set_data(&probe)?;
            let f_plus = forward()?.item()?;
            probe[i] = base[i] - h;
            p.set_data(&probe)?;
            let f_minus = forward()?.item()?;
            probe[i] = base[i];
            let numeric = (f_plus - f_minus) / two_h;
            let a = grads[i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(floor);
            if rel >= worst.rel_err {
                worst = GradCheckEntry {
                    name: name.clone(),
                    index: i,
                    analytic: a,
                    numeric,
                    rel_err: rel,
                };
            }
        }
        p.set_data(&base)?;
        entries.push(worst);
    }
    Ok(GradCheckReport { entries, tol })
}
