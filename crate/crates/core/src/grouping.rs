//! Iterative grouping mechanism: a learnable two-layer map that folds C
//! variable streams into G synthetic streams ahead of the temporal mixer and
//! unfolds them after. Both maps act on the variable axis only, identically
//! at every (time, embedding) position.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Activation, Tensor};

/// Grouping and ungrouping weights. Layout mirrors the two MLPs:
/// C → h_g → G on the way in, G → h_g → C on the way out.
#[derive(Debug, Clone)]
pub struct IgmParams<T: Scalar = f64> {
    pub wg1: Tensor<T>,
    pub bg1: Tensor<T>,
    pub wg2: Tensor<T>,
    pub bg2: Tensor<T>,
    pub wu1: Tensor<T>,
    pub bu1: Tensor<T>,
    pub wu2: Tensor<T>,
    pub bu2: Tensor<T>,
    pub activation: Activation,
}

impl<T: Scalar> IgmParams<T> {
    /// Fresh parameters: weights N(0, 0.02²), biases zero.
    /// `hidden` defaults to `max(c, 2g)` when `None`.
    pub fn init(
        c: usize,
        g: usize,
        hidden: Option<usize>,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if c == 0 || g == 0 {
            return Err(Error::Config(format!(
                "grouping needs c >= 1 and g >= 1, got c={c}, g={g}"
            )));
        }
        let h = hidden.unwrap_or_else(|| c.max(2 * g));
        if h == 0 {
            return Err(Error::Config("grouping hidden width must be >= 1".into()));
        }
        Ok(IgmParams {
            wg1: Tensor::randn_param(&[c, h], 0.02, rng)?,
            bg1: Tensor::param(vec![T::zero(); h], &[h])?,
            wg2: Tensor::randn_param(&[h, g], 0.02, rng)?,
            bg2: Tensor::param(vec![T::zero(); g], &[g])?,
            wu1: Tensor::randn_param(&[g, h], 0.02, rng)?,
            bu1: Tensor::param(vec![T::zero(); h], &[h])?,
            wu2: Tensor::randn_param(&[h, c], 0.02, rng)?,
            bu2: Tensor::param(vec![T::zero(); c], &[c])?,
            activation,
        })
    }

    pub fn channels(&self) -> usize {
        self.wg1.shape()[0]
    }

    pub fn groups(&self) -> usize {
        self.wg2.shape()[1]
    }

    pub fn collect_named(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.wg1"), self.wg1.clone()));
        out.push((format!("{prefix}.bg1"), self.bg1.clone()));
        out.push((format!("{prefix}.wg2"), self.wg2.clone()));
        out.push((format!("{prefix}.bg2"), self.bg2.clone()));
        out.push((format!("{prefix}.wu1"), self.wu1.clone()));
        out.push((format!("{prefix}.bu1"), self.bu1.clone()));
        out.push((format!("{prefix}.wu2"), self.wu2.clone()));
        out.push((format!("{prefix}.bu2"), self.bu2.clone()));
    }
}

/// Flatten the leading axes, run x ↦ σ(x·w1 + b1)·w2 + b2 along the last
/// axis, restore the shape with `out_last` as the new last-axis length.
fn two_layer_last_axis<T: Scalar>(
    x: &Tensor<T>,
    w1: &Tensor<T>,
    b1: &Tensor<T>,
    w2: &Tensor<T>,
    b2: &Tensor<T>,
    act: Activation,
    op: &'static str,
) -> Result<Tensor<T>> {
    let shape = x.shape();
    let last = *shape.last().ok_or(Error::InvalidArgument {
        op,
        msg: "rank-0 tensor".into(),
    })?;
    if w1.shape()[0] != last {
        return Err(Error::ShapeMismatch {
            op,
            lhs: shape,
            rhs: w1.shape(),
        });
    }
    let rows = x.numel() / last;
    let out_last = w2.shape()[1];
    let flat = x.reshape(&[rows, last])?;
    let hidden = flat.matmul(w1)?.add_rows(b1)?.activation(act)?;
    let out = hidden.matmul(w2)?.add_rows(b2)?;
    let mut out_shape = x.shape();
    *out_shape.last_mut().unwrap() = out_last;
    out.reshape(&out_shape)
}

/// Map `[L x D x C]` onto `[L x D x G]` synthetic streams.
pub fn regroup<T: Scalar>(x: &Tensor<T>, params: &IgmParams<T>) -> Result<Tensor<T>> {
    two_layer_last_axis(
        x,
        &params.wg1,
        &params.bg1,
        &params.wg2,
        &params.bg2,
        params.activation,
        "regroup",
    )
}

/// Map `[L x D x G]` back onto `[L x D x C]` variable streams.
pub fn ungroup<T: Scalar>(xp: &Tensor<T>, params: &IgmParams<T>) -> Result<Tensor<T>> {
    two_layer_last_axis(
        xp,
        &params.wu1,
        &params.bu1,
        &params.wu2,
        &params.bu2,
        params.activation,
        "ungroup",
    )
}
