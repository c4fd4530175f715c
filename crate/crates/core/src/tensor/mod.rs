//! Minimal differentiable tensor engine.
//!
//! Dense row-major arrays with a recorded computation graph and reverse-mode
//! gradients. Graph construction and backward are single-threaded; a tensor
//! is a cheap handle (`Rc`) onto its node. There is no implicit
//! broadcasting: every op states its exact shape contract and anything else
//! is a shape error. Every op checks its output for NaN/Inf and fails fast,
//! since silent numeric corruption is otherwise invisible until a gradient
//! check disagrees.

mod adam;
mod backward;
mod gradcheck;
mod ops;

pub use adam::AdamState;
pub use gradcheck::{finite_diff_check, GradCheckEntry, GradCheckReport};
pub use ops::Activation;

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

thread_local! {
    // Creation order doubles as a topological order of the graph.
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Dense n-dimensional array of scalars with optional gradient tracking.
#[derive(Clone)]
pub struct Tensor<T: Scalar = f64> {
    inner: Rc<RefCell<Inner<T>>>,
}

pub(crate) struct Inner<T: Scalar> {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<T>,
    pub(crate) requires_grad: bool,
    pub(crate) grad: Option<Vec<T>>,
    pub(crate) op: Op<T>,
    pub(crate) backward_done: bool,
}

/// Recorded operation that produced a node. Parents are held by handle, so
/// a live loss keeps its whole graph alive.
pub(crate) enum Op<T: Scalar> {
    Leaf,
    Add(Tensor<T>, Tensor<T>),
    Sub(Tensor<T>, Tensor<T>),
    Mul(Tensor<T>, Tensor<T>),
    Scale(Tensor<T>, T),
    Matmul(Tensor<T>, Tensor<T>),
    /// `[m x n] + [n]`, bias added to every row.
    AddRows(Tensor<T>, Tensor<T>),
    Transpose(Tensor<T>),
    Reshape(Tensor<T>),
    Concat(Vec<Tensor<T>>, usize),
    Slice {
        src: Tensor<T>,
        axis: usize,
        start: usize,
    },
    Relu(Tensor<T>),
    Gelu(Tensor<T>),
    SoftmaxRows(Tensor<T>),
    LayerNorm {
        x: Tensor<T>,
        gamma: Tensor<T>,
        beta: Tensor<T>,
        /// 1/sqrt(var + eps) per row, saved by the forward pass.
        inv_std: Vec<T>,
        /// (x - mean) * inv_std per element, saved by the forward pass.
        normalized: Vec<T>,
    },
    Sum(Tensor<T>),
    Mean(Tensor<T>),
}

impl<T: Scalar> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Matmul(..) => "matmul",
            Op::AddRows(..) => "add_rows",
            Op::Transpose(..) => "transpose",
            Op::Reshape(..) => "reshape",
            Op::Concat(..) => "concat",
            Op::Slice { .. } => "slice",
            Op::Relu(..) => "relu",
            Op::Gelu(..) => "gelu",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
        }
    }
}

fn check_finite<T: Scalar>(data: &[T], op: &'static str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

impl<T: Scalar> Tensor<T> {
    fn from_parts(data: Vec<T>, shape: Vec<usize>, requires_grad: bool, op: Op<T>) -> Self {
        Tensor {
            inner: Rc::new(RefCell::new(Inner {
                id: next_id(),
                shape,
                data,
                requires_grad,
                grad: None,
                op,
                backward_done: false,
            })),
        }
    }

    /// New leaf tensor without gradient tracking. Rejects non-finite values
    /// and shape/length disagreement.
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::InvalidArgument {
                op: "from_vec",
                msg: format!("shape {:?} expects {} elements, got {}", shape, numel, data.len()),
            });
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument {
                op: "from_vec",
                msg: format!("zero-sized dimension in shape {shape:?}"),
            });
        }
        check_finite(&data, "from_vec")?;
        Ok(Self::from_parts(data, shape.to_vec(), false, Op::Leaf))
    }

    /// New leaf parameter with gradient tracking.
    pub fn param(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        let t = Self::from_vec(data, shape)?;
        t.inner.borrow_mut().requires_grad = true;
        Ok(t)
    }

    /// Gradient-tracked leaf with N(0, std²) entries.
    pub fn randn_param(shape: &[usize], std: f64, rng: &mut impl rand::Rng) -> Result<Self> {
        let normal = rand_distr::Normal::new(0.0f64, std).map_err(|e| Error::InvalidArgument {
            op: "randn_param",
            msg: e.to_string(),
        })?;
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| T::from_f64(rand_distr::Distribution::sample(&normal, rng)))
            .collect();
        Self::param(data, shape)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Self::from_parts(vec![T::zero(); numel], shape.to_vec(), false, Op::Leaf)
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let numel: usize = shape.iter().product();
        Self::from_vec(vec![value; numel], shape)
    }

    pub fn scalar(value: T) -> Result<Self> {
        Self::from_vec(vec![value], &[1])
    }

    pub(crate) fn new_result(
        data: Vec<T>,
        shape: Vec<usize>,
        requires_grad: bool,
        op: Op<T>,
    ) -> Result<Self> {
        check_finite(&data, op.name())?;
        Ok(Self::from_parts(data, shape, requires_grad, op))
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn rank(&self) -> usize {
        self.inner.borrow().shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().data.len()
    }

    /// Copy of the underlying values, row-major.
    pub fn data(&self) -> Vec<T> {
        self.inner.borrow().data.clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<T> {
        let inner = self.inner.borrow();
        if inner.data.len() != 1 {
            return Err(Error::InvalidArgument {
                op: "item",
                msg: format!("expected 1 element, got {}", inner.data.len()),
            });
        }
        Ok(inner.data[0])
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    /// Accumulated gradient, if backward has produced one.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Overwrite the values of a leaf tensor in place. Used by the optimizer,
    /// checkpoint loading, and the finite-difference verifier; shape is fixed
    /// at construction.
    pub fn set_data(&self, values: &[T]) -> Result<()> {
        check_finite(values, "set_data")?;
        let mut inner = self.inner.borrow_mut();
        if values.len() != inner.data.len() {
            return Err(Error::InvalidArgument {
                op: "set_data",
                msg: format!("expected {} elements, got {}", inner.data.len(), values.len()),
            });
        }
        inner.data.copy_from_slice(values);
        Ok(())
    }

    pub(crate) fn id(&self) -> u64 {
        self.inner.borrow().id
    }

    pub(crate) fn inner(&self) -> &Rc<RefCell<Inner<T>>> {
        &self.inner
    }
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &inner.shape)
            .field("requires_grad", &inner.requires_grad)
            .field("op", &inner.op.name())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_shape_product() {
        let err = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0], &[2, 2]).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument { .. }));
    }

    #[test]
    fn from_vec_rejects_non_finite() {
        let err = Tensor::<f64>::from_vec(vec![1.0, f64::NAN], &[2]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        let err = Tensor::<f64>::from_vec(vec![f64::INFINITY], &[1]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn set_data_preserves_shape_contract() {
        let t = Tensor::<f64>::param(vec![1.0, 2.0], &[2]).unwrap();
        t.set_data(&[3.0, 4.0]).unwrap();
        assert_eq!(t.data(), vec![3.0, 4.0]);
        assert!(t.set_data(&[1.0]).is_err());
        assert!(t.set_data(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn works_in_f32_too() {
        let a = Tensor::<f32>::from_vec(vec![1.0, 2.0], &[2]).unwrap();
        let b = a.scale(2.0).unwrap();
        assert_eq!(b.data(), vec![2.0f32, 4.0]);
    }
}
