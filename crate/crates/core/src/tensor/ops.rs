//! Forward operations. Each op records itself on the graph; the matching
//! adjoint lives in `backward.rs`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Op, Tensor};

/// Pointwise nonlinearity used by the feed-forward and grouping layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Gelu,
}

// ── Raw kernels (shared by forward and backward) ────────────────────

/// C[m x n] = A[m x k] · B[k x n]
pub(crate) fn mm_nn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}

/// C[m x n] = A[m x k] · B[n x k]ᵀ
pub(crate) fn mm_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = T::zero();
            for p in 0..k {
                s += arow[p] * brow[p];
            }
            c[i * n + j] = s;
        }
    }
    c
}

/// C[m x n] = A[k x m]ᵀ · B[k x n]
pub(crate) fn mm_tn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = arow[i];
            if av == T::zero() {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}

fn gelu_value<T: Scalar>(x: T) -> T {
    // tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
    let c = T::from_f64(0.797_884_560_802_865_4);
    let a = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let inner = c * (x + a * x * x * x);
    half * x * (T::one() + inner.tanh())
}

pub(crate) fn gelu_derivative<T: Scalar>(x: T) -> T {
    let c = T::from_f64(0.797_884_560_802_865_4);
    let a = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let inner = c * (x + a * x * x * x);
    let t = inner.tanh();
    let sech2 = T::one() - t * t;
    half * (T::one() + t) + half * x * sech2 * c * (T::one() + three * a * x * x)
}

// ── Shape helpers ────────────────────────────────────────────────────

fn require_2d<T: Scalar>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize)> {
    let shape = t.shape();
    if shape.len() != 2 {
        return Err(Error::InvalidArgument {
            op,
            msg: format!("expected a 2-d tensor, got shape {shape:?}"),
        });
    }
    Ok((shape[0], shape[1]))
}

fn require_same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, op: &'static str) -> Result<()> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa != sb {
        return Err(Error::ShapeMismatch { op, lhs: sa, rhs: sb });
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    fn elementwise(
        &self,
        other: &Tensor<T>,
        op_name: &'static str,
        f: impl Fn(T, T) -> T,
        op: impl Fn(Tensor<T>, Tensor<T>) -> Op<T>,
    ) -> Result<Tensor<T>> {
        require_same_shape(self, other, op_name)?;
        let (a, b) = (self.inner().borrow(), other.inner().borrow());
        let data: Vec<T> = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        let shape = a.shape.clone();
        let rg = a.requires_grad || b.requires_grad;
        drop(a);
        drop(b);
        Tensor::new_result(data, shape, rg, op(self.clone(), other.clone()))
    }

    /// Elementwise sum; shapes must match exactly.
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.elementwise(other, "add", |x, y| x + y, Op::Add)
    }

    /// Elementwise difference.
    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.elementwise(other, "sub", |x, y| x - y, Op::Sub)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.elementwise(other, "mul", |x, y| x * y, Op::Mul)
    }

    /// Multiply every element by a constant.
    pub fn scale(&self, factor: T) -> Result<Tensor<T>> {
        let inner = self.inner().borrow();
        let data: Vec<T> = inner.data.iter().map(|&v| v * factor).collect();
        let shape = inner.shape.clone();
        let rg = inner.requires_grad;
        drop(inner);
        Tensor::new_result(data, shape, rg, Op::Scale(self.clone(), factor))
    }

    /// Standard matrix product of two 2-d tensors.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, k) = require_2d(self, "matmul")?;
        let (k2, n) = require_2d(other, "matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let (a, b) = (self.inner().borrow(), other.inner().borrow());
        let data = mm_nn(&a.data, &b.data, m, k, n);
        let rg = a.requires_grad || b.requires_grad;
        drop(a);
        drop(b);
        Tensor::new_result(data, vec![m, n], rg, Op::Matmul(self.clone(), other.clone()))
    }

    /// Add a length-n bias vector to every row of an `[m x n]` tensor.
    pub fn add_rows(&self, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, n) = require_2d(self, "add_rows")?;
        let bshape = bias.shape();
        if bshape != [n] {
            return Err(Error::ShapeMismatch {
                op: "add_rows",
                lhs: vec![m, n],
                rhs: bshape,
            });
        }
        let (a, b) = (self.inner().borrow(), bias.inner().borrow());
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                data.push(a.data[i * n + j] + b.data[j]);
            }
        }
        let rg = a.requires_grad || b.requires_grad;
        drop(a);
        drop(b);
        Tensor::new_result(data, vec![m, n], rg, Op::AddRows(self.clone(), bias.clone()))
    }

    /// 2-d transpose.
    pub fn transpose(&self) -> Result<Tensor<T>> {
        let (m, n) = require_2d(self, "transpose")?;
        let inner = self.inner().borrow();
        let mut data = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = inner.data[i * n + j];
            }
        }
        let rg = inner.requires_grad;
        drop(inner);
        Tensor::new_result(data, vec![n, m], rg, Op::Transpose(self.clone()))
    }

    /// View the same row-major data under a new shape.
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor<T>> {
        let numel: usize = new_shape.iter().product();
        if numel != self.numel() {
            return Err(Error::InvalidArgument {
                op: "reshape",
                msg: format!(
                    "cannot reshape {:?} ({} elements) to {:?} ({} elements)",
                    self.shape(),
                    self.numel(),
                    new_shape,
                    numel
                ),
            });
        }
        let inner = self.inner().borrow();
        let data = inner.data.clone();
        let rg = inner.requires_grad;
        drop(inner);
        Tensor::new_result(data, new_shape.to_vec(), rg, Op::Reshape(self.clone()))
    }

    /// Concatenate tensors along `axis`; all other dimensions must agree.
    pub fn concat(parts: &[Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument {
                op: "concat",
                msg: "no tensors given".into(),
            });
        }
        let first = parts[0].shape();
        if axis >= first.len() {
            return Err(Error::InvalidArgument {
                op: "concat",
                msg: format!("axis {} out of range for rank {}", axis, first.len()),
            });
        }
        let mut axis_total = 0;
        for p in parts {
            let s = p.shape();
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(d, (a, b))| d != axis && a != b)
            {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first.clone(),
                    rhs: s,
                });
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;

        let outer: usize = first[..axis].iter().product();
        let inner_sz: usize = first[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * axis_total * inner_sz);
        for o in 0..outer {
            for p in parts {
                let pin = p.inner().borrow();
                let len = pin.shape[axis];
                let start = o * len * inner_sz;
                data.extend_from_slice(&pin.data[start..start + len * inner_sz]);
            }
        }
        let rg = parts.iter().any(|p| p.requires_grad());
        Tensor::new_result(data, out_shape, rg, Op::Concat(parts.to_vec(), axis))
    }

    /// Take `len` consecutive indices starting at `start` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(Error::InvalidArgument {
                op: "slice",
                msg: format!("axis {} out of range for rank {}", axis, shape.len()),
            });
        }
        if len == 0 || start + len > shape[axis] {
            return Err(Error::InvalidArgument {
                op: "slice",
                msg: format!(
                    "range {}..{} out of bounds for axis {} of size {}",
                    start,
                    start + len,
                    axis,
                    shape[axis]
                ),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner_sz: usize = shape[axis + 1..].iter().product();
        let src = self.inner().borrow();
        let mut data = Vec::with_capacity(outer * len * inner_sz);
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner_sz;
            data.extend_from_slice(&src.data[base..base + len * inner_sz]);
        }
        let rg = src.requires_grad;
        drop(src);
        let mut out_shape = shape;
        out_shape[axis] = len;
        Tensor::new_result(
            data,
            out_shape,
            rg,
            Op::Slice { src: self.clone(), axis, start },
        )
    }

    /// max(x, 0) elementwise.
    pub fn relu(&self) -> Result<Tensor<T>> {
        let inner = self.inner().borrow();
        let data: Vec<T> = inner.data.iter().map(|&v| v.max(T::zero())).collect();
        let shape = inner.shape.clone();
        let rg = inner.requires_grad;
        drop(inner);
        Tensor::new_result(data, shape, rg, Op::Relu(self.clone()))
    }

    /// GELU (tanh approximation) elementwise.
    pub fn gelu(&self) -> Result<Tensor<T>> {
        let inner = self.inner().borrow();
        let data: Vec<T> = inner.data.iter().map(|&v| gelu_value(v)).collect();
        let shape = inner.shape.clone();
        let rg = inner.requires_grad;
        drop(inner);
        Tensor::new_result(data, shape, rg, Op::Gelu(self.clone()))
    }

    pub fn activation(&self, act: Activation) -> Result<Tensor<T>> {
        match act {
            Activation::Relu => self.relu(),
            Activation::Gelu => self.gelu(),
        }
    }

    /// Row-wise softmax of a 2-d tensor, computed with per-row max
    /// subtraction so magnitudes up to ~1e3 stay stable.
    pub fn softmax_rows(&self) -> Result<Tensor<T>> {
        let (m, n) = require_2d(self, "softmax_rows")?;
        let inner = self.inner().borrow();
        let mut data = vec![T::zero(); m * n];
        for i in 0..m {
            let row = &inner.data[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
            let out = &mut data[i * n..(i + 1) * n];
            let mut sum = T::zero();
            for j in 0..n {
                let e = (row[j] - max).exp();
                out[j] = e;
                sum += e;
            }
            for v in out.iter_mut() {
                *v /= sum;
            }
        }
        let rg = inner.requires_grad;
        drop(inner);
        Tensor::new_result(data, vec![m, n], rg, Op::SoftmaxRows(self.clone()))
    }

    /// Layer normalization over the last axis, then affine scale/shift.
    /// `gamma` and `beta` must have the last-axis length.
    pub fn layer_norm(&self, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
        let shape = self.shape();
        let d = *shape.last().ok_or(Error::InvalidArgument {
            op: "layer_norm",
            msg: "rank-0 tensor".into(),
        })?;
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: vec![d],
                rhs: gamma.shape(),
            });
        }
        let rows = self.numel() / d;
        let x = self.inner().borrow();
        let g = gamma.inner().borrow();
        let b = beta.inner().borrow();
        let mut data = vec![T::zero(); rows * d];
        let mut inv_std = vec![T::zero(); rows];
        let mut normalized = vec![T::zero(); rows * d];
        let dn = T::from_f64(d as f64);
        for r in 0..rows {
            let row = &x.data[r * d..(r + 1) * d];
            let mut mean = T::zero();
            for &v in row {
                mean += v;
            }
            mean /= dn;
            let mut var = T::zero();
            for &v in row {
                let c = v - mean;
                var += c * c;
            }
            var /= dn;
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let nv = (row[j] - mean) * is;
                normalized[r * d + j] = nv;
                data[r * d + j] = g.data[j] * nv + b.data[j];
            }
        }
        let rg = x.requires_grad || g.requires_grad || b.requires_grad;
        drop(x);
        drop(g);
        drop(b);
        Tensor::new_result(
            data,
            shape,
            rg,
            Op::LayerNorm {
                x: self.clone(),
                gamma: gamma.clone(),
                beta: beta.clone(),
                inv_std,
                normalized,
            },
        )
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&self) -> Result<Tensor<T>> {
        let inner = self.inner().borrow();
        let mut s = T::zero();
        for &v in &inner.data {
            s += v;
        }
        let rg = inner.requires_grad;
        drop(inner);
        Tensor::new_result(vec![s], vec![1], rg, Op::Sum(self.clone()))
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(&self) -> Result<Tensor<T>> {
        let n = T::from_f64(self.numel() as f64);
        let inner = self.inner().borrow();
        let mut s = T::zero();
        for &v in &inner.data {
            s += v;
        }
        let rg = inner.requires_grad;
        drop(inner);
        Tensor::new_result(vec![s / n], vec![1], rg, Op::Mean(self.clone()))
    }
}
