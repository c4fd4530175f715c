//! Reverse-mode differentiation. Node ids are monotonically increasing in
//! creation order, so walking the reachable set in descending id order visits
//! every node after all of its consumers — no explicit topological sort.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::ops::{gelu_derivative, mm_nt, mm_tn};
use super::{Op, Tensor};

impl<T: Scalar> Op<T> {
    fn parents(&self) -> Vec<Tensor<T>> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Matmul(a, b)
            | Op::AddRows(a, b) => vec![a.clone(), b.clone()],
            Op::Scale(a, _)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::Relu(a)
            | Op::Gelu(a)
            | Op::SoftmaxRows(a)
            | Op::Sum(a)
            | Op::Mean(a) => vec![a.clone()],
            Op::Concat(parts, _) => parts.clone(),
            Op::Slice { src, .. } => vec![src.clone()],
            Op::LayerNorm { x, gamma, beta, .. } => {
                vec![x.clone(), gamma.clone(), beta.clone()]
            }
        }
    }
}

/// Pending gradients keyed by node id.
struct GradMap<T>(HashMap<u64, Vec<T>>);

impl<T: Scalar> GradMap<T> {
    fn add(&mut self, node: &Tensor<T>, contrib: Vec<T>) {
        if !node.requires_grad() {
            return; // nothing upstream of this node needs a gradient
        }
        match self.0.entry(node.id()) {
            std::collections::hash_map::Entry::Occupied(mut e) => {
                for (acc, c) in e.get_mut().iter_mut().zip(contrib) {
                    *acc += c;
                }
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(contrib);
            }
        }
    }
}

impl<T: Scalar> Tensor<T> {
    /// Run reverse-mode accumulation from a scalar loss. Every reachable
    /// tensor with `requires_grad` receives (or accumulates into) `.grad`.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss { numel: self.numel() });
        }
        {
            let mut inner = self.inner().borrow_mut();
            if !inner.requires_grad {
                return Err(Error::DetachedGraph);
            }
            if inner.backward_done {
                return Err(Error::BackwardAlreadyRun);
            }
            inner.backward_done = true;
        }

        // Collect the reachable subgraph.
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        let mut nodes = Vec::new();
        while let Some(node) = stack.pop() {
            if !seen.insert(node.id()) {
                continue;
            }
            for p in node.inner().borrow().op.parents() {
                stack.push(p);
            }
            nodes.push(node);
        }
        nodes.sort_by(|a, b| b.id().cmp(&a.id()));

        let mut grads = GradMap(HashMap::new());
        grads.0.insert(self.id(), vec![T::one()]);

        for node in &nodes {
            let Some(g) = grads.0.remove(&node.id()) else { continue };
            if node.requires_grad() {
                let mut inner = node.inner().borrow_mut();
                match &mut inner.grad {
                    Some(acc) => {
                        for (a, c) in acc.iter_mut().zip(&g) {
                            *a += *c;
                        }
                    }
                    None => inner.grad = Some(g.clone()),
                }
            }
            let inner = node.inner().borrow();
            match &inner.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    grads.add(a, g.clone());
                    grads.add(b, g);
                }
                Op::Sub(a, b) => {
                    grads.add(a, g.clone());
                    grads.add(b, g.iter().map(|&v| -v).collect());
                }
                Op::Mul(a, b) => {
                    let (ad, bd) = (a.inner().borrow(), b.inner().borrow());
                    let ga: Vec<T> = g.iter().zip(&bd.data).map(|(&v, &w)| v * w).collect();
                    let gb: Vec<T> = g.iter().zip(&ad.data).map(|(&v, &w)| v * w).collect();
                    drop(ad);
                    drop(bd);
                    grads.add(a, ga);
                    grads.add(b, gb);
                }
                Op::Scale(a, c) => {
                    grads.add(a, g.iter().map(|&v| v * *c).collect());
                }
                Op::Matmul(a, b) => {
                    // c = a[m x k] · b[k x n]; da = g · bᵀ, db = aᵀ · g
                    let (m, k) = {
                        let s = &a.inner().borrow().shape;
                        (s[0], s[1])
                    };
                    let n = b.inner().borrow().shape[1];
                    let ga = mm_nt(&g, &b.inner().borrow().data, m, n, k);
                    let gb = mm_tn(&a.inner().borrow().data, &g, k, m, n);
                    grads.add(a, ga);
                    grads.add(b, gb);
                }
                Op::AddRows(a, bias) => {
                    let n = bias.inner().borrow().data.len();
                    let mut gb = vec![T::zero(); n];
                    for (i, &v) in g.iter().enumerate() {
                        gb[i % n] += v;
                    }
                    grads.add(a, g.clone());
                    grads.add(bias, gb);
                }
                Op::Transpose(a) => {
                    // node is [n x m]; `a` is [m x n]
                    let (n, m) = (inner.shape[0], inner.shape[1]);
                    let mut ga = vec![T::zero(); m * n];
                    for i in 0..n {
                        for j in 0..m {
                            ga[j * n + i] = g[i * m + j];
                        }
                    }
                    grads.add(a, ga);
                }
                Op::Reshape(a) => grads.add(a, g),
                Op::Concat(parts, axis) => {
                    let axis = *axis;
                    let shape = &inner.shape;
                    let outer: usize = shape[..axis].iter().product();
                    let inner_sz: usize = shape[axis + 1..].iter().product();
                    let total_axis = shape[axis];
                    let mut offset = 0;
                    for p in parts {
                        let len = p.inner().borrow().shape[axis];
                        let mut gp = Vec::with_capacity(outer * len * inner_sz);
                        for o in 0..outer {
                            let base = (o * total_axis + offset) * inner_sz;
                            gp.extend_from_slice(&g[base..base + len * inner_sz]);
                        }
                        offset += len;
                        grads.add(p, gp);
                    }
                }
                Op::Slice { src, axis, start } => {
                    let (axis, start) = (*axis, *start);
                    let sshape = src.inner().borrow().shape.clone();
                    let outer: usize = sshape[..axis].iter().product();
                    let inner_sz: usize = sshape[axis + 1..].iter().product();
                    let len = inner.shape[axis];
                    let mut gs = vec![T::zero(); sshape.iter().product()];
                    for o in 0..outer {
                        let dst = (o * sshape[axis] + start) * inner_sz;
                        let srcb = o * len * inner_sz;
                        gs[dst..dst + len * inner_sz]
                            .copy_from_slice(&g[srcb..srcb + len * inner_sz]);
                    }
                    grads.add(src, gs);
                }
                Op::Relu(a) => {
                    let ad = a.inner().borrow();
                    let ga: Vec<T> = g
                        .iter()
                        .zip(&ad.data)
                        .map(|(&v, &x)| if x > T::zero() { v } else { T::zero() })
                        .collect();
                    drop(ad);
                    grads.add(a, ga);
                }
                Op::Gelu(a) => {
                    let ad = a.inner().borrow();
                    let ga: Vec<T> = g
                        .iter()
                        .zip(&ad.data)
                        .map(|(&v, &x)| v * gelu_derivative(x))
                        .collect();
                    drop(ad);
                    grads.add(a, ga);
                }
                Op::SoftmaxRows(a) => {
                    // dx = y ⊙ (g − (g·y)) per row, y = softmax output
                    let y = &inner.data;
                    let (rows, cols) = (inner.shape[0], inner.shape[1]);
                    let mut ga = vec![T::zero(); rows * cols];
                    for r in 0..rows {
                        let yr = &y[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let mut dot = T::zero();
                        for j in 0..cols {
                            dot += gr[j] * yr[j];
                        }
                        let out = &mut ga[r * cols..(r + 1) * cols];
                        for j in 0..cols {
                            out[j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    grads.add(a, ga);
                }
                Op::LayerNorm { x, gamma, beta, inv_std, normalized } => {
                    let d = *inner.shape.last().unwrap();
                    let rows = inner.data.len() / d;
                    let gd = gamma.inner().borrow().data.clone();
                    let mut gx = vec![T::zero(); rows * d];
                    let mut ggamma = vec![T::zero(); d];
                    let mut gbeta = vec![T::zero(); d];
                    let dn = T::from_f64(d as f64);
                    for r in 0..rows {
                        let gr = &g[r * d..(r + 1) * d];
                        let nr = &normalized[r * d..(r + 1) * d];
                        let mut sum_dxhat = T::zero();
                        let mut sum_dxhat_n = T::zero();
                        for j in 0..d {
                            ggamma[j] += gr[j] * nr[j];
                            gbeta[j] += gr[j];
                            let dxhat = gr[j] * gd[j];
                            sum_dxhat += dxhat;
                            sum_dxhat_n += dxhat * nr[j];
                        }
                        let scale = inv_std[r] / dn;
                        for j in 0..d {
                            let dxhat = gr[j] * gd[j];
                            gx[r * d + j] =
                                scale * (dn * dxhat - sum_dxhat - nr[j] * sum_dxhat_n);
                        }
                    }
                    grads.add(x, gx);
                    grads.add(gamma, ggamma);
                    grads.add(beta, gbeta);
                }
                Op::Sum(a) => {
                    grads.add(a, vec![g[0]; a.numel()]);
                }
                Op::Mean(a) => {
                    let scale = g[0] / T::from_f64(a.numel() as f64);
                    grads.add(a, vec![scale; a.numel()]);
                }
            }
        }
        Ok(())
    }
}
