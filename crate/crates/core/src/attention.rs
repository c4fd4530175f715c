//! Multi-head attention and the period-based mixers built on it: PAM
//! (per-period-block attention over neighboring periods), SPAM (its
//! phase-aligned sparse variant), and the period router that restores
//! global connectivity.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Bias added to masked score entries before softmax. Finite so gradients
/// stay defined, large enough that the weight underflows to exactly zero.
const MASK_BIAS: f64 = -1e9;

// ── Masks ────────────────────────────────────────────────────────────

/// Boolean attention mask: `allowed[q * cols + k]` says whether query `q`
/// may attend key `k`.
#[derive(Debug, Clone)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn new(rows: usize, cols: usize, allowed: Vec<bool>) -> Result<Self> {
        if allowed.len() != rows * cols {
            return Err(Error::InvalidArgument {
                op: "mask",
                msg: format!("{rows}x{cols} mask needs {} entries, got {}", rows * cols, allowed.len()),
            });
        }
        Ok(AttentionMask { rows, cols, allowed })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn allows(&self, q: usize, k: usize) -> bool {
        self.allowed[q * self.cols + k]
    }

    pub fn allowed_in_row(&self, q: usize) -> usize {
        self.allowed[q * self.cols..(q + 1) * self.cols]
            .iter()
            .filter(|&&a| a)
            .count()
    }

    /// Score-space bias tensor: 0 where allowed, a large negative constant
    /// where not. Errors on any fully-masked query row.
    fn bias<T: Scalar>(&self) -> Result<Tensor<T>> {
        for q in 0..self.rows {
            if self.allowed_in_row(q) == 0 {
                return Err(Error::FullyMaskedRow { row: q });
            }
        }
        let data = self
            .allowed
            .iter()
            .map(|&a| if a { T::zero() } else { T::from_f64(MASK_BIAS) })
            .collect();
        Tensor::from_vec(data, &[self.rows, self.cols])
    }
}

/// Connectivity pattern of the period mixers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PamMode {
    /// Each period block attends its own and both adjacent blocks.
    Dense,
    /// Each position attends only the same phase in adjacent periods.
    PhaseSparse,
}

/// Neighborhood mask over an `L`-step sequence split into periods of `p`
/// steps. `Dense` allows blocks i−1/i/i+1; `PhaseSparse` allows positions
/// {t−p, t, t+p}. Boundary rows simply have fewer keys.
pub fn build_neighborhood_mask(l: usize, p: usize, mode: PamMode) -> Result<AttentionMask> {
    if p == 0 || l % p != 0 {
        return Err(Error::InvalidArgument {
            op: "build_neighborhood_mask",
            msg: format!("sequence length {l} is not a multiple of period {p}"),
        });
    }
    let mut allowed = vec![false; l * l];
    for t in 0..l {
        for u in 0..l {
            let ok = match mode {
                PamMode::Dense => {
                    let (bt, bu) = (t / p, u / p);
                    bt.abs_diff(bu) <= 1
                }
                PamMode::PhaseSparse => t == u || t.abs_diff(u) == p,
            };
            allowed[t * l + u] = ok;
        }
    }
    AttentionMask::new(l, l, allowed)
}

// ── Multi-head attention ─────────────────────────────────────────────

/// Projection weights of one attention block. No biases; all four matrices
/// are D×D with D split evenly across heads.
#[derive(Debug, Clone)]
pub struct MhaParams<T: Scalar = f64> {
    pub wq: Tensor<T>,
    pub wk: Tensor<T>,
    pub wv: Tensor<T>,
    pub wo: Tensor<T>,
    pub heads: usize,
}

impl<T: Scalar> MhaParams<T> {
    /// Fresh parameters with N(0, 0.02²) entries.
    pub fn init(d: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        if heads == 0 || d % heads != 0 {
            return Err(Error::Config(format!(
                "model dim {d} is not divisible by {heads} heads"
            )));
        }
        let mut w = || Tensor::randn_param(&[d, d], 0.02, rng);
        Ok(MhaParams {
            wq: w()?,
            wk: w()?,
            wv: w()?,
            wo: w()?,
            heads,
        })
    }

    pub fn dim(&self) -> usize {
        self.wq.shape()[0]
    }

    pub fn head_dim(&self) -> usize {
        self.dim() / self.heads
    }

    /// Append `(name, tensor)` pairs for every learnable matrix.
    pub fn collect_named(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.wq"), self.wq.clone()));
        out.push((format!("{prefix}.wk"), self.wk.clone()));
        out.push((format!("{prefix}.wv"), self.wv.clone()));
        out.push((format!("{prefix}.wo"), self.wo.clone()));
    }

    fn validate_input(&self, d: usize) -> Result<()> {
        if self.dim() != d {
            return Err(Error::ShapeMismatch {
                op: "mha",
                lhs: vec![d],
                rhs: vec![self.dim()],
            });
        }
        Ok(())
    }
}

/// Scaled dot-product attention over already-projected q/k/v, one pass per
/// head, heads concatenated. `bias` (if any) is added to the scores of every
/// head before softmax.
fn heads_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    heads: usize,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let d = q.shape()[1];
    let hd = d / heads;
    let scale = T::one() / T::from_f64((hd as f64).sqrt());
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = q.slice(1, h * hd, hd)?;
        let kh = k.slice(1, h * hd, hd)?;
        let vh = v.slice(1, h * hd, hd)?;
        let mut scores = qh.matmul(&kh.transpose()?)?.scale(scale)?;
        if let Some(b) = bias {
            scores = scores.add(b)?;
        }
        let weights = scores.softmax_rows()?;
        if let Some(b) = bias {
            debug_assert!(
                weights
                    .data()
                    .iter()
                    .zip(b.data())
                    .all(|(&w, bv)| bv.to_f64() > -1e8 || w.to_f64() < 1e-12),
                "masked attention weight leaked above 1e-12"
            );
        }
        outs.push(weights.matmul(&vh)?);
    }
    Tensor::concat(&outs, 1)
}

/// Multi-head attention: project, attend per head (optionally masked),
/// concatenate, output-project.
pub fn mha<T: Scalar>(
    query: &Tensor<T>,
    key: &Tensor<T>,
    value: &Tensor<T>,
    params: &MhaParams<T>,
    mask: Option<&AttentionMask>,
) -> Result<Tensor<T>> {
    let (lq, d) = (query.shape()[0], query.shape()[1]);
    let lk = key.shape()[0];
    params.validate_input(d)?;
    if key.shape() != [lk, d] || value.shape() != [lk, d] {
        return Err(Error::ShapeMismatch {
            op: "mha",
            lhs: key.shape(),
            rhs: value.shape(),
        });
    }
    let bias = match mask {
        Some(m) => {
            if m.rows() != lq || m.cols() != lk {
                return Err(Error::ShapeMismatch {
                    op: "mha",
                    lhs: vec![lq, lk],
                    rhs: vec![m.rows(), m.cols()],
                });
            }
            Some(m.bias()?)
        }
        None => None,
    };
    let q = query.matmul(&params.wq)?;
    let k = key.matmul(&params.wk)?;
    let v = value.matmul(&params.wv)?;
    heads_attention(&q, &k, &v, params.heads, bias.as_ref())?.matmul(&params.wo)
}

// ── Period mixers ────────────────────────────────────────────────────

/// Period length and connectivity for PAM/SPAM.
#[derive(Debug, Clone, Copy)]
pub struct PamConfig {
    pub p: usize,
    pub mode: PamMode,
}

impl PamConfig {
    pub fn new(p: usize, mode: PamMode) -> Result<Self> {
        if p < 2 {
            return Err(Error::Config(format!("period must be at least 2, got {p}")));
        }
        Ok(PamConfig { p, mode })
    }

    fn check_len(&self, l: usize) -> Result<usize> {
        if self.p < 2 {
            return Err(Error::Config(format!("period must be at least 2, got {}", self.p)));
        }
        if l == 0 || l % self.p != 0 {
            return Err(Error::InvalidArgument {
                op: "pam",
                msg: format!("sequence length {l} is not a multiple of period {}", self.p),
            });
        }
        Ok(l / self.p)
    }
}

/// Period attention: each block of `p` consecutive tokens queries the
/// concatenation of its previous, own, and next blocks (fewer at the
/// boundaries). Equals full attention under the dense neighborhood mask.
pub fn pam_forward<T: Scalar>(
    z: &Tensor<T>,
    params: &MhaParams<T>,
    cfg: &PamConfig,
) -> Result<Tensor<T>> {
    let (l, d) = (z.shape()[0], z.shape()[1]);
    let n = cfg.check_len(l)?;
    params.validate_input(d)?;
    let p = cfg.p;
    // One shared projection, then per-block attention against the shifted
    // neighborhoods — the blocking never materializes an L×L score matrix.
    let q = z.matmul(&params.wq)?;
    let k = z.matmul(&params.wk)?;
    let v = z.matmul(&params.wv)?;
    let mut blocks = Vec::with_capacity(n);
    for i in 0..n {
        let start = i.saturating_sub(1) * p;
        let end = ((i + 2).min(n)) * p;
        let qi = q.slice(0, i * p, p)?;
        let ki = k.slice(0, start, end - start)?;
        let vi = v.slice(0, start, end - start)?;
        blocks.push(heads_attention(&qi, &ki, &vi, params.heads, None)?);
    }
    Tensor::concat(&blocks, 0)?.matmul(&params.wo)
}

/// Sparse period attention: the sequence is regrouped into `p` phase
/// sub-series of length `L/p` (every `p`-th token), window-3 attention runs
/// along each sub-series, and the result is scattered back. Equals full
/// attention under the phase-sparse mask.
pub fn spam_forward<T: Scalar>(
    z: &Tensor<T>,
    params: &MhaParams<T>,
    cfg: &PamConfig,
) -> Result<Tensor<T>> {
    let (l, d) = (z.shape()[0], z.shape()[1]);
    let n = cfg.check_len(l)?;
    params.validate_input(d)?;
    let p = cfg.p;
    let q = z.matmul(&params.wq)?.reshape(&[n, p, d])?;
    let k = z.matmul(&params.wk)?.reshape(&[n, p, d])?;
    let v = z.matmul(&params.wv)?.reshape(&[n, p, d])?;
    // Window-3 along a phase sub-series is the dense neighborhood with
    // single-step "periods".
    let band = if n > 1 {
        Some(build_neighborhood_mask(n, 1, PamMode::Dense)?.bias()?)
    } else {
        None
    };
    let mut phases = Vec::with_capacity(p);
    for s in 0..p {
        let qs = q.slice(1, s, 1)?.reshape(&[n, d])?;
        let ks = k.slice(1, s, 1)?.reshape(&[n, d])?;
        let vs = v.slice(1, s, 1)?.reshape(&[n, d])?;
        let out = heads_attention(&qs, &ks, &vs, params.heads, band.as_ref())?;
        phases.push(out.reshape(&[n, 1, d])?);
    }
    Tensor::concat(&phases, 1)?
        .reshape(&[l, d])?
        .matmul(&params.wo)
}

// ── Period router ────────────────────────────────────────────────────

/// Learnable routing matrix plus the two attention blocks that collect
/// period features into it and broadcast them back.
#[derive(Debug, Clone)]
pub struct RouterParams<T: Scalar = f64> {
    /// r×D routing matrix, N(0, 0.02²) at init.
    pub m: Tensor<T>,
    pub collect: MhaParams<T>,
    pub broadcast: MhaParams<T>,
}

impl<T: Scalar> RouterParams<T> {
    pub fn init(r: usize, d: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        if r == 0 {
            return Err(Error::Config("router length must be at least 1".into()));
        }
        Ok(RouterParams {
            m: Tensor::randn_param(&[r, d], 0.02, rng)?,
            collect: MhaParams::init(d, heads, rng)?,
            broadcast: MhaParams::init(d, heads, rng)?,
        })
    }

    pub fn router_len(&self) -> usize {
        self.m.shape()[0]
    }

    pub fn collect_named(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.m"), self.m.clone()));
        self.collect.collect_named(&format!("{prefix}.collect"), out);
        self.broadcast.collect_named(&format!("{prefix}.broadcast"), out);
    }
}

/// Two-hop global mixing: the r routing rows attend the whole sequence,
/// then every position attends the routing rows. Output is L×D.
pub fn router_forward<T: Scalar>(zp: &Tensor<T>, params: &RouterParams<T>) -> Result<Tensor<T>> {
    let routed = mha(&params.m, zp, zp, &params.collect, None)?;
    mha(zp, &routed, &routed, &params.broadcast, None)
}
