//! Model parameters `(gamma, Q, R, alpha, beta)` plus trainable baseline-hazard
//! parameters, with log-Cholesky precision representations and explicit
//! cross-edge parameter sharing.

use std::fmt;

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Edge;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Structure imposed on a covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovMethod {
    /// Unconstrained: lower-triangular log-Cholesky factor.
    Full,
    /// Diagonal: one log-scale entry per coordinate.
    Diag,
    /// Scalar multiple of the identity: one log-scale entry.
    Ball,
}

impl fmt::Display for CovMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovMethod::Full => "full",
            CovMethod::Diag => "diag",
            CovMethod::Ball => "ball",
        })
    }
}

/// Log-Cholesky representation of a precision matrix `P = L L^T`, where the
/// diagonal of `L` is stored on log scale.
///
/// `values` holds, depending on `method`:
/// * `Full`: the lower triangle of `L~` in row-major order
///   (`L~00, L~10, L~11, L~20, ...`),
/// * `Diag`: the diagonal entries `L~ii`,
/// * `Ball`: the single shared diagonal entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRepr {
    pub method: CovMethod,
    pub dim: usize,
    pub values: Vec<f64>,
}

#[inline]
fn tri(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

impl PrecisionRepr {
    pub fn num_params(method: CovMethod, dim: usize) -> usize {
        match method {
            CovMethod::Full => dim * (dim + 1) / 2,
            CovMethod::Diag => dim,
            CovMethod::Ball => usize::from(dim > 0),
        }
    }

    pub fn new(method: CovMethod, dim: usize, values: Vec<f64>) -> Result<Self> {
        let n = Self::num_params(method, dim);
        if values.len() != n {
            return Err(Error::Shape(format!(
                "{method} representation of dimension {dim} needs {n} values, got {}",
                values.len()
            )));
        }
        Ok(PrecisionRepr {
            method,
            dim,
            values,
        })
    }

    /// Representation of the identity matrix (all zeros).
    pub fn identity(method: CovMethod, dim: usize) -> Self {
        PrecisionRepr {
            method,
            dim,
            values: vec![0.0; Self::num_params(method, dim)],
        }
    }

    /// Converts a covariance matrix to the precision representation.
    pub fn from_cov(cov: &DMatrix<f64>, method: CovMethod) -> Result<Self> {
        let q = cov.nrows();
        if cov.ncols() != q {
            return Err(Error::Shape(format!(
                "covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let scale = cov
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let off_diag_zero =
            (0..q).all(|i| (0..q).all(|j| i == j || cov[(i, j)].abs() <= 1e-14 * scale));
        match method {
            CovMethod::Full => {
                let chol = Cholesky::new(cov.clone())
                    .ok_or_else(|| Error::Factorization("covariance".into()))?;
                let precision = chol.inverse();
                let prec_chol = Cholesky::new(precision)
                    .ok_or_else(|| Error::Factorization("precision".into()))?;
                let l = prec_chol.l();
                let mut values = vec![0.0; Self::num_params(method, q)];
                for i in 0..q {
                    for j in 0..i {
                        values[tri(i, j)] = l[(i, j)];
                    }
                    values[tri(i, i)] = l[(i, i)].ln();
                }
                Ok(PrecisionRepr {
                    method,
                    dim: q,
                    values,
                })
            }
            CovMethod::Diag => {
                if !off_diag_zero {
                    return Err(Error::Validation(
                        "diag method requires a diagonal covariance".into(),
                    ));
                }
                let mut values = Vec::with_capacity(q);
                for i in 0..q {
                    let v = cov[(i, i)];
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(Error::Factorization(format!("variance {v} at index {i}")));
                    }
                    values.push(-0.5 * v.ln());
                }
                Ok(PrecisionRepr {
                    method,
                    dim: q,
                    values,
                })
            }
            CovMethod::Ball => {
                let v = if q > 0 { cov[(0, 0)] } else { 1.0 };
                let same = (0..q).all(|i| (cov[(i, i)] - v).abs() <= 1e-14 * scale);
                if !off_diag_zero || !same {
                    return Err(Error::Validation(
                        "ball method requires a multiple of the identity".into(),
                    ));
                }
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::Factorization(format!("variance {v}")));
                }
                let values = if q > 0 { vec![-0.5 * v.ln()] } else { vec![] };
                Ok(PrecisionRepr {
                    method,
                    dim: q,
                    values,
                })
            }
        }
    }

    /// Diagonal entry `L~ii` (log scale).
    #[inline]
    fn log_diag(&self, i: usize) -> f64 {
        match self.method {
            CovMethod::Full => self.values[tri(i, i)],
            CovMethod::Diag => self.values[i],
            CovMethod::Ball => self.values[0],
        }
    }

    /// The Cholesky factor `L` of the precision matrix.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        let q = self.dim;
        let mut l = DMatrix::zeros(q, q);
        for i in 0..q {
            l[(i, i)] = self.log_diag(i).exp();
            if self.method == CovMethod::Full {
                for j in 0..i {
                    l[(i, j)] = self.values[tri(i, j)];
                }
            }
        }
        l
    }

    pub fn precision(&self) -> DMatrix<f64> {
        let l = self.cholesky_factor();
        &l * l.transpose()
    }

    /// Materialized covariance `P^-1`; used for reporting and simulation only.
    pub fn covariance(&self) -> DMatrix<f64> {
        let l = self.cholesky_factor();
        let l_inv = l
            .solve_lower_triangular(&DMatrix::identity(self.dim, self.dim))
            .expect("log-Cholesky factor has a positive diagonal");
        l_inv.transpose() * l_inv
    }

    /// `log det P = 2 tr(L~)`.
    pub fn log_det(&self) -> f64 {
        match self.method {
            CovMethod::Ball => 2.0 * self.dim as f64 * self.values.first().copied().unwrap_or(0.0),
            _ => 2.0 * (0..self.dim).map(|i| self.log_diag(i)).sum::<f64>(),
        }
    }

    /// Gradient of [`Self::log_det`] with respect to `values`.
    pub fn log_det_grad(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.values.len()];
        match self.method {
            CovMethod::Full => (0..self.dim).for_each(|i| g[tri(i, i)] = 2.0),
            CovMethod::Diag => g.iter_mut().for_each(|v| *v = 2.0),
            CovMethod::Ball => {
                if let Some(v) = g.first_mut() {
                    *v = 2.0 * self.dim as f64;
                }
            }
        }
        g
    }

    /// `v = L^T x`, written into `v`.
    #[inline]
    fn lt_mul(&self, x: &[f64], v: &mut [f64]) {
        match self.method {
            CovMethod::Full => {
                for j in 0..self.dim {
                    let mut s = self.values[tri(j, j)].exp() * x[j];
                    for i in j + 1..self.dim {
                        s += self.values[tri(i, j)] * x[i];
                    }
                    v[j] = s;
                }
            }
            CovMethod::Diag => {
                for i in 0..self.dim {
                    v[i] = self.values[i].exp() * x[i];
                }
            }
            CovMethod::Ball => {
                let e = self.values.first().map_or(1.0, |s| s.exp());
                for i in 0..self.dim {
                    v[i] = e * x[i];
                }
            }
        }
    }

    /// `x^T P x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut v = [0.0; 16];
        if self.dim <= 16 {
            self.lt_mul(x, &mut v[..self.dim]);
            v[..self.dim].iter().map(|a| a * a).sum()
        } else {
            let mut v = vec![0.0; self.dim];
            self.lt_mul(x, &mut v);
            v.iter().map(|a| a * a).sum()
        }
    }

    /// Gaussian log-density `log N(x; 0, P^-1)`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        -0.5 * self.dim as f64 * LN_2PI + 0.5 * self.log_det() - 0.5 * self.quad_form(x)
    }

    /// Gaussian log-density, accumulating its gradient with respect to the
    /// representation into `grad_repr` and, optionally, with respect to `x`
    /// into `grad_x`.
    pub fn log_density_grad(
        &self,
        x: &[f64],
        grad_repr: &mut [f64],
        grad_x: Option<&mut [f64]>,
    ) -> f64 {
        let q = self.dim;
        let mut v = vec![0.0; q];
        self.lt_mul(x, &mut v);
        let quad: f64 = v.iter().map(|a| a * a).sum();
        match self.method {
            CovMethod::Full => {
                for i in 0..q {
                    for j in 0..i {
                        grad_repr[tri(i, j)] -= v[j] * x[i];
                    }
                    let lii = self.values[tri(i, i)].exp();
                    grad_repr[tri(i, i)] += 1.0 - v[i] * x[i] * lii;
                }
            }
            CovMethod::Diag => {
                for i in 0..q {
                    grad_repr[i] += 1.0 - v[i] * v[i];
                }
            }
            CovMethod::Ball => {
                if q > 0 {
                    grad_repr[0] += q as f64 - quad;
                }
            }
        }
        if let Some(gx) = grad_x {
            // -P x = -L v
            for i in 0..q {
                let s = match self.method {
                    CovMethod::Full => {
                        let mut s = self.values[tri(i, i)].exp() * v[i];
                        for j in 0..i {
                            s += self.values[tri(i, j)] * v[j];
                        }
                        s
                    }
                    _ => self.log_diag(i).exp() * v[i],
                };
                gx[i] -= s;
            }
        }
        -0.5 * q as f64 * LN_2PI + 0.5 * self.log_det() - 0.5 * quad
    }

    /// Draws `x ~ N(0, P^-1)` by solving `L^T x = z`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let q = self.dim;
        let z: Vec<f64> = (0..q).map(|_| rng.sample(StandardNormal)).collect();
        let mut x = vec![0.0; q];
        for j in (0..q).rev() {
            let mut s = z[j];
            if self.method == CovMethod::Full {
                for i in j + 1..q {
                    s -= self.values[tri(i, j)] * x[i];
                }
            }
            x[j] = s / self.log_diag(j).exp();
        }
        x
    }
}

/// Half of `log(2 pi)`, exposed for likelihood constants.
pub const HALF_LN_2PI: f64 = 0.5 * LN_2PI;

/// A per-edge parameter vector that may be tied to others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "group", content = "edge", rename_all = "lowercase")]
pub enum Slot {
    Alpha(Edge),
    Beta(Edge),
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Alpha(e) => write!(f, "alpha[{e}]"),
            Slot::Beta(e) => write!(f, "beta[{e}]"),
        }
    }
}

/// Identifies a contiguous block of the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockId {
    Gamma,
    Q,
    R,
    Alpha(usize),
    Beta(usize),
    Extra,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub id: BlockId,
    pub len: usize,
    /// Offset in the untied (one slot per block) vector.
    pub full_offset: usize,
    /// Offset in the free (one scalar per tie class) vector.
    pub free_offset: usize,
    /// First block of its tie class, or untied.
    pub representative: bool,
}

/// Mapping between structured parameters, the untied "full" vector used for
/// gradient accumulation, and the free vector seen by optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    blocks: Vec<Block>,
    full_len: usize,
    free_len: usize,
    num_edges: usize,
}

impl ParamLayout {
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn full_len(&self) -> usize {
        self.full_len
    }

    pub fn free_len(&self) -> usize {
        self.free_len
    }

    fn block(&self, idx: usize) -> std::ops::Range<usize> {
        let b = &self.blocks[idx];
        b.full_offset..b.full_offset + b.len
    }

    pub fn gamma(&self) -> std::ops::Range<usize> {
        self.block(0)
    }

    pub fn q(&self) -> std::ops::Range<usize> {
        self.block(1)
    }

    pub fn r(&self) -> std::ops::Range<usize> {
        self.block(2)
    }

    pub fn alpha(&self, edge_idx: usize) -> std::ops::Range<usize> {
        self.block(3 + edge_idx)
    }

    pub fn beta(&self, edge_idx: usize) -> std::ops::Range<usize> {
        self.block(3 + self.num_edges + edge_idx)
    }

    pub fn extra(&self) -> std::ops::Range<usize> {
        self.block(3 + 2 * self.num_edges)
    }

    /// Sums an untied gradient into free coordinates.
    pub fn tie_gradient(&self, full: &[f64]) -> Vec<f64> {
        let mut free = vec![0.0; self.free_len];
        self.tie_gradient_into(full, &mut free);
        free
    }

    pub fn tie_gradient_into(&self, full: &[f64], free: &mut [f64]) {
        for b in &self.blocks {
            for k in 0..b.len {
                free[b.free_offset + k] += full[b.full_offset + k];
            }
        }
    }
}

/// Full parameter set `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub gamma: Vec<f64>,
    pub q: PrecisionRepr,
    pub r: PrecisionRepr,
    edges: Vec<Edge>,
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    pub extra: Vec<f64>,
    sharing: Vec<Vec<Slot>>,
    layout: ParamLayout,
}

impl ModelParams {
    /// Builds parameters; `alpha` and `beta` list one vector per edge.
    pub fn new(
        gamma: Vec<f64>,
        q: PrecisionRepr,
        r: PrecisionRepr,
        alpha: Vec<(Edge, Vec<f64>)>,
        beta: Vec<(Edge, Vec<f64>)>,
    ) -> Result<Self> {
        let mut alpha = alpha;
        let mut beta = beta;
        alpha.sort_by_key(|(e, _)| *e);
        beta.sort_by_key(|(e, _)| *e);
        let edges: Vec<Edge> = alpha.iter().map(|(e, _)| *e).collect();
        let beta_edges: Vec<Edge> = beta.iter().map(|(e, _)| *e).collect();
        if edges != beta_edges {
            return Err(Error::Shape(
                "alpha and beta must be given for the same edges".into(),
            ));
        }
        if edges.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Shape("duplicate edge in alpha/beta".into()));
        }
        let mut p = ModelParams {
            gamma,
            q,
            r,
            edges,
            alpha: alpha.into_iter().map(|(_, v)| v).collect(),
            beta: beta.into_iter().map(|(_, v)| v).collect(),
            extra: Vec::new(),
            sharing: Vec::new(),
            layout: ParamLayout {
                blocks: Vec::new(),
                full_len: 0,
                free_len: 0,
                num_edges: 0,
            },
        };
        p.rebuild_layout()?;
        Ok(p)
    }

    pub fn with_extra(mut self, extra: Vec<f64>) -> Result<Self> {
        self.extra = extra;
        self.rebuild_layout()?;
        Ok(self)
    }

    /// Declares tie classes. Every slot of a class must hold identical values.
    pub fn with_sharing(mut self, sharing: Vec<Vec<Slot>>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for class in &sharing {
            let mut reference: Option<&Vec<f64>> = None;
            for slot in class {
                if !seen.insert(*slot) {
                    return Err(Error::Validation(format!(
                        "{slot} appears in more than one tie class"
                    )));
                }
                let v = self.slot_values(*slot)?;
                match reference {
                    None => reference = Some(v),
                    Some(r) if r == v => {}
                    Some(_) => {
                        return Err(Error::Validation(format!(
                            "{slot} is tied but holds different values from its class"
                        )))
                    }
                }
            }
        }
        self.sharing = sharing.into_iter().filter(|c| c.len() > 1).collect();
        for class in &mut self.sharing {
            class.sort();
        }
        self.rebuild_layout()?;
        Ok(self)
    }

    fn slot_values(&self, slot: Slot) -> Result<&Vec<f64>> {
        match slot {
            Slot::Alpha(e) => self.edge_pos(e).map(|i| &self.alpha[i]),
            Slot::Beta(e) => self.edge_pos(e).map(|i| &self.beta[i]),
        }
    }

    fn edge_pos(&self, e: Edge) -> Result<usize> {
        self.edges
            .binary_search(&e)
            .map_err(|_| Error::UnknownEdge { edge: e })
    }

    fn rebuild_layout(&mut self) -> Result<()> {
        let ne = self.edges.len();
        let mut blocks = Vec::with_capacity(3 + 2 * ne + 1);
        let mut lens = vec![
            (BlockId::Gamma, self.gamma.len()),
            (BlockId::Q, self.q.values.len()),
            (BlockId::R, self.r.values.len()),
        ];
        lens.extend((0..ne).map(|i| (BlockId::Alpha(i), self.alpha[i].len())));
        lens.extend((0..ne).map(|i| (BlockId::Beta(i), self.beta[i].len())));
        lens.push((BlockId::Extra, self.extra.len()));

        // tie class representative for each tied block
        let block_of = |s: &Slot| -> Result<BlockId> {
            Ok(match s {
                Slot::Alpha(e) => BlockId::Alpha(self.edge_pos(*e)?),
                Slot::Beta(e) => BlockId::Beta(self.edge_pos(*e)?),
            })
        };
        let mut rep_of: std::collections::HashMap<BlockId, BlockId> = Default::default();
        for class in &self.sharing {
            let ids: Vec<BlockId> = class.iter().map(block_of).collect::<Result<_>>()?;
            let len_of = |id: &BlockId| lens.iter().find(|(b, _)| b == id).map(|(_, l)| *l);
            let first_len = len_of(&ids[0]);
            if ids.iter().any(|id| len_of(id) != first_len) {
                return Err(Error::Shape("tied slots must have equal lengths".into()));
            }
            // representative is the first in canonical block order
            let order = |id: &BlockId| lens.iter().position(|(b, _)| b == id).unwrap_or(usize::MAX);
            let rep = *ids
                .iter()
                .min_by_key(|id| order(id))
                .expect("non-empty class");
            for id in ids {
                rep_of.insert(id, rep);
            }
        }

        let mut full = 0;
        let mut free = 0;
        for (id, len) in lens {
            let rep = rep_of.get(&id).copied().unwrap_or(id);
            let (free_offset, representative) = if rep == id {
                let off = free;
                free += len;
                (off, true)
            } else {
                let r: &Block = blocks
                    .iter()
                    .find(|b: &&Block| b.id == rep)
                    .expect("representative precedes its class members");
                (r.free_offset, false)
            };
            blocks.push(Block {
                id,
                len,
                full_offset: full,
                free_offset,
                representative,
            });
            full += len;
        }
        self.layout = ParamLayout {
            blocks,
            full_len: full,
            free_len: free,
            num_edges: ne,
        };
        Ok(())
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn sharing(&self) -> &[Vec<Slot>] {
        &self.sharing
    }

    /// Link coefficients by canonical edge index.
    pub fn alpha_at(&self, edge_idx: usize) -> &[f64] {
        &self.alpha[edge_idx]
    }

    pub fn beta_at(&self, edge_idx: usize) -> &[f64] {
        &self.beta[edge_idx]
    }

    pub fn alpha(&self, edge: Edge) -> Result<&[f64]> {
        Ok(&self.alpha[self.edge_pos(edge)?])
    }

    pub fn beta(&self, edge: Edge) -> Result<&[f64]> {
        Ok(&self.beta[self.edge_pos(edge)?])
    }

    /// Sets a slot and every slot tied to it.
    pub fn set_slot(&mut self, slot: Slot, values: Vec<f64>) -> Result<()> {
        let current = self.slot_values(slot)?.len();
        if values.len() != current {
            return Err(Error::Shape(format!(
                "{slot} has length {current}, got {}",
                values.len()
            )));
        }
        let class: Vec<Slot> = self
            .sharing
            .iter()
            .find(|c| c.contains(&slot))
            .cloned()
            .unwrap_or_else(|| vec![slot]);
        for s in class {
            match s {
                Slot::Alpha(e) => {
                    let i = self.edge_pos(e)?;
                    self.alpha[i] = values.clone();
                }
                Slot::Beta(e) => {
                    let i = self.edge_pos(e)?;
                    self.beta[i] = values.clone();
                }
            }
        }
        Ok(())
    }

    fn block_values(&self, id: BlockId) -> &[f64] {
        match id {
            BlockId::Gamma => &self.gamma,
            BlockId::Q => &self.q.values,
            BlockId::R => &self.r.values,
            BlockId::Alpha(i) => &self.alpha[i],
            BlockId::Beta(i) => &self.beta[i],
            BlockId::Extra => &self.extra,
        }
    }

    fn block_values_mut(&mut self, id: BlockId) -> &mut [f64] {
        match id {
            BlockId::Gamma => &mut self.gamma,
            BlockId::Q => &mut self.q.values,
            BlockId::R => &mut self.r.values,
            BlockId::Alpha(i) => &mut self.alpha[i],
            BlockId::Beta(i) => &mut self.beta[i],
            BlockId::Extra => &mut self.extra,
        }
    }

    /// Free parameter vector, one scalar per tie class coordinate.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.layout.free_len];
        for b in self.layout.blocks.iter().filter(|b| b.representative) {
            v[b.free_offset..b.free_offset + b.len].copy_from_slice(self.block_values(b.id));
        }
        v
    }

    /// Writes a free vector back into every (tied) slot.
    pub fn unflatten(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.layout.free_len {
            return Err(Error::Shape(format!(
                "expected {} free parameters, got {}",
                self.layout.free_len,
                v.len()
            )));
        }
        let blocks = self.layout.blocks.clone();
        for b in blocks {
            self.block_values_mut(b.id)
                .copy_from_slice(&v[b.free_offset..b.free_offset + b.len]);
        }
        Ok(())
    }

    /// Copy of `self` with the given free vector.
    pub fn with_flat(&self, v: &[f64]) -> Result<Self> {
        let mut p = self.clone();
        p.unflatten(v)?;
        Ok(p)
    }

    /// Human-readable names of the free coordinates.
    pub fn free_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.layout.free_len];
        for b in self.layout.blocks.iter().filter(|b| b.representative) {
            for k in 0..b.len {
                names[b.free_offset + k] = match b.id {
                    BlockId::Gamma => format!("gamma_{}", k + 1),
                    BlockId::Q => format!("q_{}", k + 1),
                    BlockId::R => format!("r_{}", k + 1),
                    BlockId::Alpha(i) => {
                        format!(
                            "alpha_{}_{}_{}",
                            self.edges[i].from,
                            self.edges[i].to,
                            k + 1
                        )
                    }
                    BlockId::Beta(i) => {
                        format!("beta_{}_{}_{}", self.edges[i].from, self.edges[i].to, k + 1)
                    }
                    BlockId::Extra => format!("extra_{}", k + 1),
                };
            }
        }
        names
    }

    /// Same shape, sharing and methods, with zero vectors and identity
    /// covariances.
    pub fn zeros_like(&self) -> Self {
        let mut p = self.clone();
        p.gamma.iter_mut().for_each(|v| *v = 0.0);
        p.q = PrecisionRepr::identity(p.q.method, p.q.dim);
        p.r = PrecisionRepr::identity(p.r.method, p.r.dim);
        p.alpha.iter_mut().flatten().for_each(|v| *v = 0.0);
        p.beta.iter_mut().flatten().for_each(|v| *v = 0.0);
        p
    }
}
