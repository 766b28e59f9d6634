//! Relationship regularization: a Gaussian kernel over pairs of function
//! outputs, and energies measuring how smoothly the kernel columns vary over
//! the data graph.
//!
//! Every energy here is a function of `K_ij = exp(-‖f_i − f_j‖² / σ_f²)`.
//! Gradients go through the pairwise derivative
//!
//! ```text
//! ∂K_ij/∂f_i = −2 (f_i − f_j) K_ij / σ_f²,   ∂K_ij/∂f_j = −∂K_ij/∂f_i
//! ```
//!
//! with `f_i` a row vector, so the same code serves scalar and vector outputs.
//! Accumulation runs row-major over `i` then `j`.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView1};

use crate::dataset::RelationLabelSet;
use crate::error::{Error, Result};
use crate::graph::{nearest_neighbors, LaplacianKind, LaplacianOp};

/// Gaussian relationship function with bandwidth `σ_f²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationshipKernel {
    sigma_f_sq: f64,
}

impl RelationshipKernel {
    pub fn new(sigma_f_sq: f64) -> Result<Self> {
        if !(sigma_f_sq > 0.0 && sigma_f_sq.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma_f^2 must be positive, got {sigma_f_sq}"
            )));
        }
        Ok(Self { sigma_f_sq })
    }

    pub fn sigma_f_sq(&self) -> f64 {
        self.sigma_f_sq
    }

    /// `exp(-‖a − b‖² / σ_f²)`; one-element slices give the scalar kernel.
    pub fn value(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        (-d2 / self.sigma_f_sq).exp()
    }

    pub fn value_rows(&self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
        (-d2 / self.sigma_f_sq).exp()
    }

    /// Adds `dE/dK_ij · ∂K_ij/∂f` to rows `i` and `j` of `grad`.
    fn add_pair(&self, grad: &mut [f64], f: &[f64], n: usize, i: usize, j: usize, de_dk: f64, k_ij: f64) {
        let c = -2.0 * de_dk * k_ij / self.sigma_f_sq;
        for d in 0..n {
            let diff = c * (f[i * n + d] - f[j * n + d]);
            grad[i * n + d] += diff;
            grad[j * n + d] -= diff;
        }
    }
}

/// Kernel values `K_ij` for all pairs or for the pairs of a sparsity pattern.
#[derive(Debug, Clone, PartialEq)]
pub enum KMatrix {
    Dense(Array2<f64>),
    /// Row lists over the pattern, including the diagonal.
    Sparse(Vec<Vec<(usize, f64)>>),
}

impl KMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        match self {
            KMatrix::Dense(k) => Some(k[[i, j]]),
            KMatrix::Sparse(rows) => rows[i]
                .binary_search_by_key(&j, |&(c, _)| c)
                .ok()
                .map(|p| rows[i][p].1),
        }
    }

    pub fn stored_entries(&self) -> usize {
        match self {
            KMatrix::Dense(k) => k.len(),
            KMatrix::Sparse(rows) => rows.iter().map(Vec::len).sum(),
        }
    }

    pub fn as_dense(&self) -> Option<&Array2<f64>> {
        match self {
            KMatrix::Dense(k) => Some(k),
            KMatrix::Sparse(_) => None,
        }
    }
}

/// Which kernel entries take part in the sparse relationship energy.
///
/// Each point selects its `size` nearest input-space neighbors; the indicator
/// `g` is the union of these selections mirrored for symmetry, plus the
/// diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    selected: Vec<Vec<usize>>,
    rows: Vec<Vec<usize>>,
    bound: usize,
}

impl SparsityPattern {
    pub fn from_knn(points: &Array2<f64>, size: usize) -> Result<Self> {
        let u = points.nrows();
        if size >= u - 1 {
            return Self::from_selection(vec![(0..u).collect(); u], u);
        }
        let knn = nearest_neighbors(points, size)?;
        Self::from_selection(knn.into_iter().map(|n| n.into_iter().map(|(j, _)| j).collect()).collect(), size)
    }

    /// Every pair (`g ≡ 1`).
    pub fn full(u: usize) -> Self {
        Self::from_selection(vec![(0..u).collect(); u], u).unwrap()
    }

    /// Builds a pattern from per-point neighbor selections (self entries are ignored).
    pub fn from_selection(selected: Vec<Vec<usize>>, bound: usize) -> Result<Self> {
        let u = selected.len();
        let mut sets: Vec<BTreeSet<usize>> = (0..u).map(|i| BTreeSet::from([i])).collect();
        let mut clean = Vec::with_capacity(u);
        for (i, sel) in selected.into_iter().enumerate() {
            let sel: Vec<usize> = sel.into_iter().filter(|&j| j != i).collect();
            if sel.len() > bound {
                return Err(Error::InvalidArgument(format!(
                    "point {i} selects {} neighbors, bound is {bound}",
                    sel.len()
                )));
            }
            for &j in &sel {
                if j >= u {
                    return Err(Error::InvalidArgument(format!("neighbor {j} out of range")));
                }
                sets[i].insert(j);
                sets[j].insert(i);
            }
            clean.push(sel);
        }
        Ok(Self {
            selected: clean,
            rows: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
            bound,
        })
    }

    pub fn n_points(&self) -> usize {
        self.rows.len()
    }

    /// The configured `|N_K|`.
    pub fn bound(&self) -> usize {
        self.bound
    }

    /// Neighbors chosen by point `i` itself, at most `bound()` of them.
    pub fn selected(&self, i: usize) -> &[usize] {
        &self.selected[i]
    }

    /// Sorted indices `j` with `g_ij = 1`, including `i`.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.rows[i].binary_search(&j).is_ok()
    }
}

pub fn kernel_value(a: &[f64], b: &[f64], kernel: &RelationshipKernel) -> f64 {
    kernel.value(a, b)
}

fn row_major(f: &Array2<f64>) -> (Vec<f64>, usize, usize) {
    let (u, n) = f.dim();
    (f.as_standard_layout().iter().copied().collect(), u, n)
}

fn dense_k(f: &[f64], u: usize, n: usize, kernel: &RelationshipKernel) -> Array2<f64> {
    let mut k = Array2::zeros((u, u));
    for i in 0..u {
        k[[i, i]] = 1.0;
        let fi = &f[i * n..(i + 1) * n];
        for j in i + 1..u {
            let v = kernel.value(fi, &f[j * n..(j + 1) * n]);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// Kernel matrix of the rows of `f`, restricted to `pattern` when given.
pub fn kernel_matrix(f: &Array2<f64>, kernel: &RelationshipKernel, pattern: Option<&SparsityPattern>) -> KMatrix {
    let (flat, u, n) = row_major(f);
    match pattern {
        None => KMatrix::Dense(dense_k(&flat, u, n, kernel)),
        Some(p) => KMatrix::Sparse(
            (0..u)
                .map(|i| {
                    p.row(i)
                        .iter()
                        .map(|&j| (j, kernel.value(&flat[i * n..(i + 1) * n], &flat[j * n..(j + 1) * n])))
                        .collect()
                })
                .collect(),
        ),
    }
}

/// `tr[Kᵀ Lᵖ K]`.
pub fn rel_energy(k: &Array2<f64>, op: &LaplacianOp) -> f64 {
    let gk = op.apply(k);
    k.iter().zip(gk.iter()).map(|(a, b)| a * b).sum()
}

/// `tr[Kᵀ Lᵖ K]` and its gradient with respect to `f`.
///
/// With `M = Lᵖ K`, `∂E/∂K = 2M`, so
/// `∂E/∂f_t = −(4/σ_f²) Σ_j (M_tj + M_jt) K_tj (f_t − f_j)`.
pub fn rel_energy_gradient(f: &Array2<f64>, kernel: &RelationshipKernel, op: &LaplacianOp) -> (f64, Array2<f64>) {
    let (flat, u, n) = row_major(f);
    let k = dense_k(&flat, u, n, kernel);
    let m = op.apply(&k);
    let energy = k.iter().zip(m.iter()).map(|(a, b)| a * b).sum();

    let scale = -4.0 / kernel.sigma_f_sq();
    let k = k.as_slice().unwrap();
    let m = m.as_slice().unwrap();
    let mut grad = vec![0.0; u * n];
    let mut acc = vec![0.0; n];
    for t in 0..u {
        let mut row_sum = 0.0;
        acc.iter_mut().for_each(|a| *a = 0.0);
        for j in 0..u {
            let p = (m[t * u + j] + m[j * u + t]) * k[t * u + j];
            row_sum += p;
            for (a, &v) in acc.iter_mut().zip(&flat[j * n..(j + 1) * n]) {
                *a += p * v;
            }
        }
        for d in 0..n {
            grad[t * n + d] = scale * (row_sum * flat[t * n + d] - acc[d]);
        }
    }
    (energy, Array2::from_shape_vec((u, n), grad).unwrap())
}

fn sparse_scaling(op: &LaplacianOp) -> Vec<f64> {
    match op.kind() {
        LaplacianKind::Unnormalized => vec![1.0; op.dim()],
        LaplacianKind::SymmetricNormalized => op.graph().degrees().iter().map(|d| 1.0 / d.sqrt()).collect(),
    }
}

/// Neighborhood-restricted relationship energy and its gradient:
///
/// ```text
/// E = Σ_i Σ_{j,k} (s_j K_ij − s_k K_ik)² W_jk g_ij g_ik
/// ```
///
/// where `s ≡ 1` for the unnormalized Laplacian and `s_j = 1/√d_j` for the
/// normalized one. With `g ≡ 1` this is `2 tr[Kᵀ L K]`. Requires `p = 1`.
pub fn sparse_rel_energy(
    f: &Array2<f64>,
    kernel: &RelationshipKernel,
    op: &LaplacianOp,
    pattern: &SparsityPattern,
) -> Result<(f64, Array2<f64>)> {
    let (flat, u, n) = row_major(f);
    if op.power() != 1 {
        return Err(Error::InvalidArgument(
            "the sparse relationship energy is defined for p = 1 only".into(),
        ));
    }
    if pattern.n_points() != u || op.dim() != u {
        return Err(Error::Shape(format!(
            "f has {u} rows, pattern {}, graph {}",
            pattern.n_points(),
            op.dim()
        )));
    }
    let s = sparse_scaling(op);
    let graph = op.graph();
    let mut slot = vec![usize::MAX; u];
    let mut kvals = Vec::new();
    let mut de_dk = Vec::new();
    let mut grad = vec![0.0; u * n];
    let mut energy = 0.0;
    for i in 0..u {
        let row = pattern.row(i);
        let fi = &flat[i * n..(i + 1) * n];
        kvals.clear();
        kvals.extend(row.iter().map(|&j| kernel.value(fi, &flat[j * n..(j + 1) * n])));
        de_dk.clear();
        de_dk.resize(row.len(), 0.0);
        for (p, &j) in row.iter().enumerate() {
            slot[j] = p;
        }
        for (pj, &j) in row.iter().enumerate() {
            let a_j = s[j] * kvals[pj];
            for &(k, w) in graph.neighbors(j) {
                let pk = slot[k];
                if pk == usize::MAX {
                    continue;
                }
                let diff = a_j - s[k] * kvals[pk];
                energy += w * diff * diff;
                de_dk[pj] += 4.0 * s[j] * w * diff;
            }
        }
        for (p, &j) in row.iter().enumerate() {
            slot[j] = usize::MAX;
            if j != i {
                kernel.add_pair(&mut grad, &flat, n, i, j, de_dk[p], kvals[p]);
            }
        }
    }
    Ok((energy, Array2::from_shape_vec((u, n), grad).unwrap()))
}

/// `‖(K − T)∘Q‖²_F` with each labeled unordered pair counted in both
/// directions; `T = 1` for must-link and `0` for cannot-link.
pub fn label_energy(k: &KMatrix, labels: &RelationLabelSet) -> Result<f64> {
    labels
        .entries()
        .iter()
        .map(|r| {
            let v = k.get(r.i, r.j).ok_or_else(|| {
                Error::InvalidArgument(format!("pair ({}, {}) not stored in K", r.i, r.j))
            })?;
            Ok(2.0 * (v - r.kind.target()).powi(2))
        })
        .sum()
}

/// Label energy and its gradient computed straight from `f`.
pub fn label_energy_gradient(
    f: &Array2<f64>,
    kernel: &RelationshipKernel,
    labels: &RelationLabelSet,
) -> Result<(f64, Array2<f64>)> {
    let (flat, u, n) = row_major(f);
    if labels.max_index().is_some_and(|m| m >= u) {
        return Err(Error::InvalidArgument(format!(
            "relation label index out of range for {u} points"
        )));
    }
    let mut grad = vec![0.0; u * n];
    let mut energy = 0.0;
    for r in labels.entries() {
        let k_ij = kernel.value(&flat[r.i * n..(r.i + 1) * n], &flat[r.j * n..(r.j + 1) * n]);
        let resid = k_ij - r.kind.target();
        energy += 2.0 * resid * resid;
        kernel.add_pair(&mut grad, &flat, n, r.i, r.j, 4.0 * resid, k_ij);
    }
    Ok((energy, Array2::from_shape_vec((u, n), grad).unwrap()))
}
