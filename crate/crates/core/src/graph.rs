//! k-NN similarity graphs, graph Laplacians and spectral helpers.
//!
//! Edge weights are `exp(-dist / sigma_x_sq)` where `dist` is the Euclidean
//! distance (or its square when requested). The k-NN relation is symmetrized
//! by union. Laplacian products are accumulated row by row, each row summing
//! its neighbors in ascending index order, so results do not depend on
//! anything but the inputs.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Bandwidth choice for the Gaussian edge weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// Mean distance of a point to its `k_N` nearest neighbors.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    pub k_n: usize,
    pub bandwidth: Bandwidth,
    /// Use `‖x_i - x_j‖²` instead of `‖x_i - x_j‖` in the weight exponent.
    pub squared_distance: bool,
}

impl GraphParams {
    pub fn new(k_n: usize, bandwidth: Bandwidth) -> Self {
        Self {
            k_n,
            bandwidth,
            squared_distance: false,
        }
    }
}

/// Sparse symmetric similarity graph with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    /// Per-vertex `(neighbor, weight)` lists sorted by neighbor index.
    adjacency: Vec<Vec<(usize, f64)>>,
    degrees: Vec<f64>,
    k_n: usize,
    sigma_x_sq: f64,
}

impl Graph {
    /// Builds a graph from a dense weight matrix. The matrix must be square,
    /// symmetric, zero on the diagonal and have entries in `[0, 1]`.
    pub fn from_dense(w: ArrayView2<f64>) -> Result<Self> {
        let u = w.nrows();
        if w.ncols() != u {
            return Err(Error::Shape(format!("weight matrix is {u}x{}", w.ncols())));
        }
        let mut adjacency = vec![Vec::new(); u];
        for i in 0..u {
            if w[[i, i]] != 0.0 {
                return Err(Error::InvalidArgument(format!("nonzero diagonal at {i}")));
            }
            for j in 0..u {
                let v = w[[i, j]];
                if v != w[[j, i]] || !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidArgument(format!(
                        "weight ({i}, {j}) = {v} is asymmetric or outside [0, 1]"
                    )));
                }
                if v > 0.0 {
                    adjacency[i].push((j, v));
                }
            }
        }
        Ok(Self::from_adjacency(adjacency, 0, f64::NAN))
    }

    fn from_adjacency(adjacency: Vec<Vec<(usize, f64)>>, k_n: usize, sigma_x_sq: f64) -> Self {
        let degrees = adjacency
            .iter()
            .map(|row| row.iter().map(|&(_, w)| w).sum())
            .collect();
        Self {
            adjacency,
            degrees,
            k_n,
            sigma_x_sq,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn k_n(&self) -> usize {
        self.k_n
    }

    /// Bandwidth used to build the weights (NaN for graphs built from a matrix).
    pub fn sigma_x_sq(&self) -> f64 {
        self.sigma_x_sq
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .map_or(0.0, |p| self.adjacency[i][p].1)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let u = self.n_vertices();
        let mut w = Array2::zeros((u, u));
        for (i, row) in self.adjacency.iter().enumerate() {
            for &(j, v) in row {
                w[[i, j]] = v;
            }
        }
        w
    }

    /// Component id per vertex, numbered in order of first appearance.
    pub fn connected_components(&self) -> (usize, Vec<usize>) {
        let u = self.n_vertices();
        let mut comp = vec![usize::MAX; u];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..u {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = count;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &(w, _) in &self.adjacency[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = count;
                        stack.push(w);
                    }
                }
            }
            count += 1;
        }
        (count, comp)
    }

    /// Writes the upper triangle as `i j w` lines.
    pub fn write_edges(&self, mut out: impl Write) -> Result<()> {
        for (i, row) in self.adjacency.iter().enumerate() {
            for &(j, w) in row.iter().filter(|&&(j, _)| j > i) {
                writeln!(out, "{i} {j} {w:e}")?;
            }
        }
        Ok(())
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Indices of the `k` nearest other points of every row, closest first, ties
/// broken by lower index. Returns `(index, euclidean distance)` pairs.
pub fn nearest_neighbors(points: &Array2<f64>, k: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    let u = points.nrows();
    if k == 0 || k >= u {
        return Err(Error::InvalidArgument(format!("k_N = {k} must lie in [1, {u})")));
    }
    let points = points.as_standard_layout();
    let rows: Vec<&[f64]> = points.rows().into_iter().map(|r| r.to_slice().unwrap()).collect();
    let mut dist = vec![0.0; u * u];
    for i in 0..u {
        for j in i + 1..u {
            let d = euclidean(rows[i], rows[j]);
            dist[i * u + j] = d;
            dist[j * u + i] = d;
        }
    }
    Ok((0..u)
        .map(|i| {
            let row = &dist[i * u..(i + 1) * u];
            let mut order: Vec<usize> = (0..u).filter(|&j| j != i).collect();
            // indices are already ascending, so a stable partial sort keeps lowest-index ties first
            order.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
            order.truncate(k);
            order.into_iter().map(|j| (j, row[j])).collect()
        })
        .collect())
}

/// Mean over all points of the mean distance to their `k_n` nearest neighbors.
pub fn adaptive_sigma(points: &Array2<f64>, k_n: usize) -> Result<f64> {
    let knn = nearest_neighbors(points, k_n)?;
    let total: f64 = knn
        .iter()
        .map(|nbrs| nbrs.iter().map(|&(_, d)| d).sum::<f64>() / k_n as f64)
        .sum();
    Ok(total / points.nrows() as f64)
}

/// Builds the union-symmetrized k-NN graph with Gaussian weights.
pub fn knn_graph(points: &Array2<f64>, params: &GraphParams) -> Result<Graph> {
    let k_n = params.k_n;
    let knn = nearest_neighbors(points, k_n)?;
    let sigma_x_sq = match params.bandwidth {
        Bandwidth::Fixed(s) => s,
        Bandwidth::Adaptive => {
            knn.iter()
                .map(|nbrs| nbrs.iter().map(|&(_, d)| d).sum::<f64>() / k_n as f64)
                .sum::<f64>()
                / points.nrows() as f64
        }
    };
    if !(sigma_x_sq > 0.0 && sigma_x_sq.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sigma_x^2 must be positive and finite, got {sigma_x_sq}"
        )));
    }
    let u = points.nrows();
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); u];
    for (i, nbrs) in knn.iter().enumerate() {
        for &(j, d) in nbrs {
            let d = if params.squared_distance { d * d } else { d };
            let w = (-d / sigma_x_sq).exp();
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
    }
    for row in &mut adjacency {
        row.sort_by_key(|&(j, _)| j);
        // mutual neighbors appear twice with identical weights
        row.dedup_by_key(|&mut (j, _)| j);
    }
    Ok(Graph::from_adjacency(adjacency, k_n, sigma_x_sq))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianKind {
    /// `L = D - W`
    Unnormalized,
    /// `L = I - D^{-1/2} W D^{-1/2}`
    SymmetricNormalized,
}

impl FromStr for LaplacianKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unnormalized" => Ok(LaplacianKind::Unnormalized),
            "normalized" | "symmetric" => Ok(LaplacianKind::SymmetricNormalized),
            other => Err(Error::InvalidArgument(format!("unknown laplacian kind `{other}`"))),
        }
    }
}

impl fmt::Display for LaplacianKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LaplacianKind::Unnormalized => "unnormalized",
            LaplacianKind::SymmetricNormalized => "normalized",
        })
    }
}

/// The operator `x ↦ L^p x`, applied as `p` sparse products.
#[derive(Debug, Clone)]
pub struct LaplacianOp {
    graph: Graph,
    kind: LaplacianKind,
    power: u32,
    diagonal: Vec<f64>,
    /// Off-diagonal entries of `L` per row, already negated.
    off: Vec<Vec<(usize, f64)>>,
}

impl LaplacianOp {
    pub fn new(graph: Graph, kind: LaplacianKind, power: u32) -> Result<Self> {
        if power == 0 {
            return Err(Error::InvalidArgument("laplacian power must be at least 1".into()));
        }
        let u = graph.n_vertices();
        let (diagonal, off) = match kind {
            LaplacianKind::Unnormalized => (
                graph.degrees.clone(),
                graph
                    .adjacency
                    .iter()
                    .map(|row| row.iter().map(|&(j, w)| (j, -w)).collect())
                    .collect(),
            ),
            LaplacianKind::SymmetricNormalized => {
                if let Some(i) = graph.degrees.iter().position(|&d| d <= 0.0) {
                    return Err(Error::IsolatedVertex(i));
                }
                let inv_sqrt: Vec<f64> = graph.degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
                (
                    vec![1.0; u],
                    graph
                        .adjacency
                        .iter()
                        .enumerate()
                        .map(|(i, row)| {
                            row.iter()
                                .map(|&(j, w)| (j, -w * inv_sqrt[i] * inv_sqrt[j]))
                                .collect()
                        })
                        .collect(),
                )
            }
        };
        Ok(Self {
            graph,
            kind,
            power,
            diagonal,
            off,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn power(&self) -> u32 {
        self.power
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    /// Same graph and kind with a different power.
    pub fn with_power(&self, power: u32) -> Result<Self> {
        if power == 0 {
            return Err(Error::InvalidArgument("laplacian power must be at least 1".into()));
        }
        Ok(Self {
            power,
            ..self.clone()
        })
    }

    /// Off-diagonal entries of row `i` of `L` (not `L^p`).
    pub fn row_entries(&self, i: usize) -> (f64, &[(usize, f64)]) {
        (self.diagonal[i], &self.off[i])
    }

    /// One product `L x` for every column of `x` (u×m, row-major).
    fn apply_once(&self, x: &Array2<f64>) -> Array2<f64> {
        let (u, m) = x.dim();
        let x = x.as_standard_layout();
        let src = x.as_slice().unwrap();
        let mut out = vec![0.0; u * m];
        for i in 0..u {
            let dst = &mut out[i * m..(i + 1) * m];
            let a = self.diagonal[i];
            for (o, &v) in dst.iter_mut().zip(&src[i * m..(i + 1) * m]) {
                *o = a * v;
            }
            for &(j, w) in &self.off[i] {
                for (o, &v) in dst.iter_mut().zip(&src[j * m..(j + 1) * m]) {
                    *o += w * v;
                }
            }
        }
        Array2::from_shape_vec((u, m), out).unwrap()
    }

    /// `L^p X`, column by column.
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.dim(), "operator dimension mismatch");
        let mut y = self.apply_once(x);
        for _ in 1..self.power {
            y = self.apply_once(&y);
        }
        y
    }

    pub fn apply_vec(&self, x: &Array1<f64>) -> Array1<f64> {
        let col = x.clone().insert_axis(ndarray::Axis(1));
        self.apply(&col).remove_axis(ndarray::Axis(1))
    }

    /// Dense `L^p`. Intended for direct solves at desk scale.
    pub fn to_dense(&self) -> Array2<f64> {
        self.apply(&Array2::eye(self.dim()))
    }
}

/// Eigenpairs `e_2 ... e_n` of a Laplacian in ascending eigenvalue order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// u × (n − 1), unit columns, first nonzero entry of each column positive.
    pub vectors: Array2<f64>,
}

const SIGN_EPS: f64 = 1e-12;

/// Dense symmetric eigendecomposition of `L` (power 1), skipping the first
/// eigenvector and returning the next `n - 1`.
pub fn smallest_eigenvectors(op: &LaplacianOp, n: usize) -> Result<Spectrum> {
    let u = op.dim();
    if n < 2 || n > u {
        return Err(Error::InvalidArgument(format!("need 2 <= n <= {u}, got {n}")));
    }
    if op.power() != 1 {
        return Err(Error::InvalidArgument(
            "spectral embedding needs the plain laplacian (p = 1)".into(),
        ));
    }
    let l = op.to_dense();
    let dense = DMatrix::from_fn(u, u, |i, j| l[[i, j]]);
    let eig = dense
        .try_symmetric_eigen(f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Eigensolver(format!("symmetric QR did not converge for u = {u}")))?;
    let mut order: Vec<usize> = (0..u).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

    let scale = 1.0 + eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut vectors = Array2::zeros((u, n - 1));
    let mut values = Vec::with_capacity(n - 1);
    for (c, &k) in order[1..n].iter().enumerate() {
        let lambda = eig.eigenvalues[k];
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        if v.iter().find(|x| x.abs() > SIGN_EPS).is_some_and(|&x| x < 0.0) {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let col = Array1::from(v);
        let residual = (&op.apply_vec(&col) - &(lambda * &col))
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        if residual > 1e-8 * scale {
            return Err(Error::Eigensolver(format!(
                "eigenpair {} has residual {residual:e}",
                c + 2
            )));
        }
        vectors.column_mut(c).assign(&col);
        values.push(lambda);
    }
    Ok(Spectrum { values, vectors })
}

/// Normalized cut `Σ_A cut(A, Ā) / vol(A)` of a partition given by cluster ids
/// `0..k`.
pub fn ncut(graph: &Graph, assignment: &[usize]) -> Result<f64> {
    let u = graph.n_vertices();
    if assignment.len() != u {
        return Err(Error::Shape(format!(
            "{} assignments for {u} vertices",
            assignment.len()
        )));
    }
    if let Some(i) = graph.degrees.iter().position(|&d| d <= 0.0) {
        return Err(Error::IsolatedVertex(i));
    }
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    let mut cut = vec![0.0; k];
    let mut vol = vec![0.0; k];
    let mut size = vec![0usize; k];
    for i in 0..u {
        let a = assignment[i];
        size[a] += 1;
        vol[a] += graph.degrees[i];
        cut[a] += graph.adjacency[i]
            .iter()
            .filter(|&&(j, _)| assignment[j] != a)
            .map(|&(_, w)| w)
            .sum::<f64>();
    }
    if let Some(c) = size.iter().position(|&s| s == 0) {
        return Err(Error::EmptyCluster(c));
    }
    Ok(cut.iter().zip(&vol).map(|(c, v)| c / v).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(u: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((u, d), |_| rng.random_range(-1.0..1.0))
    }

    fn random_graph(u: usize, seed: u64) -> Graph {
        knn_graph(&random_points(u, 2, seed), &GraphParams::new(3, Bandwidth::Fixed(0.5))).unwrap()
    }

    #[test]
    fn identical_points() {
        let p = array![[1.0, 2.0], [1.0, 2.0]];
        let g = knn_graph(&p, &GraphParams::new(1, Bandwidth::Fixed(1.0))).unwrap();
        assert_eq!(g.to_dense(), array![[0.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn unit_distance_weight() {
        let p = array![[0.0], [1.0]];
        let g = knn_graph(&p, &GraphParams::new(1, Bandwidth::Fixed(1.0))).unwrap();
        assert_relative_eq!(g.weight(0, 1), (-1.0f64).exp(), max_relative = 1e-15);
        let sq = GraphParams {
            squared_distance: true,
            ..GraphParams::new(1, Bandwidth::Fixed(0.5))
        };
        let p2 = array![[0.0], [2.0]];
        let g = knn_graph(&p2, &sq).unwrap();
        assert_relative_eq!(g.weight(0, 1), (-8.0f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn knn_matches_all_pairs_oracle() {
        let p = random_points(5, 3, 11);
        let k = 2;
        let sigma = 0.7;
        let g = knn_graph(&p, &GraphParams::new(k, Bandwidth::Fixed(sigma))).unwrap();
        // oracle: full distance matrix, per-row rank of j among others
        let u = 5;
        let d = |i: usize, j: usize| {
            (0..3).map(|c| (p[[i, c]] - p[[j, c]]).powi(2)).sum::<f64>().sqrt()
        };
        let is_knn = |i: usize, j: usize| {
            let closer = (0..u)
                .filter(|&m| m != i && m != j)
                .filter(|&m| d(i, m) < d(i, j) || (d(i, m) == d(i, j) && m < j))
                .count();
            i != j && closer < k
        };
        for i in 0..u {
            for j in 0..u {
                let expect = if is_knn(i, j) || is_knn(j, i) {
                    (-d(i, j) / sigma).exp()
                } else {
                    0.0
                };
                assert_relative_eq!(g.weight(i, j), expect, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn knn_rejects_bad_k() {
        let p = random_points(4, 2, 0);
        assert!(knn_graph(&p, &GraphParams::new(4, Bandwidth::Fixed(1.0))).is_err());
        assert!(knn_graph(&p, &GraphParams::new(0, Bandwidth::Fixed(1.0))).is_err());
    }

    #[test]
    fn adaptive_sigma_collinear() {
        let p = array![[0.0], [1.0], [2.0]];
        assert_relative_eq!(adaptive_sigma(&p, 1).unwrap(), 1.0);
    }

    #[test]
    fn adaptive_sigma_degenerate() {
        let p = Array2::from_elem((4, 2), 3.0);
        assert_eq!(adaptive_sigma(&p, 2).unwrap(), 0.0);
        assert!(knn_graph(&p, &GraphParams::new(2, Bandwidth::Adaptive)).is_err());
    }

    #[test]
    fn adaptive_sigma_matches_sort_oracle() {
        let p = random_points(20, 3, 5);
        let k = 4;
        let mut total = 0.0;
        for i in 0..20 {
            let mut ds: Vec<f64> = (0..20)
                .filter(|&j| j != i)
                .map(|j| (0..3).map(|c| (p[[i, c]] - p[[j, c]]).powi(2)).sum::<f64>().sqrt())
                .collect();
            ds.sort_by(f64::total_cmp);
            total += ds[..k].iter().sum::<f64>() / k as f64;
        }
        assert_eq!(adaptive_sigma(&p, k).unwrap(), total / 20.0);
    }

    #[test]
    fn two_node_laplacian() {
        let g = Graph::from_dense(array![[0.0, 0.5], [0.5, 0.0]].view()).unwrap();
        let op = LaplacianOp::new(g, LaplacianKind::Unnormalized, 1).unwrap();
        assert_eq!(op.to_dense(), array![[0.5, -0.5], [-0.5, 0.5]]);
    }

    #[test]
    fn constant_in_null_space() {
        let op = LaplacianOp::new(random_graph(9, 1), LaplacianKind::Unnormalized, 1).unwrap();
        let y = op.apply_vec(&Array1::from_elem(9, 2.5));
        assert!(y.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn normalized_null_vector() {
        let g = random_graph(10, 2);
        let x: Array1<f64> = g.degrees().iter().map(|d| d.sqrt()).collect();
        let op = LaplacianOp::new(g, LaplacianKind::SymmetricNormalized, 1).unwrap();
        assert!(op.apply_vec(&x).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn power_matches_dense_square() {
        let op = LaplacianOp::new(random_graph(8, 3), LaplacianKind::Unnormalized, 2).unwrap();
        let l = op.with_power(1).unwrap().to_dense();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Array1<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let oracle = l.dot(&l).dot(&x);
        let got = op.apply_vec(&x);
        let err = (&got - &oracle).iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm = oracle.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / norm < 1e-10);
    }

    #[test]
    fn isolated_vertex_rejected() {
        let g = Graph::from_dense(
            array![[0.0, 0.5, 0.0], [0.5, 0.0, 0.0], [0.0, 0.0, 0.0]].view(),
        )
        .unwrap();
        assert!(matches!(
            LaplacianOp::new(g, LaplacianKind::SymmetricNormalized, 1),
            Err(Error::IsolatedVertex(2))
        ));
    }

    fn two_triangles() -> Graph {
        let mut w = Array2::zeros((6, 6));
        for block in [0, 3] {
            for i in block..block + 3 {
                for j in block..block + 3 {
                    if i != j {
                        w[[i, j]] = 0.8;
                    }
                }
            }
        }
        Graph::from_dense(w.view()).unwrap()
    }

    #[test]
    fn disconnected_blocks_eigenvector() {
        let op = LaplacianOp::new(two_triangles(), LaplacianKind::Unnormalized, 1).unwrap();
        let s = smallest_eigenvectors(&op, 2).unwrap();
        let e = s.vectors.column(0);
        assert!(s.values[0].abs() < 1e-10);
        let signs: Vec<bool> = e.iter().map(|&v| v > 0.0).collect();
        assert!(signs[..3].iter().all(|&b| b == signs[0]));
        assert!(signs[3..].iter().all(|&b| b != signs[0]));
    }

    #[test]
    fn connected_spectrum_positive() {
        let g = random_graph(12, 4);
        assert_eq!(g.connected_components().0, 1);
        let op = LaplacianOp::new(g, LaplacianKind::SymmetricNormalized, 1).unwrap();
        let s = smallest_eigenvectors(&op, 4).unwrap();
        assert!(s.values.iter().all(|&v| v > 0.0));
        assert!(s.values.windows(2).all(|w| w[0] <= w[1]));
        for c in 0..3 {
            let col = s.vectors.column(c);
            assert_relative_eq!(col.dot(&col), 1.0, max_relative = 1e-12);
            assert!(col.iter().find(|v| v.abs() > SIGN_EPS).unwrap() > &0.0);
        }
    }

    #[test]
    fn ncut_zero_cases() {
        let g = two_triangles();
        assert_eq!(ncut(&g, &[0; 6]).unwrap(), 0.0);
        assert_eq!(ncut(&g, &[0, 0, 0, 1, 1, 1]).unwrap(), 0.0);
        assert!(matches!(ncut(&g, &[0, 0, 0, 2, 2, 2]), Err(Error::EmptyCluster(1))));
    }

    #[test]
    fn ncut_matches_edge_enumeration() {
        let g = random_graph(10, 6);
        let w = g.to_dense();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a: Vec<usize> = (0..10).map(|_| rng.random_range(0..2)).collect();
        a[0] = 0;
        a[1] = 1;
        let mut expect = 0.0;
        for c in 0..2 {
            let (mut cut, mut vol) = (0.0, 0.0);
            for i in 0..10 {
                for j in 0..10 {
                    if a[i] == c {
                        vol += w[[i, j]];
                        if a[j] != c {
                            cut += w[[i, j]];
                        }
                    }
                }
            }
            expect += cut / vol;
        }
        assert_relative_eq!(ncut(&g, &a).unwrap(), expect, max_relative = 1e-12);
    }

    #[test]
    fn edge_dump_upper_triangle() {
        let g = Graph::from_dense(array![[0.0, 0.5], [0.5, 0.0]].view()).unwrap();
        let mut buf = Vec::new();
        g.write_edges(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 1 5e-1\n");
    }
}
