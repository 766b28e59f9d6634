//! Classification and embedding objectives, the closed-form function-only
//! solution, and the conjugate-gradient solvers for the full objectives.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};
use serde::Serialize;

use crate::dataset::{RelationLabelSet, Targets};
use crate::error::{Error, Result};
use crate::graph::{smallest_eigenvectors, LaplacianOp, Spectrum};
use crate::optim::{minimize, CgOptions, Solution};
use crate::relreg::{label_energy_gradient, rel_energy_gradient, sparse_rel_energy, RelationshipKernel, SparsityPattern};

/// Label weight used when tying the embedding weights to `λ₂′`.
pub const TIED_LAMBDA3: f64 = 10.0;

/// Objective weights and optimizer budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyConfig {
    /// Weight of the function smoothness term `tr[fᵀ G f]`.
    pub lambda1: f64,
    /// Weight of the relationship smoothness term `tr[Kᵀ G K]`.
    pub lambda2: f64,
    /// Weight of the relation-label loss (embedding only).
    pub lambda3: f64,
    /// Regularizer order, `G = Lᵖ`.
    pub p: u32,
    pub sigma_f_sq: f64,
    pub cg_steps: usize,
    pub grad_tol: f64,
    /// `|N_K|` for the sparse relationship term; `None` for the dense one.
    pub sparsity: Option<usize>,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.0,
            lambda3: 0.0,
            p: 1,
            sigma_f_sq: 1.0,
            cg_steps: 50,
            grad_tol: 1e-8,
            sparsity: None,
        }
    }
}

impl EnergyConfig {
    pub fn kernel(&self) -> Result<RelationshipKernel> {
        RelationshipKernel::new(self.sigma_f_sq)
    }

    pub fn cg_options(&self) -> CgOptions {
        CgOptions {
            max_iters: self.cg_steps,
            grad_tol: self.grad_tol,
            ..CgOptions::default()
        }
    }

    /// Embedding weights driven by a single knob: `λ₁ = 0`, `λ₃ = 10` and
    /// `λ₂ = λ₂′ / s_R` (zero when there are no labels).
    pub fn tied(lambda2_prime: f64, s_r: usize, sigma_f_sq: f64) -> Self {
        Self {
            lambda1: 0.0,
            lambda2: if s_r == 0 { 0.0 } else { lambda2_prime / s_r as f64 },
            lambda3: TIED_LAMBDA3,
            sigma_f_sq,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let weights = [self.lambda1, self.lambda2, self.lambda3];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(format!("weights must be finite and >= 0: {weights:?}")));
        }
        if self.p == 0 {
            return Err(Error::InvalidArgument("p must be at least 1".into()));
        }
        if self.sparsity.is_some() && self.p > 1 {
            return Err(Error::InvalidArgument(
                "the sparse relationship term needs p = 1; powers of a sparse laplacian densify".into(),
            ));
        }
        Ok(())
    }
}

/// Operator with the configured power.
fn power_op(op: &LaplacianOp, p: u32) -> Result<LaplacianOp> {
    if op.power() == p {
        Ok(op.clone())
    } else {
        op.with_power(p)
    }
}

fn check_rows(f: &Array2<f64>, u: usize, what: &str) -> Result<()> {
    if f.nrows() != u {
        return Err(Error::Shape(format!("{what} has {} rows, expected {u}", f.nrows())));
    }
    Ok(())
}

/// Solves `(H + λ₁ G) f = H t` column by column with a dense Cholesky
/// factorization, where `G` is the operator's `Lᵖ`.
pub fn solve_irr(targets: &Targets, op: &LaplacianOp, lambda1: f64) -> Result<Array2<f64>> {
    let u = op.dim();
    check_rows(&targets.values, u, "targets")?;
    if !(lambda1.is_finite() && lambda1 >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda1 must be >= 0, got {lambda1}")));
    }
    let labeled = |i: usize| targets.mask[i] != 0.0;
    if lambda1 == 0.0 {
        if let Some(i) = (0..u).find(|&i| !labeled(i)) {
            return Err(Error::Singular(format!(
                "lambda1 = 0 leaves unlabeled point {i} unconstrained"
            )));
        }
    } else {
        let (count, comp) = op.graph().connected_components();
        let mut anchored = vec![false; count];
        (0..u).filter(|&i| labeled(i)).for_each(|i| anchored[comp[i]] = true);
        if let Some(c) = anchored.iter().position(|a| !a) {
            let v = comp.iter().position(|&x| x == c).unwrap();
            return Err(Error::Singular(format!(
                "graph component containing vertex {v} has no labeled point; the laplacian \
                 null space on it is unconstrained"
            )));
        }
    }

    let g = op.to_dense();
    let system = DMatrix::from_fn(u, u, |i, j| {
        let h = if i == j { targets.mask[i] } else { 0.0 };
        h + lambda1 * g[[i, j]]
    });
    let chol = system
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("system matrix is not positive definite".into()))?;

    let n = targets.values.ncols();
    let mut f = Array2::zeros((u, n));
    for c in 0..n {
        let rhs = DVector::from_fn(u, |i, _| targets.mask[i] * targets.values[[i, c]]);
        let mut x = chol.solve(&rhs);
        // one step of iterative refinement
        let resid = &rhs - &system * &x;
        x += chol.solve(&resid);
        let resid = (&rhs - &system * &x).norm();
        if resid > 1e-8 * rhs.norm().max(f64::MIN_POSITIVE) {
            return Err(Error::Singular(format!(
                "linear solve residual {resid:e} for column {c} is too large"
            )));
        }
        f.column_mut(c).assign(&Array1::from_iter(x.iter().copied()));
    }
    Ok(f)
}

/// Adds `λ · tr[fᵀ G f]` and its gradient `2λ G f`.
fn add_function_smoothness(f: &Array2<f64>, g_op: &LaplacianOp, lambda: f64, energy: &mut f64, grad: &mut Array2<f64>) {
    if lambda == 0.0 {
        return;
    }
    let gf = g_op.apply(f);
    *energy += lambda * f.iter().zip(gf.iter()).map(|(a, b)| a * b).sum::<f64>();
    grad.scaled_add(2.0 * lambda, &gf);
}

/// Adds the dense or sparse relationship term weighted by `λ₂`.
fn add_relationship(
    f: &Array2<f64>,
    g_op: &LaplacianOp,
    config: &EnergyConfig,
    kernel: &RelationshipKernel,
    pattern: Option<&SparsityPattern>,
    energy: &mut f64,
    grad: &mut Array2<f64>,
) -> Result<()> {
    if config.lambda2 == 0.0 {
        return Ok(());
    }
    let (e, g) = match (config.sparsity, pattern) {
        (None, _) => rel_energy_gradient(f, kernel, g_op),
        (Some(_), Some(pattern)) => sparse_rel_energy(f, kernel, g_op, pattern)?,
        (Some(_), None) => {
            return Err(Error::InvalidArgument(
                "sparsity configured but no sparsity pattern supplied".into(),
            ))
        }
    };
    *energy += config.lambda2 * e;
    grad.scaled_add(config.lambda2, &g);
    Ok(())
}

/// `(f−t)ᵀH(f−t) + λ₁ tr[fᵀGf] + λ₂ R(f)` and its gradient, where `R` is
/// `tr[KᵀGK]` or the sparse neighborhood energy when `config.sparsity` is set.
pub fn classification_energy(
    f: &Array2<f64>,
    targets: &Targets,
    op: &LaplacianOp,
    config: &EnergyConfig,
    pattern: Option<&SparsityPattern>,
) -> Result<(f64, Array2<f64>)> {
    config.validate()?;
    check_rows(f, op.dim(), "f")?;
    if f.dim() != targets.values.dim() {
        return Err(Error::Shape(format!("f is {:?}, targets {:?}", f.dim(), targets.values.dim())));
    }
    let g_op = power_op(op, config.p)?;
    let kernel = config.kernel()?;
    let resid = (f - &targets.values) * &targets.mask.view().insert_axis(Axis(1));
    let mut energy = resid.iter().map(|v| v * v).sum::<f64>();
    let mut grad = 2.0 * resid;
    add_function_smoothness(f, &g_op, config.lambda1, &mut energy, &mut grad);
    add_relationship(f, &g_op, config, &kernel, pattern, &mut energy, &mut grad)?;
    Ok((energy, grad))
}

/// Minimizes the classification objective from the closed-form solution with
/// `λ₂ = 0`. Fully deterministic.
pub fn solve_err_classification(
    targets: &Targets,
    op: &LaplacianOp,
    config: &EnergyConfig,
    pattern: Option<&SparsityPattern>,
) -> Result<Solution> {
    config.validate()?;
    let g_op = power_op(op, config.p)?;
    let f0 = solve_irr(targets, &g_op, config.lambda1)?;
    let objective = |f: &Array2<f64>| classification_energy(f, targets, &g_op, config, pattern);
    if config.lambda2 == 0.0 {
        // the initializer already minimizes the remaining convex objective
        let (e, _) = objective(&f0)?;
        return Ok(Solution {
            f: f0,
            energy_trace: vec![e],
            iterations_used: 0,
            converged: true,
        });
    }
    minimize(f0, objective, &config.cg_options())
}

/// `‖f − t‖² + λ₁ tr[fᵀGf] + λ₂ R(f) + λ₃ ‖(K − T)∘Q‖²_F` and its gradient.
pub fn embedding_energy(
    f: &Array2<f64>,
    target: &Array2<f64>,
    op: &LaplacianOp,
    config: &EnergyConfig,
    labels: &RelationLabelSet,
    pattern: Option<&SparsityPattern>,
) -> Result<(f64, Array2<f64>)> {
    config.validate()?;
    check_rows(f, op.dim(), "f")?;
    if f.dim() != target.dim() {
        return Err(Error::Shape(format!("f is {:?}, target {:?}", f.dim(), target.dim())));
    }
    let g_op = power_op(op, config.p)?;
    let kernel = config.kernel()?;
    let resid = f - target;
    let mut energy = resid.iter().map(|v| v * v).sum::<f64>();
    let mut grad = 2.0 * resid;
    add_function_smoothness(f, &g_op, config.lambda1, &mut energy, &mut grad);
    add_relationship(f, &g_op, config, &kernel, pattern, &mut energy, &mut grad)?;
    if config.lambda3 != 0.0 && !labels.is_empty() {
        let (e, g) = label_energy_gradient(f, &kernel, labels)?;
        energy += config.lambda3 * e;
        grad.scaled_add(config.lambda3, &g);
    }
    Ok((energy, grad))
}

#[derive(Debug, Clone)]
pub struct Embedding {
    /// Spectral embedding used as both target and starting point.
    pub spectrum: Spectrum,
    pub solution: Solution,
}

/// Spectral embedding into `dim` coordinates (eigenvectors `e_2 … e_{dim+1}`
/// of `L`), refined by minimizing the embedding objective.
pub fn solve_err_embedding(
    op: &LaplacianOp,
    dim: usize,
    config: &EnergyConfig,
    labels: &RelationLabelSet,
    pattern: Option<&SparsityPattern>,
) -> Result<Embedding> {
    let spectrum = spectral_embedding(op, dim)?;
    let solution = refine_embedding(op, &spectrum, config, labels, pattern)?;
    Ok(Embedding { spectrum, solution })
}

/// Eigenvectors `e_2 … e_{dim+1}` of the plain Laplacian of a connected graph.
pub fn spectral_embedding(op: &LaplacianOp, dim: usize) -> Result<Spectrum> {
    if dim == 0 {
        return Err(Error::InvalidArgument("embedding dimension must be at least 1".into()));
    }
    let (components, _) = op.graph().connected_components();
    if components > 1 {
        return Err(Error::Disconnected { components });
    }
    smallest_eigenvectors(&power_op(op, 1)?, dim + 1)
}

/// Minimizes the embedding objective starting from, and anchored to, a
/// precomputed spectral embedding.
pub fn refine_embedding(
    op: &LaplacianOp,
    spectrum: &Spectrum,
    config: &EnergyConfig,
    labels: &RelationLabelSet,
    pattern: Option<&SparsityPattern>,
) -> Result<Solution> {
    config.validate()?;
    let g_op = power_op(op, config.p)?;
    let target = &spectrum.vectors;
    minimize(
        target.clone(),
        |f| embedding_energy(f, target, &g_op, config, labels, pattern),
        &config.cg_options(),
    )
}

/// Class 1 where the single output column is positive, class 0 otherwise.
pub fn decode_binary(f: &Array2<f64>) -> Vec<usize> {
    f.column(0).iter().map(|&v| usize::from(v > 0.0)).collect()
}

/// Row-wise argmax, ties resolved toward the lower class id.
pub fn decode_argmax(f: &Array2<f64>) -> Vec<usize> {
    f.rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
                .0
        })
        .collect()
}

/// Decodes binary (one column) or one-hot outputs to class ids.
pub fn decode(f: &Array2<f64>) -> Vec<usize> {
    if f.ncols() == 1 {
        decode_binary(f)
    } else {
        decode_argmax(f)
    }
}
