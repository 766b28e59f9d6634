//! Nonlinear conjugate gradient (Polak–Ribière+) with Armijo backtracking.

use ndarray::Array2;
use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Maximum number of accepted steps.
    pub max_iters: usize,
    /// Stop once the gradient 2-norm drops below this.
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            grad_tol: 1e-8,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 30,
        }
    }
}

/// Result of a minimization. `energy_trace[0]` is the starting energy and each
/// further entry follows an accepted step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    #[serde(skip)]
    pub f: Array2<f64>,
    pub energy_trace: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
}

impl Solution {
    pub fn initial_energy(&self) -> f64 {
        self.energy_trace[0]
    }

    pub fn final_energy(&self) -> f64 {
        *self.energy_trace.last().unwrap()
    }
}

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Minimizes `objective`, which returns the energy and its gradient.
///
/// Directions follow Polak–Ribière with `β = max(β_PR, 0)`; whenever the
/// direction fails to descend, or a line search along it fails, the method
/// restarts from steepest descent. A failed steepest-descent line search ends
/// the run with `converged = false`. The initial trial step is
/// `1 / max(1, ‖g‖)` on the first iteration; afterwards it is the minimizer of
/// the quadratic that matches the last energy decrease and the current slope.
pub fn minimize<F>(x0: Array2<f64>, mut objective: F, opts: &CgOptions) -> Result<Solution>
where
    F: FnMut(&Array2<f64>) -> Result<(f64, Array2<f64>)>,
{
    let mut x = x0;
    let (mut energy, mut grad) = objective(&x)?;
    let mut trace = vec![energy];
    let mut gg = dot(&grad, &grad);
    if gg.sqrt() < opts.grad_tol {
        return Ok(Solution {
            f: x,
            energy_trace: trace,
            iterations_used: 0,
            converged: true,
        });
    }

    let mut dir = grad.mapv(|g| -g);
    let mut prev: Option<f64> = None; // last energy decrease
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iters {
        let mut slope = dot(&grad, &dir);
        let mut steepest = false;
        if slope >= 0.0 {
            dir = grad.mapv(|g| -g);
            slope = -gg;
            steepest = true;
        }

        let mut accepted = None;
        loop {
            let mut step = match prev {
                Some(drop) => 2.02 * drop / -slope,
                None => 1.0 / gg.sqrt().max(1.0),
            };
            for _ in 0..=opts.max_backtracks {
                let trial = &x + &(step * &dir);
                let (e, g) = objective(&trial)?;
                if e.is_finite() && e < energy && e <= energy + opts.armijo_c * step * slope {
                    accepted = Some((trial, e, g));
                    break;
                }
                step *= opts.backtrack_factor;
            }
            if accepted.is_some() || steepest {
                break;
            }
            dir = grad.mapv(|g| -g);
            slope = -gg;
            steepest = true;
        }

        let Some((x_new, e_new, g_new)) = accepted else {
            break;
        };
        let gg_new = dot(&g_new, &g_new);
        let beta = ((gg_new - dot(&g_new, &grad)) / gg).max(0.0);
        prev = Some(energy - e_new);
        dir = &dir * beta - &g_new;
        x = x_new;
        energy = e_new;
        grad = g_new;
        gg = gg_new;
        trace.push(energy);
        iterations += 1;
        if gg.sqrt() < opts.grad_tol {
            converged = true;
            break;
        }
    }

    Ok(Solution {
        f: x,
        energy_trace: trace,
        iterations_used: iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn rosenbrock(x: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
        let (a, b) = (x[[0, 0]], x[[1, 0]]);
        let e = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let ga = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        let gb = 200.0 * (b - a * a);
        Ok((e, array![[ga], [gb]]))
    }

    #[test]
    fn quadratic_converges() {
        let target = array![[1.0, -2.0], [3.0, 0.5]];
        let sol = minimize(
            Array2::zeros((2, 2)),
            |x| {
                let d = x - &target;
                Ok((d.iter().map(|v| v * v).sum(), 2.0 * d))
            },
            &CgOptions::default(),
        )
        .unwrap();
        assert!(sol.converged);
        assert!((&sol.f - &target).iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn rosenbrock_descends_monotonically() {
        let opts = CgOptions {
            max_iters: 2000,
            grad_tol: 1e-6,
            ..CgOptions::default()
        };
        let sol = minimize(array![[-1.2], [1.0]], rosenbrock, &opts).unwrap();
        assert!(sol.energy_trace.windows(2).all(|w| w[1] < w[0]));
        assert!(sol.final_energy() < 1e-4, "{}", sol.final_energy());
    }

    #[test]
    fn stationary_start_takes_no_steps() {
        let sol = minimize(array![[1.0], [1.0]], rosenbrock, &CgOptions::default()).unwrap();
        assert_eq!(sol.iterations_used, 0);
        assert!(sol.converged);
    }

    #[test]
    fn respects_iteration_cap() {
        let opts = CgOptions {
            max_iters: 3,
            ..CgOptions::default()
        };
        let sol = minimize(array![[-1.2], [1.0]], rosenbrock, &opts).unwrap();
        assert_eq!(sol.iterations_used, 3);
        assert_eq!(sol.energy_trace.len(), 4);
        assert!(!sol.converged);
    }
}
