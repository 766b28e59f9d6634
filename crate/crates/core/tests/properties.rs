use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relreg::dataset::{make_split, target_encoding, DataSet, Relation, RelationKind, RelationLabelSet};
use relreg::eval::{clustering_error, loo_1nn_error};
use relreg::graph::{Graph, LaplacianKind, LaplacianOp};
use relreg::relreg::{
    kernel_matrix, label_energy_gradient, rel_energy, rel_energy_gradient, sparse_rel_energy, RelationshipKernel,
    SparsityPattern,
};
use relreg::solver::{solve_err_classification, solve_irr, EnergyConfig};

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

/// Random connected weighted graph: a path plus random chords.
fn random_graph(rng: &mut ChaCha8Rng, u: usize) -> Graph {
    let mut w = Array2::zeros((u, u));
    for i in 0..u {
        for j in 0..i {
            if j + 1 == i || rng.random_bool(0.3) {
                let v = rng.random_range(0.1..1.0);
                w[[i, j]] = v;
                w[[j, i]] = v;
            }
        }
    }
    Graph::from_dense(w.view()).unwrap()
}

fn permute_graph(g: &Graph, perm: &[usize]) -> Graph {
    let w = g.to_dense();
    let u = perm.len();
    Graph::from_dense(Array2::from_shape_fn((u, u), |(i, j)| w[[perm[i], perm[j]]]).view()).unwrap()
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn kind_of(normalized: bool) -> LaplacianKind {
    if normalized {
        LaplacianKind::SymmetricNormalized
    } else {
        LaplacianKind::Unnormalized
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_matrix_symmetric_unit_diagonal(seed in any::<u64>(), u in 2usize..12, n in 1usize..4, s in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_matrix(&mut rng, u, n, 3.0);
        let k = kernel_matrix(&f, &RelationshipKernel::new(s).unwrap(), None);
        let k = k.as_dense().unwrap();
        for i in 0..u {
            prop_assert_eq!(k[[i, i]], 1.0);
            for j in 0..u {
                prop_assert_eq!(k[[i, j]], k[[j, i]]);
                prop_assert!(k[[i, j]] > 0.0 && k[[i, j]] <= 1.0);
            }
        }
    }

    #[test]
    fn dirichlet_identity(seed in any::<u64>(), u in 3usize..14) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, u);
        let w = g.to_dense();
        let m = random_matrix(&mut rng, u, u, 1.0);
        let op = LaplacianOp::new(g, LaplacianKind::Unnormalized, 1).unwrap();
        let mut oracle = 0.0;
        for i in 0..u {
            for j in 0..u {
                let d2: f64 = (0..u).map(|c| (m[[i, c]] - m[[j, c]]).powi(2)).sum();
                oracle += 0.5 * w[[i, j]] * d2;
            }
        }
        let e = rel_energy(&m, &op);
        prop_assert!((e - oracle).abs() <= 1e-10 * oracle.abs().max(1.0));
    }

    #[test]
    fn laplacian_is_linear(seed in any::<u64>(), u in 3usize..14, p in 1u32..4, normalized in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = LaplacianOp::new(random_graph(&mut rng, u), kind_of(normalized), p).unwrap();
        let x = random_matrix(&mut rng, u, 2, 1.0);
        let y = random_matrix(&mut rng, u, 2, 1.0);
        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let lhs = op.apply(&(a * &x + b * &y));
        let rhs = a * op.apply(&x) + b * op.apply(&y);
        prop_assert!(max_abs(&(lhs - rhs)) < 1e-10);
    }

    #[test]
    fn energies_are_translation_invariant(seed in any::<u64>(), u in 4usize..12, n in 1usize..4, normalized in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = LaplacianOp::new(random_graph(&mut rng, u), kind_of(normalized), 1).unwrap();
        let f = random_matrix(&mut rng, u, n, 1.5);
        let shift = Array1::from_shape_fn(n, |_| rng.random_range(-10.0..10.0));
        let g = &f + &shift;
        let kernel = RelationshipKernel::new(0.8).unwrap();
        let (e1, g1) = rel_energy_gradient(&f, &kernel, &op);
        let (e2, g2) = rel_energy_gradient(&g, &kernel, &op);
        prop_assert!((e1 - e2).abs() <= 1e-9 * e1.abs().max(1.0));
        prop_assert!(max_abs(&(g1 - g2)) < 1e-8);
        let pattern = SparsityPattern::from_knn(&random_matrix(&mut rng, u, 2, 1.0), 2).unwrap();
        let (s1, _) = sparse_rel_energy(&f, &kernel, &op, &pattern).unwrap();
        let (s2, _) = sparse_rel_energy(&g, &kernel, &op, &pattern).unwrap();
        prop_assert!((s1 - s2).abs() <= 1e-9 * s1.abs().max(1.0));
        let labels = RelationLabelSet::new(vec![
            Relation { i: 0, j: 1, kind: RelationKind::Must },
            Relation { i: 2, j: 3, kind: RelationKind::Cannot },
        ]).unwrap();
        let (l1, _) = label_energy_gradient(&f, &kernel, &labels).unwrap();
        let (l2, _) = label_energy_gradient(&g, &kernel, &labels).unwrap();
        prop_assert!((l1 - l2).abs() <= 1e-10);
    }

    #[test]
    fn split_partitions_points(seed in any::<u64>(), split_seed in any::<u64>(), per_class in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = rng.random_range(12..40);
        let labels: Vec<usize> = (0..u).map(|i| i % 3).collect();
        let ds = DataSet::new("p", random_matrix(&mut rng, u, 2, 1.0), Some(labels.clone())).unwrap();
        let split = make_split(&ds, 2, 1, per_class, split_seed).unwrap();
        let mut seen = vec![0; u];
        for t in split.labeled.iter().chain(&split.validation) {
            seen[t.index] += 1;
            prop_assert_eq!(t.class, labels[t.index]);
        }
        for &i in &split.unlabeled {
            seen[i] += 1;
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let expect = if per_class { 6 } else { 2 };
        prop_assert_eq!(split.labeled.len(), expect);
        prop_assert_eq!(split.validation.len(), expect / 2);
    }

    #[test]
    fn clustering_error_ignores_relabeling(seed in any::<u64>(), u in 2usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<usize> = (0..u).map(|_| rng.random_range(0..3)).collect();
        let assignment: Vec<usize> = (0..u).map(|_| rng.random_range(0..4)).collect();
        let mut ids = [7, 2, 11, 5];
        for i in (1..ids.len()).rev() {
            ids.swap(i, rng.random_range(0..=i));
        }
        let relabeled: Vec<usize> = assignment.iter().map(|&a| ids[a]).collect();
        prop_assert_eq!(
            clustering_error(&assignment, &truth).unwrap(),
            clustering_error(&relabeled, &truth).unwrap()
        );
    }

    #[test]
    fn loo_error_ignores_isometries(seed in any::<u64>(), u in 3usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_matrix(&mut rng, u, 2, 5.0);
        let truth: Vec<usize> = (0..u).map(|_| rng.random_range(0..2)).collect();
        let (s, c) = rng.random_range(0.0..std::f64::consts::TAU).sin_cos();
        let (tx, ty) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let moved = Array2::from_shape_fn((u, 2), |(i, d)| {
            let (x, y) = (f[[i, 0]], f[[i, 1]]);
            if d == 0 { c * x - s * y + tx } else { s * x + c * y + ty }
        });
        prop_assert_eq!(loo_1nn_error(&f, &truth).unwrap(), loo_1nn_error(&moved, &truth).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn solvers_are_permutation_equivariant(seed in any::<u64>(), u in 6usize..14, p in 1u32..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, u);
        let labels: Vec<usize> = (0..u).map(|i| i % 2).collect();
        let ds = DataSet::new("p", random_matrix(&mut rng, u, 2, 1.0), Some(labels)).unwrap();
        let split = make_split(&ds, 1, 0, true, seed).unwrap();
        let mut perm: Vec<usize> = (0..u).collect();
        for i in (1..u).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let mut inverse = vec![0; u];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut split_perm = split.clone();
        for t in split_perm.labeled.iter_mut() {
            t.index = inverse[t.index];
        }
        split_perm.unlabeled = split.unlabeled.iter().map(|&i| inverse[i]).collect();

        let op = LaplacianOp::new(g.clone(), LaplacianKind::Unnormalized, p).unwrap();
        let op_perm = LaplacianOp::new(permute_graph(&g, &perm), LaplacianKind::Unnormalized, p).unwrap();
        let t = target_encoding(&split, 1).unwrap();
        let t_perm = target_encoding(&split_perm, 1).unwrap();

        let f = solve_irr(&t, &op, 0.5).unwrap();
        let f_perm = solve_irr(&t_perm, &op_perm, 0.5).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            prop_assert!((f[[old, 0]] - f_perm[[new, 0]]).abs() < 1e-9);
        }

        let config = EnergyConfig { lambda1: 0.5, lambda2: 0.3, p, cg_steps: 5, ..EnergyConfig::default() };
        let a = solve_err_classification(&t, &op, &config, None).unwrap();
        let b = solve_err_classification(&t_perm, &op_perm, &config, None).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            prop_assert!((a.f[[old, 0]] - b.f[[new, 0]]).abs() < 1e-6);
        }
    }
}
