//! Error metrics, NCut-selected k-means, and validation-set hyper-parameter
//! selection.

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dataset::SupervisionSplit;
use crate::error::{Error, Result};
use crate::graph::{ncut, Graph};

/// An error count over an evaluated set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub error_rate: f64,
    pub n_errors: usize,
    pub n_evaluated: usize,
}

impl Metrics {
    fn from_counts(n_errors: usize, n_evaluated: usize) -> Self {
        Self {
            error_rate: if n_evaluated == 0 { 0.0 } else { n_errors as f64 / n_evaluated as f64 },
            n_errors,
            n_evaluated,
        }
    }
}

/// Mean and standard error of a per-seed metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std_err: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_err = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Self { mean, std_err, n }
    }
}

/// Reduction of error rate of `new` relative to `base`, in percent.
pub fn reduction_of_error_rate(base: f64, new: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        100.0 * (base - new) / base
    }
}

pub fn classification_error(pred: &[usize], truth: &[usize], eval_indices: &[usize]) -> Result<Metrics> {
    if eval_indices.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("{} predictions, {} labels", pred.len(), truth.len())));
    }
    if let Some(&i) = eval_indices.iter().find(|&&i| i >= truth.len()) {
        return Err(Error::InvalidArgument(format!("evaluation index {i} out of range")));
    }
    let errors = eval_indices.iter().filter(|&&i| pred[i] != truth[i]).count();
    Ok(Metrics::from_counts(errors, eval_indices.len()))
}

/// Counts points whose label differs from the dominant label of their
/// cluster (ties go to the lower label id).
pub fn clustering_error(assignment: &[usize], truth: &[usize]) -> Result<Metrics> {
    if assignment.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} assignments, {} labels",
            assignment.len(),
            truth.len()
        )));
    }
    let mut counts: HashMap<usize, HashMap<usize, usize>> = HashMap::new();
    for (&a, &t) in assignment.iter().zip(truth) {
        *counts.entry(a).or_default().entry(t).or_default() += 1;
    }
    let correct: usize = counts
        .values()
        .map(|c| {
            c.iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map_or(0, |(_, &n)| n)
        })
        .sum();
    Ok(Metrics::from_counts(truth.len() - correct, truth.len()))
}

/// Leave-one-out 1-nearest-neighbor error on the rows of `f` (ties go to the
/// lower index).
pub fn loo_1nn_error(f: &Array2<f64>, truth: &[usize]) -> Result<Metrics> {
    let u = f.nrows();
    if u < 2 || truth.len() != u {
        return Err(Error::Shape(format!("{u} rows, {} labels", truth.len())));
    }
    let rows = f.as_standard_layout();
    let n = f.ncols();
    let data = rows.as_slice().unwrap();
    let mut errors = 0;
    for i in 0..u {
        let xi = &data[i * n..(i + 1) * n];
        let mut best = (f64::INFINITY, usize::MAX);
        for j in (0..u).filter(|&j| j != i) {
            let d: f64 = xi.iter().zip(&data[j * n..(j + 1) * n]).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, j);
            }
        }
        if truth[best.1] != truth[i] {
            errors += 1;
        }
    }
    Ok(Metrics::from_counts(errors, u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KMeansInit {
    #[default]
    PlusPlus,
    /// Centers drawn uniformly without replacement.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub init: KMeansInit,
    pub seed: u64,
}

impl KMeansOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            restarts: 10,
            max_iters: 300,
            init: KMeansInit::PlusPlus,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster ids numbered by first appearance.
    pub assignment: Vec<usize>,
    pub ncut: f64,
    /// Which restart produced the chosen assignment.
    pub restart: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn seed_centers(data: &[f64], u: usize, n: usize, k: usize, init: KMeansInit, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut chosen = Vec::with_capacity(k);
    match init {
        KMeansInit::Uniform => {
            let mut pool: Vec<usize> = (0..u).collect();
            for i in 0..k {
                let j = rng.random_range(i..u);
                pool.swap(i, j);
                chosen.push(pool[i]);
            }
        }
        KMeansInit::PlusPlus => {
            chosen.push(rng.random_range(0..u));
            let mut d2: Vec<f64> = (0..u).map(|i| sq_dist(&data[i * n..(i + 1) * n], &data[chosen[0] * n..(chosen[0] + 1) * n])).collect();
            while chosen.len() < k {
                let total: f64 = d2.iter().sum();
                let next = if total > 0.0 {
                    let mut r = rng.random::<f64>() * total;
                    let mut pick = u - 1;
                    for (i, &d) in d2.iter().enumerate() {
                        if d > 0.0 && r < d {
                            pick = i;
                            break;
                        }
                        r -= d;
                    }
                    // rounding can run past the end; fall back to the last positive weight
                    if d2[pick] == 0.0 {
                        pick = d2.iter().rposition(|&d| d > 0.0).unwrap();
                    }
                    pick
                } else {
                    let free: Vec<usize> = (0..u).filter(|i| !chosen.contains(i)).collect();
                    free[rng.random_range(0..free.len())]
                };
                chosen.push(next);
                let c = &data[next * n..(next + 1) * n];
                for (i, d) in d2.iter_mut().enumerate() {
                    *d = d.min(sq_dist(&data[i * n..(i + 1) * n], c));
                }
            }
        }
    }
    chosen.iter().flat_map(|&i| data[i * n..(i + 1) * n].iter().copied()).collect()
}

/// Lloyd iterations until the assignment stops changing. An emptied cluster
/// is re-seeded at the point farthest from its current centroid.
fn lloyd(data: &[f64], u: usize, n: usize, k: usize, mut centers: Vec<f64>, max_iters: usize) -> Vec<usize> {
    let mut assignment = vec![usize::MAX; u];
    for _ in 0..max_iters {
        let mut changed = false;
        let mut dist_to_own = vec![0.0; u];
        for i in 0..u {
            let x = &data[i * n..(i + 1) * n];
            let (mut best, mut best_d) = (0, f64::INFINITY);
            for c in 0..k {
                let d = sq_dist(x, &centers[c * n..(c + 1) * n]);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            dist_to_own[i] = best_d;
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        let mut sizes = vec![0usize; k];
        for &a in &assignment {
            sizes[a] += 1;
        }
        let mut repaired = false;
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let far = (0..u)
                .filter(|&i| sizes[assignment[i]] > 1)
                .max_by(|&a, &b| dist_to_own[a].total_cmp(&dist_to_own[b]).then(b.cmp(&a)));
            if let Some(i) = far {
                sizes[assignment[i]] -= 1;
                assignment[i] = c;
                sizes[c] = 1;
                dist_to_own[i] = 0.0;
                repaired = true;
            }
        }
        if !changed && !repaired {
            break;
        }
        centers.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..u {
            let c = assignment[i];
            for d in 0..n {
                centers[c * n + d] += data[i * n + d];
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                for d in 0..n {
                    centers[c * n + d] /= sizes[c] as f64;
                }
            }
        }
    }
    assignment
}

fn compact(assignment: &[usize]) -> Vec<usize> {
    let mut ids = HashMap::new();
    assignment
        .iter()
        .map(|&a| {
            let next = ids.len();
            *ids.entry(a).or_insert(next)
        })
        .collect()
}

/// Runs k-means `restarts` times on the rows of `f` from one seeded stream and
/// keeps the assignment with the smallest normalized cut on `graph`.
pub fn kmeans_ncut(f: &Array2<f64>, graph: &Graph, opts: &KMeansOptions) -> Result<Clustering> {
    let (u, n) = f.dim();
    if opts.k < 2 || opts.k > u {
        return Err(Error::InvalidArgument(format!("k = {} must lie in [2, {u}]", opts.k)));
    }
    if opts.restarts == 0 {
        return Err(Error::InvalidArgument("need at least one restart".into()));
    }
    if graph.n_vertices() != u {
        return Err(Error::Shape(format!("{u} rows but graph has {} vertices", graph.n_vertices())));
    }
    let rows = f.as_standard_layout();
    let data = rows.as_slice().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<Clustering> = None;
    for restart in 0..opts.restarts {
        let centers = seed_centers(data, u, n, opts.k, opts.init, &mut rng);
        let assignment = compact(&lloyd(data, u, n, opts.k, centers, opts.max_iters));
        let score = ncut(graph, &assignment)?;
        if best.as_ref().is_none_or(|b| score < b.ncut) {
            best = Some(Clustering {
                assignment,
                ncut: score,
                restart,
            });
        }
    }
    Ok(best.unwrap())
}

/// Named hyper-parameters of a configuration, for validation tables.
pub trait HyperParams {
    fn params(&self) -> Vec<(&'static str, String)>;

    /// First 16 hex digits of the SHA-256 of `name=value;` pairs.
    fn config_hash(&self) -> String {
        let canonical: String = self.params().iter().map(|(k, v)| format!("{k}={v};")).collect();
        Sha256::digest(canonical.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow<C> {
    pub config: C,
    pub validation: Option<Metrics>,
    pub evaluation: Option<Metrics>,
    pub runtime_secs: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validation<C> {
    pub best: C,
    pub best_index: usize,
    pub table: Vec<ValidationRow<C>>,
}

/// Trains every configuration, scores its predictions on the validation set
/// and returns the one with the lowest validation error (first wins ties).
/// The evaluation error on the unlabeled points is recorded alongside.
/// A failing configuration is recorded and skipped unless every one fails.
pub fn validate_hyperparams<C, F>(
    grid: &[C],
    split: &SupervisionSplit,
    truth: &[usize],
    mut pipeline: F,
) -> Result<Validation<C>>
where
    C: Clone,
    F: FnMut(&C) -> Result<Vec<usize>>,
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty hyper-parameter grid".into()));
    }
    let valid = split.validation_indices();
    let mut table = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    let mut last_failure = None;
    for (idx, config) in grid.iter().enumerate() {
        let start = Instant::now();
        let outcome = pipeline(config).and_then(|pred| {
            let v = classification_error(&pred, truth, &valid)?;
            let e = if split.unlabeled.is_empty() {
                None
            } else {
                Some(classification_error(&pred, truth, &split.unlabeled)?)
            };
            Ok((v, e))
        });
        let runtime_secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok((v, e)) => {
                if best.is_none_or(|(_, b)| v.error_rate < b) {
                    best = Some((idx, v.error_rate));
                }
                table.push(ValidationRow {
                    config: config.clone(),
                    validation: Some(v),
                    evaluation: e,
                    runtime_secs,
                    failure: None,
                });
            }
            Err(err) => {
                last_failure = Some(err.to_string());
                table.push(ValidationRow {
                    config: config.clone(),
                    validation: None,
                    evaluation: None,
                    runtime_secs,
                    failure: Some(err.to_string()),
                });
            }
        }
    }
    let (best_index, _) = best.ok_or_else(|| {
        Error::InvalidArgument(format!(
            "every configuration failed; last error: {}",
            last_failure.unwrap_or_default()
        ))
    })?;
    Ok(Validation {
        best: grid[best_index].clone(),
        best_index,
        table,
    })
}

/// Two-stage search: pick the best configuration of `first`, then search the
/// grid that `second` derives from it.
pub fn staged_validation<C, G, F>(
    first: &[C],
    second: G,
    split: &SupervisionSplit,
    truth: &[usize],
    mut pipeline: F,
) -> Result<(Validation<C>, Validation<C>)>
where
    C: Clone,
    G: FnOnce(&C) -> Vec<C>,
    F: FnMut(&C) -> Result<Vec<usize>>,
{
    let stage1 = validate_hyperparams(first, split, truth, &mut pipeline)?;
    let grid2 = second(&stage1.best);
    let stage2 = validate_hyperparams(&grid2, split, truth, &mut pipeline)?;
    Ok((stage1, stage2))
}

/// Writes a validation table as CSV: `config_hash`, each hyper-parameter,
/// `validation_error`, `evaluation_error`, `runtime_secs`.
pub fn write_validation_table<C: HyperParams>(rows: &[ValidationRow<C>], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let names: Vec<&str> = rows.first().map_or(Vec::new(), |r| r.config.params().iter().map(|(k, _)| *k).collect());
    let mut header = vec!["config_hash"];
    header.extend(&names);
    header.extend(["validation_error", "evaluation_error", "runtime_secs"]);
    w.write_record(&header).map_err(csv_io)?;
    let rate = |m: Option<Metrics>| m.map_or(String::new(), |m| m.error_rate.to_string());
    for row in rows {
        let mut rec = vec![row.config.config_hash()];
        rec.extend(row.config.params().into_iter().map(|(_, v)| v));
        rec.push(rate(row.validation));
        rec.push(rate(row.evaluation));
        rec.push(format!("{:.6}", row.runtime_secs));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Target;
    use crate::graph::{knn_graph, Bandwidth, GraphParams};
    use ndarray::array;

    #[test]
    fn classification_error_cases() {
        let truth = [0, 1, 1, 0];
        let all = [0, 1, 2, 3];
        assert_eq!(classification_error(&truth, &truth, &all).unwrap().error_rate, 0.0);
        assert_eq!(classification_error(&[1, 0, 0, 1], &truth, &all).unwrap().error_rate, 1.0);
        assert_eq!(classification_error(&[0, 1, 0, 1], &truth, &all).unwrap().error_rate, 0.5);
        assert!(classification_error(&truth, &truth, &[]).is_err());
    }

    #[test]
    fn clustering_error_cases() {
        assert_eq!(clustering_error(&[2, 2, 0, 0], &[1, 1, 0, 0]).unwrap().n_errors, 0);
        let m = clustering_error(&[0, 0, 0], &[4, 4, 7]).unwrap();
        assert_eq!(m.n_errors, 1);
        // tie: dominant label is the lower id, the other one counts as error
        assert_eq!(clustering_error(&[0, 0], &[3, 1]).unwrap().n_errors, 1);
    }

    #[test]
    fn clustering_error_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let assignment: Vec<usize> = (0..40).map(|_| rng.random_range(0..3)).collect();
        let mut expect = 0;
        for c in 0..3 {
            let zeros = (0..40).filter(|&i| assignment[i] == c && truth[i] == 0).count();
            let ones = (0..40).filter(|&i| assignment[i] == c && truth[i] == 1).count();
            expect += zeros.min(ones);
        }
        assert_eq!(clustering_error(&assignment, &truth).unwrap().n_errors, expect);
    }

    #[test]
    fn loo_cases() {
        let f = array![[0.0], [0.0], [5.0], [5.0]];
        assert_eq!(loo_1nn_error(&f, &[0, 0, 1, 1]).unwrap().n_errors, 0);
        // identical rows: every point picks index 0, or index 1 for point 0
        let same = Array2::zeros((4, 2));
        let truth = [0, 1, 1, 0];
        let expect = (0..4)
            .filter(|&i| {
                let nn = if i == 0 { 1 } else { 0 };
                truth[nn] != truth[i]
            })
            .count();
        assert_eq!(loo_1nn_error(&same, &truth).unwrap().n_errors, expect);
        let one_hot = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert_eq!(loo_1nn_error(&one_hot, &[0, 1, 0, 1]).unwrap().n_errors, 0);
    }

    fn blobs() -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = Array2::zeros((40, 2));
        let mut truth = Vec::new();
        for i in 0..40 {
            let off = if i < 20 { 0.0 } else { 10.0 };
            pts[[i, 0]] = off + rng.random_range(-0.5..0.5);
            pts[[i, 1]] = rng.random_range(-0.5..0.5);
            truth.push(usize::from(i >= 20));
        }
        (pts, truth)
    }

    #[test]
    fn kmeans_separates_blobs() {
        let (pts, truth) = blobs();
        let g = knn_graph(&pts, &GraphParams::new(5, Bandwidth::Adaptive)).unwrap();
        let c = kmeans_ncut(&pts, &g, &KMeansOptions::new(2, 1)).unwrap();
        assert_eq!(clustering_error(&c.assignment, &truth).unwrap().n_errors, 0);
        assert_eq!(c, kmeans_ncut(&pts, &g, &KMeansOptions::new(2, 1)).unwrap());
    }

    #[test]
    fn kmeans_singletons() {
        let (pts, _) = blobs();
        let pts = pts.slice(ndarray::s![..8, ..]).to_owned();
        let g = knn_graph(&pts, &GraphParams::new(3, Bandwidth::Adaptive)).unwrap();
        let c = kmeans_ncut(&pts, &g, &KMeansOptions::new(8, 0)).unwrap();
        let mut ids = c.assignment.clone();
        ids.sort_unstable();
        assert_eq!(ids, (0..8).collect::<Vec<_>>());
        assert!(c.ncut.is_finite());
    }

    #[test]
    fn more_restarts_never_worse() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts = Array2::from_shape_fn((60, 2), |_| rng.random_range(0.0..1.0));
        let g = knn_graph(&pts, &GraphParams::new(5, Bandwidth::Adaptive)).unwrap();
        for seed in 0..5 {
            let mut one = KMeansOptions::new(4, seed);
            one.restarts = 1;
            one.init = KMeansInit::Uniform;
            let ten = KMeansOptions { restarts: 10, ..one };
            assert!(kmeans_ncut(&pts, &g, &ten).unwrap().ncut <= kmeans_ncut(&pts, &g, &one).unwrap().ncut);
        }
    }

    fn split() -> SupervisionSplit {
        SupervisionSplit {
            labeled: vec![Target { index: 0, class: 0 }],
            validation: vec![Target { index: 1, class: 1 }, Target { index: 2, class: 0 }],
            unlabeled: vec![3, 4],
            n_points: 5,
            n_classes: 2,
        }
    }

    #[test]
    fn single_config_grid() {
        let truth = [0, 1, 0, 1, 1];
        let v = validate_hyperparams(&[7], &split(), &truth, |_| Ok(vec![0; 5])).unwrap();
        assert_eq!(v.best, 7);
        assert_eq!(v.table.len(), 1);
        assert!(validate_hyperparams::<u32, _>(&[], &split(), &truth, |_| Ok(vec![0; 5])).is_err());
    }

    #[test]
    fn planted_model_selected_and_failures_tolerated() {
        let truth = [0, 1, 0, 1, 1];
        // config 2 reproduces the generating labels; config 0 fails outright
        let v = validate_hyperparams(&[0, 1, 2, 3], &split(), &truth, |&c| match c {
            0 => Err(Error::Singular("boom".into())),
            2 => Ok(truth.to_vec()),
            _ => Ok(vec![1; 5]),
        })
        .unwrap();
        assert_eq!(v.best, 2);
        assert!(v.table[0].failure.is_some());
        assert!(validate_hyperparams(&[0], &split(), &truth, |_| Err(Error::Singular("x".into()))).is_err());
    }

    #[test]
    fn staged_count() {
        let truth = [0, 1, 0, 1, 1];
        let mut calls = 0;
        let (a, b) = staged_validation(
            &[1, 2, 3],
            |best| (0..4).map(|k| best * 10 + k).collect(),
            &split(),
            &truth,
            |_| {
                calls += 1;
                Ok(vec![0; 5])
            },
        )
        .unwrap();
        assert_eq!(calls, 3 + 4);
        assert_eq!(a.table.len() + b.table.len(), 7);
        assert_eq!(b.best, 10);
    }

    struct P(f64);
    impl HyperParams for P {
        fn params(&self) -> Vec<(&'static str, String)> {
            vec![("lambda1", self.0.to_string())]
        }
    }

    #[test]
    fn validation_csv_columns() {
        let rows = vec![ValidationRow {
            config: P(0.5),
            validation: Some(Metrics::from_counts(1, 4)),
            evaluation: None,
            runtime_secs: 0.0,
            failure: None,
        }];
        let mut buf = Vec::new();
        write_validation_table(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "config_hash,lambda1,validation_error,evaluation_error,runtime_secs");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], P(0.5).config_hash());
        assert_eq!(row[1..4], ["0.5", "0.25", ""]);
    }

    #[test]
    fn summary_stats() {
        let s = Summary::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std_err - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(reduction_of_error_rate(10.0, 5.0), 50.0);
    }
}
