//! The experiment commands. Each returns typed records plus a printable
//! summary; [`execute`] writes them under the output directory.

use std::fmt::Write as _;
use std::fs;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use relreg::dataset::{
    load_dataset, make_split, sample_relation_labels, target_encoding, DataSet, Relation, RelationKind,
    RelationLabelSet, SupervisionSplit, Targets,
};
use relreg::eval::{
    classification_error, clustering_error, kmeans_ncut, loo_1nn_error, reduction_of_error_rate, staged_validation,
    write_validation_table, HyperParams, KMeansInit, KMeansOptions, Summary, ValidationRow,
};
use relreg::gradcheck::{central_difference, relative_error, DEFAULT_STEP};
use relreg::graph::{knn_graph, Bandwidth, GraphParams, LaplacianKind, LaplacianOp};
use relreg::relreg::{label_energy_gradient, sparse_rel_energy, SparsityPattern};
use relreg::solver::{
    classification_energy, decode, embedding_energy, refine_embedding, solve_err_classification, solve_irr,
    spectral_embedding, EnergyConfig, TIED_LAMBDA3,
};
use relreg::synth::Synthetic;
use relreg::{Error, Result};

use crate::config::{Command, RunConfig, Variant};

/// Relative error bound of the finite-difference checks.
pub const GRADCHECK_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifyRecord {
    pub dataset: String,
    pub method: &'static str,
    pub p: u32,
    pub nk: Option<usize>,
    pub seed: u64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub sigma_f: f64,
    pub error: f64,
    pub n_errors: usize,
    pub n_evaluated: usize,
    pub iterations: usize,
    pub final_energy: f64,
    /// Mean error of this method over all seeds.
    pub mean: f64,
    pub std_err: f64,
    /// Reduction of the mean error relative to IRR, in percent.
    pub rer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterRecord {
    pub dataset: String,
    pub method: &'static str,
    pub s_r: usize,
    pub seed: u64,
    pub error: f64,
    pub ncut: f64,
    pub restart: usize,
    pub iterations: usize,
    pub mean: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbedRecord {
    pub dataset: String,
    pub variant: &'static str,
    pub s_r: usize,
    pub seed: u64,
    pub dim: usize,
    pub loo_error: f64,
    pub iterations: usize,
    pub final_energy: f64,
    pub mean: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradFailure {
    pub seed: u64,
    pub u: usize,
    pub n: usize,
    pub rel_error: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckRecord {
    pub term: &'static str,
    pub instances: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub failures: Vec<GradFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub dataset: String,
    pub method: &'static str,
    /// `|N_K|`, or `dense`.
    pub nk: String,
    pub seed: u64,
    pub error: f64,
    pub mean: f64,
    pub std_err: f64,
    pub rer: f64,
}

/// Wall-clock measurements; kept apart from the reproducible records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub phase: String,
    pub u: usize,
    pub secs: f64,
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report<R> {
    pub records: Vec<R>,
    pub summary: String,
    /// Extra deterministic output files, relative to the output directory.
    pub files: Vec<(String, Vec<u8>)>,
    /// Files that also hold wall-clock data.
    pub volatile_files: Vec<(String, Vec<u8>)>,
    pub timings: Vec<Timing>,
    pub passed: bool,
}

impl<R> Report<R> {
    fn new(records: Vec<R>, summary: String) -> Self {
        Self {
            records,
            summary,
            files: Vec::new(),
            volatile_files: Vec::new(),
            timings: Vec::new(),
            passed: true,
        }
    }
}

pub fn load_data(cfg: &RunConfig) -> Result<DataSet> {
    match (&cfg.dataset, cfg.synthetic) {
        (Some(path), None) => load_dataset(path, cfg.format, &cfg.label_col),
        (None, Some(kind)) => kind.generate(cfg.n_points, cfg.data_seed),
        (Some(_), Some(_)) => Err(Error::InvalidArgument(
            "give either a dataset file or a synthetic data set, not both".into(),
        )),
        (None, None) => Err(Error::InvalidArgument("no dataset: use --dataset or --synthetic".into())),
    }
}

/// Data, graph and Laplacian shared by all seeds of a run.
struct Setup {
    ds: DataSet,
    op: LaplacianOp,
    pattern: Option<SparsityPattern>,
}

impl Setup {
    fn new(cfg: &RunConfig, power: u32) -> Result<Self> {
        let ds = load_data(cfg)?;
        Self::from_data(cfg, ds, power, cfg.nk)
    }

    fn from_data(cfg: &RunConfig, ds: DataSet, power: u32, nk: Option<usize>) -> Result<Self> {
        ds.require_labels()?;
        let graph = knn_graph(ds.points(), &cfg.graph_params())?;
        let op = LaplacianOp::new(graph, cfg.laplacian_kind(), power)?;
        let pattern = nk.map(|k| SparsityPattern::from_knn(ds.points(), k)).transpose()?;
        Ok(Self { ds, op, pattern })
    }

    fn truth(&self) -> Result<&[usize]> {
        self.ds.require_labels()
    }

    fn output_dim(&self) -> usize {
        if self.ds.n_classes() == 2 {
            1
        } else {
            self.ds.n_classes()
        }
    }
}

/// One point of the classification hyper-parameter grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub lambda1: f64,
    pub lambda2: f64,
    pub sigma_f: f64,
}

impl HyperParams for Candidate {
    fn params(&self) -> Vec<(&'static str, String)> {
        vec![
            ("lambda1", self.lambda1.to_string()),
            ("lambda2", self.lambda2.to_string()),
            ("sigma_f", self.sigma_f.to_string()),
        ]
    }
}

fn with_candidate(base: &EnergyConfig, c: &Candidate) -> EnergyConfig {
    EnergyConfig {
        lambda1: c.lambda1,
        lambda2: c.lambda2,
        sigma_f_sq: c.sigma_f,
        ..*base
    }
}

fn predict(setup: &Setup, targets: &Targets, config: &EnergyConfig) -> Result<(Vec<usize>, usize, f64)> {
    let sol = solve_err_classification(targets, &setup.op, config, setup.pattern.as_ref())?;
    Ok((decode(&sol.f), sol.iterations_used, sol.final_energy()))
}

fn validation_csv(rows: &[ValidationRow<Candidate>]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_validation_table(rows, &mut buf)?;
    Ok(buf)
}

/// Runs IRR and ERR over every seed. With `n_valid > 0` and a grid, the
/// weights are chosen per seed on the validation points: first `λ₁` for
/// IRR, then `λ₂` and `σ²_f` for ERR with that `λ₁`.
pub fn classify(cfg: &RunConfig) -> Result<Report<ClassifyRecord>> {
    cfg.validate()?;
    let setup = Setup::new(cfg, cfg.p)?;
    let truth = setup.truth()?.to_vec();
    let base = cfg.energy();
    let n_out = setup.output_dim();
    let search = cfg.n_valid > 0
        && !(cfg.grid_lambda1.is_empty() && cfg.grid_lambda2.is_empty() && cfg.grid_sigma_f.is_empty());
    let or_default = |grid: &[f64], v: f64| if grid.is_empty() { vec![v] } else { grid.to_vec() };

    let mut rows: Vec<ClassifyRecord> = Vec::new();
    let mut files = Vec::new();
    for &seed in &cfg.seeds {
        let split = make_split(&setup.ds, cfg.n_labeled, cfg.n_valid, cfg.per_class, seed)?;
        let targets = target_encoding(&split, n_out)?;
        let (irr_c, err_c) = if search {
            let stage1: Vec<Candidate> = or_default(&cfg.grid_lambda1, cfg.lambda1)
                .into_iter()
                .map(|lambda1| Candidate {
                    lambda1,
                    lambda2: 0.0,
                    sigma_f: cfg.sigma_f,
                })
                .collect();
            let (l2s, sfs) = (or_default(&cfg.grid_lambda2, cfg.lambda2), or_default(&cfg.grid_sigma_f, cfg.sigma_f));
            let stage2 = |best: &Candidate| {
                l2s.iter()
                    .flat_map(|&lambda2| sfs.iter().map(move |&sigma_f| (lambda2, sigma_f)))
                    .map(|(lambda2, sigma_f)| Candidate {
                        lambda2,
                        sigma_f,
                        ..*best
                    })
                    .collect()
            };
            let (v1, v2) = staged_validation(&stage1, stage2, &split, &truth, |c| {
                predict(&setup, &targets, &with_candidate(&base, c)).map(|r| r.0)
            })?;
            let mut table = v1.table.clone();
            table.extend(v2.table.iter().cloned());
            files.push((format!("validation_seed{seed}.csv"), validation_csv(&table)?));
            (v1.best, v2.best)
        } else {
            let c = Candidate {
                lambda1: cfg.lambda1,
                lambda2: cfg.lambda2,
                sigma_f: cfg.sigma_f,
            };
            (Candidate { lambda2: 0.0, ..c }, c)
        };
        for (method, cand) in [("IRR", irr_c), ("ERR", err_c)] {
            let config = with_candidate(&base, &cand);
            let (pred, iterations, final_energy) = if method == "IRR" {
                let f = solve_irr(&targets, &setup.op, cand.lambda1)?;
                let (e, _) = classification_energy(&f, &targets, &setup.op, &EnergyConfig { lambda2: 0.0, ..config }, None)?;
                (decode(&f), 0, e)
            } else {
                predict(&setup, &targets, &config)?
            };
            let m = classification_error(&pred, &truth, &split.unlabeled)?;
            rows.push(ClassifyRecord {
                dataset: setup.ds.name().to_string(),
                method,
                p: cfg.p,
                nk: if method == "IRR" { None } else { cfg.nk },
                seed,
                lambda1: cand.lambda1,
                lambda2: cand.lambda2,
                sigma_f: cand.sigma_f,
                error: m.error_rate,
                n_errors: m.n_errors,
                n_evaluated: m.n_evaluated,
                iterations,
                final_energy,
                mean: 0.0,
                std_err: 0.0,
                rer: 0.0,
            });
        }
    }
    let stats = |method: &str| Summary::of(&rows.iter().filter(|r| r.method == method).map(|r| r.error).collect::<Vec<_>>());
    let (irr, err) = (stats("IRR"), stats("ERR"));
    for r in &mut rows {
        let s = if r.method == "IRR" { irr } else { err };
        r.mean = s.mean;
        r.std_err = s.std_err;
        r.rer = reduction_of_error_rate(irr.mean, s.mean);
    }
    rows.sort_by(|a, b| a.method.cmp(b.method).reverse().then(a.seed.cmp(&b.seed)));

    let mut summary = format!(
        "classify {} (u = {}, p = {}, {} seeds)\n{:<8}{:>10}{:>10}{:>10}\n",
        setup.ds.name(),
        setup.ds.n_points(),
        cfg.p,
        cfg.seeds.len(),
        "method",
        "error %",
        "std err",
        "RER %"
    );
    for (name, s) in [("IRR", irr), ("ERR", err)] {
        let _ = writeln!(
            summary,
            "{name:<8}{:>10.2}{:>10.2}{:>10.1}",
            100.0 * s.mean,
            100.0 * s.std_err,
            reduction_of_error_rate(irr.mean, s.mean)
        );
    }
    let mut report = Report::new(rows, summary);
    report.volatile_files = files;
    Ok(report)
}

fn relations_for(cfg: &RunConfig, ds: &DataSet, s_r: usize, seed: u64) -> Result<RelationLabelSet> {
    match &cfg.relations {
        Some(path) => {
            let labels = RelationLabelSet::read(path)?;
            if labels.max_index().is_some_and(|m| m >= ds.n_points()) {
                return Err(Error::InvalidArgument(format!(
                    "{} refers to points beyond the {} in the data set",
                    path.display(),
                    ds.n_points()
                )));
            }
            Ok(labels)
        }
        None => sample_relation_labels(ds, s_r, seed),
    }
}

/// The `s_R` values a run sweeps over; a relation file fixes a single one.
fn sr_values(cfg: &RunConfig) -> Result<Vec<usize>> {
    match &cfg.relations {
        Some(path) => Ok(vec![RelationLabelSet::read(path)?.len()]),
        None => Ok(cfg.sr.clone()),
    }
}

fn fill_stats<R>(rows: &mut [R], key: impl Fn(&R) -> (String, usize), value: impl Fn(&R) -> f64, set: impl Fn(&mut R, Summary)) {
    let keys: Vec<(String, usize)> = rows.iter().map(&key).collect();
    for k in &keys {
        let vals: Vec<f64> = rows.iter().filter(|r| &key(r) == k).map(&value).collect();
        let s = Summary::of(&vals);
        for r in rows.iter_mut().filter(|r| &key(r) == k) {
            set(r, s);
        }
    }
}

/// Spectral clustering of the refined embedding for every `s_R` and seed,
/// plus the unconstrained "Original" spectral clustering.
pub fn cluster(cfg: &RunConfig) -> Result<Report<ClusterRecord>> {
    cfg.validate()?;
    let setup = Setup::new(cfg, cfg.p)?;
    let truth = setup.truth()?.to_vec();
    let k = setup.ds.n_classes();
    let dim = cfg.dim.unwrap_or(k);
    let spectrum = spectral_embedding(&setup.op, dim)?;
    let kmeans = |f: &Array2<f64>, seed: u64| {
        let opts = KMeansOptions {
            restarts: cfg.restarts,
            init: if cfg.plain_init { KMeansInit::Uniform } else { KMeansInit::PlusPlus },
            ..KMeansOptions::new(k, seed)
        };
        kmeans_ncut(f, setup.op.graph(), &opts)
    };
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let c = kmeans(&spectrum.vectors, seed)?;
        rows.push(ClusterRecord {
            dataset: setup.ds.name().to_string(),
            method: "Original",
            s_r: 0,
            seed,
            error: clustering_error(&c.assignment, &truth)?.error_rate,
            ncut: c.ncut,
            restart: c.restart,
            iterations: 0,
            mean: 0.0,
            std_err: 0.0,
        });
    }
    for s_r in sr_values(cfg)? {
        let config = cfg.embedding_energy(s_r);
        for &seed in &cfg.seeds {
            let labels = relations_for(cfg, &setup.ds, s_r, seed)?;
            let sol = refine_embedding(&setup.op, &spectrum, &config, &labels, setup.pattern.as_ref())?;
            let c = kmeans(&sol.f, seed)?;
            rows.push(ClusterRecord {
                dataset: setup.ds.name().to_string(),
                method: "ERR",
                s_r,
                seed,
                error: clustering_error(&c.assignment, &truth)?.error_rate,
                ncut: c.ncut,
                restart: c.restart,
                iterations: sol.iterations_used,
                mean: 0.0,
                std_err: 0.0,
            });
        }
    }
    fill_stats(
        &mut rows,
        |r| (r.method.to_string(), r.s_r),
        |r| r.error,
        |r, s| {
            r.mean = s.mean;
            r.std_err = s.std_err;
        },
    );

    let mut summary = format!(
        "cluster {} (u = {}, k = {k}, dim = {dim}, {} seeds)\n{:<10}{:>6}{:>10}{:>10}\n",
        setup.ds.name(),
        setup.ds.n_points(),
        cfg.seeds.len(),
        "method",
        "s_R",
        "error %",
        "std err"
    );
    let mut seen = Vec::new();
    for r in &rows {
        if !seen.contains(&(r.method, r.s_r)) {
            seen.push((r.method, r.s_r));
            let _ = writeln!(summary, "{:<10}{:>6}{:>10.2}{:>10.2}", r.method, r.s_r, 100.0 * r.mean, 100.0 * r.std_err);
        }
    }
    Ok(Report::new(rows, summary))
}

/// Coordinates as CSV: `x1 … xn,label`, floats in shortest round-trip form.
pub fn coordinates_csv(f: &Array2<f64>, labels: &[usize]) -> Vec<u8> {
    let mut out = String::new();
    let header: Vec<String> = (1..=f.ncols()).map(|d| format!("x{d}")).collect();
    let _ = writeln!(out, "{},label", header.join(","));
    for (row, label) in f.rows().into_iter().zip(labels) {
        let vals: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{},{label}", vals.join(","));
    }
    out.into_bytes()
}

/// Embeds with each configured variant and scores leave-one-out 1-NN error.
pub fn embed(cfg: &RunConfig) -> Result<Report<EmbedRecord>> {
    cfg.validate()?;
    let setup = Setup::new(cfg, cfg.p)?;
    let truth = setup.truth()?.to_vec();
    let dim = cfg.dim.unwrap_or(2);
    if dim < 2 {
        return Err(Error::InvalidArgument("embedding needs at least 2 dimensions".into()));
    }
    let spectrum = spectral_embedding(&setup.op, dim)?;
    let mut variants = cfg.variants.clone();
    variants.sort();
    variants.dedup();
    let mut rows = Vec::new();
    let mut files = Vec::new();
    for s_r in sr_values(cfg)? {
        for &seed in &cfg.seeds {
            let labels = relations_for(cfg, &setup.ds, s_r, seed)?;
            for &variant in &variants {
                let (f, iterations, final_energy) = match variant {
                    Variant::Spectral => (spectrum.vectors.clone(), 0, 0.0),
                    Variant::Labels | Variant::Full => {
                        let full = cfg.embedding_energy(s_r);
                        let config = if variant == Variant::Full {
                            full
                        } else {
                            EnergyConfig {
                                lambda1: cfg.lambda1,
                                lambda2: 0.0,
                                lambda3: if cfg.lambda2_prime.is_some() { TIED_LAMBDA3 } else { cfg.lambda3 },
                                ..full
                            }
                        };
                        let sol = refine_embedding(&setup.op, &spectrum, &config, &labels, setup.pattern.as_ref())?;
                        let e = sol.final_energy();
                        (sol.f, sol.iterations_used, e)
                    }
                };
                files.push((
                    format!("embedding_{variant}_sr{s_r}_seed{seed}.csv"),
                    coordinates_csv(&f, &truth),
                ));
                rows.push(EmbedRecord {
                    dataset: setup.ds.name().to_string(),
                    variant: variant.name(),
                    s_r,
                    seed,
                    dim,
                    loo_error: loo_1nn_error(&f, &truth)?.error_rate,
                    iterations,
                    final_energy,
                    mean: 0.0,
                    std_err: 0.0,
                });
            }
        }
    }
    fill_stats(
        &mut rows,
        |r| (r.variant.to_string(), r.s_r),
        |r| r.loo_error,
        |r, s| {
            r.mean = s.mean;
            r.std_err = s.std_err;
        },
    );
    rows.sort_by(|a, b| a.s_r.cmp(&b.s_r).then(a.variant.cmp(b.variant)).then(a.seed.cmp(&b.seed)));

    let mut summary = format!(
        "embed {} (u = {}, dim = {dim}, {} seeds)\n{:<10}{:>6}{:>12}{:>10}\n",
        setup.ds.name(),
        setup.ds.n_points(),
        cfg.seeds.len(),
        "variant",
        "s_R",
        "1-NN err %",
        "std err"
    );
    let mut seen = Vec::new();
    for r in &rows {
        if !seen.contains(&(r.variant, r.s_r)) {
            seen.push((r.variant, r.s_r));
            let _ = writeln!(summary, "{:<10}{:>6}{:>12.2}{:>10.2}", r.variant, r.s_r, 100.0 * r.mean, 100.0 * r.std_err);
        }
    }
    let mut report = Report::new(rows, summary);
    report.files = files;
    Ok(report)
}

/// A random small problem for the gradient checks.
struct Instance {
    f: Array2<f64>,
    points: Array2<f64>,
    op: LaplacianOp,
    labels: RelationLabelSet,
    rng: ChaCha8Rng,
}

fn instance(seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = rng.random_range(5..=15);
    let n = rng.random_range(1..=3);
    let points = Array2::from_shape_fn((u, 2), |_| rng.random_range(-1.0..1.0));
    let graph = knn_graph(&points, &GraphParams::new(3, Bandwidth::Adaptive))?;
    let kind = if rng.random_bool(0.5) {
        LaplacianKind::SymmetricNormalized
    } else {
        LaplacianKind::Unnormalized
    };
    let op = LaplacianOp::new(graph, kind, 1)?;
    let f = Array2::from_shape_fn((u, n), |_| rng.random_range(-1.0..1.0));
    let mut pairs = Vec::new();
    for _ in 0..u {
        let (i, j) = (rng.random_range(0..u), rng.random_range(0..u));
        if i != j && !pairs.iter().any(|r: &Relation| (r.i, r.j) == (i, j) || (r.i, r.j) == (j, i)) {
            let kind = if rng.random_bool(0.5) { RelationKind::Must } else { RelationKind::Cannot };
            pairs.push(Relation { i, j, kind });
        }
    }
    Ok(Instance {
        f,
        points,
        op,
        labels: RelationLabelSet::new(pairs)?,
        rng,
    })
}

fn random_config(rng: &mut ChaCha8Rng, power: u32) -> EnergyConfig {
    EnergyConfig {
        lambda1: rng.random_range(0.1..2.0),
        lambda2: rng.random_range(0.1..2.0),
        lambda3: rng.random_range(0.1..2.0),
        p: power,
        sigma_f_sq: rng.random_range(0.5..2.0),
        ..EnergyConfig::default()
    }
}

type Objective = Box<dyn Fn(&Array2<f64>) -> Result<(f64, Array2<f64>)>>;

/// Builds the objective of one term on one instance.
fn term_objective(term: &str, inst: &mut Instance) -> Result<Objective> {
    let (u, n) = inst.f.dim();
    let rng = &mut inst.rng;
    Ok(match term {
        "classification" => {
            let power = rng.random_range(1..=2);
            let config = random_config(rng, power);
            let mut mask = Array1::from_shape_fn(u, |_| if rng.random_bool(0.4) { 1.0 } else { 0.0 });
            mask[0] = 1.0;
            let values = Array2::from_shape_fn((u, n), |(i, _)| mask[i] * rng.random_range(-1.0..1.0));
            let targets = Targets { values, mask };
            let op = inst.op.with_power(power)?;
            Box::new(move |f| classification_energy(f, &targets, &op, &config, None))
        }
        "sparse" => {
            let size = rng.random_range(1..u);
            let pattern = SparsityPattern::from_knn(&inst.points, size)?;
            let kernel = random_config(rng, 1).kernel()?;
            let op = inst.op.clone();
            Box::new(move |f| sparse_rel_energy(f, &kernel, &op, &pattern))
        }
        "label" => {
            let kernel = random_config(rng, 1).kernel()?;
            let labels = inst.labels.clone();
            Box::new(move |f| label_energy_gradient(f, &kernel, &labels))
        }
        "embedding" => {
            let mut config = random_config(rng, 1);
            let pattern = if rng.random_bool(0.5) {
                let size = rng.random_range(1..u);
                config.sparsity = Some(size);
                Some(SparsityPattern::from_knn(&inst.points, size)?)
            } else {
                None
            };
            let target = Array2::from_shape_fn((u, n), |_| rng.random_range(-1.0..1.0));
            let labels = inst.labels.clone();
            let op = inst.op.clone();
            Box::new(move |f| embedding_energy(f, &target, &op, &config, &labels, pattern.as_ref()))
        }
        other => return Err(Error::InvalidArgument(format!("unknown gradient term `{other}`"))),
    })
}

pub const GRAD_TERMS: [&str; 4] = ["classification", "sparse", "label", "embedding"];

/// Compares analytic gradients with central differences on random instances.
/// `inject_fault` flips the sign of every analytic gradient.
pub fn gradcheck(cfg: &RunConfig) -> Result<Report<GradcheckRecord>> {
    let base = cfg.seeds.first().copied().unwrap_or(0);
    let mut rows = Vec::new();
    for (t, term) in GRAD_TERMS.into_iter().enumerate() {
        let mut max_rel: f64 = 0.0;
        let mut failures = Vec::new();
        for i in 0..cfg.instances {
            let seed = base.wrapping_mul(1_000_003).wrapping_add((t * 100_000 + i) as u64);
            let mut inst = instance(seed)?;
            let objective = term_objective(term, &mut inst)?;
            let (_, mut analytic) = objective(&inst.f)?;
            if cfg.inject_fault {
                analytic.mapv_inplace(|g| -g);
            }
            let numeric = central_difference(|x| objective(x).map_or(f64::NAN, |r| r.0), &inst.f, DEFAULT_STEP);
            let rel = relative_error(&analytic, &numeric);
            max_rel = max_rel.max(if rel.is_nan() { f64::INFINITY } else { rel });
            if rel.is_nan() || rel >= GRADCHECK_TOL {
                failures.push(GradFailure {
                    seed,
                    u: inst.f.nrows(),
                    n: inst.f.ncols(),
                    rel_error: rel,
                    analytic: analytic.iter().copied().collect(),
                    numeric: numeric.iter().copied().collect(),
                });
            }
        }
        rows.push(GradcheckRecord {
            term,
            instances: cfg.instances,
            max_rel_error: max_rel,
            tolerance: GRADCHECK_TOL,
            passed: failures.is_empty() && cfg.instances > 0,
            failures,
        });
    }
    let mut summary = format!("gradcheck ({} instances per term, h = {DEFAULT_STEP:e})\n", cfg.instances);
    let _ = writeln!(summary, "{:<16}{:>16}{:>8}", "term", "max rel error", "status");
    for r in &rows {
        let _ = writeln!(
            summary,
            "{:<16}{:>16.3e}{:>8}",
            r.term,
            r.max_rel_error,
            if r.passed { "pass" } else { "FAIL" }
        );
        for fail in &r.failures {
            let _ = writeln!(summary, "  instance seed {} (u = {}, n = {}): rel error {:.3e}", fail.seed, fail.u, fail.n, fail.rel_error);
        }
    }
    let passed = rows.iter().all(|r| r.passed);
    let mut report = Report::new(rows, summary);
    report.passed = passed;
    Ok(report)
}

fn nk_label(nk: usize) -> String {
    if nk == 0 {
        "dense".into()
    } else {
        nk.to_string()
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Error and time across `|N_K|` on the configured data, then IRR and dense
/// ERR timings across `bench_sizes` on synthetic data.
pub fn bench(cfg: &RunConfig) -> Result<Report<BenchRecord>> {
    if cfg.p > 1 && cfg.bench_nk.iter().any(|&k| k > 0) {
        return Err(Error::InvalidArgument(
            "a sparse relationship energy (nk) needs p = 1: powers of the laplacian tend to produce a denser matrix".into(),
        ));
    }
    let ds = load_data(cfg)?;
    let setup = Setup::from_data(cfg, ds, cfg.p, None)?;
    let truth = setup.truth()?.to_vec();
    let n_out = setup.output_dim();
    let patterns: Vec<Option<SparsityPattern>> = cfg
        .bench_nk
        .iter()
        .map(|&k| (k > 0).then(|| SparsityPattern::from_knn(setup.ds.points(), k)).transpose())
        .collect::<Result<_>>()?;
    let u = setup.ds.n_points();
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for &seed in &cfg.seeds {
        let split: SupervisionSplit = make_split(&setup.ds, cfg.n_labeled, 0, cfg.per_class, seed)?;
        let targets = target_encoding(&split, n_out)?;
        let start = Instant::now();
        let f0 = solve_irr(&targets, &setup.op, cfg.lambda1)?;
        timings.push(Timing {
            phase: "irr".into(),
            u,
            secs: start.elapsed().as_secs_f64(),
            iterations: None,
        });
        rows.push(BenchRecord {
            dataset: setup.ds.name().to_string(),
            method: "IRR",
            nk: "-".into(),
            seed,
            error: classification_error(&decode(&f0), &truth, &split.unlabeled)?.error_rate,
            mean: 0.0,
            std_err: 0.0,
            rer: 0.0,
        });
        for (&nk, pattern) in cfg.bench_nk.iter().zip(&patterns) {
            let config = EnergyConfig {
                sparsity: (nk > 0).then_some(nk),
                ..cfg.energy()
            };
            let start = Instant::now();
            let sol = solve_err_classification(&targets, &setup.op, &config, pattern.as_ref())?;
            timings.push(Timing {
                phase: format!("err_nk_{}", nk_label(nk)),
                u,
                secs: start.elapsed().as_secs_f64(),
                iterations: Some(sol.iterations_used),
            });
            rows.push(BenchRecord {
                dataset: setup.ds.name().to_string(),
                method: "ERR",
                nk: nk_label(nk),
                seed,
                error: classification_error(&decode(&sol.f), &truth, &split.unlabeled)?.error_rate,
                mean: 0.0,
                std_err: 0.0,
                rer: 0.0,
            });
        }
    }
    let key_of = |r: &BenchRecord| (format!("{}/{}", r.method, r.nk), 0);
    fill_stats(&mut rows, key_of, |r| r.error, |r, s| {
        r.mean = s.mean;
        r.std_err = s.std_err;
    });
    let irr_mean = rows.iter().find(|r| r.method == "IRR").map_or(0.0, |r| r.mean);
    for r in &mut rows {
        r.rer = reduction_of_error_rate(irr_mean, r.mean);
    }

    let mut summary = format!(
        "bench {} (u = {u}, {} seeds)\n{:<8}{:>8}{:>10}{:>10}{:>10}{:>12}\n",
        setup.ds.name(),
        cfg.seeds.len(),
        "method",
        "|N_K|",
        "error %",
        "std err",
        "RER %",
        "mean secs"
    );
    let mut seen = Vec::new();
    for r in &rows {
        if !seen.contains(&(r.method, r.nk.clone())) {
            seen.push((r.method, r.nk.clone()));
            let phase = if r.method == "IRR" { "irr".to_string() } else { format!("err_nk_{}", r.nk) };
            let secs: Vec<f64> = timings.iter().filter(|t| t.phase == phase).map(|t| t.secs).collect();
            let _ = writeln!(
                summary,
                "{:<8}{:>8}{:>10.2}{:>10.2}{:>10.1}{:>12.3}",
                r.method,
                r.nk,
                100.0 * r.mean,
                100.0 * r.std_err,
                r.rer,
                Summary::of(&secs).mean
            );
        }
    }

    let kind = cfg.synthetic.unwrap_or(Synthetic::TwoMoons);
    let mut per_eval = Vec::new();
    if !cfg.bench_sizes.is_empty() {
        let _ = writeln!(summary, "\nscaling on {kind} (dense, {} CG steps)", cfg.cg_steps);
        let _ = writeln!(summary, "{:>6}{:>12}{:>14}{:>12}", "u", "IRR secs", "secs / eval", "ERR secs");
    }
    for &size in &cfg.bench_sizes {
        let ds = kind.generate(size, cfg.data_seed)?;
        let s = Setup::from_data(cfg, ds, cfg.p, None)?;
        let split = make_split(&s.ds, cfg.n_labeled, 0, cfg.per_class, cfg.seeds[0])?;
        let targets = target_encoding(&split, 1.max(s.output_dim()))?;
        let config = EnergyConfig { sparsity: None, ..cfg.energy() };
        let start = Instant::now();
        let f0 = solve_irr(&targets, &s.op, cfg.lambda1)?;
        let irr_secs = start.elapsed().as_secs_f64();
        let mut reps = 0;
        let start = Instant::now();
        while reps < 3 || start.elapsed().as_secs_f64() < 0.25 {
            classification_energy(&f0, &targets, &s.op, &config, None)?;
            reps += 1;
        }
        let eval_secs = start.elapsed().as_secs_f64() / reps as f64;
        let start = Instant::now();
        let sol = solve_err_classification(&targets, &s.op, &config, None)?;
        let err_secs = start.elapsed().as_secs_f64();
        per_eval.push((size as f64, eval_secs));
        let _ = writeln!(summary, "{size:>6}{irr_secs:>12.3}{eval_secs:>14.5}{err_secs:>12.3}");
        timings.push(Timing { phase: "scale_irr".into(), u: size, secs: irr_secs, iterations: None });
        timings.push(Timing { phase: "scale_eval".into(), u: size, secs: eval_secs, iterations: None });
        timings.push(Timing { phase: "scale_err".into(), u: size, secs: err_secs, iterations: Some(sol.iterations_used) });
    }
    if per_eval.len() >= 2 {
        let _ = writeln!(summary, "log-log slope of dense energy+gradient cost vs u: {:.2}", loglog_slope(&per_eval));
    }
    let mut report = Report::new(rows, summary);
    report.volatile_files.push(("timings.jsonl".into(), jsonl(&timings)?));
    report.timings = timings;
    Ok(report)
}

pub fn jsonl<R: Serialize>(records: &[R]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        out.push(b'\n');
    }
    Ok(out)
}

fn write_report<R: Serialize>(cfg: &RunConfig, report: &Report<R>) -> Result<bool> {
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("effective.conf"), cfg.to_text())?;
    fs::write(cfg.out.join("results.jsonl"), jsonl(&report.records)?)?;
    for (name, bytes) in report.files.iter().chain(&report.volatile_files) {
        fs::write(cfg.out.join(name), bytes)?;
    }
    print!("{}", report.summary);
    Ok(report.passed)
}

/// Runs the configured command and writes its outputs. Returns whether all
/// checks passed (only gradcheck can fail without an error).
pub fn execute(cfg: &RunConfig) -> Result<bool> {
    match cfg.command {
        Command::Classify => write_report(cfg, &classify(cfg)?),
        Command::Cluster => write_report(cfg, &cluster(cfg)?),
        Command::Embed => write_report(cfg, &embed(cfg)?),
        Command::Gradcheck => write_report(cfg, &gradcheck(cfg)?),
        Command::Bench => write_report(cfg, &bench(cfg)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(command: Command, pairs: &[(&str, &str)]) -> RunConfig {
        let mut cfg = RunConfig::new(command);
        for (k, v) in pairs {
            cfg.set(k, v).unwrap();
        }
        cfg
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [10.0, 20.0, 40.0].iter().map(|&x: &f64| (x, 3.0 * x.powi(3))).collect();
        assert!((loglog_slope(&pts) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn coordinates_round_trip() {
        let f = Array2::from_shape_vec((2, 2), vec![0.1, -2.5e-17, 3.0, 1.0 / 3.0]).unwrap();
        let text = String::from_utf8(coordinates_csv(&f, &[1, 0])).unwrap();
        let mut rows = text.lines();
        assert_eq!(rows.next(), Some("x1,x2,label"));
        let vals: Vec<f64> = rows.next().unwrap().split(',').take(2).map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals, [0.1, -2.5e-17]);
        assert!(rows.next().unwrap().ends_with(",0"));
    }

    #[test]
    fn classify_summaries_are_consistent() {
        let cfg = small(Command::Classify, &[("synthetic", "blobs3"), ("n_points", "90"), ("seeds", "0-3")]);
        let report = classify(&cfg).unwrap();
        assert_eq!(report.records.len(), 8);
        let irr: Vec<&ClassifyRecord> = report.records.iter().filter(|r| r.method == "IRR").collect();
        let mean = irr.iter().map(|r| r.error).sum::<f64>() / 4.0;
        assert!(irr.iter().all(|r| (r.mean - mean).abs() < 1e-15 && r.rer == 0.0 && r.lambda2 == 0.0));
        assert_eq!(report.records[0].method, "IRR");
    }

    #[test]
    fn validation_keeps_first_best_on_ties() {
        let cfg = small(
            Command::Classify,
            &[
                ("synthetic", "blobs3"),
                ("n_points", "90"),
                ("seeds", "0"),
                ("n_valid", "2"),
                ("grid_lambda1", "0.5,1"),
                ("grid_lambda2", "0.1"),
            ],
        );
        let report = classify(&cfg).unwrap();
        assert_eq!(report.volatile_files.len(), 1);
        let table = String::from_utf8(report.volatile_files[0].1.clone()).unwrap();
        assert_eq!(table.lines().count(), 1 + 2 + 1);
        assert!(report.records.iter().all(|r| r.n_evaluated == 90 - 12 - 6));
    }

    #[test]
    fn spectral_variant_is_unrefined() {
        let cfg = small(
            Command::Embed,
            &[("synthetic", "blobs3"), ("n_points", "60"), ("seeds", "0"), ("sr", "10"), ("variants", "spectral")],
        );
        let report = embed(&cfg).unwrap();
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.records[0].iterations, 0);
    }

    #[test]
    fn gradcheck_flags_faults() {
        let mut cfg = small(Command::Gradcheck, &[("instances", "4")]);
        assert!(gradcheck(&cfg).unwrap().passed);
        cfg.inject_fault = true;
        let report = gradcheck(&cfg).unwrap();
        assert!(!report.passed);
        assert!(report.records.iter().all(|r| r.failures.len() == 4));
    }

    #[test]
    fn cluster_needs_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        fs::write(&path, "0,0\n1,0\n0,1\n1,1\n").unwrap();
        let mut cfg = small(Command::Cluster, &[("label_col", "none")]);
        cfg.dataset = Some(path);
        let err = cluster(&cfg).unwrap_err();
        assert!(matches!(err, Error::MissingLabels), "{err}");
    }
}
