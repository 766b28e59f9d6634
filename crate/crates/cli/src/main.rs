use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use relreg::Result;
use relreg_cli::{execute, Command, RunConfig};

/// Relationship-regularized semi-supervised classification, clustering and
/// embedding on kNN graphs.
#[derive(Parser)]
#[command(name = "relreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Transductive classification, IRR against ERR.
    Classify(Opts),
    /// Spectral clustering with must-link / cannot-link relations.
    Cluster(Opts),
    /// Low-dimensional embedding scored by leave-one-out 1-NN error.
    Embed(Opts),
    /// Finite-difference check of every analytic gradient.
    Gradcheck(Opts),
    /// Error and run time across sparsity levels and problem sizes.
    Bench(Opts),
}

/// Every flag overrides the matching key of the `--config` file.
#[derive(Args, Default)]
struct Opts {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input data file.
    #[arg(long)]
    dataset: Option<String>,
    /// `csv` or `libsvm`.
    #[arg(long)]
    format: Option<String>,
    /// Label column: `auto`, `none`, a header name or a 0-based index.
    #[arg(long)]
    label_col: Option<String>,
    /// Generated data instead of a file: two-moons, blobs3, gaussians3, mnist-like.
    #[arg(long)]
    synthetic: Option<String>,
    /// Size of a synthetic data set.
    #[arg(long)]
    n_points: Option<String>,
    #[arg(long)]
    data_seed: Option<String>,
    #[arg(long)]
    n_labeled: Option<String>,
    #[arg(long)]
    n_valid: Option<String>,
    /// Whether label counts are per class (`true`) or in total.
    #[arg(long)]
    per_class: Option<String>,
    /// Split and relation seeds, e.g. `0-9` or `1,4,7`.
    #[arg(long, alias = "seed")]
    seeds: Option<String>,
    /// Neighbors per point in the similarity graph.
    #[arg(long)]
    knn: Option<String>,
    /// Fixed graph bandwidth σ²ₓ.
    #[arg(long, conflicts_with = "adaptive_sigma")]
    sigma_x: Option<String>,
    /// Bandwidth from the mean kNN distance (default).
    #[arg(long)]
    adaptive_sigma: bool,
    #[arg(long)]
    squared_distance: bool,
    /// Symmetric normalized Laplacian.
    #[arg(long)]
    normalized: bool,
    /// Power of the Laplacian regularizer.
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    lambda1: Option<String>,
    #[arg(long)]
    lambda2: Option<String>,
    /// Tied embedding weights: λ₂ = λ₂′ / s_R, λ₁ = 0, λ₃ = 10.
    #[arg(long)]
    lambda2_prime: Option<String>,
    #[arg(long)]
    lambda3: Option<String>,
    /// Relationship kernel width σ²_f.
    #[arg(long)]
    sigma_f: Option<String>,
    #[arg(long)]
    cg_steps: Option<String>,
    #[arg(long)]
    grad_tol: Option<String>,
    /// Sparsity |N_K| of the relationship term, or `dense`.
    #[arg(long)]
    nk: Option<String>,
    /// Relation label file (`i,j,must|cannot`).
    #[arg(long, conflicts_with = "sr")]
    relations: Option<String>,
    /// Numbers of sampled relation labels, comma separated.
    #[arg(long)]
    sr: Option<String>,
    /// Embedding dimension.
    #[arg(long)]
    dim: Option<String>,
    /// Embedding variants: spectral, labels, full.
    #[arg(long)]
    variants: Option<String>,
    /// k-means restarts.
    #[arg(long)]
    restarts: Option<String>,
    /// Uniform k-means seeding instead of k-means++.
    #[arg(long)]
    plain_init: bool,
    /// Validation grids, comma separated.
    #[arg(long)]
    grid_lambda1: Option<String>,
    #[arg(long)]
    grid_lambda2: Option<String>,
    #[arg(long)]
    grid_sigma_f: Option<String>,
    /// Random instances per gradient term.
    #[arg(long)]
    instances: Option<String>,
    /// Corrupt the analytic gradients, to see the check fail.
    #[arg(long)]
    inject_fault: bool,
    #[arg(long)]
    bench_sizes: Option<String>,
    #[arg(long)]
    bench_nk: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

impl Opts {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let values = [
            ("dataset", &self.dataset),
            ("format", &self.format),
            ("label_col", &self.label_col),
            ("synthetic", &self.synthetic),
            ("n_points", &self.n_points),
            ("data_seed", &self.data_seed),
            ("n_labeled", &self.n_labeled),
            ("n_valid", &self.n_valid),
            ("per_class", &self.per_class),
            ("seeds", &self.seeds),
            ("knn", &self.knn),
            ("sigma_x", &self.sigma_x),
            ("p", &self.p),
            ("lambda1", &self.lambda1),
            ("lambda2", &self.lambda2),
            ("lambda2_prime", &self.lambda2_prime),
            ("lambda3", &self.lambda3),
            ("sigma_f", &self.sigma_f),
            ("cg_steps", &self.cg_steps),
            ("grad_tol", &self.grad_tol),
            ("nk", &self.nk),
            ("relations", &self.relations),
            ("sr", &self.sr),
            ("dim", &self.dim),
            ("variants", &self.variants),
            ("restarts", &self.restarts),
            ("grid_lambda1", &self.grid_lambda1),
            ("grid_lambda2", &self.grid_lambda2),
            ("grid_sigma_f", &self.grid_sigma_f),
            ("instances", &self.instances),
            ("bench_sizes", &self.bench_sizes),
            ("bench_nk", &self.bench_nk),
            ("out", &self.out),
        ];
        let mut out: Vec<(&'static str, String)> =
            values.into_iter().filter_map(|(k, v)| v.clone().map(|v| (k, v))).collect();
        let flags = [
            ("squared_distance", self.squared_distance),
            ("normalized", self.normalized),
            ("plain_init", self.plain_init),
            ("inject_fault", self.inject_fault),
        ];
        out.extend(flags.into_iter().filter(|f| f.1).map(|(k, _)| (k, "true".to_string())));
        if self.adaptive_sigma {
            out.push(("sigma_x", "adaptive".into()));
        }
        out
    }

    fn resolve(&self, command: Command) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(command, path)?,
            None => RunConfig::new(command),
        };
        for (key, value) in self.overrides() {
            cfg.set(key, &value)?;
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = match &cli.command {
        Sub::Classify(o) => (Command::Classify, o),
        Sub::Cluster(o) => (Command::Cluster, o),
        Sub::Embed(o) => (Command::Embed, o),
        Sub::Gradcheck(o) => (Command::Gradcheck, o),
        Sub::Bench(o) => (Command::Bench, o),
    };
    match opts.resolve(command).and_then(|cfg| execute(&cfg)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("relreg {command}: checks failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("relreg {command}: {e}");
            ExitCode::from(2)
        }
    }
}
