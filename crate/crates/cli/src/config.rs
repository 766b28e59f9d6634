//! Run configuration: defaults, `key = value` files and flag overrides.
//!
//! Precedence is defaults, then the config file, then command-line flags.
//! The effective configuration is written next to the results in the same
//! `key = value` format, so it can be fed back with `--config`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use relreg::dataset::{Format, LabelColumn};
use relreg::graph::{Bandwidth, GraphParams, LaplacianKind};
use relreg::solver::EnergyConfig;
use relreg::synth::Synthetic;
use relreg::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Classify,
    Cluster,
    Embed,
    Gradcheck,
    Bench,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Classify => "classify",
            Self::Cluster => "cluster",
            Self::Embed => "embed",
            Self::Gradcheck => "gradcheck",
            Self::Bench => "bench",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Self::Classify, Self::Cluster, Self::Embed, Self::Gradcheck, Self::Bench]
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown command `{s}`")))
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Embedding variants: the spectral embedding alone, refined by the label
/// loss and graph term with `λ₂ = 0`, and the full objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    Spectral,
    Labels,
    Full,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Self::Spectral => "spectral",
            Self::Labels => "labels",
            Self::Full => "full",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(Self::Spectral),
            "labels" => Ok(Self::Labels),
            "full" => Ok(Self::Full),
            _ => Err(Error::InvalidArgument(format!("unknown embedding variant `{s}`"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    /// Data file; exclusive with `synthetic`.
    pub dataset: Option<PathBuf>,
    pub format: Format,
    pub label_col: LabelColumn,
    pub synthetic: Option<Synthetic>,
    pub n_points: usize,
    pub data_seed: u64,
    /// Labeled points per class (or in total when `per_class` is false).
    pub n_labeled: usize,
    pub n_valid: usize,
    pub per_class: bool,
    pub seeds: Vec<u64>,
    pub knn: usize,
    /// `None` picks `σ²ₓ` adaptively.
    pub sigma_x: Option<f64>,
    pub squared_distance: bool,
    pub normalized: bool,
    pub p: u32,
    pub lambda1: f64,
    pub lambda2: f64,
    /// When set, embedding weights are tied: `λ₁ = 0`, `λ₃ = 10`, `λ₂ = λ₂′/s_R`.
    pub lambda2_prime: Option<f64>,
    pub lambda3: f64,
    /// `σ²_f`, the squared bandwidth of the relationship kernel.
    pub sigma_f: f64,
    pub cg_steps: usize,
    pub grad_tol: f64,
    /// `|N_K|` of the sparse relationship energy; `None` is dense.
    pub nk: Option<usize>,
    pub relations: Option<PathBuf>,
    pub sr: Vec<usize>,
    /// Embedding dimension; defaults to 2 for `embed` and the class count for `cluster`.
    pub dim: Option<usize>,
    pub variants: Vec<Variant>,
    pub restarts: usize,
    pub plain_init: bool,
    pub grid_lambda1: Vec<f64>,
    pub grid_lambda2: Vec<f64>,
    pub grid_sigma_f: Vec<f64>,
    pub instances: usize,
    pub inject_fault: bool,
    pub bench_sizes: Vec<usize>,
    /// `|N_K|` values of the sparsity sweep; 0 stands for dense.
    pub bench_nk: Vec<usize>,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            dataset: None,
            format: Format::Csv,
            label_col: LabelColumn::Auto,
            synthetic: None,
            n_points: 400,
            data_seed: 0,
            n_labeled: 4,
            n_valid: 0,
            per_class: true,
            seeds: (0..10).collect(),
            knn: 10,
            sigma_x: None,
            squared_distance: false,
            normalized: false,
            p: 1,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda2_prime: None,
            lambda3: 10.0,
            sigma_f: 1.0,
            cg_steps: 50,
            grad_tol: 1e-8,
            nk: None,
            relations: None,
            sr: vec![0],
            dim: None,
            variants: vec![Variant::Spectral, Variant::Labels, Variant::Full],
            restarts: 10,
            plain_init: false,
            grid_lambda1: Vec::new(),
            grid_lambda2: Vec::new(),
            grid_sigma_f: Vec::new(),
            instances: 20,
            inject_fault: false,
            bench_sizes: vec![250, 500, 1000],
            bench_nk: vec![25, 50, 100, 200, 0],
            out: PathBuf::from("out"),
        }
    }

    /// Reads a `key = value` file over the defaults. Blank lines and lines
    /// starting with `#` are skipped. A `command` key, if present, must match.
    pub fn load(command: Command, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::new(command);
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "command" {
                if value != command.name() {
                    return Err(parse_err(format!("file is for `{value}`, not `{command}`")));
                }
                continue;
            }
            cfg.set(key, value).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(cfg)
    }

    /// Sets one field from its textual form. Keys use underscores; dashes are
    /// accepted too.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('-', "_");
        match key.as_str() {
            "dataset" => self.dataset = opt(value, |v| Ok(PathBuf::from(v)))?,
            "format" => self.format = value.parse()?,
            "label_col" => self.label_col = value.parse()?,
            "synthetic" => self.synthetic = opt(value, str::parse)?,
            "n_points" => self.n_points = num(value)?,
            "data_seed" => self.data_seed = num(value)?,
            "n_labeled" => self.n_labeled = num(value)?,
            "n_valid" => self.n_valid = num(value)?,
            "per_class" => self.per_class = flag(value)?,
            "seeds" | "seed" => self.seeds = seeds(value)?,
            "knn" => self.knn = num(value)?,
            "sigma_x" => {
                self.sigma_x = if value == "adaptive" { None } else { opt(value, num)? };
            }
            "squared_distance" => self.squared_distance = flag(value)?,
            "normalized" => self.normalized = flag(value)?,
            "p" => self.p = num(value)?,
            "lambda1" => self.lambda1 = num(value)?,
            "lambda2" => self.lambda2 = num(value)?,
            "lambda2_prime" => self.lambda2_prime = opt(value, num)?,
            "lambda3" => self.lambda3 = num(value)?,
            "sigma_f" => self.sigma_f = num(value)?,
            "cg_steps" => self.cg_steps = num(value)?,
            "grad_tol" => self.grad_tol = num(value)?,
            "nk" => self.nk = if value == "dense" { None } else { opt(value, num)? },
            "relations" => self.relations = opt(value, |v| Ok(PathBuf::from(v)))?,
            "sr" => self.sr = list(value)?,
            "dim" => self.dim = opt(value, num)?,
            "variants" => self.variants = list(value)?,
            "restarts" => self.restarts = num(value)?,
            "plain_init" => self.plain_init = flag(value)?,
            "grid_lambda1" => self.grid_lambda1 = list(value)?,
            "grid_lambda2" => self.grid_lambda2 = list(value)?,
            "grid_sigma_f" => self.grid_sigma_f = list(value)?,
            "instances" => self.instances = num(value)?,
            "inject_fault" => self.inject_fault = flag(value)?,
            "bench_sizes" => self.bench_sizes = list(value)?,
            "bench_nk" => self.bench_nk = nk_list(value)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(Error::InvalidArgument(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Every field in `key = value` form, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let join = |v: Vec<String>| v.join(",");
        vec![
            ("command", self.command.to_string()),
            ("dataset", path(&self.dataset)),
            ("format", self.format.to_string()),
            ("label_col", self.label_col.to_string()),
            ("synthetic", self.synthetic.map_or(String::new(), |s| s.to_string())),
            ("n_points", self.n_points.to_string()),
            ("data_seed", self.data_seed.to_string()),
            ("n_labeled", self.n_labeled.to_string()),
            ("n_valid", self.n_valid.to_string()),
            ("per_class", self.per_class.to_string()),
            ("seeds", join(self.seeds.iter().map(u64::to_string).collect())),
            ("knn", self.knn.to_string()),
            ("sigma_x", self.sigma_x.map_or("adaptive".into(), |s| s.to_string())),
            ("squared_distance", self.squared_distance.to_string()),
            ("normalized", self.normalized.to_string()),
            ("p", self.p.to_string()),
            ("lambda1", self.lambda1.to_string()),
            ("lambda2", self.lambda2.to_string()),
            ("lambda2_prime", self.lambda2_prime.map_or(String::new(), |v| v.to_string())),
            ("lambda3", self.lambda3.to_string()),
            ("sigma_f", self.sigma_f.to_string()),
            ("cg_steps", self.cg_steps.to_string()),
            ("grad_tol", self.grad_tol.to_string()),
            ("nk", self.nk.map_or("dense".into(), |v| v.to_string())),
            ("relations", path(&self.relations)),
            ("sr", join(self.sr.iter().map(usize::to_string).collect())),
            ("dim", self.dim.map_or(String::new(), |v| v.to_string())),
            ("variants", join(self.variants.iter().map(Variant::to_string).collect())),
            ("restarts", self.restarts.to_string()),
            ("plain_init", self.plain_init.to_string()),
            ("grid_lambda1", join(self.grid_lambda1.iter().map(f64::to_string).collect())),
            ("grid_lambda2", join(self.grid_lambda2.iter().map(f64::to_string).collect())),
            ("grid_sigma_f", join(self.grid_sigma_f.iter().map(f64::to_string).collect())),
            ("instances", self.instances.to_string()),
            ("inject_fault", self.inject_fault.to_string()),
            ("bench_sizes", join(self.bench_sizes.iter().map(usize::to_string).collect())),
            (
                "bench_nk",
                join(self.bench_nk.iter().map(|&k| if k == 0 { "dense".into() } else { k.to_string() }).collect()),
            ),
            ("out", self.out.display().to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn graph_params(&self) -> GraphParams {
        let bandwidth = self.sigma_x.map_or(Bandwidth::Adaptive, Bandwidth::Fixed);
        GraphParams {
            squared_distance: self.squared_distance,
            ..GraphParams::new(self.knn, bandwidth)
        }
    }

    pub fn laplacian_kind(&self) -> LaplacianKind {
        if self.normalized {
            LaplacianKind::SymmetricNormalized
        } else {
            LaplacianKind::Unnormalized
        }
    }

    /// Weights for the classification objective.
    pub fn energy(&self) -> EnergyConfig {
        EnergyConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            p: self.p,
            sigma_f_sq: self.sigma_f,
            cg_steps: self.cg_steps,
            grad_tol: self.grad_tol,
            sparsity: self.nk,
        }
    }

    /// Weights for the full embedding objective with `s_r` relation labels.
    pub fn embedding_energy(&self, s_r: usize) -> EnergyConfig {
        match self.lambda2_prime {
            Some(l2p) => EnergyConfig {
                p: self.p,
                cg_steps: self.cg_steps,
                grad_tol: self.grad_tol,
                sparsity: self.nk,
                ..EnergyConfig::tied(l2p, s_r, self.sigma_f)
            },
            None => self.energy(),
        }
    }

    /// Rejects combinations that no command can run.
    pub fn validate(&self) -> Result<()> {
        if self.dataset.is_some() && self.synthetic.is_some() {
            return Err(Error::InvalidArgument("give either a dataset file or a synthetic data set, not both".into()));
        }
        if self.nk.is_some() && self.p > 1 {
            return Err(Error::InvalidArgument(
                "a sparse relationship energy (nk) needs p = 1: powers of the laplacian tend to produce a denser matrix"
                    .into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        if self.relations.is_some() && self.sr != [0] {
            return Err(Error::InvalidArgument("give either a relation file or sr counts, not both".into()));
        }
        Ok(())
    }
}

fn num<T: FromStr>(value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("cannot parse `{value}`")))
}

fn flag(value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidArgument(format!("expected true or false, got `{value}`"))),
    }
}

fn opt<T>(value: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Option<T>> {
    if value.is_empty() {
        Ok(None)
    } else {
        parse(value).map(Some)
    }
}

fn list<T: FromStr>(value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| Error::InvalidArgument(format!("cannot parse list item `{v}`"))))
        .collect()
}

fn nk_list(value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| if v == "dense" { Ok(0) } else { num(v) })
        .collect()
}

/// `3`, `0,2,5` or an inclusive range `0-9`.
pub fn seeds(value: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = value.split_once('-') {
        let (a, b): (u64, u64) = (num(a.trim())?, num(b.trim())?);
        if a > b {
            return Err(Error::InvalidArgument(format!("empty seed range `{value}`")));
        }
        return Ok((a..=b).collect());
    }
    list(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn seed_forms() {
        assert_eq!(seeds("0-3").unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(seeds("5").unwrap(), vec![5]);
        assert_eq!(seeds("1, 4").unwrap(), vec![1, 4]);
        assert!(seeds("4-1").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::new(Command::Cluster);
        cfg.set("synthetic", "gaussians3").unwrap();
        cfg.set("sigma-x", "0.5").unwrap();
        cfg.set("lambda2_prime", "3").unwrap();
        cfg.set("bench_nk", "25,dense").unwrap();
        cfg.set("sr", "0,20,50").unwrap();
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(cfg.to_text().as_bytes()).unwrap();
        let back = RunConfig::load(Command::Cluster, file.path()).unwrap();
        assert_eq!(back, cfg);
        assert!(RunConfig::load(Command::Embed, file.path()).is_err());
    }

    #[test]
    fn bad_lines_report_position() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "# comment\nknn = 5\nknn 7").unwrap();
        match RunConfig::load(Command::Classify, file.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::new(Command::Classify).set("bogus", "1").is_err());
    }

    #[test]
    fn sparse_with_power_rejected() {
        let mut cfg = RunConfig::new(Command::Classify);
        cfg.nk = Some(25);
        cfg.p = 2;
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("denser"), "{msg}");
    }

    #[test]
    fn tied_embedding_weights() {
        let mut cfg = RunConfig::new(Command::Embed);
        cfg.lambda2_prime = Some(6.0);
        let e = cfg.embedding_energy(3);
        assert_eq!((e.lambda1, e.lambda2, e.lambda3), (0.0, 2.0, 10.0));
        assert_eq!(cfg.embedding_energy(0).lambda2, 0.0);
    }
}
