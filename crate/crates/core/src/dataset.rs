//! Point-cloud datasets, supervision splits, target encoding and
//! must-link / cannot-link relation labels.
//!
//! All sampling uses `ChaCha8Rng::seed_from_u64(seed)` followed by partial
//! Fisher–Yates shuffles (`random_range` draws), so splits and relation labels
//! are reproducible bit-for-bit for a given seed.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A point cloud of `u` points in `d` dimensions with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    points: Array2<f64>,
    labels: Option<Vec<usize>>,
    n_classes: usize,
    name: String,
}

impl DataSet {
    /// Validates and wraps a point matrix. Labels must be contiguous ids
    /// starting at zero; the class count is `max(label) + 1`.
    pub fn new(name: impl Into<String>, points: Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        let u = points.nrows();
        if u < 2 {
            return Err(Error::InvalidDataset(format!("need at least 2 points, got {u}")));
        }
        if points.ncols() == 0 {
            return Err(Error::InvalidDataset("points have zero features".into()));
        }
        if let Some((i, _)) = points
            .rows()
            .into_iter()
            .enumerate()
            .find(|(_, r)| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidDataset(format!("row {i} has a non-finite value")));
        }
        let mut n_classes = 0;
        if let Some(labels) = &labels {
            if labels.len() != u {
                return Err(Error::InvalidDataset(format!(
                    "{} labels for {u} points",
                    labels.len()
                )));
            }
            n_classes = labels.iter().max().map_or(0, |m| m + 1);
        }
        Ok(Self {
            points,
            labels,
            n_classes,
            name: name.into(),
        })
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels().ok_or(Error::MissingLabels)
    }

    pub fn n_points(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Number of classes, zero when unlabeled.
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Members of each class, in ascending index order.
    pub fn class_members(&self) -> Result<Vec<Vec<usize>>> {
        let labels = self.require_labels()?;
        let mut members = vec![Vec::new(); self.n_classes];
        for (i, &c) in labels.iter().enumerate() {
            members[c].push(i);
        }
        Ok(members)
    }

    /// Returns the dataset with rows reordered so that new row `r` is old row `order[r]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let u = self.n_points();
        let mut seen = vec![false; u];
        if order.len() != u || order.iter().any(|&i| i >= u || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::InvalidArgument("order is not a permutation".into()));
        }
        let points = self.points.select(ndarray::Axis(0), order);
        let labels = self.labels.as_ref().map(|l| order.iter().map(|&i| l[i]).collect());
        Self::new(self.name.clone(), points, labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    /// `label idx:value idx:value ...` with 1-based feature indices.
    LibSvm,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "libsvm" => Ok(Format::LibSvm),
            other => Err(Error::InvalidArgument(format!("unknown dataset format `{other}`"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::LibSvm => "libsvm",
        })
    }
}

/// Which CSV column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LabelColumn {
    /// A header column called `label`, if present.
    #[default]
    Auto,
    Name(String),
    Index(usize),
    None,
}

impl FromStr for LabelColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "" | "auto" => LabelColumn::Auto,
            "none" => LabelColumn::None,
            s => match s.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(s.to_string()),
            },
        })
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Auto => f.write_str("auto"),
            LabelColumn::Name(name) => f.write_str(name),
            LabelColumn::Index(i) => write!(f, "{i}"),
            LabelColumn::None => f.write_str("none"),
        }
    }
}

/// Loads a dataset. Label values are mapped to contiguous ids in sorted order
/// (numeric order when every label parses as a number).
pub fn load_dataset(path: &Path, format: Format, label_col: &LabelColumn) -> Result<DataSet> {
    let display = path.display().to_string();
    let (rows, raw_labels) = match format {
        Format::Csv => read_csv(path, &display, label_col)?,
        Format::LibSvm => read_libsvm(path, &display)?,
    };
    if rows.is_empty() {
        return Err(Error::EmptyFile(display));
    }
    let d = rows[0].len();
    let u = rows.len();
    let points = Array2::from_shape_vec((u, d), rows.into_iter().flatten().collect())
        .map_err(|e| Error::InvalidDataset(e.to_string()))?;
    let labels = raw_labels.map(|raw| map_labels(&raw));
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    DataSet::new(name, points, labels)
}

type Rows = (Vec<Vec<f64>>, Option<Vec<String>>);

fn read_csv(path: &Path, display: &str, label_col: &LabelColumn) -> Result<Rows> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(display, e))?;
    let mut records = reader.records().peekable();

    let first = match records.peek() {
        None => return Err(Error::EmptyFile(display.to_string())),
        Some(Err(_)) => {
            return Err(csv_error(display, records.next().unwrap().unwrap_err()));
        }
        Some(Ok(r)) => r.clone(),
    };
    let has_header = first.iter().any(|c| c.parse::<f64>().is_err());
    let header: Option<Vec<String>> = if has_header {
        records.next();
        Some(first.iter().map(str::to_string).collect())
    } else {
        None
    };

    let label_index = match (label_col, &header) {
        (LabelColumn::None, _) => None,
        (LabelColumn::Index(i), _) => Some(*i),
        (LabelColumn::Auto, Some(h)) => h.iter().position(|c| c == "label"),
        (LabelColumn::Auto, None) => None,
        (LabelColumn::Name(n), Some(h)) => Some(h.iter().position(|c| c == n).ok_or_else(|| {
            Error::InvalidArgument(format!("{display}: no column named `{n}`"))
        })?),
        (LabelColumn::Name(n), None) => {
            return Err(Error::InvalidArgument(format!(
                "{display}: label column `{n}` requested but file has no header"
            )))
        }
    };

    let mut width = header.as_ref().map(Vec::len);
    let mut rows = Vec::new();
    let mut labels = label_index.map(|_| Vec::new());
    for record in records {
        let record = record.map_err(|e| csv_error(display, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    path: display.to_string(),
                    line,
                    message: format!("expected {w} columns, found {}", record.len()),
                })
            }
            None => width = Some(record.len()),
            _ => {}
        }
        if let Some(li) = label_index {
            if li >= record.len() {
                return Err(Error::Parse {
                    path: display.to_string(),
                    line,
                    message: format!("label column {li} out of range"),
                });
            }
        }
        let mut row = Vec::with_capacity(record.len());
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == label_index {
                labels.as_mut().unwrap().push(cell.to_string());
                continue;
            }
            let v = cell.parse::<f64>().map_err(|_| Error::Parse {
                path: display.to_string(),
                line,
                message: format!("column {c}: `{cell}` is not a number"),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok((rows, labels))
}

fn csv_error(display: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: display.to_string(),
        line,
        message: e.to_string(),
    }
}

fn read_libsvm(path: &Path, display: &str) -> Result<Rows> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut sparse_rows = Vec::new();
    let mut labels = Vec::new();
    let mut d = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            path: display.to_string(),
            line: line_no,
            message,
        };
        let mut tokens = content.split_whitespace();
        let label = tokens.next().unwrap().to_string();
        let mut entries = Vec::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once(':')
                .ok_or_else(|| bad(format!("expected index:value, found `{tok}`")))?;
            let k: usize = k
                .parse()
                .ok()
                .filter(|&k| k >= 1)
                .ok_or_else(|| bad(format!("bad feature index `{k}`")))?;
            let v: f64 = v.parse().map_err(|_| bad(format!("`{v}` is not a number")))?;
            d = d.max(k);
            entries.push((k - 1, v));
        }
        labels.push(label);
        sparse_rows.push(entries);
    }
    let rows = sparse_rows
        .into_iter()
        .map(|entries| {
            let mut row = vec![0.0; d];
            for (k, v) in entries {
                row[k] = v;
            }
            row
        })
        .collect();
    Ok((rows, Some(labels)))
}

fn map_labels(raw: &[String]) -> Vec<usize> {
    let numeric: Option<Vec<f64>> = raw.iter().map(|s| s.parse::<f64>().ok()).collect();
    let mut distinct: Vec<&String> = raw.iter().collect::<HashSet<_>>().into_iter().collect();
    match &numeric {
        Some(_) => distinct.sort_by(|a, b| {
            a.parse::<f64>()
                .unwrap()
                .total_cmp(&b.parse::<f64>().unwrap())
                .then_with(|| a.cmp(b))
        }),
        None => distinct.sort(),
    }
    let ids: BTreeMap<&String, usize> = distinct.into_iter().enumerate().map(|(i, s)| (s, i)).collect();
    raw.iter().map(|s| ids[s]).collect()
}

/// A point index with its ground-truth class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Target {
    pub index: usize,
    pub class: usize,
}

/// Disjoint labeled / validation / unlabeled index sets covering `0..u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupervisionSplit {
    pub labeled: Vec<Target>,
    pub validation: Vec<Target>,
    pub unlabeled: Vec<usize>,
    pub n_points: usize,
    pub n_classes: usize,
}

impl SupervisionSplit {
    pub fn validation_indices(&self) -> Vec<usize> {
        self.validation.iter().map(|t| t.index).collect()
    }
}

/// Draws a labeled and a validation set without replacement. With
/// `per_class` the counts apply to every class separately.
pub fn make_split(
    ds: &DataSet,
    n_labeled: usize,
    n_validation: usize,
    per_class: bool,
    seed: u64,
) -> Result<SupervisionSplit> {
    let labels = ds.require_labels()?;
    let u = ds.n_points();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = n_labeled + n_validation;
    let total = if per_class { take * ds.n_classes() } else { take };
    if total >= u {
        return Err(Error::InvalidArgument(format!(
            "{total} labeled + validation points leave no unlabeled points out of {u}"
        )));
    }

    let mut labeled = Vec::new();
    let mut validation = Vec::new();
    let mut pick = |pool: &mut Vec<usize>, rng: &mut ChaCha8Rng| {
        partial_shuffle(pool, take, rng);
        labeled.extend(pool[..n_labeled].iter().copied());
        validation.extend(pool[n_labeled..take].iter().copied());
    };
    if per_class {
        for (class, mut members) in ds.class_members()?.into_iter().enumerate() {
            if members.len() < take {
                return Err(Error::InsufficientClass {
                    class,
                    available: members.len(),
                    requested: take,
                });
            }
            pick(&mut members, &mut rng);
        }
    } else {
        let mut all: Vec<usize> = (0..u).collect();
        pick(&mut all, &mut rng);
    }
    labeled.sort_unstable();
    validation.sort_unstable();

    let mut taken = vec![false; u];
    for &i in labeled.iter().chain(&validation) {
        taken[i] = true;
    }
    let unlabeled = (0..u).filter(|&i| !taken[i]).collect();
    let to_targets = |idx: Vec<usize>| {
        idx.into_iter()
            .map(|index| Target {
                index,
                class: labels[index],
            })
            .collect()
    };
    Ok(SupervisionSplit {
        labeled: to_targets(labeled),
        validation: to_targets(validation),
        unlabeled,
        n_points: u,
        n_classes: ds.n_classes(),
    })
}

/// Moves `k` uniformly chosen elements of `pool` to its front.
fn partial_shuffle<T>(pool: &mut [T], k: usize, rng: &mut impl Rng) {
    for i in 0..k.min(pool.len()) {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelationKind {
    Must,
    Cannot,
}

impl RelationKind {
    /// Target kernel value: 1 for must-link, 0 for cannot-link.
    pub fn target(self) -> f64 {
        match self {
            RelationKind::Must => 1.0,
            RelationKind::Cannot => 0.0,
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelationKind::Must => "must",
            RelationKind::Cannot => "cannot",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Relation {
    pub i: usize,
    pub j: usize,
    pub kind: RelationKind,
}

/// Pairwise must-link / cannot-link labels over distinct unordered pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationLabelSet {
    entries: Vec<Relation>,
}

impl RelationLabelSet {
    pub fn new(entries: Vec<Relation>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &entries {
            if r.i == r.j {
                return Err(Error::InvalidArgument(format!("relation on a single point {}", r.i)));
            }
            if !seen.insert((r.i.min(r.j), r.i.max(r.j))) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate relation for pair ({}, {})",
                    r.i, r.j
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Relation] {
        &self.entries
    }

    /// s_R, the number of labeled pairs.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.iter().map(|r| r.i.max(r.j)).max()
    }

    /// Reads `i,j,must` / `i,j,cannot` lines (0-based indices).
    pub fn read(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut entries = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let content = line.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let bad = |message: String| Error::Parse {
                path: display.clone(),
                line: idx + 1,
                message,
            };
            let fields: Vec<&str> = content.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(bad(format!("expected `i,j,kind`, found `{content}`")));
            }
            let index = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad index `{s}`")));
            let kind = match fields[2] {
                "must" => RelationKind::Must,
                "cannot" => RelationKind::Cannot,
                k => return Err(bad(format!("unknown relation kind `{k}`"))),
            };
            entries.push(Relation {
                i: index(fields[0])?,
                j: index(fields[1])?,
                kind,
            });
        }
        Self::new(entries)
    }

    pub fn write(&self, mut out: impl Write) -> Result<()> {
        for r in &self.entries {
            writeln!(out, "{},{},{}", r.i, r.j, r.kind)?;
        }
        Ok(())
    }
}

/// Samples `s_r / 2` must-link and `s_r / 2` cannot-link pairs consistent with
/// the ground truth, uniformly and without pair repetition.
pub fn sample_relation_labels(ds: &DataSet, s_r: usize, seed: u64) -> Result<RelationLabelSet> {
    let labels = ds.require_labels()?;
    if !s_r.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("s_R must be even, got {s_r}")));
    }
    let half = s_r / 2;
    if half == 0 {
        return Ok(RelationLabelSet::default());
    }
    let u = ds.n_points();
    let sizes: Vec<usize> = ds.class_members()?.iter().map(Vec::len).collect();
    let same: usize = sizes.iter().map(|&n| n * n.saturating_sub(1) / 2).sum();
    let all = u * (u - 1) / 2;
    let available = [(RelationKind::Must, same), (RelationKind::Cannot, all - same)];
    for (kind, count) in available {
        if count < half {
            return Err(Error::InvalidArgument(format!(
                "only {count} {kind}-link pairs exist but {half} were requested"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(s_r);
    for (kind, count) in available {
        let wanted = |i: usize, j: usize| (labels[i] == labels[j]) == (kind == RelationKind::Must);
        if 2 * half >= count {
            // dense regime: enumerate and shuffle
            let mut pool: Vec<(usize, usize)> = (0..u)
                .flat_map(|i| (i + 1..u).map(move |j| (i, j)))
                .filter(|&(i, j)| wanted(i, j))
                .collect();
            partial_shuffle(&mut pool, half, &mut rng);
            entries.extend(pool[..half].iter().map(|&(i, j)| Relation { i, j, kind }));
        } else {
            let mut seen = HashSet::new();
            while seen.len() < half {
                let i = rng.random_range(0..u);
                let j = rng.random_range(0..u);
                if i == j || !wanted(i, j) || !seen.insert((i.min(j), i.max(j))) {
                    continue;
                }
                entries.push(Relation { i, j, kind });
            }
        }
    }
    RelationLabelSet::new(entries)
}

/// Supervision targets `t` and the diagonal of the label indicator `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub values: Array2<f64>,
    pub mask: Array1<f64>,
}

impl Targets {
    pub fn n_labeled(&self) -> usize {
        self.mask.iter().filter(|&&h| h != 0.0).count()
    }

    pub fn output_dim(&self) -> usize {
        self.values.ncols()
    }
}

/// Encodes the labeled part of a split: ±1 in a single column for binary
/// problems (`n_out == 1`), one-hot rows otherwise (`n_out == C`).
pub fn target_encoding(split: &SupervisionSplit, n_out: usize) -> Result<Targets> {
    let c = split.n_classes;
    let binary = match n_out {
        1 if c == 2 => true,
        n if n == c && n >= 2 => false,
        n => {
            return Err(Error::InvalidArgument(format!(
                "output dimension {n} does not match {c} classes (use 1 for binary, C otherwise)"
            )))
        }
    };
    let u = split.n_points;
    let mut values = Array2::zeros((u, n_out));
    let mut mask = Array1::zeros(u);
    for t in &split.labeled {
        mask[t.index] = 1.0;
        if binary {
            values[[t.index, 0]] = if t.class == 1 { 1.0 } else { -1.0 };
        } else {
            values[[t.index, t.class]] = 1.0;
        }
    }
    Ok(Targets { values, mask })
}
