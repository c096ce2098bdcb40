//! Datasets, synthetic generators and on-disk formats.
//!
//! Formats:
//! - edge list: one `src dst [weight]` per line, whitespace or comma
//!   separated, `#` starts a comment;
//! - matrices as CSV with one header row, or the `FDMV` binary layout
//!   (magic, `u32` version, `u64` rows, `u64` cols, row-major `f64`, all
//!   little-endian);
//! - labels as CSV `node,label`, unlisted nodes unlabeled (`-1`);
//! - splits as JSON `{"train": [...], "val": [...], "test": [...]}`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{indexed_stream, stream, Purpose};

pub const MATRIX_MAGIC: &[u8; 4] = b"FDMV";
pub const MATRIX_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut owner: BTreeMap<usize, &'static str> = BTreeMap::new();
        for (name, idx) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &node in idx {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, n });
                }
                if let Some(first) = owner.insert(node, name) {
                    return Err(Error::SplitOverlap { node, first, second: name });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: Graph,
    pub features: DMatrix<f64>,
    /// `-1` marks an unlabeled node.
    pub labels: Vec<i64>,
    pub splits: Splits,
}

impl Dataset {
    pub fn new(graph: Graph, features: DMatrix<f64>, labels: Vec<i64>, splits: Splits) -> Result<Self> {
        let n = graph.n_nodes();
        if features.nrows() != n {
            return Err(Error::shape("features", (n, features.ncols()), features.shape()));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: n.to_string(),
                got: labels.len().to_string(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        if let Some(&l) = labels.iter().find(|&&l| l < -1) {
            return Err(Error::invalid("label", l, "must be -1 or a class index"));
        }
        splits.validate(n)?;
        Ok(Dataset { graph, features, labels, splits })
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io(e)
    })
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_edge_list(path: &Path, n_nodes: usize) -> Result<Graph> {
    let text = fs::read_to_string(path)?;
    let mut edges = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(parse_err(path, k + 1, format!("expected `src dst [weight]`, got {} fields", fields.len())));
        }
        let node = |s: &str| -> Result<usize> {
            let v: usize = s.parse().map_err(|_| parse_err(path, k + 1, format!("bad node index `{s}`")))?;
            if v >= n_nodes {
                return Err(parse_err(path, k + 1, format!("node {v} out of range for {n_nodes} nodes")));
            }
            Ok(v)
        };
        let (src, dst) = (node(fields[0])?, node(fields[1])?);
        let w = match fields.get(2) {
            Some(s) => s.parse::<f64>().map_err(|_| parse_err(path, k + 1, format!("bad weight `{s}`")))?,
            None => 1.0,
        };
        if !(w >= 0.0 && w.is_finite()) {
            return Err(parse_err(path, k + 1, format!("weight {w} must be finite and nonnegative")));
        }
        edges.push((src, dst, w));
    }
    Graph::new(n_nodes, &edges)
}

pub fn write_edge_list(path: &Path, g: &Graph) -> Result<()> {
    let mut s = String::new();
    for &(a, b, w) in g.edges() {
        s.push_str(&format!("{a} {b} {w}\n"));
    }
    write_atomic(path, s.as_bytes())
}

pub fn save_matrix_csv(path: &Path, m: &DMatrix<f64>, column_prefix: &str) -> Result<()> {
    let mut s = (0..m.ncols()).map(|j| format!("{column_prefix}{j}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

/// Reads a CSV matrix, skipping the header row. Non-finite values are
/// rejected with their position.
pub fn load_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let cols = match lines.next() {
        Some((_, h)) if h.trim().is_empty() => 0,
        Some((_, h)) => h.split(',').count(),
        None => return Err(parse_err(path, 1, "missing header row")),
    };
    let mut data = Vec::new();
    let mut rows = 0;
    for (k, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != cols {
            return Err(parse_err(path, k + 1, format!("expected {cols} columns, got {}", fields.len())));
        }
        for (j, f) in fields.iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| parse_err(path, k + 1, format!("column {j}: bad number `{f}`")))?;
            if !v.is_finite() {
                return Err(parse_err(path, k + 1, format!("column {j}: non-finite value {v}")));
            }
            data.push(v);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn matrix_to_bytes(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * m.len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn matrix_from_bytes(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < 24 {
        return Err(Error::Format(format!("{} bytes is shorter than the 24-byte header", bytes.len())));
    }
    if &bytes[..4] != MATRIX_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MATRIX_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let n = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .filter(|&n| n <= usize::MAX as u64)
        .ok_or_else(|| Error::Format(format!("dimensions {rows}x{cols} overflow")))?;
    if (bytes.len() - 24) as u64 != n {
        return Err(Error::Format(format!("expected {n} data bytes for {rows}x{cols}, found {}", bytes.len() - 24)));
    }
    let data: Vec<f64> = bytes[24..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(DMatrix::from_row_slice(rows as usize, cols as usize, &data))
}

pub fn save_matrix_bin(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_atomic(path, &matrix_to_bytes(m))
}

pub fn load_matrix_bin(path: &Path) -> Result<DMatrix<f64>> {
    matrix_from_bytes(&fs::read(path)?)
}

pub fn read_labels(path: &Path, n_nodes: usize) -> Result<Vec<i64>> {
    let text = fs::read_to_string(path)?;
    let mut labels = vec![-1i64; n_nodes];
    let mut seen = vec![false; n_nodes];
    for (k, raw) in text.lines().enumerate().skip(1) {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(parse_err(path, k + 1, "expected `node,label`"));
        }
        let node: usize = fields[0].parse().map_err(|_| parse_err(path, k + 1, format!("bad node `{}`", fields[0])))?;
        let label: i64 = fields[1].parse().map_err(|_| parse_err(path, k + 1, format!("bad label `{}`", fields[1])))?;
        if node >= n_nodes {
            return Err(parse_err(path, k + 1, format!("node {node} out of range for {n_nodes} nodes")));
        }
        if label < -1 {
            return Err(parse_err(path, k + 1, format!("label {label} must be -1 or nonnegative")));
        }
        if std::mem::replace(&mut seen[node], true) {
            return Err(parse_err(path, k + 1, format!("node {node} labeled twice")));
        }
        labels[node] = label;
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[i64]) -> Result<()> {
    let mut s = String::from("node,label\n");
    for (i, l) in labels.iter().enumerate() {
        s.push_str(&format!("{i},{l}\n"));
    }
    write_atomic(path, s.as_bytes())
}

pub fn read_splits(path: &Path) -> Result<Splits> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))
}

/// File names used by `save_dataset` inside a directory.
pub struct DatasetPaths {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub splits: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: &Path) -> Self {
        DatasetPaths {
            edges: dir.join("edges.txt"),
            features: dir.join("features.csv"),
            labels: dir.join("labels.csv"),
            splits: dir.join("splits.json"),
        }
    }
}

pub fn load_dataset(edge_path: &Path, feature_path: &Path, label_path: &Path, split_path: &Path) -> Result<Dataset> {
    let features = load_matrix_csv(feature_path)?;
    if features.nrows() == 0 {
        return Err(parse_err(feature_path, 2, "no feature rows"));
    }
    let n = features.nrows();
    let graph = read_edge_list(edge_path, n)?;
    let labels = read_labels(label_path, n)?;
    let splits = read_splits(split_path)?;
    Dataset::new(graph, features, labels, splits)
}

pub fn save_dataset(dir: &Path, ds: &Dataset) -> Result<DatasetPaths> {
    fs::create_dir_all(dir)?;
    let p = DatasetPaths::in_dir(dir);
    write_edge_list(&p.edges, &ds.graph)?;
    save_matrix_csv(&p.features, &ds.features, "f")?;
    write_labels(&p.labels, &ds.labels)?;
    save_json(&p.splits, &ds.splits)?;
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    pub n_blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Distance between any two class means.
    pub class_mean_separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec::fixture(0)
    }
}

impl SynthSpec {
    /// Homophilic three-block graph used by the test suites and the CLI.
    pub fn fixture(seed: u64) -> Self {
        SynthSpec {
            n: 120,
            n_blocks: 3,
            p_in: 0.3,
            p_out: 0.02,
            feature_dim: 12,
            class_mean_separation: 2.0,
            noise_sigma: 1.0,
            seed,
        }
    }

    /// Two-block heterophilic graph; the raw-feature probe lands near 60%.
    pub fn heterophilic_fixture(seed: u64) -> Self {
        SynthSpec {
            n: 200,
            n_blocks: 2,
            p_in: 0.02,
            p_out: 0.1,
            feature_dim: 16,
            class_mean_separation: 0.8,
            noise_sigma: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 || self.n < 2 {
            return Err(Error::invalid("n/n_blocks", format!("{}/{}", self.n, self.n_blocks), "need n >= 2 and n_blocks >= 1"));
        }
        if self.n % self.n_blocks != 0 {
            return Err(Error::invalid("n", self.n, "must be divisible by n_blocks"));
        }
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(name, p, "must lie in [0, 1]"));
            }
        }
        if self.feature_dim < self.n_blocks {
            return Err(Error::invalid("feature_dim", self.feature_dim, "must be at least n_blocks"));
        }
        if !(self.class_mean_separation >= 0.0 && self.class_mean_separation.is_finite()) {
            return Err(Error::invalid("class_mean_separation", self.class_mean_separation, "must be nonnegative"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma", self.noise_sigma, "must be nonnegative"));
        }
        Ok(())
    }
}

/// Shuffled 48/32/20 train/val/test split of all nodes.
pub fn default_splits(n: usize, seed: u64) -> Splits {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, Purpose::Split));
    let n_train = (0.48 * n as f64).round() as usize;
    let n_val = (0.32 * n as f64).round() as usize;
    let mut train = idx[..n_train].to_vec();
    let mut val = idx[n_train..n_train + n_val].to_vec();
    let mut test = idx[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Splits { train, val, test }
}

/// Stochastic block model with contiguous equal blocks and Gaussian features
/// around class means `(sep / sqrt 2) e_c`.
pub fn synth_sbm(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.n;
    let block = n / spec.n_blocks;
    let labels: Vec<i64> = (0..n).map(|i| (i / block) as i64).collect();
    let mut rng = indexed_stream(spec.seed, Purpose::Data, 0);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { spec.p_in } else { spec.p_out };
            if rng.gen_bool(p) {
                edges.push((i, j, 1.0));
            }
        }
    }
    let graph = Graph::new(n, &edges)?;
    let mut rng = indexed_stream(spec.seed, Purpose::Data, 1);
    let scale = spec.class_mean_separation / std::f64::consts::SQRT_2;
    let mut features = DMatrix::zeros(n, spec.feature_dim);
    for i in 0..n {
        for j in 0..spec.feature_dim {
            let z: f64 = rng.sample(StandardNormal);
            let mean = if j as i64 == labels[i] { scale } else { 0.0 };
            features[(i, j)] = mean + spec.noise_sigma * z;
        }
    }
    Dataset::new(graph, features, labels, default_splits(n, spec.seed))
}

pub fn synth_cycle(n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::invalid("n", n, "cycle needs at least 2 nodes"));
    }
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
    Graph::new(n, &edges)
}

pub fn synth_path(n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::invalid("n", n, "path needs at least 2 nodes"));
    }
    let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
    Graph::new(n, &edges)
}

/// Node `(r, c)` has index `r * cols + c`.
pub fn synth_grid(rows: usize, cols: usize) -> Result<Graph> {
    if rows == 0 || cols == 0 || rows * cols < 2 {
        return Err(Error::invalid("rows*cols", rows * cols, "grid needs at least 2 nodes"));
    }
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                edges.push((i, i + 1, 1.0));
            }
            if r + 1 < rows {
                edges.push((i, i + cols, 1.0));
            }
        }
    }
    Graph::new(rows * cols, &edges)
}

/// Random spanning tree (node `i` attaches to a uniform earlier node) plus
/// every other pair independently with probability `p`; always connected.
pub fn synth_random_connected(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(Error::invalid("n", n, "graph needs at least 2 nodes"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid("p", p, "must lie in [0, 1]"));
    }
    let mut rng = indexed_stream(seed, Purpose::Data, 3);
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.gen_range(0..i), i, 1.0));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push((i, j, 1.0));
            }
        }
    }
    Graph::new(n, &edges)
}
