//! Undirected weighted graphs, the symmetric normalized Laplacian and its
//! spectral basis, the graph Fourier transform, and random structural
//! perturbation.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Eigenvalues closer to zero than this are stored as exactly zero.
const ZERO_EIGEN_SNAP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n_nodes: usize,
    /// Canonical edge list: `src <= dst`, sorted, positive weights only.
    edges: Vec<(usize, usize, f64)>,
    adjacency: DMatrix<f64>,
}

impl Graph {
    /// Builds a graph from an edge list.
    ///
    /// Repeated `(src, dst)` entries collapse with the last one winning. The
    /// two directions of a pair are then symmetrized by taking the larger
    /// weight. `(i, i, w)` adds an explicit self-loop.
    pub fn new(n_nodes: usize, edge_list: &[(usize, usize, f64)]) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::invalid("n_nodes", 0, "graph needs at least one node"));
        }
        let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(src, dst, weight) in edge_list {
            for node in [src, dst] {
                if node >= n_nodes {
                    return Err(Error::NodeOutOfRange { node, n: n_nodes });
                }
            }
            if !(weight >= 0.0) || !weight.is_finite() {
                return Err(Error::NegativeWeight { src, dst, weight });
            }
            directed.insert((src, dst), weight);
        }
        let mut adjacency = DMatrix::zeros(n_nodes, n_nodes);
        for (&(s, d), &w) in &directed {
            let w = w.max(adjacency[(s, d)]);
            adjacency[(s, d)] = w;
            adjacency[(d, s)] = w;
        }
        Ok(Self::from_symmetric(adjacency))
    }

    /// Wraps an adjacency matrix that is already symmetric and nonnegative.
    pub fn from_adjacency(adjacency: DMatrix<f64>) -> Result<Self> {
        if !adjacency.is_square() {
            return Err(Error::shape(
                "adjacency",
                (adjacency.nrows(), adjacency.nrows()),
                adjacency.shape(),
            ));
        }
        if adjacency.nrows() == 0 {
            return Err(Error::invalid("n_nodes", 0, "graph needs at least one node"));
        }
        let asym = max_asymmetry(&adjacency);
        if asym > 0.0 {
            return Err(Error::NotSymmetric { max_asym: asym });
        }
        for j in 0..adjacency.ncols() {
            for i in 0..adjacency.nrows() {
                let w = adjacency[(i, j)];
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::NegativeWeight { src: i, dst: j, weight: w });
                }
            }
        }
        Ok(Self::from_symmetric(adjacency))
    }

    fn from_symmetric(adjacency: DMatrix<f64>) -> Self {
        let n = adjacency.nrows();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i..n {
                let w = adjacency[(i, j)];
                if w > 0.0 {
                    edges.push((i, j, w));
                }
            }
        }
        Self {
            n_nodes: n,
            edges,
            adjacency,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Number of undirected edges between distinct nodes.
    pub fn n_edges(&self) -> usize {
        self.edges.iter().filter(|(s, d, _)| s != d).count()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[(i, j)]
    }

    pub fn degrees(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_nodes,
            (0..self.n_nodes).map(|i| self.adjacency.column(i).sum()),
        )
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adjacency
            .column(i)
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(j, &w)| (j, w))
            .collect::<Vec<_>>()
            .into_iter()
    }

    /// Component id per node, ids assigned in order of first appearance.
    pub fn connected_components(&self) -> (usize, Vec<usize>) {
        let n = self.n_nodes;
        let mut comp = vec![usize::MAX; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = count;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for v in 0..n {
                    if self.adjacency[(u, v)] > 0.0 && comp[v] == usize::MAX {
                        comp[v] = count;
                        queue.push_back(v);
                    }
                }
            }
            count += 1;
        }
        (count, comp)
    }

    pub fn is_connected(&self) -> bool {
        self.connected_components().0 == 1
    }
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `I - D^{-1/2} A D^{-1/2}`. An isolated node keeps the identity row, so its
/// features never diffuse.
pub fn normalized_laplacian(g: &Graph) -> DMatrix<f64> {
    let n = g.n_nodes();
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let a = g.adjacency();
    DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - inv_sqrt[i] * a[(i, j)] * inv_sqrt[j]
    })
}

/// One column of a node-feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal(DVector<f64>);

impl Signal {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("signal"));
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Eigenvalues in ascending order with the matching orthonormal eigenvectors
/// as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    u: DMatrix<f64>,
}

impl SpectralBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `U`, column `i` pairs with `eigenvalues()[i]`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn eigenvector(&self, i: usize) -> DVector<f64> {
        self.u.column(i).into_owned()
    }

    /// `U diag(lambda) U^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.apply_multipliers(&DMatrix::identity(self.len(), self.len()), &self.eigenvalues)
    }

    /// `U diag(m) U^T Y`.
    pub fn apply_multipliers(&self, y: &DMatrix<f64>, m: &[f64]) -> DMatrix<f64> {
        let mut coeffs = self.u.tr_mul(y);
        for (i, &mi) in m.iter().enumerate() {
            coeffs.row_mut(i).scale_mut(mi);
        }
        &self.u * coeffs
    }

    pub fn gft(&self, x: &Signal) -> Result<DVector<f64>> {
        self.check_len(x.len())?;
        Ok(self.u.tr_mul(x.values()))
    }

    pub fn igft(&self, c: &DVector<f64>) -> Result<Signal> {
        self.check_len(c.len())?;
        Signal::new(&self.u * c)
    }

    /// Fourier coefficients of every column: `U^T Y`.
    pub fn gft_matrix(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_len(y.nrows())?;
        Ok(self.u.tr_mul(y))
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(Error::DimensionMismatch {
                what: "signal length",
                expected: self.len().to_string(),
                got: got.to_string(),
            });
        }
        Ok(())
    }
}

/// Dense symmetric eigendecomposition with ascending eigenvalues and a fixed
/// sign convention: the largest-magnitude entry of each eigenvector is
/// positive, ties going to the lowest index.
pub fn eigendecompose(l: &DMatrix<f64>) -> Result<SpectralBasis> {
    if !l.is_square() {
        return Err(Error::shape("laplacian", (l.nrows(), l.nrows()), l.shape()));
    }
    let scale = l.amax().max(1.0);
    let asym = max_asymmetry(l);
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric { max_asym: asym });
    }
    if l.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("laplacian"));
    }
    let n = l.nrows();
    let sym = (l + l.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

    let mut values = Vec::with_capacity(n);
    let mut u = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut lambda = eig.eigenvalues[src];
        if lambda.abs() < ZERO_EIGEN_SNAP {
            lambda = 0.0;
        }
        values.push(lambda);
        let mut col = eig.eigenvectors.column(src).into_owned();
        let norm = col.norm();
        col /= norm;
        if pivot_sign(col.as_slice()) < 0.0 {
            col.neg_mut();
        }
        u.set_column(dst, &col);
    }
    Ok(SpectralBasis { eigenvalues: values, u })
}

fn pivot_sign(v: &[f64]) -> f64 {
    let max = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let tol = 1e-9 * max;
    v.iter()
        .find(|x| (x.abs() - max).abs() <= tol)
        .map(|x| x.signum())
        .unwrap_or(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbMode {
    Add,
    Remove,
    /// Remove `k` existing edges, then add `k` edges among pairs that were
    /// non-adjacent in the original graph.
    Both,
}

/// Random edge perturbation. `k = floor(ratio * |E|)` edges (self-loops not
/// counted) are added with unit weight among non-adjacent pairs, removed, or
/// both.
pub fn perturb_graph(g: &Graph, ratio: f64, mode: PerturbMode, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::invalid("ratio", ratio, "must lie in [0, 1]"));
    }
    let n_edges = g.n_edges();
    if matches!(mode, PerturbMode::Remove | PerturbMode::Both) && n_edges == 0 {
        return Err(Error::Empty("edge set (remove mode)"));
    }
    let k = (ratio * n_edges as f64).floor() as usize;
    let mut rng = rng::stream(seed, Purpose::Perturb);
    let mut adj = g.adjacency().clone();
    let n = g.n_nodes();

    if matches!(mode, PerturbMode::Remove | PerturbMode::Both) {
        let existing: Vec<(usize, usize)> = g
            .edges()
            .iter()
            .filter(|(s, d, _)| s != d)
            .map(|&(s, d, _)| (s, d))
            .collect();
        for idx in index::sample(&mut rng, existing.len(), k.min(existing.len())).into_vec() {
            let (s, d) = existing[idx];
            adj[(s, d)] = 0.0;
            adj[(d, s)] = 0.0;
        }
    }
    if matches!(mode, PerturbMode::Add | PerturbMode::Both) {
        let mut candidates = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if g.weight(i, j) == 0.0 {
                    candidates.push((i, j));
                }
            }
        }
        if k > candidates.len() {
            return Err(Error::NotEnoughNonEdges {
                requested: k,
                available: candidates.len(),
            });
        }
        let mut picked = index::sample(&mut rng, candidates.len(), k).into_vec();
        picked.sort_unstable();
        for idx in picked {
            let (s, d) = candidates[idx];
            adj[(s, d)] = 1.0;
            adj[(d, s)] = 1.0;
        }
    }
    Ok(Graph::from_symmetric(adj))
}
