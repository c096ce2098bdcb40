//! Python bindings. Matrices cross the boundary as lists of rows.

use ::fracgcl::encoder::{bank_forward, combine_views, Activation, EncoderBank};
use ::fracgcl::eval::{self, ProbeConfig, WalkConfig};
use ::fracgcl::graph::{self as fg, SpectralBasis};
use ::fracgcl::io::{self, Splits, SynthSpec};
use ::fracgcl::loss;
use ::fracgcl::special::{self, MlEvalConfig};
use ::fracgcl::train::{self, TrainConfig};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

pyo3::create_exception!(fracgcl, NumericalError, PyArithmeticError);

fn err(e: ::fracgcl::Error) -> PyErr {
    if e.is_numerical() {
        NumericalError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn json_to_py(py: Python<'_>, value: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (text,))?.unbind())
}

#[pyclass(name = "Graph", module = "fracgcl", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGraph {
    inner: fg::Graph,
    basis: SpectralBasis,
}

impl PyGraph {
    fn wrap(inner: fg::Graph) -> PyResult<Self> {
        let basis = fg::eigendecompose(&fg::normalized_laplacian(&inner)).map_err(err)?;
        Ok(PyGraph { inner, basis })
    }
}

#[pymethods]
impl PyGraph {
    /// `Graph(n_nodes, [(src, dst, weight), ...])`, symmetrized.
    #[new]
    fn new(n_nodes: usize, edges: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        Self::wrap(fg::Graph::new(n_nodes, &edges).map_err(err)?)
    }

    #[staticmethod]
    fn cycle(n: usize) -> PyResult<Self> {
        Self::wrap(io::synth_cycle(n).map_err(err)?)
    }

    #[staticmethod]
    fn path(n: usize) -> PyResult<Self> {
        Self::wrap(io::synth_path(n).map_err(err)?)
    }

    #[staticmethod]
    fn grid(rows: usize, cols: usize) -> PyResult<Self> {
        Self::wrap(io::synth_grid(rows, cols).map_err(err)?)
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.inner.edges().to_vec()
    }

    fn is_connected(&self) -> bool {
        self.inner.is_connected()
    }

    fn laplacian(&self) -> Vec<Vec<f64>> {
        to_rows(&fg::normalized_laplacian(&self.inner))
    }

    /// Normalized-Laplacian eigenvalues, ascending.
    fn eigenvalues(&self) -> Vec<f64> {
        self.basis.eigenvalues().to_vec()
    }

    /// Eigenvectors as columns.
    fn eigenvectors(&self) -> Vec<Vec<f64>> {
        to_rows(self.basis.eigenvectors())
    }

    fn gft(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let s = fg::Signal::from_slice(&x).map_err(err)?;
        Ok(self.basis.gft(&s).map_err(err)?.iter().copied().collect())
    }

    /// Exact solution of the linear fractional diffusion at time `t`.
    fn diffuse(&self, y0: Vec<Vec<f64>>, alpha: f64, t: f64) -> PyResult<Vec<Vec<f64>>> {
        let y = ::fracgcl::fde::solve_linear_spectral(&self.basis, &to_matrix(y0)?, alpha, t).map_err(err)?;
        Ok(to_rows(&y))
    }

    fn __repr__(&self) -> String {
        format!("Graph(n_nodes={}, n_edges={})", self.inner.n_nodes(), self.inner.n_edges())
    }
}

#[pyclass(name = "Dataset", module = "fracgcl", frozen)]
struct PyDataset {
    inner: io::Dataset,
    graph: PyGraph,
}

impl PyDataset {
    fn wrap(inner: io::Dataset) -> PyResult<Self> {
        let graph = PyGraph::wrap(inner.graph.clone())?;
        Ok(PyDataset { inner, graph })
    }
}

#[pymethods]
impl PyDataset {
    #[getter]
    fn graph(&self) -> PyGraph {
        self.graph.clone()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.features)
    }

    #[getter]
    fn labels(&self) -> Vec<i64> {
        self.inner.labels.clone()
    }

    /// `(train, val, test)` node indices.
    #[getter]
    fn splits(&self) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let s = &self.inner.splits;
        (s.train.clone(), s.val.clone(), s.test.clone())
    }

    #[staticmethod]
    fn load(dir: std::path::PathBuf) -> PyResult<Self> {
        let p = io::DatasetPaths::in_dir(&dir);
        Self::wrap(io::load_dataset(&p.edges, &p.features, &p.labels, &p.splits).map_err(err)?)
    }

    fn save(&self, dir: std::path::PathBuf) -> PyResult<()> {
        io::save_dataset(&dir, &self.inner).map_err(err)?;
        Ok(())
    }

    /// Linear-probe accuracies `(train, val, test)` of `y` (raw features when omitted).
    #[pyo3(signature = (y=None, l2_weight=1e-3, epochs=500))]
    fn probe(&self, y: Option<Vec<Vec<f64>>>, l2_weight: f64, epochs: usize) -> PyResult<(f64, f64, f64)> {
        let m = match y {
            Some(rows) => to_matrix(rows)?,
            None => self.inner.features.clone(),
        };
        let cfg = ProbeConfig { l2_weight, epochs, ..Default::default() };
        let r = eval::linear_probe(&m, &self.inner.labels, &self.inner.splits, &cfg).map_err(err)?;
        Ok((r.train_acc, r.val_acc, r.test_acc))
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n_nodes={}, d_in={})", self.inner.n_nodes(), self.inner.features.ncols())
    }
}

/// Stochastic block model dataset; defaults to the bundled homophilic fixture.
#[pyfunction]
#[pyo3(signature = (seed=0, n=None, n_blocks=None, p_in=None, p_out=None, feature_dim=None, class_mean_separation=None, noise_sigma=None, heterophilic=false))]
#[allow(clippy::too_many_arguments)]
fn synth_sbm(
    seed: u64,
    n: Option<usize>,
    n_blocks: Option<usize>,
    p_in: Option<f64>,
    p_out: Option<f64>,
    feature_dim: Option<usize>,
    class_mean_separation: Option<f64>,
    noise_sigma: Option<f64>,
    heterophilic: bool,
) -> PyResult<PyDataset> {
    let mut s = if heterophilic { SynthSpec::heterophilic_fixture(seed) } else { SynthSpec::fixture(seed) };
    s.n = n.unwrap_or(s.n);
    s.n_blocks = n_blocks.unwrap_or(s.n_blocks);
    s.p_in = p_in.unwrap_or(s.p_in);
    s.p_out = p_out.unwrap_or(s.p_out);
    s.feature_dim = feature_dim.unwrap_or(s.feature_dim);
    s.class_mean_separation = class_mean_separation.unwrap_or(s.class_mean_separation);
    s.noise_sigma = noise_sigma.unwrap_or(s.noise_sigma);
    PyDataset::wrap(io::synth_sbm(&s).map_err(err)?)
}

#[pyclass(name = "AvlaResult", module = "fracgcl", frozen)]
struct PyAvlaResult {
    bank: EncoderBank,
    report: train::TrainReport,
    activation: Activation,
}

#[pymethods]
impl PyAvlaResult {
    #[getter]
    fn k_tilde(&self) -> usize {
        self.bank.len()
    }

    #[getter]
    fn alphas(&self) -> Vec<f64> {
        self.bank.alphas()
    }

    #[getter]
    fn losses(&self) -> Vec<f64> {
        self.report.losses.clone()
    }

    /// The full training report as plain Python objects.
    fn report(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        json_to_py(py, &self.report)
    }

    /// One embedding matrix per view.
    fn views(&self, dataset: &PyDataset) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let v = bank_forward(&dataset.graph.basis, &dataset.inner.features, &self.bank, self.activation).map_err(err)?;
        Ok(v.iter().map(|e| to_rows(&e.y)).collect())
    }

    /// Weighted view combination; `beta` is tuned on the validation split when omitted.
    #[pyo3(signature = (dataset, beta=None))]
    fn embed(&self, dataset: &PyDataset, beta: Option<Vec<f64>>) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
        let d = &dataset.inner;
        let views = bank_forward(&dataset.graph.basis, &d.features, &self.bank, self.activation).map_err(err)?;
        let beta = match beta {
            Some(b) => b,
            None => {
                let ys: Vec<DMatrix<f64>> = views.iter().map(|v| v.y.clone()).collect();
                train::tune_beta(&ys, &d.labels, &d.splits, &ProbeConfig::default()).map_err(err)?
            }
        };
        let y = combine_views(&views, &beta).map_err(err)?;
        Ok((to_rows(&y), beta))
    }
}

/// Adaptive view learning on a dataset's graph and features.
#[pyfunction]
#[pyo3(signature = (dataset, seed=0, k_init=5, epochs_n=50, d_hid=32, horizon_t=20.0, lr_w=1e-2, lr_alpha=1e-2, eta=0.5, merge_delta=1e-4, init_alphas=None))]
#[allow(clippy::too_many_arguments)]
fn avla(
    dataset: &PyDataset,
    seed: u64,
    k_init: usize,
    epochs_n: usize,
    d_hid: usize,
    horizon_t: f64,
    lr_w: f64,
    lr_alpha: f64,
    eta: f64,
    merge_delta: f64,
    init_alphas: Option<Vec<f64>>,
) -> PyResult<PyAvlaResult> {
    let cfg = TrainConfig {
        k_init,
        init_alphas,
        d_hid,
        horizon_t,
        lr_w,
        lr_alpha,
        epochs_n,
        eta,
        merge_delta,
        seed,
        ..Default::default()
    };
    let out = train::avla(&dataset.graph.basis, &dataset.inner.features, &cfg).map_err(err)?;
    Ok(PyAvlaResult { bank: out.bank, report: out.report, activation: cfg.activation })
}

/// Mittag-Leffler kernel `e_alpha(lambda, t)`.
#[pyfunction]
fn mittag_leffler(alpha: f64, lam: f64, t: f64) -> PyResult<f64> {
    special::ml(alpha, lam, t, &MlEvalConfig::default()).map_err(err)
}

#[pyfunction]
fn dml_dalpha(alpha: f64, lam: f64, t: f64) -> PyResult<f64> {
    special::dml_dalpha(alpha, lam, t, &MlEvalConfig::default()).map_err(err)
}

#[pyfunction]
fn cosmean(yl: Vec<Vec<f64>>, yg: Vec<Vec<f64>>) -> PyResult<f64> {
    loss::cosmean(&to_matrix(yl)?, &to_matrix(yg)?).map_err(err)
}

#[pyfunction]
fn total_loss(views: Vec<Vec<Vec<f64>>>, eta: f64) -> PyResult<f64> {
    let v = views.into_iter().map(to_matrix).collect::<PyResult<Vec<_>>>()?;
    loss::total_loss(&v, eta).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (y, theta=0.9))]
fn effective_rank(y: Vec<Vec<f64>>, theta: f64) -> PyResult<usize> {
    eval::effective_rank(&to_matrix(y)?, theta).map_err(err)
}

#[pyfunction]
fn linear_probe(
    y: Vec<Vec<f64>>,
    labels: Vec<i64>,
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
) -> PyResult<(f64, f64, f64)> {
    let splits = Splits { train, val, test };
    let r = eval::linear_probe(&to_matrix(y)?, &labels, &splits, &ProbeConfig::default()).map_err(err)?;
    Ok((r.train_acc, r.val_acc, r.test_acc))
}

/// Spectral check of the skip-connection diffusion; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (graph, x, alpha_l=0.1, alpha_g=0.9, tau=1e3, m=4))]
fn check_theorem(py: Python<'_>, graph: &PyGraph, x: Vec<f64>, alpha_l: f64, alpha_g: f64, tau: f64, m: usize) -> PyResult<Py<PyAny>> {
    let s = fg::Signal::from_slice(&x).map_err(err)?;
    let r = eval::check_theorem_sgi(&graph.basis, &s, alpha_l, alpha_g, tau, m).map_err(err)?;
    let out = json_to_py(py, &r)?;
    let d = out.bind(py).cast::<PyDict>()?;
    d.set_item("parts_abc", r.parts_abc())?;
    Ok(out)
}

/// Occupancy of the heavy-tailed walk and of the diffusion oracle, plus their TV distance.
#[pyfunction]
#[pyo3(signature = (graph, alpha=0.5, t_end=1.0, delta_tau=1e-4, n_walkers=100_000, seed=0, start=0))]
#[allow(clippy::too_many_arguments)]
fn random_walk(
    graph: &PyGraph,
    alpha: f64,
    t_end: f64,
    delta_tau: f64,
    n_walkers: usize,
    seed: u64,
    start: usize,
) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let cfg = WalkConfig { alpha, t_end, delta_tau, n_walkers, seed };
    let sim = eval::random_walk_sim(&graph.inner, &cfg, start).map_err(err)?;
    let oracle = eval::walk_oracle(&graph.inner, &graph.basis, alpha, t_end, start).map_err(err)?;
    let tv = eval::tv_distance(&sim, &oracle);
    Ok((sim, oracle, tv))
}

#[pymodule]
#[pyo3(name = "fracgcl")]
fn fracgcl_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyAvlaResult>()?;
    m.add_function(wrap_pyfunction!(synth_sbm, m)?)?;
    m.add_function(wrap_pyfunction!(avla, m)?)?;
    m.add_function(wrap_pyfunction!(mittag_leffler, m)?)?;
    m.add_function(wrap_pyfunction!(dml_dalpha, m)?)?;
    m.add_function(wrap_pyfunction!(cosmean, m)?)?;
    m.add_function(wrap_pyfunction!(total_loss, m)?)?;
    m.add_function(wrap_pyfunction!(effective_rank, m)?)?;
    m.add_function(wrap_pyfunction!(linear_probe, m)?)?;
    m.add_function(wrap_pyfunction!(check_theorem, m)?)?;
    m.add_function(wrap_pyfunction!(random_walk, m)?)?;
    Ok(())
}
