//! Linear-probe evaluation, embedding diagnostics, the spectral theorem
//! check, the heavy-tailed random walk and the stability harness.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Zeta};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fde::{check_alpha, solve_linear_spectral};
use crate::graph::{Graph, SpectralBasis};
use crate::io::Splits;
use crate::loss::center_columns;
use crate::rng::{indexed_stream, Purpose};
use crate::special::{gamma, ml, zeta, MlEvalConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub l2_weight: f64,
    pub epochs: usize,
    /// Step size in units of the inverse smoothness constant.
    pub lr: f64,
    /// Recorded for provenance; full-batch descent from zero draws nothing.
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { l2_weight: 1e-3, epochs: 500, lr: 1.0, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

/// Multinomial logistic regression on frozen embeddings. Features are
/// centered on the training mean and divided by one scalar (the training
/// RMS), so rotations and translations of `Y` leave the result unchanged.
pub fn linear_probe(y: &DMatrix<f64>, labels: &[i64], splits: &Splits, cfg: &ProbeConfig) -> Result<ProbeResult> {
    if cfg.epochs == 0 {
        return Err(Error::invalid("epochs", 0, "must be at least 1"));
    }
    if labels.len() != y.nrows() {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: y.nrows().to_string(),
            got: labels.len().to_string(),
        });
    }
    splits.validate(y.nrows())?;
    let train: Vec<usize> = splits.train.iter().copied().filter(|&i| labels[i] >= 0).collect();
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let mut classes: Vec<i64> = train.iter().map(|&i| labels[i]).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let d = y.ncols();
    let c = classes.len();
    let n = train.len() as f64;

    let mut mean = vec![0.0; d];
    for &i in &train {
        for j in 0..d {
            mean[j] += y[(i, j)] / n;
        }
    }
    let mut ss = 0.0;
    for &i in &train {
        for j in 0..d {
            ss += (y[(i, j)] - mean[j]).powi(2);
        }
    }
    let rms = (ss / (n * d.max(1) as f64)).sqrt();
    let scale = if rms > 0.0 { 1.0 / rms } else { 1.0 };
    let prep = |idx: &[usize]| DMatrix::from_fn(idx.len(), d, |r, j| (y[(idx[r], j)] - mean[j]) * scale);

    let x = prep(&train);
    let mut target = DMatrix::zeros(train.len(), c);
    for (r, &i) in train.iter().enumerate() {
        target[(r, classes.binary_search(&labels[i]).unwrap())] = 1.0;
    }
    let gram = x.tr_mul(&x) / n;
    let lmax = if d > 0 { SymmetricEigen::new(gram).eigenvalues.max().max(0.0) } else { 0.0 };
    // softmax cross-entropy is (1/2) lmax smooth in W, 1/2 in the bias
    let step = cfg.lr / (0.5 * lmax.max(1.0) + cfg.l2_weight);

    let mut w = DMatrix::<f64>::zeros(d, c);
    let mut b = DMatrix::<f64>::zeros(1, c);
    for _ in 0..cfg.epochs {
        let mut p = &x * &w;
        for mut row in p.row_iter_mut() {
            row += &b;
            let m = row.max();
            row.apply(|v| *v = (*v - m).exp());
            let s = row.sum();
            row /= s;
        }
        let g = (p - &target) / n;
        let gw = x.tr_mul(&g) + &w * cfg.l2_weight;
        let gb = DMatrix::from_fn(1, c, |_, k| g.column(k).sum());
        w -= gw * step;
        b -= gb * step;
    }

    let accuracy = |idx: &[usize]| -> f64 {
        let idx: Vec<usize> = idx.iter().copied().filter(|&i| labels[i] >= 0).collect();
        if idx.is_empty() {
            return f64::NAN;
        }
        let logits = prep(&idx) * &w;
        let mut hit = 0usize;
        for (r, &i) in idx.iter().enumerate() {
            let mut best = 0;
            for k in 1..c {
                if logits[(r, k)] + b[(0, k)] > logits[(r, best)] + b[(0, best)] {
                    best = k;
                }
            }
            hit += usize::from(classes[best] == labels[i]);
        }
        hit as f64 / idx.len() as f64
    };
    Ok(ProbeResult {
        train_acc: accuracy(&splits.train),
        val_acc: accuracy(&splits.val),
        test_acc: accuracy(&splits.test),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcEntry {
    pub class: i64,
    pub members: usize,
    pub d_intra: Option<f64>,
    pub d_inter: Option<f64>,
    pub ratio: Option<f64>,
    pub flag: Option<String>,
}

/// Mean inter-class over mean intra-class Euclidean distance, per class.
/// Unlabeled nodes (`-1`) only enter as "other" nodes.
pub fn rc_ratio(y: &DMatrix<f64>, labels: &[i64]) -> Result<Vec<RcEntry>> {
    if labels.len() != y.nrows() {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: y.nrows().to_string(),
            got: labels.len().to_string(),
        });
    }
    let mut classes: Vec<i64> = labels.iter().copied().filter(|&l| l >= 0).collect();
    classes.sort_unstable();
    classes.dedup();
    let dist = |a: usize, b: usize| (y.row(a) - y.row(b)).norm();
    let mut out = Vec::with_capacity(classes.len());
    for &cls in &classes {
        let inside: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == cls).collect();
        let outside: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != cls).collect();
        let mut e = RcEntry { class: cls, members: inside.len(), d_intra: None, d_inter: None, ratio: None, flag: None };
        if inside.len() < 2 {
            e.flag = Some("fewer than two members".into());
            out.push(e);
            continue;
        }
        let mut s = 0.0;
        let mut pairs = 0usize;
        for (a, &i) in inside.iter().enumerate() {
            for &j in &inside[a + 1..] {
                s += dist(i, j);
                pairs += 1;
            }
        }
        let intra = s / pairs as f64;
        e.d_intra = Some(intra);
        if !outside.is_empty() {
            let mut s = 0.0;
            for &i in &inside {
                for &j in &outside {
                    s += dist(i, j);
                }
            }
            e.d_inter = Some(s / (inside.len() * outside.len()) as f64);
        }
        match (e.d_inter, intra > 0.0) {
            (Some(inter), true) => e.ratio = Some(inter / intra),
            (_, false) => e.flag = Some("zero intra-class distance".into()),
            (None, true) => e.flag = Some("no nodes outside the class".into()),
        }
        out.push(e);
    }
    Ok(out)
}

/// Eigenvalues of the centered covariance `Yc^T Yc / N`, descending.
pub fn energy_spectrum(y: &DMatrix<f64>) -> Result<Vec<f64>> {
    if y.nrows() < 2 {
        return Err(Error::invalid("N", y.nrows(), "need at least two rows"));
    }
    let yc = center_columns(y);
    let cov = yc.tr_mul(&yc) / y.nrows() as f64;
    let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().map(|v| v.max(0.0)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

/// Smallest `k` whose top-`k` eigenvalues hold at least `theta` of the total.
pub fn effective_rank(y: &DMatrix<f64>, theta: f64) -> Result<usize> {
    let ev = energy_spectrum(y)?;
    let total: f64 = ev.iter().sum();
    if total <= 0.0 {
        return Ok(0);
    }
    let mut acc = 0.0;
    for (k, v) in ev.iter().enumerate() {
        acc += v;
        if acc >= theta * total * (1.0 - 1e-12) {
            return Ok(k + 1);
        }
    }
    Ok(ev.len())
}

/// `m_i = ||row i of U^T Y||`.
pub fn fourier_spread(basis: &SpectralBasis, y: &DMatrix<f64>) -> Result<Vec<f64>> {
    let c = basis.gft_matrix(y)?;
    Ok(c.row_iter().map(|r| r.norm()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub alpha_l: f64,
    pub alpha_g: f64,
    pub tau: f64,
    pub m: usize,
    pub eigenvalues: Vec<f64>,
    pub input_coefficients: Vec<f64>,
    pub n_l: usize,
    pub n_g: usize,
    pub exact_multipliers_l: Vec<f64>,
    pub exact_multipliers_g: Vec<f64>,
    pub output_coefficients_l: Vec<f64>,
    pub output_coefficients_g: Vec<f64>,
    /// `b[i][j]`, `j = 0..=n`; empty rows for the zero frequency.
    pub b_l: Vec<Vec<f64>>,
    pub b_g: Vec<Vec<f64>>,
    pub asymptotic_multipliers_l: Vec<f64>,
    pub asymptotic_multipliers_g: Vec<f64>,
    pub max_rel_err_l: f64,
    pub max_rel_err_g: f64,
    /// Same comparison with the alternating-sign expansion coefficients.
    pub signed_max_rel_err_l: f64,
    pub signed_max_rel_err_g: f64,
    pub positivity: bool,
    pub decreasing: bool,
    pub dominance: bool,
    pub agreement: bool,
}

impl SpectralReport {
    pub fn parts_abc(&self) -> bool {
        self.positivity && self.decreasing && self.dominance
    }

    pub fn passed(&self) -> bool {
        self.parts_abc() && self.agreement
    }
}

fn order_terms(alpha: f64) -> usize {
    let mut n = 0;
    while ((n + 1) as f64) * alpha < 1.0 {
        n += 1;
    }
    n
}

/// Coefficients of `sum_{r=0}^m e(u)^r` in powers of `u = tau^(-alpha)` up
/// to degree `n`, for `e(u) = sum_{j=1}^n a_j u^j`.
fn geometric_coefficients(a: &[f64], m: usize) -> Vec<f64> {
    let n = a.len();
    let mut total = vec![0.0; n + 1];
    let mut power = vec![0.0; n + 1];
    power[0] = 1.0;
    total[0] = 1.0;
    for _ in 0..m {
        let mut next = vec![0.0; n + 1];
        for (p, &pv) in power.iter().enumerate() {
            if pv == 0.0 {
                continue;
            }
            for j in 1..=n {
                if p + j <= n {
                    next[p + j] += pv * a[j - 1];
                }
            }
        }
        power = next;
        for (t, p) in total.iter_mut().zip(&power) {
            *t += p;
        }
    }
    total
}

/// Checks the asymptotic form of the skip-connection multipliers
/// `1 + e + ... + e^m` (positivity, decrease in frequency, dominance of the
/// smaller order) and how well the truncated expansion matches at `tau`.
pub fn check_theorem_sgi(
    basis: &SpectralBasis,
    x: &crate::graph::Signal,
    alpha_l: f64,
    alpha_g: f64,
    tau: f64,
    m: usize,
) -> Result<SpectralReport> {
    check_alpha(alpha_l)?;
    check_alpha(alpha_g)?;
    if !(alpha_l < alpha_g) {
        return Err(Error::invalid("alpha_l", alpha_l, "must be smaller than alpha_g"));
    }
    if !(tau > 0.0 && tau.is_finite()) || m == 0 {
        return Err(Error::invalid("tau/m", format!("{tau}/{m}"), "need tau > 0 and m >= 1"));
    }
    let lambdas = basis.eigenvalues().to_vec();
    let zeros = lambdas.iter().filter(|&&l| l == 0.0).count();
    if zeros != 1 {
        return Err(Error::Disconnected { components: zeros });
    }
    let cfg = MlEvalConfig::default();
    let coeffs = basis.gft(x)?;

    struct Side {
        n: usize,
        exact: Vec<f64>,
        b: Vec<Vec<f64>>,
        asym: Vec<f64>,
        err: f64,
        signed_err: f64,
    }
    let side = |alpha: f64| -> Result<Side> {
        let n = order_terms(alpha);
        let u = tau.powf(-alpha);
        let mut s = Side { n, exact: vec![], b: vec![], asym: vec![], err: 0.0, signed_err: 0.0 };
        for &lam in &lambdas {
            let e = ml(alpha, lam, tau, &cfg)?;
            let exact = (0..m).fold(1.0, |acc, _| 1.0 + e * acc);
            s.exact.push(exact);
            if lam == 0.0 {
                s.b.push(vec![]);
                s.asym.push(exact);
                continue;
            }
            let mut a = Vec::with_capacity(n);
            let mut a_signed = Vec::with_capacity(n);
            for j in 1..=n {
                let v = 1.0 / (lam.powi(j as i32) * gamma(1.0 - j as f64 * alpha)?);
                a.push(v);
                a_signed.push(if j % 2 == 1 { v } else { -v });
            }
            let eval = |b: &[f64]| b.iter().enumerate().map(|(j, bj)| bj * u.powi(j as i32)).sum::<f64>();
            let b = geometric_coefficients(&a, m);
            let asym = eval(&b);
            let signed = eval(&geometric_coefficients(&a_signed, m));
            s.err = s.err.max((asym - exact).abs() / exact);
            s.signed_err = s.signed_err.max((signed - exact).abs() / exact);
            s.asym.push(asym);
            s.b.push(b);
        }
        Ok(s)
    };
    let l = side(alpha_l)?;
    let g = side(alpha_g)?;

    let nz: Vec<usize> = (0..lambdas.len()).filter(|&i| lambdas[i] > 0.0).collect();
    let positivity = [&l, &g].iter().all(|s| nz.iter().all(|&i| s.b[i].iter().all(|&v| v > 0.0)));
    let decreasing = [&l, &g].iter().all(|s| {
        nz.windows(2).all(|w| (1..=s.n).all(|j| s.b[w[1]][j] <= s.b[w[0]][j]))
    });
    let common = l.n.min(g.n);
    let dominance = nz.iter().all(|&i| (1..=common).all(|j| l.b[i][j] > g.b[i][j]));
    let agreement = l.err <= 0.1 && g.err <= 0.1;

    let out = |mult: &[f64]| mult.iter().zip(coeffs.iter()).map(|(a, c)| a * c).collect::<Vec<f64>>();
    Ok(SpectralReport {
        alpha_l,
        alpha_g,
        tau,
        m,
        input_coefficients: coeffs.iter().copied().collect(),
        n_l: l.n,
        n_g: g.n,
        output_coefficients_l: out(&l.exact),
        output_coefficients_g: out(&g.exact),
        exact_multipliers_l: l.exact,
        exact_multipliers_g: g.exact,
        b_l: l.b,
        b_g: g.b,
        asymptotic_multipliers_l: l.asym,
        asymptotic_multipliers_g: g.asym,
        max_rel_err_l: l.err,
        max_rel_err_g: g.err,
        signed_max_rel_err_l: l.signed_err,
        signed_max_rel_err_g: g.signed_err,
        positivity,
        decreasing,
        dominance,
        agreement,
        eigenvalues: lambdas,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkConfig {
    pub alpha: f64,
    pub t_end: f64,
    pub delta_tau: f64,
    pub n_walkers: usize,
    pub seed: u64,
}

impl WalkConfig {
    /// Probability of leaving the current node after a wait,
    /// `dtau^alpha d_alpha |Gamma(-alpha)|` with `d_alpha = 1 / zeta(1 + alpha)`.
    pub fn move_probability(&self) -> Result<f64> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", self.alpha, "walk needs alpha in (0, 1); use the Markov walk for alpha = 1"));
        }
        if !(self.delta_tau > 0.0 && self.delta_tau.is_finite()) {
            return Err(Error::invalid("delta_tau", self.delta_tau, "must be positive"));
        }
        let q = self.delta_tau.powf(self.alpha) * gamma(-self.alpha)?.abs() / zeta(1.0 + self.alpha)?;
        if q > 1.0 {
            return Err(Error::invalid("delta_tau", self.delta_tau, "too large: move probability exceeds 1"));
        }
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        self.move_probability()?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid("t_end", self.t_end, "must be nonnegative and finite"));
        }
        if self.n_walkers == 0 {
            return Err(Error::invalid("n_walkers", 0, "must be positive"));
        }
        Ok(())
    }
}

fn step_to_neighbor<R: Rng>(g: &Graph, node: usize, rng: &mut R) -> usize {
    let row = g.adjacency().column(node);
    let d: f64 = row.sum();
    if d <= 0.0 {
        return node;
    }
    let mut r = rng.gen::<f64>() * d;
    let mut last = node;
    for (j, &w) in row.iter().enumerate() {
        if w > 0.0 {
            last = j;
            if r < w {
                return j;
            }
            r -= w;
        }
    }
    last
}

fn occupancy(n: usize, ends: &[usize]) -> Vec<f64> {
    let mut p = vec![0.0; n];
    for &e in ends {
        p[e] += 1.0;
    }
    let total = ends.len() as f64;
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// Heavy-tailed walk: waits of `n dtau` with `P(n) = n^-(1+alpha) / zeta(1+alpha)`,
/// after each wait a move to neighbor `j` with probability `q W_ij / d_i`.
/// Returns the occupancy frequencies at `t_end`.
pub fn random_walk_sim(g: &Graph, cfg: &WalkConfig, start: usize) -> Result<Vec<f64>> {
    cfg.validate()?;
    if start >= g.n_nodes() {
        return Err(Error::NodeOutOfRange { node: start, n: g.n_nodes() });
    }
    let q = cfg.move_probability()?;
    let zeta_dist = Zeta::new(1.0 + cfg.alpha).map_err(|_| Error::invalid("alpha", cfg.alpha, "bad zeta parameter"))?;
    let horizon = (cfg.t_end / cfg.delta_tau + 1e-9).floor() as u64;
    let ends: Vec<usize> = (0..cfg.n_walkers as u64)
        .into_par_iter()
        .map(|w| {
            let mut rng = indexed_stream(cfg.seed, Purpose::Walk, w);
            let mut node = start;
            let mut elapsed: u64 = 0;
            loop {
                let n = zeta_dist.sample(&mut rng);
                elapsed = elapsed.saturating_add(if n >= u64::MAX as f64 { u64::MAX } else { n as u64 });
                if elapsed > horizon {
                    return node;
                }
                if rng.gen::<f64>() < q {
                    node = step_to_neighbor(g, node, &mut rng);
                }
            }
        })
        .collect();
    Ok(occupancy(g.n_nodes(), &ends))
}

/// The `alpha = 1` limit: unit-rate exponential holding times, every event a move.
pub fn random_walk_markov(g: &Graph, t_end: f64, n_walkers: usize, seed: u64, start: usize) -> Result<Vec<f64>> {
    if start >= g.n_nodes() {
        return Err(Error::NodeOutOfRange { node: start, n: g.n_nodes() });
    }
    if !(t_end >= 0.0 && t_end.is_finite()) || n_walkers == 0 {
        return Err(Error::invalid("t_end/n_walkers", format!("{t_end}/{n_walkers}"), "need t_end >= 0 and walkers > 0"));
    }
    let ends: Vec<usize> = (0..n_walkers as u64)
        .into_par_iter()
        .map(|w| {
            let mut rng = indexed_stream(seed, Purpose::Walk, w);
            let mut node = start;
            let mut t = 0.0;
            loop {
                let dt: f64 = Exp1.sample(&mut rng);
                t += dt;
                if t > t_end {
                    return node;
                }
                node = step_to_neighbor(g, node, &mut rng);
            }
        })
        .collect();
    Ok(occupancy(g.n_nodes(), &ends))
}

/// Occupancy predicted by `D^alpha p = -(I - W D^-1) p` from the indicator of
/// `start`, via the symmetric spectral solution.
pub fn walk_oracle(g: &Graph, basis: &SpectralBasis, alpha: f64, t: f64, start: usize) -> Result<Vec<f64>> {
    let n = g.n_nodes();
    if start >= n {
        return Err(Error::NodeOutOfRange { node: start, n });
    }
    let d = g.degrees();
    if d.iter().any(|&v| v <= 0.0) {
        return Err(Error::Degenerate("walk oracle needs every node to have an edge"));
    }
    let mut p0 = DMatrix::zeros(n, 1);
    p0[(start, 0)] = 1.0 / d[start].sqrt();
    let s = solve_linear_spectral(basis, &p0, alpha, t)?;
    Ok((0..n).map(|i| s[(i, 0)] * d[i].sqrt()).collect())
}

pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    /// `Y0 -> Y0 + delta`.
    InitState { delta: DMatrix<f64> },
    /// Constant forcing: `D^alpha Y = -L Y + delta`.
    Forcing { delta: DMatrix<f64> },
    /// The same initial state diffused on a perturbed graph.
    Topology { perturbed: SpectralBasis, magnitude: f64 },
}

impl Perturbation {
    /// `eps * direction / ||direction||_F`.
    pub fn init_state(eps: f64, direction: &DMatrix<f64>) -> Result<Self> {
        let nrm = direction.norm();
        if nrm == 0.0 {
            return Err(Error::Degenerate("zero perturbation direction"));
        }
        Ok(Perturbation::InitState { delta: direction * (eps / nrm) })
    }

    /// Perturbs `g` and records `||L' - L||_F` as the magnitude.
    pub fn topology(g: &Graph, ratio: f64, mode: crate::graph::PerturbMode, seed: u64) -> Result<Self> {
        use crate::graph::{eigendecompose, normalized_laplacian, perturb_graph};
        let g2 = perturb_graph(g, ratio, mode, seed)?;
        let (l1, l2) = (normalized_laplacian(g), normalized_laplacian(&g2));
        Ok(Perturbation::Topology { magnitude: (&l2 - &l1).norm(), perturbed: eigendecompose(&l2)? })
    }

    pub fn magnitude(&self) -> f64 {
        match self {
            Perturbation::InitState { delta } | Perturbation::Forcing { delta } => delta.norm(),
            Perturbation::Topology { magnitude, .. } => *magnitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCurve {
    pub alpha: f64,
    pub epsilon: f64,
    pub times: Vec<f64>,
    pub discrepancy: Vec<f64>,
    /// `C` fitted so the bound is tight at the smallest time.
    pub fitted_c: f64,
    pub bound: Vec<f64>,
    pub within_bound: bool,
}

/// Exact discrepancy `||Y(t) - Y~(t)||_F` between the unperturbed and the
/// perturbed linear system, checked against `C eps t^(alpha - 1)`.
pub fn stability_harness(
    basis: &SpectralBasis,
    y0: &DMatrix<f64>,
    alphas: &[f64],
    t_grid: &[f64],
    perturbation: &Perturbation,
) -> Result<Vec<StabilityCurve>> {
    if t_grid.is_empty() {
        return Err(Error::Empty("time grid"));
    }
    if t_grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("T_grid", format!("{t_grid:?}"), "must be positive and increasing"));
    }
    if y0.nrows() != basis.len() {
        return Err(Error::shape("initial state", (basis.len(), y0.ncols()), y0.shape()));
    }
    let cfg = MlEvalConfig::default();
    let eps = perturbation.magnitude();
    let mut curves = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        check_alpha(alpha)?;
        let mut disc = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            let d = match perturbation {
                Perturbation::InitState { delta } => {
                    if delta.shape() != y0.shape() {
                        return Err(Error::shape("perturbation", y0.shape(), delta.shape()));
                    }
                    solve_linear_spectral(basis, delta, alpha, t)?.norm()
                }
                Perturbation::Forcing { delta } => {
                    if delta.shape() != y0.shape() {
                        return Err(Error::shape("perturbation", y0.shape(), delta.shape()));
                    }
                    let phi = basis
                        .eigenvalues()
                        .iter()
                        .map(|&lam| {
                            if lam == 0.0 {
                                Ok(t.powf(alpha) / gamma(1.0 + alpha)?)
                            } else {
                                Ok((1.0 - ml(alpha, lam, t, &cfg)?) / lam)
                            }
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    basis.apply_multipliers(delta, &phi).norm()
                }
                Perturbation::Topology { perturbed, .. } => {
                    if perturbed.len() != basis.len() {
                        return Err(Error::DimensionMismatch {
                            what: "perturbed graph",
                            expected: basis.len().to_string(),
                            got: perturbed.len().to_string(),
                        });
                    }
                    (solve_linear_spectral(perturbed, y0, alpha, t)? - solve_linear_spectral(basis, y0, alpha, t)?).norm()
                }
            };
            disc.push(d);
        }
        let t0 = t_grid[0];
        let c = if eps > 0.0 { disc[0] / (eps * t0.powf(alpha - 1.0)) } else { 0.0 };
        let bound: Vec<f64> = t_grid.iter().map(|&t| c * eps * t.powf(alpha - 1.0)).collect();
        let within_bound = disc.iter().zip(&bound).all(|(d, b)| *d <= b * (1.0 + 1e-9) + 1e-300);
        curves.push(StabilityCurve {
            alpha,
            epsilon: eps,
            times: t_grid.to_vec(),
            discrepancy: disc,
            fitted_c: c,
            bound,
            within_bound,
        });
    }
    Ok(curves)
}

/// Per-graph mean of node rows; `assignment[i]` is node `i`'s graph id.
pub fn mean_pool_readout(y: &DMatrix<f64>, assignment: &[usize]) -> Result<DMatrix<f64>> {
    if assignment.len() != y.nrows() {
        return Err(Error::DimensionMismatch {
            what: "graph assignment",
            expected: y.nrows().to_string(),
            got: assignment.len().to_string(),
        });
    }
    let groups = assignment.iter().max().map_or(0, |m| m + 1);
    let mut out = DMatrix::zeros(groups, y.ncols());
    let mut counts = vec![0usize; groups];
    for (i, &gid) in assignment.iter().enumerate() {
        let mut row = out.row_mut(gid);
        row += y.row(i);
        counts[gid] += 1;
    }
    for (gid, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::Empty("graph group"));
        }
        out.row_mut(gid).scale_mut(1.0 / c as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{eigendecompose, normalized_laplacian, Signal};
    use crate::io::synth_cycle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gauss(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn splits_of(n: usize) -> Splits {
        Splits {
            train: (0..n).filter(|i| i % 2 == 0).collect(),
            val: (0..n).filter(|i| i % 4 == 1).collect(),
            test: (0..n).filter(|i| i % 4 == 3).collect(),
        }
    }

    #[test]
    fn probe_separable_blobs() {
        let n = 80;
        let mut y = gauss(n, 3, 1) * 0.3;
        let labels: Vec<i64> = (0..n).map(|i| (i % 3 == 0) as i64).collect();
        for i in 0..n {
            y[(i, 0)] += if labels[i] == 1 { 10.0 } else { -10.0 };
        }
        let r = linear_probe(&y, &labels, &splits_of(n), &ProbeConfig::default()).unwrap();
        assert_eq!((r.train_acc, r.val_acc, r.test_acc), (1.0, 1.0, 1.0));
    }

    #[test]
    fn probe_constant_predicts_majority() {
        let n = 40;
        let labels: Vec<i64> = (0..n).map(|i| (i % 4 == 0) as i64).collect();
        let y = DMatrix::from_element(n, 2, 3.0);
        let r = linear_probe(&y, &labels, &splits_of(n), &ProbeConfig::default()).unwrap();
        assert_eq!(r.test_acc, 1.0);
        let s = splits_of(n);
        let rate = s.val.iter().filter(|&&i| labels[i] == 0).count() as f64 / s.val.len() as f64;
        assert_eq!(r.val_acc, rate);
    }

    #[test]
    fn probe_errors() {
        let y = gauss(6, 2, 2);
        let s = Splits { train: vec![0, 1], val: vec![2], test: vec![3] };
        assert!(matches!(linear_probe(&y, &[0, 0, 1, 1, 0, 0], &s, &ProbeConfig::default()), Err(Error::SingleClass)));
        let bad = Splits { train: vec![0, 1], val: vec![1], test: vec![] };
        assert!(linear_probe(&y, &[0, 1, 1, 1, 0, 0], &bad, &ProbeConfig::default()).is_err());
    }

    #[test]
    fn rc_examples() {
        let mut y = gauss(40, 2, 3) * 0.1;
        let labels: Vec<i64> = (0..40).map(|i| (i >= 20) as i64).collect();
        for i in 20..40 {
            y[(i, 0)] += 50.0;
        }
        let r = rc_ratio(&y, &labels).unwrap();
        assert!(r.iter().all(|e| e.ratio.unwrap() > 100.0));
        let same = rc_ratio(&DMatrix::zeros(6, 2), &[0, 0, 0, 1, 1, 1]).unwrap();
        assert!(same.iter().all(|e| e.ratio.is_none() && e.flag.is_some()));
        let single = rc_ratio(&gauss(3, 2, 4), &[0, 1, 1]).unwrap();
        assert_eq!(single[0].flag.as_deref(), Some("fewer than two members"));
    }

    #[test]
    fn effective_rank_cases() {
        let a = gauss(30, 1, 5);
        let b = gauss(1, 6, 6);
        assert_eq!(effective_rank(&(&a * &b), 0.9).unwrap(), 1);
        assert_eq!(effective_rank(&gauss(10_000, 10, 7), 0.9).unwrap(), 9);
        assert_eq!(effective_rank(&DMatrix::from_element(5, 3, 1.0), 0.9).unwrap(), 0);
    }

    #[test]
    fn fourier_spread_parseval() {
        let g = synth_cycle(9).unwrap();
        let basis = eigendecompose(&normalized_laplacian(&g)).unwrap();
        let y = gauss(9, 4, 8);
        let m = fourier_spread(&basis, &y).unwrap();
        assert!((m.iter().map(|v| v * v).sum::<f64>() - y.norm_squared()).abs() < 1e-9);
        let u1 = DMatrix::from_column_slice(9, 1, basis.eigenvector(0).as_slice());
        let m = fourier_spread(&basis, &(&u1 * DMatrix::from_row_slice(1, 2, &[2.0, -1.0]))).unwrap();
        assert!(m[1..].iter().all(|&v| v < 1e-12));
    }

    #[test]
    fn theorem_report_on_cycle() {
        let g = synth_cycle(12).unwrap();
        let basis = eigendecompose(&normalized_laplacian(&g)).unwrap();
        let x = Signal::from_slice(&(0..12).map(|i| (i as f64 * 0.7).cos() + 0.2).collect::<Vec<_>>()).unwrap();
        let r = check_theorem_sgi(&basis, &x, 0.3, 0.7, 1e3, 4).unwrap();
        assert!(r.parts_abc());
        assert_eq!((r.n_l, r.n_g), (3, 1));
        assert_eq!(r.exact_multipliers_l[0], 5.0);
        assert_eq!(r.exact_multipliers_g[0], 5.0);
        // leading coefficient is 1 / (lambda Gamma(1 - alpha))
        for i in 1..12 {
            let lam = r.eigenvalues[i];
            let want = 1.0 / (lam * gamma(0.7).unwrap());
            assert!((r.b_l[i][1] - want).abs() < 1e-12 * want);
            assert!((r.b_l[i][1] / r.b_g[i][1] - gamma(0.3).unwrap() / gamma(0.7).unwrap()).abs() < 1e-12);
        }
        let two = Graph::new(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let b2 = eigendecompose(&normalized_laplacian(&two)).unwrap();
        let x4 = Signal::from_slice(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(check_theorem_sgi(&b2, &x4, 0.2, 0.5, 1e3, 2), Err(Error::Disconnected { .. })));
        assert!(check_theorem_sgi(&basis, &x, 0.7, 0.3, 1e3, 4).is_err());
    }

    #[test]
    fn walk_basics() {
        let g = Graph::new(2, &[(0, 1, 1.0)]).unwrap();
        let cfg = WalkConfig { alpha: 0.5, t_end: 0.0, delta_tau: 1e-3, n_walkers: 100, seed: 1 };
        assert_eq!(random_walk_sim(&g, &cfg, 1).unwrap(), vec![0.0, 1.0]);
        let big = WalkConfig { delta_tau: 10.0, ..cfg.clone() };
        assert!(random_walk_sim(&g, &big, 0).is_err());
        let one = WalkConfig { alpha: 1.0, ..cfg };
        assert!(random_walk_sim(&g, &one, 0).is_err());
        let p = random_walk_markov(&g, 5.0, 20_000, 3, 0).unwrap();
        assert!((p[0] - 0.5).abs() < 0.02);
    }

    #[test]
    fn stability_eigen_directions() {
        let g = synth_cycle(8).unwrap();
        let basis = eigendecompose(&normalized_laplacian(&g)).unwrap();
        let y0 = gauss(8, 1, 9);
        let cfg = MlEvalConfig::default();
        let grid = [1.0, 2.0, 5.0, 10.0];
        for i in [0, 3] {
            let dir = DMatrix::from_column_slice(8, 1, basis.eigenvector(i).as_slice());
            let p = Perturbation::init_state(1e-3, &dir).unwrap();
            for alpha in [0.4, 1.0] {
                let c = &stability_harness(&basis, &y0, &[alpha], &grid, &p).unwrap()[0];
                for (k, &t) in grid.iter().enumerate() {
                    let want = 1e-3 * ml(alpha, basis.eigenvalues()[i], t, &cfg).unwrap();
                    assert!((c.discrepancy[k] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn forcing_matches_stepper() {
        let g = synth_cycle(6).unwrap();
        let l = normalized_laplacian(&g);
        let basis = eigendecompose(&l).unwrap();
        let y0 = gauss(6, 2, 10);
        let df = gauss(6, 2, 11) * 0.01;
        let p = Perturbation::Forcing { delta: df.clone() };
        let c = &stability_harness(&basis, &y0, &[0.6], &[1.0], &p).unwrap()[0];
        let a = crate::fde::solve_caputo_pc(|_, y| -(&l * y), &y0, 0.6, 1.0, 1e-3).unwrap();
        let b = crate::fde::solve_caputo_pc(|_, y| -(&l * y) + &df, &y0, 0.6, 1.0, 1e-3).unwrap();
        let d = (b.last() - a.last()).norm();
        assert!((d - c.discrepancy[0]).abs() < 1e-3 * d);
    }

    #[test]
    fn mean_pool() {
        let y = gauss(5, 2, 12);
        let one = mean_pool_readout(&y, &[0; 5]).unwrap();
        assert!((one.row(0) - y.row_mean()).amax() < 1e-15);
        let two = mean_pool_readout(&y, &[1, 0, 1, 0, 1]).unwrap();
        assert_eq!(two.nrows(), 2);
        assert!(mean_pool_readout(&y, &[0, 0, 2, 2, 2]).is_err());
    }
}
