//! Gradient-descent training of encoder banks and the adaptive view learning
//! loop (train, clip, merge log-close orders, reinitialize, repeat).

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{bank_forward, Activation, EncoderBank};
use crate::error::{Error, Result};
use crate::eval::{linear_probe, ProbeConfig};
use crate::fde::{multiplier_derivatives, multipliers};
use crate::graph::SpectralBasis;
use crate::io::Splits;
use crate::loss::total_loss_with_grad;
use crate::rng::{indexed_stream, Purpose};
use crate::special::MlEvalConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub k_init: usize,
    /// Starting orders; sampled uniformly from (0.01, 1] when absent.
    pub init_alphas: Option<Vec<f64>>,
    pub d_hid: usize,
    pub horizon_t: f64,
    pub lr_w: f64,
    pub lr_alpha: f64,
    pub epochs_n: usize,
    pub clip_eps: f64,
    pub merge_delta: f64,
    pub eta: f64,
    pub seed: u64,
    pub grad_mode: GradMode,
    pub fd_w_samples: usize,
    pub activation: Activation,
    pub max_rounds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k_init: 5,
            init_alphas: None,
            d_hid: 32,
            horizon_t: 20.0,
            lr_w: 1e-2,
            lr_alpha: 1e-2,
            epochs_n: 50,
            clip_eps: 1e-4,
            merge_delta: 1e-4,
            eta: 0.5,
            seed: 0,
            grad_mode: GradMode::Analytic,
            fd_w_samples: 50,
            activation: Activation::Relu,
            max_rounds: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_init < 2 {
            return Err(Error::invalid("k_init", self.k_init, "must be at least 2"));
        }
        if let Some(a) = &self.init_alphas {
            if a.len() != self.k_init {
                return Err(Error::invalid("init_alphas", a.len(), "length must equal k_init"));
            }
            if let Some(bad) = a.iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
                return Err(Error::invalid("init_alphas", bad, "entries must lie in (0, 1]"));
            }
        }
        if self.d_hid == 0 {
            return Err(Error::invalid("d_hid", 0, "must be positive"));
        }
        if !(self.horizon_t > 0.0 && self.horizon_t.is_finite()) {
            return Err(Error::invalid("horizon_t", self.horizon_t, "must be positive and finite"));
        }
        if !(self.lr_w >= 0.0 && self.lr_w.is_finite()) {
            return Err(Error::invalid("lr_w", self.lr_w, "must be nonnegative and finite"));
        }
        if !(self.lr_alpha >= 0.0 && self.lr_alpha.is_finite()) {
            return Err(Error::invalid("lr_alpha", self.lr_alpha, "must be nonnegative and finite"));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::invalid("clip_eps", self.clip_eps, "must lie in (0, 1)"));
        }
        if !(self.merge_delta > 0.0) {
            return Err(Error::invalid("merge_delta", self.merge_delta, "must be positive"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta", self.eta, "must be nonnegative and finite"));
        }
        if self.max_rounds == 0 {
            return Err(Error::invalid("max_rounds", 0, "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub w: Vec<DMatrix<f64>>,
    pub alpha: Vec<f64>,
    /// W coordinates that were differenced (finite-difference mode only);
    /// every other entry of `w` is zero.
    pub sampled: Option<Vec<Vec<(usize, usize)>>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradOptions {
    pub eta: f64,
    pub activation: Activation,
    pub mode: GradMode,
    pub fd_w_samples: usize,
    pub seed: u64,
}

impl GradOptions {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        GradOptions {
            eta: cfg.eta,
            activation: cfg.activation,
            mode: cfg.grad_mode,
            fd_w_samples: cfg.fd_w_samples,
            seed: cfg.seed,
        }
    }
}

pub fn bank_loss(basis: &SpectralBasis, x: &DMatrix<f64>, bank: &EncoderBank, eta: f64, activation: Activation) -> Result<f64> {
    let views = bank_forward(basis, x, bank, activation)?;
    let ys: Vec<DMatrix<f64>> = views.into_iter().map(|v| v.y).collect();
    Ok(total_loss_with_grad(&ys, eta)?.0)
}

/// Loss and gradients with respect to every `W_k` and `alpha_k`.
pub fn grad_loss(basis: &SpectralBasis, x: &DMatrix<f64>, bank: &EncoderBank, opts: &GradOptions) -> Result<Gradients> {
    let g = match opts.mode {
        GradMode::Analytic => analytic(basis, x, bank, opts)?,
        GradMode::FiniteDifference => finite_difference(basis, x, bank, opts)?,
    };
    if !g.loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    if g.alpha.iter().any(|v| !v.is_finite()) || g.w.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("gradient"));
    }
    Ok(g)
}

fn analytic(basis: &SpectralBasis, x: &DMatrix<f64>, bank: &EncoderBank, opts: &GradOptions) -> Result<Gradients> {
    let views = bank_forward(basis, x, bank, opts.activation)?;
    let ys: Vec<DMatrix<f64>> = views.iter().map(|v| v.y.clone()).collect();
    let (loss, dys) = total_loss_with_grad(&ys, opts.eta)?;
    let u = basis.eigenvectors();
    let ux = u.tr_mul(x);
    let cfg = MlEvalConfig::default();
    let per: Vec<(DMatrix<f64>, f64)> = bank
        .encoders()
        .par_iter()
        .zip(views.par_iter())
        .zip(dys.par_iter())
        .map(|((p, view), dy)| -> Result<(DMatrix<f64>, f64)> {
            let m = multipliers(basis, p.alpha, p.horizon_t, &cfg)?;
            let dm = multiplier_derivatives(basis, p.alpha, p.horizon_t, &cfg)?;
            let r = dy.component_mul(&opts.activation.derivative(&view.pre));
            let mut ur = u.tr_mul(&r);
            let c = &ux * &p.w;
            let mut d_alpha = 0.0;
            for i in 0..basis.len() {
                d_alpha += dm[i] * ur.row(i).dot(&c.row(i));
                ur.row_mut(i).scale_mut(m[i]);
            }
            Ok((ux.tr_mul(&ur), d_alpha))
        })
        .collect::<Result<_>>()?;
    let (w, alpha) = per.into_iter().unzip();
    Ok(Gradients { loss, w, alpha, sampled: None })
}

fn finite_difference(basis: &SpectralBasis, x: &DMatrix<f64>, bank: &EncoderBank, opts: &GradOptions) -> Result<Gradients> {
    const H: f64 = 1e-5;
    let f = |b: &EncoderBank| bank_loss(basis, x, b, opts.eta, opts.activation);
    let loss = f(bank)?;
    let mut rng = indexed_stream(opts.seed, Purpose::Sample, 0);
    let mut w = Vec::with_capacity(bank.len());
    let mut alpha = Vec::with_capacity(bank.len());
    let mut sampled = Vec::with_capacity(bank.len());
    for k in 0..bank.len() {
        let p = &bank.encoders()[k];
        let a = p.alpha;
        let at = |v: f64| -> Result<f64> {
            let mut b = bank.clone();
            b.encoders_mut()[k].alpha = v;
            f(&b)
        };
        let g = if a + H <= 1.0 && a - H > 0.0 {
            (at(a + H)? - at(a - H)?) / (2.0 * H)
        } else if a + H > 1.0 {
            (3.0 * loss - 4.0 * at(a - H)? + at(a - 2.0 * H)?) / (2.0 * H)
        } else {
            (-3.0 * loss + 4.0 * at(a + H)? - at(a + 2.0 * H)?) / (2.0 * H)
        };
        alpha.push(g);

        let (rows, cols) = p.w.shape();
        let total = rows * cols;
        let take = opts.fd_w_samples.min(total);
        let mut idx: Vec<usize> = sample(&mut rng, total, take).into_vec();
        idx.sort_unstable();
        let coords: Vec<(usize, usize)> = idx.into_iter().map(|i| (i / cols, i % cols)).collect();
        let mut gw = DMatrix::zeros(rows, cols);
        for &(i, j) in &coords {
            let at_w = |delta: f64| -> Result<f64> {
                let mut b = bank.clone();
                b.encoders_mut()[k].w[(i, j)] += delta;
                f(&b)
            };
            gw[(i, j)] = (at_w(H)? - at_w(-H)?) / (2.0 * H);
        }
        w.push(gw);
        sampled.push(coords);
    }
    Ok(Gradients { loss, w, alpha, sampled: Some(sampled) })
}

/// `min(1, max(alpha, eps))`; NaN maps to `eps`.
pub fn clip_alpha(alpha: f64, eps: f64) -> f64 {
    alpha.max(eps).min(1.0)
}

/// Groups of indices (into `alphas`) whose orders are chained by
/// `|log a - log b| < delta`, in ascending order of alpha.
pub fn merge_clusters(alphas: &[f64], delta: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..alphas.len()).collect();
    order.sort_by(|&a, &b| alphas[a].total_cmp(&alphas[b]));
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match clusters.last_mut() {
            Some(c) if (alphas[i].ln() - alphas[*c.last().unwrap()].ln()).abs() < delta => c.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    clusters
}

/// Single-linkage merge on log-alpha: each cluster keeps one uniformly chosen
/// member. Output ascending.
pub fn merge_alphas<R: Rng>(alphas: &[f64], delta: f64, rng: &mut R) -> Result<Vec<f64>> {
    Ok(merge_with_events(alphas, delta, rng)?.0)
}

fn merge_with_events<R: Rng>(alphas: &[f64], delta: f64, rng: &mut R) -> Result<(Vec<f64>, Vec<(Vec<f64>, f64)>)> {
    if alphas.is_empty() {
        return Err(Error::Empty("alpha list"));
    }
    if let Some(bad) = alphas.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
        return Err(Error::invalid("alpha", bad, "must lie in (0, 1]"));
    }
    let mut out = Vec::new();
    let mut events = Vec::new();
    for c in merge_clusters(alphas, delta) {
        if c.len() == 1 {
            out.push(alphas[c[0]]);
        } else {
            let survivor = alphas[c[rng.gen_range(0..c.len())]];
            events.push((c.iter().map(|&i| alphas[i]).collect(), survivor));
            out.push(survivor);
        }
    }
    Ok((out, events))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub round: usize,
    pub epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub round: usize,
    pub merged: Vec<f64>,
    pub survivor: f64,
}

/// `losses[i]` is the loss before the update of `epochs[i]`, and
/// `alpha_traces[i]` the orders after it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub losses: Vec<f64>,
    pub alpha_traces: Vec<Vec<f64>>,
    pub merge_events: Vec<MergeEvent>,
    pub k_per_round: Vec<usize>,
    pub final_alphas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AvlaOutcome {
    pub k_tilde: usize,
    pub alphas: Vec<f64>,
    pub bank: EncoderBank,
    pub report: TrainReport,
}

pub fn initial_alphas(cfg: &TrainConfig) -> Vec<f64> {
    if let Some(a) = &cfg.init_alphas {
        return a.clone();
    }
    let mut rng = indexed_stream(cfg.seed, Purpose::Init, u64::MAX);
    let mut a: Vec<f64> = (0..cfg.k_init).map(|_| 1.0 - 0.99 * rng.gen::<f64>()).collect();
    a.sort_by(f64::total_cmp);
    a
}

/// Runs `epochs_n` plain gradient steps in place, appending to `report`.
pub fn train_bank(
    basis: &SpectralBasis,
    x: &DMatrix<f64>,
    bank: &mut EncoderBank,
    cfg: &TrainConfig,
    round: usize,
    report: &mut TrainReport,
) -> Result<()> {
    let opts = GradOptions::from_config(cfg);
    for epoch in 0..cfg.epochs_n {
        let g = grad_loss(basis, x, bank, &opts)?;
        for (k, p) in bank.encoders_mut().iter_mut().enumerate() {
            p.w -= &g.w[k] * cfg.lr_w;
            p.alpha = clip_alpha(p.alpha - cfg.lr_alpha * g.alpha[k], cfg.clip_eps);
        }
        *bank = EncoderBank::new(bank.encoders().to_vec())?;
        report.epochs.push(EpochRecord { round, epoch });
        report.losses.push(g.loss);
        report.alpha_traces.push(bank.alphas());
    }
    Ok(())
}

/// The adaptive view learning loop.
pub fn avla(basis: &SpectralBasis, x: &DMatrix<f64>, cfg: &TrainConfig) -> Result<AvlaOutcome> {
    cfg.validate()?;
    if x.nrows() != basis.len() {
        return Err(Error::shape("features", (basis.len(), x.ncols()), x.shape()));
    }
    let d_in = x.ncols();
    let mut alphas = initial_alphas(cfg);
    let mut report = TrainReport::default();
    for round in 0..cfg.max_rounds {
        let mut bank = EncoderBank::random(d_in, cfg.d_hid, &alphas, cfg.horizon_t, cfg.seed, round as u64)?;
        report.k_per_round.push(bank.len());
        train_bank(basis, x, &mut bank, cfg, round, &mut report)?;
        let trained = bank.alphas();
        let mut rng = indexed_stream(cfg.seed, Purpose::Merge, round as u64);
        let (merged, events) = merge_with_events(&trained, cfg.merge_delta, &mut rng)?;
        if events.is_empty() {
            report.final_alphas = trained.clone();
            return Ok(AvlaOutcome { k_tilde: trained.len(), alphas: trained, bank, report });
        }
        for (m, s) in events {
            report.merge_events.push(MergeEvent { round, merged: m, survivor: s });
        }
        if merged.len() < 2 {
            return Err(Error::Degenerate("all encoders merged into a single view"));
        }
        alphas = merged;
    }
    Err(Error::NonTermination { rounds: cfg.max_rounds })
}

fn weighted_sum(views: &[DMatrix<f64>], beta: &[f64]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(views[0].nrows(), views[0].ncols());
    for (v, &b) in views.iter().zip(beta) {
        if b != 0.0 {
            out += v * b;
        }
    }
    out
}

/// Splits `total` units over `weights` proportionally (largest remainder,
/// ties to the lower index).
fn apportion(total: u32, weights: &[f64]) -> Vec<u32> {
    let s: f64 = weights.iter().sum();
    if s <= 0.0 {
        let k = weights.len() as u32;
        return (0..k).map(|i| total / k + u32::from(i < total % k)).collect();
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / s * total as f64).collect();
    let mut out: Vec<u32> = exact.iter().map(|e| e.floor() as u32).collect();
    let mut rest = total - out.iter().sum::<u32>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for i in order {
        if rest == 0 {
            break;
        }
        out[i] += 1;
        rest -= 1;
    }
    out
}

/// Tunes the view weights on the validation split, in steps of 0.01.
/// Exhaustive for two views, coordinate ascent from uniform otherwise; ties
/// go to the candidate closest to uniform.
pub fn tune_beta(views: &[DMatrix<f64>], labels: &[i64], splits: &Splits, probe: &ProbeConfig) -> Result<Vec<f64>> {
    if views.is_empty() {
        return Err(Error::Empty("view list"));
    }
    if splits.val.is_empty() {
        return Err(Error::Empty("validation split"));
    }
    let k = views.len();
    if k == 1 {
        return Ok(vec![1.0]);
    }
    let uniform = 1.0 / k as f64;
    let dist = |units: &[u32]| -> f64 { units.iter().map(|&u| (u as f64 / 100.0 - uniform).powi(2)).sum() };
    let score = |units: &[u32]| -> Result<f64> {
        let beta: Vec<f64> = units.iter().map(|&u| u as f64 / 100.0).collect();
        Ok(linear_probe(&weighted_sum(views, &beta), labels, splits, probe)?.val_acc)
    };
    let better = |acc: f64, d: f64, best_acc: f64, best_d: f64| acc > best_acc || (acc == best_acc && d < best_d - 1e-15);

    let mut best: Vec<u32> = apportion(100, &vec![1.0; k]);
    let mut best_acc = score(&best)?;
    let mut best_d = dist(&best);
    if k == 2 {
        for i in 0..=100u32 {
            let cand = [i, 100 - i];
            let acc = score(&cand)?;
            let d = dist(&cand);
            if better(acc, d, best_acc, best_d) {
                best = cand.to_vec();
                best_acc = acc;
                best_d = d;
            }
        }
    } else {
        for _sweep in 0..20 {
            let mut changed = false;
            for c in 0..k {
                for v in 0..=100u32 {
                    let others: Vec<f64> = (0..k).filter(|&j| j != c).map(|j| best[j] as f64).collect();
                    let spread = apportion(100 - v, &others);
                    let mut cand = Vec::with_capacity(k);
                    let mut it = spread.into_iter();
                    for j in 0..k {
                        cand.push(if j == c { v } else { it.next().unwrap() });
                    }
                    if cand == best {
                        continue;
                    }
                    let acc = score(&cand)?;
                    let d = dist(&cand);
                    if better(acc, d, best_acc, best_d) {
                        best = cand;
                        best_acc = acc;
                        best_d = d;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }
    Ok(best.into_iter().map(|u| u as f64 / 100.0).collect())
}
