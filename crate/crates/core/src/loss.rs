//! Contrastive objectives between views and their gradients.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub eta: f64,
    pub bt_lambda: f64,
    pub vicreg_weights: (f64, f64, f64),
    pub vicreg_eps: f64,
    pub cca_lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            eta: 0.5,
            bt_lambda: 5e-3,
            vicreg_weights: (25.0, 25.0, 1.0),
            vicreg_eps: 1.0,
            cca_lambda: 1e-3,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.vicreg_weights;
        for (name, v) in [
            ("eta", self.eta),
            ("bt_lambda", self.bt_lambda),
            ("vicreg_weights", a.min(b).min(c)),
            ("cca_lambda", self.cca_lambda),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, v, "must be nonnegative and finite"));
            }
        }
        if !(self.vicreg_eps > 0.0) {
            return Err(Error::invalid("vicreg_eps", self.vicreg_eps, "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig { tol: 1e-10, max_iter: 1000 }
    }
}

fn same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape("view", a.shape(), b.shape()));
    }
    Ok(())
}

/// `1 - mean_i cos(Yl_i, Yg_i)`; a zero row counts as cosine 0.
pub fn cosmean(yl: &DMatrix<f64>, yg: &DMatrix<f64>) -> Result<f64> {
    Ok(cosmean_with_grad(yl, yg)?.0)
}

/// Loss and its gradients with respect to both arguments.
pub fn cosmean_with_grad(yl: &DMatrix<f64>, yg: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    same_shape(yl, yg)?;
    let n = yl.nrows();
    if n == 0 {
        return Err(Error::Empty("embedding"));
    }
    let mut gl = DMatrix::zeros(n, yl.ncols());
    let mut gg = DMatrix::zeros(n, yl.ncols());
    let mut sim = 0.0;
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        let a = yl.row(i);
        let b = yg.row(i);
        let (na, nb) = (a.norm(), b.norm());
        if na == 0.0 || nb == 0.0 {
            continue;
        }
        let s = a.dot(&b) / (na * nb);
        sim += s;
        gl.set_row(i, &((b / (na * nb) - a * (s / (na * na))) * -inv_n));
        gg.set_row(i, &((a / (na * nb) - b * (s / (nb * nb))) * -inv_n));
    }
    Ok((1.0 - sim * inv_n, gl, gg))
}

pub fn center_columns(y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut yc = y.clone();
    let n = y.nrows() as f64;
    for mut col in yc.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    yc
}

fn sign_fix(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

fn power_iterate(s: &DMatrix<f64>, cfg: PowerConfig) -> (DVector<f64>, f64, bool, f64) {
    let f = s.nrows();
    let mut v = DVector::from_fn(f, |j, _| 1.0 + j as f64 / f as f64);
    v.normalize_mut();
    let mut mu = 0.0;
    let mut res = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        let w = s * &v;
        mu = v.dot(&w);
        res = (&w - &v * mu).norm();
        if res <= cfg.tol * mu.abs().max(f64::MIN_POSITIVE) {
            return (v, mu, true, res);
        }
        let nw = w.norm();
        if nw == 0.0 {
            return (v, 0.0, true, 0.0);
        }
        v = w / nw;
    }
    (v, mu, false, res)
}

/// Top principal direction of the column-centered `Y` by power iteration on
/// `Yc^T Yc`, with the largest-magnitude entry made positive.
pub fn dominant_direction(y: &DMatrix<f64>) -> Result<DVector<f64>> {
    dominant_direction_with(y, PowerConfig::default())
}

pub fn dominant_direction_with(y: &DMatrix<f64>, cfg: PowerConfig) -> Result<DVector<f64>> {
    if y.nrows() < 2 || y.ncols() == 0 {
        return Err(Error::Degenerate("need at least two rows and one column"));
    }
    let yc = center_columns(y);
    let scale = y.amax().max(1.0);
    if yc.amax() <= 1e-13 * scale {
        return Err(Error::Degenerate("centered embedding is numerically zero"));
    }
    let s = yc.tr_mul(&yc);
    let (mut v, mu1, converged, res) = power_iterate(&s, cfg);
    if s.nrows() > 1 {
        let deflated = &s - &v * v.transpose() * mu1;
        let (_, mu2, _, _) = power_iterate(&deflated, PowerConfig { tol: 1e-12, max_iter: cfg.max_iter });
        if mu1 - mu2 <= 1e-8 * mu1 {
            return Err(Error::NoEigengap { top: mu1, second: mu2 });
        }
    }
    if !converged {
        return Err(Error::NotConverged { iterations: cfg.max_iter, residual: res });
    }
    sign_fix(&mut v);
    Ok(v)
}

/// Pulls a gradient `g` with respect to the dominant direction `c` of `Y`
/// back to `Y` by first-order eigenvector perturbation.
pub fn dominant_direction_backward(y: &DMatrix<f64>, c: &DVector<f64>, g: &DVector<f64>) -> DMatrix<f64> {
    let yc = center_columns(y);
    let s = yc.tr_mul(&yc);
    let eig = SymmetricEigen::new(s.clone());
    let mu1 = c.dot(&(&s * c));
    let top = eig.eigenvalues.imax();
    let f = s.nrows();
    let mut ag = DVector::zeros(f);
    for k in 0..f {
        if k == top {
            continue;
        }
        let vk = eig.eigenvectors.column(k);
        ag += vk * (vk.dot(g) / (mu1 - eig.eigenvalues[k]));
    }
    let m = &ag * c.transpose();
    let gs = (&m + m.transpose()) * 0.5;
    yc * gs * 2.0
}

/// `cosmean + eta |<c_k, c_k'>|`; directions are only computed when `eta > 0`.
pub fn regularized_cosmean(yk: &DMatrix<f64>, yk2: &DMatrix<f64>, eta: f64) -> Result<f64> {
    let base = cosmean(yk, yk2)?;
    if eta == 0.0 {
        return Ok(base);
    }
    let c1 = dominant_direction(yk)?;
    let c2 = dominant_direction(yk2)?;
    Ok(base + eta * c1.dot(&c2).abs())
}

/// `sum_k L_R(Y_k, Y_{k+1 mod K})`.
pub fn total_loss(views: &[DMatrix<f64>], eta: f64) -> Result<f64> {
    Ok(total_loss_with_grad(views, eta)?.0)
}

/// Total loss and its gradient with respect to each view.
pub fn total_loss_with_grad(views: &[DMatrix<f64>], eta: f64) -> Result<(f64, Vec<DMatrix<f64>>)> {
    let k = views.len();
    if k < 2 {
        return Err(Error::invalid("K", k, "the loss needs at least two views"));
    }
    let dirs = if eta > 0.0 {
        Some(views.iter().map(dominant_direction).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    let mut grads: Vec<DMatrix<f64>> = views.iter().map(|v| DMatrix::zeros(v.nrows(), v.ncols())).collect();
    let mut dir_grads: Vec<DVector<f64>> = views.iter().map(|v| DVector::zeros(v.ncols())).collect();
    let mut total = 0.0;
    for a in 0..k {
        let b = (a + 1) % k;
        let (l, ga, gb) = cosmean_with_grad(&views[a], &views[b])?;
        total += l;
        grads[a] += ga;
        grads[b] += gb;
        if let Some(dirs) = &dirs {
            let d = dirs[a].dot(&dirs[b]);
            total += eta * d.abs();
            let sgn = if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
            dir_grads[a] += &dirs[b] * (eta * sgn);
            dir_grads[b] += &dirs[a] * (eta * sgn);
        }
    }
    if let Some(dirs) = &dirs {
        for i in 0..k {
            grads[i] += dominant_direction_backward(&views[i], &dirs[i], &dir_grads[i]);
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    Ok((total, grads))
}

/// `(1/N) sum_i ||Yl_i - Yg_i||^2`.
pub fn euclidean_loss(yl: &DMatrix<f64>, yg: &DMatrix<f64>) -> Result<f64> {
    same_shape(yl, yg)?;
    if yl.nrows() == 0 {
        return Err(Error::Empty("embedding"));
    }
    Ok((yl - yg).norm_squared() / yl.nrows() as f64)
}

/// Population variances of the columns.
fn column_variances(y: &DMatrix<f64>) -> Vec<f64> {
    let n = y.nrows() as f64;
    center_columns(y).column_iter().map(|c| c.norm_squared() / n).collect()
}

fn standardize(y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut yc = center_columns(y);
    for (j, var) in column_variances(y).into_iter().enumerate() {
        if var <= 1e-24 {
            return Err(Error::Degenerate("zero-variance dimension in Barlow Twins standardization"));
        }
        yc.column_mut(j).scale_mut(1.0 / var.sqrt());
    }
    Ok(yc)
}

/// Columns standardized, `C = Yl^T Yg / N`,
/// `sum_i (1 - C_ii)^2 + lambda sum_{i != j} C_ij^2`.
pub fn barlow_twins(yl: &DMatrix<f64>, yg: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    same_shape(yl, yg)?;
    let n = yl.nrows() as f64;
    let c = standardize(yl)?.tr_mul(&standardize(yg)?) / n;
    let mut on = 0.0;
    let mut off = 0.0;
    for ((i, j), &v) in c.iter().enumerate().map(|(idx, v)| ((idx % c.nrows(), idx / c.nrows()), v)) {
        if i == j {
            on += (1.0 - v) * (1.0 - v);
        } else {
            off += v * v;
        }
    }
    Ok(on + lambda * off)
}

/// `w1 * invariance + w2 * variance hinge + w3 * off-diagonal covariance`.
pub fn vicreg(yl: &DMatrix<f64>, yg: &DMatrix<f64>, w: (f64, f64, f64), eps: f64) -> Result<f64> {
    same_shape(yl, yg)?;
    let n = yl.nrows() as f64;
    let d = yl.ncols() as f64;
    let inv = euclidean_loss(yl, yg)?;
    let hinge = |y: &DMatrix<f64>| -> f64 { column_variances(y).into_iter().map(|v| (eps - v.sqrt()).max(0.0)).sum() };
    let var = (hinge(yl) + hinge(yg)) / d;
    let off = |y: &DMatrix<f64>| -> f64 {
        let yc = center_columns(y);
        let cov = yc.tr_mul(&yc) / n;
        cov.norm_squared() - cov.diagonal().norm_squared()
    };
    let cov = (off(yl) + off(yg)) / d;
    Ok(w.0 * inv + w.1 * var + w.2 * cov)
}

/// Centered columns scaled by `1/sqrt(N)`, then
/// `||Yl - Yg||_F^2 + lambda (||Yl^T Yl - I||_F^2 + ||Yg^T Yg - I||_F^2)`.
pub fn cca_loss(yl: &DMatrix<f64>, yg: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    same_shape(yl, yg)?;
    if yl.nrows() == 0 {
        return Err(Error::Empty("embedding"));
    }
    let s = 1.0 / (yl.nrows() as f64).sqrt();
    let (a, b) = (center_columns(yl) * s, center_columns(yg) * s);
    let eye = DMatrix::<f64>::identity(yl.ncols(), yl.ncols());
    let dec = (a.tr_mul(&a) - &eye).norm_squared() + (b.tr_mul(&b) - &eye).norm_squared();
    Ok((&a - &b).norm_squared() + lambda * dec)
}
