//! Time-fractional diffusion `D^alpha_t Y = F(Y)`.
//!
//! The linear case `F(Y) = -L Y` is solved exactly per graph frequency with
//! the Mittag-Leffler kernel. General right-hand sides go through a
//! full-memory fractional Adams-Bashforth-Moulton stepper.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SpectralBasis;
use crate::special::{dml_dalpha, gamma, ml, MlEvalConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSpec {
    pub alpha: f64,
    pub horizon_t: f64,
    #[serde(default)]
    pub step_h: Option<f64>,
    #[serde(default)]
    pub skip_tau: Option<f64>,
    #[serde(default)]
    pub skip_m: Option<usize>,
}

impl DiffusionSpec {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.horizon_t > 0.0 && self.horizon_t.is_finite()) {
            return Err(Error::invalid("horizon_t", self.horizon_t, "must be positive and finite"));
        }
        if let Some(h) = self.step_h {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::invalid("step_h", h, "must be positive and finite"));
            }
        }
        match (self.skip_tau, self.skip_m) {
            (None, None) => Ok(()),
            (Some(tau), Some(m)) => {
                if !(tau > 0.0) || m == 0 {
                    return Err(Error::invalid("skip_tau/skip_m", format!("{tau}/{m}"), "need tau > 0 and m >= 1"));
                }
                if (m as f64 * tau - self.horizon_t).abs() > 1e-9 {
                    return Err(Error::invalid("skip_m * skip_tau", m as f64 * tau, "must equal horizon_t"));
                }
                Ok(())
            }
            _ => Err(Error::invalid("skip_tau/skip_m", "partial", "set both or neither")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DMatrix<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &DMatrix<f64> {
        self.states.last().expect("trajectory always holds the initial state")
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("alpha", alpha, "must lie in (0, 1]"))
    }
}

fn check_rows(basis: &SpectralBasis, y: &DMatrix<f64>) -> Result<()> {
    if y.nrows() != basis.len() {
        return Err(Error::shape("initial state", (basis.len(), y.ncols()), y.shape()));
    }
    Ok(())
}

/// `e_alpha(lambda_i, t)` for every frequency.
pub fn multipliers(basis: &SpectralBasis, alpha: f64, t: f64, cfg: &MlEvalConfig) -> Result<Vec<f64>> {
    basis.eigenvalues().iter().map(|&l| ml(alpha, l, t, cfg)).collect()
}

/// `d/dalpha e_alpha(lambda_i, t)` for every frequency.
pub fn multiplier_derivatives(basis: &SpectralBasis, alpha: f64, t: f64, cfg: &MlEvalConfig) -> Result<Vec<f64>> {
    basis.eigenvalues().iter().map(|&l| dml_dalpha(alpha, l, t, cfg)).collect()
}

/// Per-frequency gain of `m` diffuse-then-add-input rounds:
/// `1 + e + e^2 + ... + e^m` with `e = e_alpha(lambda_i, tau)`.
pub fn skip_multipliers(basis: &SpectralBasis, alpha: f64, tau: f64, m: usize, cfg: &MlEvalConfig) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::invalid("m", m, "must be at least 1"));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", tau, "must be positive"));
    }
    Ok(multipliers(basis, alpha, tau, cfg)?
        .into_iter()
        .map(|e| (0..m).fold(1.0, |acc, _| 1.0 + e * acc))
        .collect())
}

/// `U diag(e_alpha(lambda_i, T)) U^T Y0`.
pub fn solve_linear_spectral(basis: &SpectralBasis, y0: &DMatrix<f64>, alpha: f64, t: f64) -> Result<DMatrix<f64>> {
    check_rows(basis, y0)?;
    check_alpha(alpha)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid("T", t, "must be nonnegative and finite"));
    }
    if t == 0.0 {
        return Ok(y0.clone());
    }
    let m = multipliers(basis, alpha, t, &MlEvalConfig::default())?;
    Ok(basis.apply_multipliers(y0, &m))
}

pub fn solve_with_skips(basis: &SpectralBasis, y0: &DMatrix<f64>, alpha: f64, tau: f64, m: usize) -> Result<DMatrix<f64>> {
    check_rows(basis, y0)?;
    check_alpha(alpha)?;
    let g = skip_multipliers(basis, alpha, tau, m, &MlEvalConfig::default())?;
    Ok(basis.apply_multipliers(y0, &g))
}

/// Fractional Adams-Bashforth-Moulton predictor-corrector on `[0, T]` with
/// step `h`, keeping the whole history. At `alpha = 1` it is Heun's method.
pub fn solve_caputo_pc<F>(f: F, y0: &DMatrix<f64>, alpha: f64, t: f64, h: f64) -> Result<Trajectory>
where
    F: Fn(f64, &DMatrix<f64>) -> DMatrix<f64>,
{
    check_alpha(alpha)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid("h", h, "must be positive and finite"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid("T", t, "must be nonnegative and finite"));
    }
    let steps = (t / h).round() as usize;
    if (steps as f64 * h - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::invalid("h", h, "must divide T"));
    }
    let (rows, cols) = y0.shape();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(y0.clone());
    if steps == 0 {
        return Ok(Trajectory { times, states });
    }

    let eval = |time: f64, y: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let v = f(time, y);
        if v.shape() != (rows, cols) {
            return Err(Error::shape("right-hand side", (rows, cols), v.shape()));
        }
        Ok(v)
    };
    let blown = |y: &DMatrix<f64>| y.iter().any(|v| !v.is_finite());

    if alpha == 1.0 {
        let mut fy = eval(0.0, y0)?;
        for n in 0..steps {
            let tn1 = (n + 1) as f64 * h;
            let yn = &states[n];
            let pred = yn + &fy * h;
            let fp = eval(tn1, &pred)?;
            let next = yn + (&fy + &fp) * (0.5 * h);
            if blown(&next) {
                return Err(Error::BlowUp { step: n + 1, time: tn1 });
            }
            fy = eval(tn1, &next)?;
            times.push(tn1);
            states.push(next);
        }
        return Ok(Trajectory { times, states });
    }

    // weights depend on n - j only
    let ap1 = alpha + 1.0;
    let pred_w: Vec<f64> = (0..steps).map(|k| (k as f64 + 1.0).powf(alpha) - (k as f64).powf(alpha)).collect();
    let corr_w: Vec<f64> = (0..steps)
        .map(|k| {
            let k = k as f64;
            (k + 2.0).powf(ap1) + k.powf(ap1) - 2.0 * (k + 1.0).powf(ap1)
        })
        .collect();
    let c_pred = h.powf(alpha) / gamma(ap1)?;
    let c_corr = h.powf(alpha) / gamma(alpha + 2.0)?;

    let mut hist: Vec<DMatrix<f64>> = Vec::with_capacity(steps + 1);
    hist.push(eval(0.0, y0)?);
    for n in 0..steps {
        let tn1 = (n + 1) as f64 * h;
        let nf = n as f64;
        let mut p_sum = DMatrix::<f64>::zeros(rows, cols);
        let mut c_sum = DMatrix::<f64>::zeros(rows, cols);
        for (j, fj) in hist.iter().enumerate() {
            let b = pred_w[n - j];
            let a = if j == 0 {
                nf.powf(ap1) - (nf - alpha) * (nf + 1.0).powf(alpha)
            } else {
                corr_w[n - j]
            };
            for ((p, c), &v) in p_sum.iter_mut().zip(c_sum.iter_mut()).zip(fj.iter()) {
                *p += b * v;
                *c += a * v;
            }
        }
        let pred = y0 + p_sum * c_pred;
        let fp = eval(tn1, &pred)?;
        let next = y0 + (c_sum + fp) * c_corr;
        if blown(&next) {
            return Err(Error::BlowUp { step: n + 1, time: tn1 });
        }
        hist.push(eval(tn1, &next)?);
        times.push(tn1);
        states.push(next);
    }
    Ok(Trajectory { times, states })
}
