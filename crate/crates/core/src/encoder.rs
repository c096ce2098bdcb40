//! FDE encoders: project, diffuse for time `T` with order `alpha`, activate.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fde::{check_alpha, multipliers};
use crate::graph::SpectralBasis;
use crate::rng::{indexed_stream, Purpose};
use crate::special::MlEvalConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, h: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Activation::Relu => h.map(|v| v.max(0.0)),
            Activation::Identity => h.clone(),
        }
    }

    /// Derivative at `h`; the ReLU subgradient at 0 is 0.
    pub fn derivative(self, h: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Activation::Relu => h.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
            Activation::Identity => DMatrix::from_element(h.nrows(), h.ncols(), 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub w: DMatrix<f64>,
    pub alpha: f64,
    pub horizon_t: f64,
}

impl EncoderParams {
    pub fn new(w: DMatrix<f64>, alpha: f64, horizon_t: f64) -> Result<Self> {
        let p = EncoderParams { w, alpha, horizon_t };
        p.validate()?;
        Ok(p)
    }

    /// Entries uniform in `[-1, 1) / sqrt(d_in)`.
    pub fn random<R: Rng>(d_in: usize, d_hid: usize, alpha: f64, horizon_t: f64, rng: &mut R) -> Result<Self> {
        let scale = 1.0 / (d_in.max(1) as f64).sqrt();
        let w = DMatrix::from_fn(d_in, d_hid, |_, _| rng.gen_range(-1.0..1.0) * scale);
        Self::new(w, alpha, horizon_t)
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.horizon_t > 0.0 && self.horizon_t.is_finite()) {
            return Err(Error::invalid("horizon_t", self.horizon_t, "must be positive and finite"));
        }
        if self.w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder weights"));
        }
        Ok(())
    }

    pub fn d_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn d_hid(&self) -> usize {
        self.w.ncols()
    }
}

/// One encoder's output. `z` is the projected input `X W` and `pre` the
/// diffused state before activation.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewEmbedding {
    pub y: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub pre: DMatrix<f64>,
    pub source_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderBank {
    encoders: Vec<EncoderParams>,
}

impl EncoderBank {
    /// Sorts the encoders by `alpha` (stable, so ties keep their order).
    pub fn new(mut encoders: Vec<EncoderParams>) -> Result<Self> {
        if encoders.len() < 2 {
            return Err(Error::invalid("K", encoders.len(), "a bank needs at least two encoders"));
        }
        for e in &encoders {
            e.validate()?;
        }
        let (d_in, d_hid) = (encoders[0].d_in(), encoders[0].d_hid());
        if let Some(e) = encoders.iter().find(|e| e.w.shape() != (d_in, d_hid)) {
            return Err(Error::shape("encoder weights", (d_in, d_hid), e.w.shape()));
        }
        encoders.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
        Ok(EncoderBank { encoders })
    }

    /// Fresh weights for every `alpha`; `round` separates re-initializations.
    pub fn random(d_in: usize, d_hid: usize, alphas: &[f64], horizon_t: f64, seed: u64, round: u64) -> Result<Self> {
        let encoders = alphas
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                let mut rng = indexed_stream(seed, Purpose::Init, (round << 32) | k as u64);
                EncoderParams::random(d_in, d_hid, a, horizon_t, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(encoders)
    }

    pub fn encoders(&self) -> &[EncoderParams] {
        &self.encoders
    }

    pub fn encoders_mut(&mut self) -> &mut [EncoderParams] {
        &mut self.encoders
    }

    pub fn len(&self) -> usize {
        self.encoders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.encoders.is_empty()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.encoders.iter().map(|e| e.alpha).collect()
    }
}

/// `Y = act(U diag(e_alpha(lambda, T)) U^T X W)`.
pub fn encoder_forward(
    basis: &SpectralBasis,
    x: &DMatrix<f64>,
    p: &EncoderParams,
    activation: Activation,
) -> Result<ViewEmbedding> {
    p.validate()?;
    if x.nrows() != basis.len() || x.ncols() != p.d_in() {
        return Err(Error::shape("features", (basis.len(), p.d_in()), x.shape()));
    }
    let z = x * &p.w;
    let m = multipliers(basis, p.alpha, p.horizon_t, &MlEvalConfig::default())?;
    let pre = basis.apply_multipliers(&z, &m);
    Ok(ViewEmbedding {
        y: activation.apply(&pre),
        z,
        pre,
        source_alpha: p.alpha,
    })
}

pub fn bank_forward(
    basis: &SpectralBasis,
    x: &DMatrix<f64>,
    bank: &EncoderBank,
    activation: Activation,
) -> Result<Vec<ViewEmbedding>> {
    if bank.len() < 2 {
        return Err(Error::invalid("K", bank.len(), "a bank needs at least two encoders"));
    }
    bank.encoders
        .par_iter()
        .map(|p| encoder_forward(basis, x, p, activation))
        .collect()
}

pub fn check_simplex(beta: &[f64]) -> Result<()> {
    if beta.iter().any(|&b| !(b >= 0.0)) {
        return Err(Error::Simplex(format!("negative or NaN entry in {beta:?}")));
    }
    let s: f64 = beta.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Simplex(format!("entries sum to {s}")));
    }
    Ok(())
}

/// `sum_k beta_k Y_k`.
pub fn combine_views(views: &[ViewEmbedding], beta: &[f64]) -> Result<DMatrix<f64>> {
    if views.is_empty() {
        return Err(Error::Empty("view list"));
    }
    if views.len() != beta.len() {
        return Err(Error::Simplex(format!("{} weights for {} views", beta.len(), views.len())));
    }
    check_simplex(beta)?;
    let shape = views[0].y.shape();
    if let Some(v) = views.iter().find(|v| v.y.shape() != shape) {
        return Err(Error::shape("view", shape, v.y.shape()));
    }
    if let Some(k) = beta.iter().position(|&b| b == 1.0) {
        return Ok(views[k].y.clone());
    }
    let mut out = DMatrix::zeros(shape.0, shape.1);
    for (v, &b) in views.iter().zip(beta) {
        if b != 0.0 {
            out += &v.y * b;
        }
    }
    Ok(out)
}
