//! Monte-Carlo laboratory for how sampling noise and parameter uncertainty
//! propagate through a toy autoregressive model
//!
//! ```text
//! y_t ~ N(W_emit h_{t-1}, s^2 I)
//! h_t = phi(gamma (W_h h_{t-1} + W_y y_t) + b)
//! ```
//!
//! Tokens are relaxed to continuous Gaussian samples so that `Var(y_t | h)`
//! and `dh_t/dy_t` are well defined. Vector variances are reported as the
//! trace of the covariance matrix.

mod decomposition;
mod diagnostics;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use decomposition::{
    estimate_decomposition, simulate_trajectories, DecompositionEstimate, StepVariance, Trajectories,
};
pub use diagnostics::{
    dominance_curve, jacobian_y, jacobian_y_frobenius, lemma_diagnostics, write_diagnostics_csv,
    Lemma1Status, LemmaDiagnostics, StepDiagnostics,
};

/// `||h_t||` above this aborts a simulation.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Linear,
    Tanh,
}

impl Nonlinearity {
    fn apply(self, z: f64) -> f64 {
        match self {
            Nonlinearity::Linear => z,
            Nonlinearity::Tanh => z.tanh(),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Nonlinearity::Linear => 1.0,
            Nonlinearity::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

impl std::str::FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Nonlinearity::Linear),
            "tanh" => Ok(Nonlinearity::Tanh),
            other => Err(Error::domain(format!("unknown nonlinearity {other:?}"))),
        }
    }
}

/// Shape and fixed hyperparameters of the toy model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyModelSpec {
    /// Hidden dimension.
    pub d: usize,
    /// Token-embedding dimension.
    pub k: usize,
    pub nonlinearity: Nonlinearity,
    /// Expansion gain applied to the transition weights.
    pub gamma: f64,
    /// Standard deviation of `y_t` around its mean.
    pub emission_noise: f64,
}

impl ToyModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.k == 0 {
            return Err(Error::domain("toy model dimensions must be positive"));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::domain(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.emission_noise.is_finite() && self.emission_noise >= 0.0) {
            return Err(Error::domain(format!(
                "emission noise must be >= 0, got {}",
                self.emission_noise
            )));
        }
        Ok(())
    }

    /// Number of entries in `(W_h, W_y, b, W_emit)`.
    pub fn param_count(&self) -> usize {
        self.d * self.d + self.d * self.k + self.d + self.k * self.d
    }
}

/// Transition parameters, flattened as `W_h` (d x d), `W_y` (d x k), `b` (d),
/// `W_emit` (k x d); matrices row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaParams {
    d: usize,
    k: usize,
    values: Vec<f64>,
}

impl ThetaParams {
    pub fn from_vec(spec: &ToyModelSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::domain(format!(
                "expected {} parameters, got {}",
                spec.param_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite parameter"));
        }
        Ok(Self { d: spec.d, k: spec.k, values })
    }

    pub fn zeros(spec: &ToyModelSpec) -> Self {
        Self { d: spec.d, k: spec.k, values: vec![0.0; spec.param_count()] }
    }

    /// Gaussian initialization: `W_h`, `W_emit` with variance `1/d`, `W_y`
    /// with variance `1/k`, bias with standard deviation 0.1.
    pub fn random(spec: &ToyModelSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(spec);
        let (d, k) = (spec.d as f64, spec.k as f64);
        let (wh, wy, b, we) = p.ranges();
        let mut fill = |range: std::ops::Range<usize>, sd: f64, values: &mut [f64]| {
            for v in &mut values[range] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = sd * z;
            }
        };
        fill(wh, 1.0 / d.sqrt(), &mut p.values);
        fill(wy, 1.0 / k.sqrt(), &mut p.values);
        fill(b, 0.1, &mut p.values);
        fill(we, 1.0 / d.sqrt(), &mut p.values);
        p
    }

    fn ranges(
        &self,
    ) -> (
        std::ops::Range<usize>,
        std::ops::Range<usize>,
        std::ops::Range<usize>,
        std::ops::Range<usize>,
    ) {
        let (d, k) = (self.d, self.k);
        let a = d * d;
        let b = a + d * k;
        let c = b + d;
        (0..a, a..b, b..c, c..c + k * d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn w_h(&self) -> &[f64] {
        &self.values[self.ranges().0]
    }

    pub fn w_y(&self) -> &[f64] {
        &self.values[self.ranges().1]
    }

    pub fn bias(&self) -> &[f64] {
        &self.values[self.ranges().2]
    }

    pub fn w_emit(&self) -> &[f64] {
        &self.values[self.ranges().3]
    }

    /// Mutable views of `(W_h, W_y, b, W_emit)`.
    pub fn parts_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64], &mut [f64]) {
        let (wh, wy, b, _) = self.ranges();
        let (a, rest) = self.values.split_at_mut(wh.end);
        let (w, rest) = rest.split_at_mut(wy.end - wy.start);
        let (bias, emit) = rest.split_at_mut(b.end - b.start);
        (a, w, bias, emit)
    }

    /// Mean of `y_t` given `h_{t-1}`.
    pub(crate) fn emission_mean(&self, h: &[f64], out: &mut [f64]) {
        let d = self.d;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.w_emit()[i * d..(i + 1) * d].iter().zip(h).map(|(w, x)| w * x).sum();
        }
    }

    /// Pre-activation `gamma (W_h h + W_y y) + b`.
    pub(crate) fn preactivation(&self, spec: &ToyModelSpec, h: &[f64], y: &[f64], out: &mut [f64]) {
        let (d, k) = (self.d, self.k);
        let (wh, wy, b) = (self.w_h(), self.w_y(), self.bias());
        for i in 0..d {
            let a: f64 = wh[i * d..(i + 1) * d].iter().zip(h).map(|(w, x)| w * x).sum();
            let c: f64 = wy[i * k..(i + 1) * k].iter().zip(y).map(|(w, x)| w * x).sum();
            out[i] = spec.gamma * (a + c) + b[i];
        }
    }

    /// `h_t = f(h_{t-1}, y_t)`.
    pub fn transition(&self, spec: &ToyModelSpec, h: &[f64], y: &[f64], out: &mut [f64]) {
        self.preactivation(spec, h, y, out);
        for v in out.iter_mut() {
            *v = spec.nonlinearity.apply(*v);
        }
    }
}

/// Isotropic Gaussian posterior `N(theta_mean, tau2 I)` over all parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSpec {
    pub theta_mean: ThetaParams,
    pub tau2: f64,
}

impl PosteriorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau2.is_finite() && self.tau2 >= 0.0) {
            return Err(Error::domain(format!("tau2 must be >= 0, got {}", self.tau2)));
        }
        Ok(())
    }

    /// `Tr(Sigma_theta) = tau2 * parameter count`.
    pub fn trace(&self) -> f64 {
        self.tau2 * self.theta_mean.values.len() as f64
    }
}

const TRAJECTORY_STREAMS: u64 = 0;
const THETA_STREAMS: u64 = 1 << 48;
const STATE_STREAM: u64 = 2 << 48;

/// Initial state with independent `N(0, scale^2)` coordinates, standing in
/// for the hidden state left behind by a prompt.
pub fn random_state(d: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, STATE_STREAM, 0);
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect()
}

/// Independent generator for stream `index` of family `family`.
fn stream_rng(seed: u64, family: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(family | index);
    rng
}

/// Draws `count` parameter vectors; stream `j` always yields draw `j`.
pub(crate) fn draw_thetas(spec: &ToyModelSpec, posterior: &PosteriorSpec, count: usize, seed: u64) -> Vec<ThetaParams> {
    let tau = posterior.tau2.sqrt();
    (0..count)
        .map(|j| {
            let mut theta = posterior.theta_mean.clone();
            if tau > 0.0 {
                let mut rng = stream_rng(seed, THETA_STREAMS, j as u64);
                for v in theta.values.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += tau * z;
                }
            }
            debug_assert_eq!(theta.values.len(), spec.param_count());
            theta
        })
        .collect()
}
