use std::io::Write;

use rayon::prelude::*;

use super::decomposition::{run_ensemble, run_trajectory, trajectory_rng, StepVariance};
use super::{PosteriorSpec, ThetaParams, ToyModelSpec};
use crate::error::{Error, Result};

/// Largest number of parameter coordinates differentiated for `G_t`.
pub const MAX_SENSITIVITY_COORDS: usize = 1024;
const SENSITIVITY_STEP: f64 = 1e-4;
/// Epistemic variance at or below this fraction of the total is treated as
/// indistinguishable from zero.
pub const NOISE_FLOOR_REL: f64 = 1e-10;

/// `dh_t/dy_t` by central differences, as a row-major `d x k` matrix.
pub fn jacobian_y(spec: &ToyModelSpec, theta: &ThetaParams, h: &[f64], y: &[f64], step_size: f64) -> Result<Vec<f64>> {
    spec.validate()?;
    if !(step_size.is_finite() && step_size > 0.0) {
        return Err(Error::domain(format!("step size must be > 0, got {step_size}")));
    }
    if h.len() != spec.d || y.len() != spec.k {
        return Err(Error::domain("state or token sample has the wrong length"));
    }
    let (d, k) = (spec.d, spec.k);
    let mut jac = vec![0.0; d * k];
    let mut yp = y.to_vec();
    let (mut fp, mut fm) = (vec![0.0; d], vec![0.0; d]);
    for c in 0..k {
        yp[c] = y[c] + step_size;
        theta.transition(spec, h, &yp, &mut fp);
        yp[c] = y[c] - step_size;
        theta.transition(spec, h, &yp, &mut fm);
        yp[c] = y[c];
        for r in 0..d {
            let v = (fp[r] - fm[r]) / (2.0 * step_size);
            if !v.is_finite() {
                return Err(Error::Numerical(format!("non-finite difference at token coordinate {c}")));
            }
            jac[r * k + c] = v;
        }
    }
    Ok(jac)
}

/// `||dh_t/dy_t||_F^2` by central differences.
pub fn jacobian_y_frobenius(spec: &ToyModelSpec, theta: &ThetaParams, h: &[f64], y: &[f64], step_size: f64) -> Result<f64> {
    Ok(jacobian_y(spec, theta, h, y, step_size)?.iter().map(|v| v * v).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lemma1Status {
    /// Linear model and `lhs >= rhs - 3 se`.
    Holds,
    /// Linear model and the bound fails beyond Monte-Carlo noise.
    Violated,
    /// Nonlinear model: only the residual is reported.
    NotAssessed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub variance: StepVariance,
    /// Mean of `||J_y||_F^2` over all sampled states.
    pub jy_frob2: f64,
    /// Per-coordinate variance of `y_t`, which is `s^2` for the Gaussian emission.
    pub var_y: f64,
    pub lemma1_lhs: f64,
    pub lemma1_rhs: f64,
    pub lemma1_status: Lemma1Status,
    pub gt_frob2: f64,
    /// `tau2 * ||G_t||_F^2`, the epistemic variance of the linearised mean map.
    pub lemma2_linear: f64,
    /// `||G_t||_F^2 * Tr(Sigma_theta)`.
    pub lemma2_bound: f64,
    /// `None` when the epistemic term is below the noise floor.
    pub dominance_ratio: Option<f64>,
}

impl StepDiagnostics {
    pub fn t(&self) -> usize {
        self.variance.t
    }

    pub fn delta_nonlin(&self) -> f64 {
        self.lemma1_lhs - self.lemma1_rhs
    }

    pub fn epsilon(&self) -> f64 {
        self.variance.epistemic - self.lemma2_linear
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaDiagnostics {
    pub steps: Vec<StepDiagnostics>,
    pub param_count: usize,
    /// Parameter coordinates differentiated for `G_t`.
    pub sensitivity_coords: usize,
}

fn dominance(v: &StepVariance) -> Option<f64> {
    let floor = NOISE_FLOOR_REL * v.total;
    if v.epistemic <= floor || v.epistemic == 0.0 {
        None
    } else {
        Some(v.aleatoric / v.epistemic)
    }
}

/// Coordinates differentiated for `G_t`: all of them when there are at most
/// [`MAX_SENSITIVITY_COORDS`], else an evenly strided subset.
fn sensitivity_coords(p: usize) -> Vec<usize> {
    if p <= MAX_SENSITIVITY_COORDS {
        (0..p).collect()
    } else {
        (0..MAX_SENSITIVITY_COORDS).map(|i| i * p / MAX_SENSITIVITY_COORDS).collect()
    }
}

fn mean_trajectory(spec: &ToyModelSpec, theta: &ThetaParams, h0: &[f64], steps: usize, m: usize, seed: u64) -> Result<Vec<f64>> {
    let d = spec.d;
    let mut acc = vec![0.0; steps * d];
    let mut buf = vec![0.0; steps * d];
    for i in 0..m {
        run_trajectory(spec, theta, h0, &mut trajectory_rng(seed, i), &mut buf, None)?;
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b;
        }
    }
    let mf = m as f64;
    acc.iter_mut().for_each(|a| *a /= mf);
    Ok(acc)
}

/// `||dE[h_t|theta]/dtheta||_F^2` at the posterior mean for every step, using
/// common random numbers so the difference quotient sees only the parameter.
fn sensitivity(spec: &ToyModelSpec, mean: &ThetaParams, h0: &[f64], steps: usize, m: usize, seed: u64) -> Result<(Vec<f64>, usize)> {
    let d = spec.d;
    let coords = sensitivity_coords(spec.param_count());
    let scale = spec.param_count() as f64 / coords.len() as f64;
    let cols: Vec<Vec<f64>> = coords
        .par_iter()
        .map(|&p| {
            let mut th = mean.clone();
            let base = th.as_slice()[p];
            th.as_mut_slice()[p] = base + SENSITIVITY_STEP;
            let plus = mean_trajectory(spec, &th, h0, steps, m, seed)?;
            th.as_mut_slice()[p] = base - SENSITIVITY_STEP;
            let minus = mean_trajectory(spec, &th, h0, steps, m, seed)?;
            Ok((0..steps)
                .map(|t| {
                    (t * d..(t + 1) * d)
                        .map(|j| {
                            let g = (plus[j] - minus[j]) / (2.0 * SENSITIVITY_STEP);
                            g * g
                        })
                        .sum()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let gt = (0..steps).map(|t| scale * cols.iter().map(|c| c[t]).sum::<f64>()).collect();
    Ok((gt, coords.len()))
}

/// Estimates the decomposition together with the quantities entering the
/// aleatoric lower bound and the epistemic upper bound at every step.
pub fn lemma_diagnostics(
    spec: &ToyModelSpec,
    posterior: &PosteriorSpec,
    h0: &[f64],
    steps: usize,
    m_theta: usize,
    m_traj: usize,
    seed: u64,
) -> Result<LemmaDiagnostics> {
    let summary = run_ensemble(spec, posterior, h0, steps, m_theta, m_traj, seed)?;
    let (gt, coords) = sensitivity(spec, &posterior.theta_mean, h0, steps, m_traj, seed)?;
    let var_y = spec.emission_noise * spec.emission_noise;
    let linear = spec.nonlinearity == super::Nonlinearity::Linear;
    let steps = summary
        .estimate
        .steps
        .iter()
        .zip(&summary.jy_mean)
        .zip(&gt)
        .map(|((v, &jy), &g)| {
            let rhs = var_y * jy;
            let status = if !linear {
                Lemma1Status::NotAssessed
            } else if v.aleatoric >= rhs - 3.0 * v.aleatoric_se {
                Lemma1Status::Holds
            } else {
                Lemma1Status::Violated
            };
            StepDiagnostics {
                variance: *v,
                jy_frob2: jy,
                var_y,
                lemma1_lhs: v.aleatoric,
                lemma1_rhs: rhs,
                lemma1_status: status,
                gt_frob2: g,
                lemma2_linear: posterior.tau2 * g,
                lemma2_bound: g * posterior.trace(),
                dominance_ratio: dominance(v),
            }
        })
        .collect();
    Ok(LemmaDiagnostics { steps, param_count: spec.param_count(), sensitivity_coords: coords })
}

/// Aleatoric-to-epistemic ratio per step; `None` where the epistemic term is
/// at the noise floor.
pub fn dominance_curve(
    spec: &ToyModelSpec,
    posterior: &PosteriorSpec,
    h0: &[f64],
    steps: usize,
    m_theta: usize,
    m_traj: usize,
    seed: u64,
) -> Result<Vec<Option<f64>>> {
    if posterior.tau2 <= 0.0 {
        return Err(Error::domain("dominance curve needs tau2 > 0"));
    }
    let est = run_ensemble(spec, posterior, h0, steps, m_theta, m_traj, seed)?.estimate;
    Ok(est.steps.iter().map(dominance).collect())
}

/// Writes one CSV row per step, preceded by `#` lines recording the run's
/// hyperparameters. Undefined ratios are written as `NA`.
pub fn write_diagnostics_csv<W: Write>(diag: &LemmaDiagnostics, header: &[(&str, String)], mut out: W) -> Result<()> {
    for (k, v) in header {
        writeln!(out, "# {k}={v}")?;
    }
    writeln!(out, "t,total,aleatoric,epistemic,lemma1_lhs,lemma1_rhs,lemma2_bound,dominance_ratio")?;
    for s in &diag.steps {
        let ratio = s.dominance_ratio.map_or_else(|| "NA".to_string(), |r| r.to_string());
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.t(),
            s.variance.total,
            s.variance.aleatoric,
            s.variance.epistemic,
            s.lemma1_lhs,
            s.lemma1_rhs,
            s.lemma2_bound,
            ratio
        )?;
    }
    Ok(())
}
