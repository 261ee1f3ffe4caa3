use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{draw_thetas, stream_rng, PosteriorSpec, ThetaParams, ToyModelSpec, DIVERGENCE_NORM, TRAJECTORY_STREAMS};
use crate::error::{Error, Result};

/// Hidden states of `m` trajectories over `steps` steps, excluding `h0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    m: usize,
    steps: usize,
    d: usize,
    states: Vec<f64>,
}

impl Trajectories {
    pub fn trajectories(&self) -> usize {
        self.m
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `h_t` of trajectory `i`, with `t` in `1..=steps`.
    pub fn state(&self, i: usize, t: usize) -> &[f64] {
        assert!(t >= 1 && t <= self.steps, "step {t} out of range");
        let off = (i * self.steps + t - 1) * self.d;
        &self.states[off..off + self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.states
    }
}

pub(crate) fn check_inputs(spec: &ToyModelSpec, h0: &[f64], steps: usize, trajectories: usize) -> Result<()> {
    spec.validate()?;
    if h0.len() != spec.d {
        return Err(Error::domain(format!("h0 has length {}, expected {}", h0.len(), spec.d)));
    }
    if h0.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("h0 contains non-finite values"));
    }
    if steps == 0 {
        return Err(Error::domain("need at least one step"));
    }
    if trajectories < 2 {
        return Err(Error::domain(format!("need at least 2 trajectories, got {trajectories}")));
    }
    Ok(())
}

/// Runs one trajectory, writing `h_1..h_T` into `out` (`steps * d`). When
/// `jy` is given, `||J_y||_F^2` at each step is added to it.
pub(crate) fn run_trajectory<R: Rng>(
    spec: &ToyModelSpec,
    theta: &ThetaParams,
    h0: &[f64],
    rng: &mut R,
    out: &mut [f64],
    mut jy: Option<&mut [f64]>,
) -> Result<()> {
    let (d, k) = (spec.d, spec.k);
    let steps = out.len() / d;
    let mut y = vec![0.0; k];
    let mut z = vec![0.0; d];
    let mut prev = h0.to_vec();
    let s = spec.emission_noise;
    let row_norms: Option<Vec<f64>> = jy.as_ref().map(|_| {
        theta.w_y().chunks(k).map(|r| r.iter().map(|w| w * w).sum::<f64>()).collect()
    });
    for t in 0..steps {
        theta.emission_mean(&prev, &mut y);
        for v in y.iter_mut() {
            let e: f64 = StandardNormal.sample(rng);
            *v += s * e;
        }
        theta.preactivation(spec, &prev, &y, &mut z);
        if let (Some(acc), Some(rn)) = (jy.as_deref_mut(), row_norms.as_ref()) {
            let g2 = spec.gamma * spec.gamma;
            acc[t] += z
                .iter()
                .zip(rn)
                .map(|(zi, r)| {
                    let f = spec.nonlinearity.derivative(*zi);
                    f * f * g2 * r
                })
                .sum::<f64>();
        }
        let h = &mut out[t * d..(t + 1) * d];
        for (hi, zi) in h.iter_mut().zip(&z) {
            *hi = spec.nonlinearity.apply(*zi);
        }
        let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Overflow { step: t + 1, norm });
        }
        prev.copy_from_slice(h);
    }
    Ok(())
}

pub(crate) fn trajectory_rng(seed: u64, i: usize) -> ChaCha8Rng {
    stream_rng(seed, TRAJECTORY_STREAMS, i as u64)
}

/// Samples `trajectories` independent runs of the model at fixed `theta`.
/// Trajectory `i` always consumes random stream `i` of `seed`.
pub fn simulate_trajectories(
    spec: &ToyModelSpec,
    theta: &ThetaParams,
    h0: &[f64],
    steps: usize,
    trajectories: usize,
    seed: u64,
) -> Result<Trajectories> {
    check_inputs(spec, h0, steps, trajectories)?;
    let d = spec.d;
    let mut states = vec![0.0; trajectories * steps * d];
    states
        .par_chunks_mut(steps * d)
        .enumerate()
        .try_for_each(|(i, out)| run_trajectory(spec, theta, h0, &mut trajectory_rng(seed, i), out, None))?;
    Ok(Trajectories { m: trajectories, steps, d, states })
}

/// Variance terms at a single step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepVariance {
    pub t: usize,
    pub total: f64,
    pub aleatoric: f64,
    pub epistemic: f64,
    /// Conservative standard error of `aleatoric`.
    pub aleatoric_se: f64,
}

impl StepVariance {
    pub fn residual(&self) -> f64 {
        self.total - self.aleatoric - self.epistemic
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionEstimate {
    pub steps: Vec<StepVariance>,
    pub theta_samples: usize,
    pub trajectories_per_theta: usize,
}

impl DecompositionEstimate {
    pub fn total(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.total).collect()
    }

    pub fn aleatoric(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.aleatoric).collect()
    }

    pub fn epistemic(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.epistemic).collect()
    }
}

/// Per-theta summary for one step.
struct GroupStep {
    mean: Vec<f64>,
    within: f64,
    within_se: f64,
    shifted_sum: Vec<f64>,
    shifted_sq: f64,
    jy_sum: f64,
}

pub(crate) struct EnsembleSummary {
    pub estimate: DecompositionEstimate,
    /// Mean of `||J_y||_F^2` over every sample, per step.
    pub jy_mean: Vec<f64>,
}

/// Unbiased trace of the covariance of `rows`, computed relative to the first
/// row so identical rows give exactly zero.
fn trace_variance<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, d: usize) -> (Vec<f64>, f64) {
    let mut it = rows.clone();
    let first = it.next().expect("non-empty").to_vec();
    let mut sum = vec![0.0; d];
    let mut sq = 0.0;
    let mut n = 0usize;
    for r in rows {
        for j in 0..d {
            let x = r[j] - first[j];
            sum[j] += x;
            sq += x * x;
        }
        n += 1;
    }
    let nf = n as f64;
    let mean: Vec<f64> = (0..d).map(|j| first[j] + sum[j] / nf).collect();
    if n < 2 {
        return (mean, 0.0);
    }
    let centred = sq - sum.iter().map(|s| s * s).sum::<f64>() / nf;
    (mean, (centred / (nf - 1.0)).max(0.0))
}

fn summarise_group(states: &[f64], jy: &[f64], m: usize, steps: usize, d: usize, shift: &[f64]) -> Vec<GroupStep> {
    (0..steps)
        .map(|t| {
            let rows = (0..m).map(|i| &states[(i * steps + t) * d..(i * steps + t + 1) * d]);
            let (mean, within) = trace_variance(rows.clone(), d);
            let nf = m as f64;
            let q: Vec<f64> = rows
                .clone()
                .map(|r| r.iter().zip(&mean).map(|(x, mu)| (x - mu) * (x - mu)).sum::<f64>() * nf / (nf - 1.0))
                .collect();
            let qm = q.iter().sum::<f64>() / nf;
            let qv = q.iter().map(|v| (v - qm) * (v - qm)).sum::<f64>() / (nf - 1.0);
            let c = &shift[t * d..(t + 1) * d];
            let mut shifted_sum = vec![0.0; d];
            let mut shifted_sq = 0.0;
            for r in rows {
                for j in 0..d {
                    let x = r[j] - c[j];
                    shifted_sum[j] += x;
                    shifted_sq += x * x;
                }
            }
            GroupStep { mean, within, within_se: (qv / nf).sqrt(), shifted_sum, shifted_sq, jy_sum: jy[t] }
        })
        .collect()
}

pub(crate) fn check_ensemble(
    spec: &ToyModelSpec,
    posterior: &PosteriorSpec,
    h0: &[f64],
    steps: usize,
    m_theta: usize,
    m_traj: usize,
) -> Result<()> {
    check_inputs(spec, h0, steps, m_traj)?;
    posterior.validate()?;
    if posterior.theta_mean.as_slice().len() != spec.param_count() {
        return Err(Error::domain("posterior mean does not match the model shape"));
    }
    if m_theta == 0 || (posterior.tau2 > 0.0 && m_theta < 2) {
        return Err(Error::domain(format!("need at least 2 parameter samples when tau2 > 0, got {m_theta}")));
    }
    Ok(())
}

/// Runs the full ensemble. Every parameter draw reuses trajectory streams
/// `0..m_traj`, so differences between draws reflect the parameters alone.
pub(crate) fn run_ensemble(
    spec: &ToyModelSpec,
    posterior: &PosteriorSpec,
    h0: &[f64],
    steps: usize,
    m_theta: usize,
    m_traj: usize,
    seed: u64,
) -> Result<EnsembleSummary> {
    check_ensemble(spec, posterior, h0, steps, m_theta, m_traj)?;
    let d = spec.d;
    let thetas = draw_thetas(spec, posterior, m_theta, seed);

    let mut shift = vec![0.0; steps * d];
    run_trajectory(spec, &thetas[0], h0, &mut trajectory_rng(seed, 0), &mut shift, None)?;

    let groups: Vec<Vec<GroupStep>> = thetas
        .par_iter()
        .map(|theta| {
            let mut states = vec![0.0; m_traj * steps * d];
            let mut jy = vec![0.0; steps];
            for (i, out) in states.chunks_mut(steps * d).enumerate() {
                run_trajectory(spec, theta, h0, &mut trajectory_rng(seed, i), out, Some(&mut jy))?;
            }
            Ok(summarise_group(&states, &jy, m_traj, steps, d, &shift))
        })
        .collect::<Result<_>>()?;

    let n_total = (m_theta * m_traj) as f64;
    let mut out = Vec::with_capacity(steps);
    let mut jy_mean = Vec::with_capacity(steps);
    for t in 0..steps {
        let per: Vec<&GroupStep> = groups.iter().map(|g| &g[t]).collect();
        let aleatoric = per.iter().map(|g| g.within).sum::<f64>() / m_theta as f64;
        let aleatoric_se = per.iter().map(|g| g.within_se).sum::<f64>() / m_theta as f64;
        let (_, epistemic) = trace_variance(per.iter().map(|g| g.mean.as_slice()), d);
        let mut sum = vec![0.0; d];
        let mut sq = 0.0;
        for g in &per {
            for j in 0..d {
                sum[j] += g.shifted_sum[j];
            }
            sq += g.shifted_sq;
        }
        let centred = sq - sum.iter().map(|s| s * s).sum::<f64>() / n_total;
        let total = (centred / (n_total - 1.0)).max(0.0);
        out.push(StepVariance { t: t + 1, total, aleatoric, epistemic, aleatoric_se });
        jy_mean.push(per.iter().map(|g| g.jy_sum).sum::<f64>() / n_total);
    }
    Ok(EnsembleSummary {
        estimate: DecompositionEstimate { steps: out, theta_samples: m_theta, trajectories_per_theta: m_traj },
        jy_mean,
    })
}

/// Splits the hidden-state variance at each step into the expected
/// within-parameter variance (aleatoric) and the variance of the
/// within-parameter mean across posterior draws (epistemic).
pub fn estimate_decomposition(
    spec: &ToyModelSpec,
    posterior: &PosteriorSpec,
    h0: &[f64],
    steps: usize,
    m_theta: usize,
    m_traj: usize,
    seed: u64,
) -> Result<DecompositionEstimate> {
    Ok(run_ensemble(spec, posterior, h0, steps, m_theta, m_traj, seed)?.estimate)
}
