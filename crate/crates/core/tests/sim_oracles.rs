mod common;

use common::*;
use erank::sim::{
    estimate_decomposition, jacobian_y, lemma_diagnostics, random_state, simulate_trajectories, Lemma1Status,
    Nonlinearity, PosteriorSpec, ThetaParams, ToyModelSpec,
};
use rand::Rng;

fn scalar_spec(s: f64) -> ToyModelSpec {
    ToyModelSpec { d: 1, k: 1, nonlinearity: Nonlinearity::Linear, gamma: 0.9, emission_noise: s }
}

fn spec(nl: Nonlinearity, s: f64) -> ToyModelSpec {
    ToyModelSpec { d: 6, k: 4, nonlinearity: nl, gamma: 1.2, emission_noise: s }
}

#[test]
fn scalar_linear_variance_matches_closed_form() {
    let (g, a, b, c, beta, s) = (0.9, 0.5, 0.8, 0.3, 0.2, 0.4);
    let sp = scalar_spec(s);
    let theta = ThetaParams::from_vec(&sp, vec![a, b, beta, c]).unwrap();
    let n = 20_000;
    let traj = simulate_trajectories(&sp, &theta, &[0.7], 20, n, 3).unwrap();
    let expected = scalar_linear_variance(g, a, b, c, s, 20);
    for (t, v) in expected.iter().enumerate() {
        let xs: Vec<f64> = (0..n).map(|i| traj.state(i, t + 1)[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = v * (2.0 / (n - 1) as f64).sqrt();
        assert!((var - v).abs() <= 3.0 * se, "t={}: {var} vs {v}", t + 1);
    }
    // The decomposition with a point-mass posterior sees the same variance.
    let post = PosteriorSpec { theta_mean: theta, tau2: 0.0 };
    let est = estimate_decomposition(&sp, &post, &[0.7], 20, 2, n, 3).unwrap();
    for (step, v) in est.steps.iter().zip(&expected) {
        assert!((step.aleatoric - v).abs() <= 3.0 * v * (2.0 / (n - 1) as f64).sqrt());
        assert!(step.epistemic <= 1e-10 * step.total);
    }
}

#[test]
fn finite_difference_jacobian_matches_analytic() {
    let mut r = rng(4);
    for nl in [Nonlinearity::Linear, Nonlinearity::Tanh] {
        let sp = spec(nl, 0.1);
        for seed in 0..10 {
            let theta = ThetaParams::random(&sp, seed);
            let h: Vec<f64> = (0..sp.d).map(|_| r.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..sp.k).map(|_| r.random_range(-1.0..1.0)).collect();
            let fd = jacobian_y(&sp, &theta, &h, &y, 1e-5).unwrap();
            let exact = match nl {
                Nonlinearity::Tanh => tanh_jacobian(sp.gamma, theta.w_h(), theta.w_y(), theta.bias(), &h, &y),
                Nonlinearity::Linear => theta.w_y().iter().map(|w| sp.gamma * w).collect(),
            };
            for (x, e) in fd.iter().zip(&exact) {
                assert!((x - e).abs() <= 1e-6 * e.abs().max(1e-3), "{nl:?} seed {seed}: {x} vs {e}");
            }
        }
    }
}

#[test]
fn variance_identity_holds_at_every_step() {
    for nl in [Nonlinearity::Linear, Nonlinearity::Tanh] {
        let sp = spec(nl, 0.2);
        let post = PosteriorSpec { theta_mean: ThetaParams::random(&sp, 1), tau2: 1e-2 };
        let h0 = random_state(sp.d, 1.0, 1);
        let est = estimate_decomposition(&sp, &post, &h0, 10, 100, 100, 9).unwrap();
        for s in &est.steps {
            let rel = s.residual().abs() / s.total;
            assert!(rel <= 0.05, "{nl:?} t={}: relative residual {rel}", s.t);
            assert!(s.aleatoric >= 0.0 && s.epistemic >= 0.0);
        }
    }
}

#[test]
fn degenerate_sources_vanish() {
    let sp = spec(Nonlinearity::Tanh, 0.0);
    let post = PosteriorSpec { theta_mean: ThetaParams::random(&sp, 2), tau2: 1e-3 };
    let est = estimate_decomposition(&sp, &post, &random_state(sp.d, 1.0, 2), 8, 20, 20, 1).unwrap();
    assert!(est.aleatoric().iter().all(|&a| a == 0.0));
    assert!(est.epistemic().iter().all(|&e| e > 0.0));

    let sp = spec(Nonlinearity::Tanh, 0.3);
    let post = PosteriorSpec { theta_mean: ThetaParams::random(&sp, 2), tau2: 0.0 };
    let est = estimate_decomposition(&sp, &post, &random_state(sp.d, 1.0, 2), 8, 20, 50, 1).unwrap();
    for s in &est.steps {
        assert!(s.epistemic <= 1e-10 * s.total);
    }
}

#[test]
fn linear_model_satisfies_aleatoric_lower_bound() {
    let sp = spec(Nonlinearity::Linear, 0.3);
    let post = PosteriorSpec { theta_mean: ThetaParams::random(&sp, 5), tau2: 1e-3 };
    let diag = lemma_diagnostics(&sp, &post, &vec![0.0; sp.d], 8, 20, 400, 2).unwrap();
    for s in &diag.steps {
        assert_eq!(s.lemma1_status, Lemma1Status::Holds, "t={}", s.t());
        assert!((s.var_y - 0.09).abs() < 1e-15);
    }
    let tanh = spec(Nonlinearity::Tanh, 0.3);
    let post = PosteriorSpec { theta_mean: ThetaParams::random(&tanh, 5), tau2: 1e-3 };
    let diag = lemma_diagnostics(&tanh, &post, &vec![0.0; tanh.d], 4, 5, 20, 2).unwrap();
    assert!(diag.steps.iter().all(|s| s.lemma1_status == Lemma1Status::NotAssessed));
}

#[test]
fn small_prior_epistemic_tracks_linearisation() {
    let sp = spec(Nonlinearity::Tanh, 0.1);
    let post = PosteriorSpec { theta_mean: ThetaParams::random(&sp, 3), tau2: 1e-6 };
    let diag = lemma_diagnostics(&sp, &post, &random_state(sp.d, 1.0, 3), 6, 400, 50, 4).unwrap();
    assert_eq!(diag.sensitivity_coords, sp.param_count());
    for s in &diag.steps {
        let rel = s.epsilon().abs() / s.lemma2_linear;
        // 400 draws leave roughly 7% relative sampling error in the epistemic term.
        assert!(rel < 0.3, "t={}: epistemic {} vs linear {}", s.t(), s.variance.epistemic, s.lemma2_linear);
        assert!(s.variance.epistemic <= s.lemma2_bound * 1.3);
    }
}
