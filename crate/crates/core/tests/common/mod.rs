//! Reference implementations used to check the library. None of them call
//! into the code under test.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `rows x cols` matrix stored column-major as a list of columns.
pub type Cols = Vec<Vec<f64>>;

pub fn gaussian_cols(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Cols {
    (0..cols).map(|_| (0..rows).map(|_| StandardNormal.sample(rng)).collect()).collect()
}

/// Product of a `rows x rank` and a `rank x cols` Gaussian factor.
pub fn low_rank_cols(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rank: usize) -> Cols {
    let left = gaussian_cols(rng, rows, rank);
    let right = gaussian_cols(rng, rank, cols);
    right
        .iter()
        .map(|coef| (0..rows).map(|i| (0..rank).map(|k| left[k][i] * coef[k]).sum()).collect())
        .collect()
}

/// Singular values by one-sided (Hestenes) Jacobi: rotate column pairs until
/// all columns are mutually orthogonal, then read off the column norms.
pub fn jacobi_singular_values(cols: &Cols) -> Vec<f64> {
    let mut a = cols.clone();
    let m = a.len();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..m {
            for q in p + 1..m {
                let alpha: f64 = a[p].iter().map(|x| x * x).sum();
                let beta: f64 = a[q].iter().map(|x| x * x).sum();
                let gamma: f64 = a[p].iter().zip(&a[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..a[p].len() {
                    let (x, y) = (a[p][i], a[q][i]);
                    a[p][i] = c * x - s * y;
                    a[q][i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = a.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let rows = cols.first().map_or(0, Vec::len);
    sv.truncate(rows.min(m));
    sv
}

/// `exp(-sum p ln p)` with `p = sigma / sum(sigma)`.
pub fn reference_erank(sv: &[f64]) -> f64 {
    let total: f64 = sv.iter().sum();
    let h: f64 = sv
        .iter()
        .map(|s| s / total)
        .filter(|p| *p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    h.exp()
}

/// Fraction of (positive, negative) pairs ordered correctly, ties half.
pub fn brute_force_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0u64;
    let mut pairs = 0u64;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1;
            num += if scores[i] > scores[j] {
                2
            } else if scores[i] == scores[j] {
                1
            } else {
                0
            };
        }
    }
    num as f64 / (2 * pairs) as f64
}

/// Longest common subsequence by enumerating every subsequence of `a`.
/// Exponential; only for lists of at most ~12 items.
pub fn brute_force_lcs<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    assert!(a.len() <= 16);
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let picked: Vec<&T> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
        if picked.len() <= best {
            continue;
        }
        let mut it = b.iter();
        if picked.iter().all(|x| it.any(|y| y == *x)) {
            best = picked.len();
        }
    }
    best
}

/// `Var(h_t)` for the scalar linear model
/// `h_t = g (a h_{t-1} + b y_t) + beta`, `y_t = c h_{t-1} + s eps`, `h_0`
/// fixed: `V_t = (g (a + b c))^2 V_{t-1} + (g b s)^2`, `V_0 = 0`.
pub fn scalar_linear_variance(g: f64, a: f64, b: f64, c: f64, s: f64, steps: usize) -> Vec<f64> {
    let rho = g * (a + b * c);
    let inject = (g * b * s).powi(2);
    let mut v = 0.0;
    (0..steps)
        .map(|_| {
            v = rho * rho * v + inject;
            v
        })
        .collect()
}

/// `dh/dy = diag(1 - tanh(z)^2) g W_y` at pre-activation
/// `z = g (W_h h + W_y y) + b`, all matrices row-major.
pub fn tanh_jacobian(g: f64, w_h: &[f64], w_y: &[f64], b: &[f64], h: &[f64], y: &[f64]) -> Vec<f64> {
    let d = h.len();
    let k = y.len();
    let mut out = vec![0.0; d * k];
    for i in 0..d {
        let z = g * ((0..d).map(|j| w_h[i * d + j] * h[j]).sum::<f64>() + (0..k).map(|j| w_y[i * k + j] * y[j]).sum::<f64>())
            + b[i];
        let f = 1.0 - z.tanh().powi(2);
        for j in 0..k {
            out[i * k + j] = f * g * w_y[i * k + j];
        }
    }
    out
}

pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Cols {
    // Gram-Schmidt on Gaussian columns, repeated once for stability.
    let mut q: Cols = Vec::with_capacity(n);
    while q.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for u in &q {
                let d: f64 = v.iter().zip(u).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            q.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    q
}

/// `q * a` for `q` given as columns (`n x n`) and `a` as columns (`n x m`).
pub fn left_multiply(q: &Cols, a: &Cols) -> Cols {
    a.iter()
        .map(|col| {
            let mut out = vec![0.0; col.len()];
            for (k, &x) in col.iter().enumerate() {
                for (o, qk) in out.iter_mut().zip(&q[k]) {
                    *o += qk * x;
                }
            }
            out
        })
        .collect()
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    loop {
        let l: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        if l.iter().any(|&x| x) && l.iter().any(|&x| !x) {
            return l;
        }
    }
}

/// Scores drawn from a small pool so ties are common.
pub fn tied_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let pool = rng.random_range(1..=n.max(2) / 2 + 1);
    (0..n).map(|_| rng.random_range(0..pool) as f64 * 0.25 - 1.0).collect()
}

/// Twelve reference singular-value lists, each with its known
/// effective rank.
pub const GOLDEN_SPECTRA: [(&[f64], f64); 12] = [
    (&[76.35235595703125, 2.6761877219491637e-14, 1.1108339471383637e-15, 2.146262724714404e-30, 3.9155441760212304e-31, 0.0, 0.0, 0.0, 0.0, 0.0], 1.0000000000000002),
    (&[60.25969314575195, 41.63536071777344, 24.346080780029297, 1.6957731741170864e-14, 5.443248018391789e-15, 1.198083634661477e-15, 8.686304874642721e-16, 1.4343240353264575e-16, 8.151879937535818e-32, 2.8225723498131095e-32], 2.818618681563689),
    (&[58.72682571411133, 34.81084442138672, 29.228200912475586, 7.700909307212667e-15, 7.15308397231237e-15, 2.269143032179147e-15, 3.835939579384829e-16, 3.338613852606579e-30, 1.4536969531393071e-31, 7.850294372204882e-33], 2.8627889069115606),
    (&[1139.242431640625, 3.5298562575496184e-13, 1.458547028271827e-14, 3.75700543160097e-29, 3.410722249588845e-30, 2.802596928649634e-45, 1.401298464324817e-45, 0.0, 0.0, 0.0], 1.0000000000000004),
    (&[1180.1435546875, 552.9315185546875, 154.78468322753906, 16.52665138244629, 6.953697204589844, 1.193859735463404e-13, 1.553780128377754e-14, 6.809435505831249e-16, 1.553959034971104e-17, 1.1361135973578757e-30], 2.513272471125542),
    (&[1153.8829345703125, 328.6450500488281, 7.30688702902868e-14, 2.118430780068855e-30, 1.2843073833195104e-33, 0.0, 0.0, 0.0, 0.0, 0.0], 1.6972759552279857),
    (&[218.68751525878906, 62.00069046020508, 15.469388961791992, 3.4699248902941024e-15, 3.3113897569630145e-15, 4.50245604514668e-31, 1.978491468987644e-31, 2.0052295279776766e-32, 0.0, 0.0], 2.0248367530554368),
    (&[217.03753662109375, 100.93067932128906, 6.290593147277832, 4.6974177206424855e-15, 2.6008424048733518e-15, 1.8994920306458578e-16, 1.1646331124343226e-16, 8.127036452178364e-32, 1.1876486869033015e-33, 0.0], 2.0309090152250144),
    (&[122.30469512939453, 114.34846496582031, 82.5096206665039, 71.02500915527344, 61.05084991455078, 55.45585250854492, 55.206974029541016, 45.03531265258789, 5.794018268585205, 1.2034170623171584e-14], 7.804594598381604),
    (&[1097.43212890625, 585.4111938476562, 355.2393798828125, 2.6302599906921387, 1.0910121140935217e-13, 7.080334175945183e-14, 6.622470177493692e-14, 9.815065427076775e-15, 4.458403975289517e-16, 3.7646645390169164e-30], 2.731143238800789),
    (&[1252.1671752929688, 372.3441772460938, 2.068291691343857e-13, 1.5302303423957858e-13, 1.352673246172607e-14, 2.020799899278259e-29, 9.934199431454563e-30, 4.8484518987236446e-30, 0.0, 0.0], 1.7131135330533338),
    (&[1136.5360107421875, 3.5605334869695526e-13, 1.574521085343991e-14, 2.644209128265101e-29, 1.6524366075384805e-30, 2.802596928649634e-45, 0.0, 0.0, 0.0, 0.0], 1.0000000000000004),
];

/// Short-answer labelling fixtures: (answer, references, expected hallucination).
pub fn rouge_fixtures() -> Vec<(&'static str, Vec<&'static str>, bool)> {
    vec![
        ("Yuri Gagarin", vec!["Gagarin"], false),
        ("French", vec!["French"], false),
        ("brain", vec!["skull"], true),
        ("the corrupt", vec!["anyone he suspected of being a republican"], true),
        ("Steve Stone", vec!["Kent Mercker"], true),
        ("British Overseas Territories Act", vec!["British Overseas Territories Act 2002"], false),
        ("Liothyronine (T3) and levothyroxine (T4)", vec!["TRIAC"], true),
        (
            "VKORC1 and CYP2C9",
            vec![
                "CYP2C9", "VKORC1", "ORM1", "CYP4F2", "EPHX1", "CYP2C18", "CYP2C19", "CYP3A5", "protein S",
                "clotting factor V", "PROC", "GGCX",
            ],
            false,
        ),
        (
            "intellectual disability, fibrosis, alopecia, and pigmentary changes.",
            vec!["follicular ichthyosis", "atrichia", "photophobia"],
            true,
        ),
        ("2006", vec!["2014"], true),
        ("Vesta", vec!["Vesta"], false),
        ("3%", vec!["about 3%"], false),
    ]
}
