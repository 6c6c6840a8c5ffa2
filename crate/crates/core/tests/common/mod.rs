//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use etfsel::data::AlignedData;
use etfsel::linalg::randn;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Columns of the candidate panel that generate the targets in
/// [`three_covariate_data`].
pub const TRUE_CANDIDATES: [usize; 3] = [2, 7, 11];

/// Share of each candidate's variance explained by the common factors.
pub const FACTOR_SHARE: f64 = 0.5;

/// p = 15 candidates driven by 3 latent factors plus idiosyncratic noise,
/// all with the same total volatility; q = 4 targets built from exactly
/// three of them with per-target R² near 0.6.
pub fn three_covariate_data(t: usize, seed: u64) -> AlignedData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = 15;
    let k = 3;
    let vol: f64 = 0.045;
    let mut load = DMatrix::from_fn(p, k, |_, _| randn(&mut rng));
    for mut row in load.row_iter_mut() {
        let n = row.norm();
        row *= vol * FACTOR_SHARE.sqrt() / n;
    }
    let idio = vol * (1.0 - FACTOR_SHARE).sqrt();
    let mean = DMatrix::from_fn(p, 1, |i, _| 0.004 + 0.0003 * i as f64);
    let mut x = DMatrix::zeros(t, p);
    for s in 0..t {
        let f: Vec<f64> = (0..k).map(|_| randn(&mut rng)).collect();
        for j in 0..p {
            let common: f64 = (0..k).map(|m| load[(j, m)] * f[m]).sum();
            x[(s, j)] = mean[(j, 0)] + common + idio * randn(&mut rng);
        }
    }
    let [a, b, c] = TRUE_CANDIDATES;
    let betas: [&[(usize, f64)]; 4] = [
        &[(a, 0.8), (b, 0.4)],
        &[(b, -0.6), (c, 0.5)],
        &[(a, 0.5), (c, 0.5)],
        &[(a, 0.4), (b, 0.4), (c, -0.4)],
    ];
    let mut r = DMatrix::zeros(t, betas.len());
    for (i, terms) in betas.iter().enumerate() {
        let signal: Vec<f64> = (0..t)
            .map(|s| terms.iter().map(|(j, v)| v * x[(s, *j)]).sum())
            .collect();
        let m = signal.iter().sum::<f64>() / t as f64;
        let var = signal.iter().map(|v| (v - m).powi(2)).sum::<f64>() / t as f64;
        // R² = var / (var + noise) = 0.6
        let noise_sd = (var * 0.4 / 0.6).sqrt();
        for s in 0..t {
            r[(s, i)] = signal[s] + noise_sd * randn(&mut rng);
        }
    }
    AlignedData::from_matrices(x, r).expect("well-formed synthetic data")
}
