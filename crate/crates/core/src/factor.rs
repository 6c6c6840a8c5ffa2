//! Latent factor model for the candidate returns,
//! `x_t = μ_x + B f_t + v_t`, `f_t ~ N(0, I_k)`, `v_t ~ N(0, Ψ)` with Ψ diagonal.
//!
//! The sampler is plain data augmentation: scores, loadings, idiosyncratic
//! variances and the mean are drawn in turn from their conjugate full
//! conditionals. Loadings carry no identification constraint; only
//! `Σ_x = BBᵀ + Ψ` and `μ_x` are consumed downstream, and both are
//! invariant to rotations of B.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, inverse_gamma, mvn_from_precision, randn, symmetrize};

#[derive(Debug, Clone, PartialEq)]
pub struct FactorPriors {
    /// Prior variance of each loading.
    pub loading_var: f64,
    /// Inverse-gamma shape for each Ψ_j.
    pub psi_shape: f64,
    /// Inverse-gamma scale for Ψ_j is this times the sample variance of column j.
    pub psi_scale_factor: f64,
    /// Φ = phi_factor · (mean sample variance) · I.
    pub phi_factor: f64,
}

impl Default for FactorPriors {
    fn default() -> Self {
        FactorPriors {
            loading_var: 1.0,
            psi_shape: 2.5,
            psi_scale_factor: 0.5,
            phi_factor: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorConfig {
    /// Factor count; `None` picks [`default_factor_count`].
    pub k: Option<usize>,
    pub n_sweeps: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
    pub priors: FactorPriors,
}

impl Default for FactorConfig {
    fn default() -> Self {
        FactorConfig {
            k: None,
            n_sweeps: 10_000,
            n_burn: 2_000,
            thin: 5,
            seed: 2,
            priors: FactorPriors::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorDraw {
    pub mu_x: DVector<f64>,
    pub loadings: DMatrix<f64>,
    pub psi: DVector<f64>,
    pub sigma_x: DMatrix<f64>,
}

impl FactorDraw {
    pub fn marginal(&self) -> MarginalDraw {
        MarginalDraw {
            mu_x: self.mu_x.clone(),
            sigma_x: self.sigma_x.clone(),
        }
    }
}

/// Mean and covariance of the candidate returns from one posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalDraw {
    pub mu_x: DVector<f64>,
    pub sigma_x: DMatrix<f64>,
}

fn sample_moments(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let t = x.nrows() as f64;
    let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()));
    let mut xc = x.clone();
    for (j, mut c) in xc.column_iter_mut().enumerate() {
        c.add_scalar_mut(-mean[j]);
    }
    let cov = xc.tr_mul(&xc) / (t - 1.0);
    (mean, cov)
}

/// Number of sample-correlation eigenvalues above 1, capped at 6 and at p - 1.
pub fn default_factor_count(x: &DMatrix<f64>) -> usize {
    let (_, cov) = sample_moments(x);
    let p = cov.nrows();
    let sd = cov.diagonal().map(f64::sqrt);
    let corr = DMatrix::from_fn(p, p, |i, j| cov[(i, j)] / (sd[i] * sd[j]));
    let eig = SymmetricEigen::new(corr);
    let n = eig.eigenvalues.iter().filter(|&&v| v > 1.0).count();
    n.min(6).min(p.saturating_sub(1))
}

/// Runs the factor-model Gibbs sampler on a T×p return matrix and returns the
/// retained draws.
pub fn fit_factor_model(x: &DMatrix<f64>, config: &FactorConfig) -> Result<Vec<FactorDraw>> {
    let (t, p) = x.shape();
    let k = config.k.unwrap_or_else(|| default_factor_count(x));
    if p == 0 || k >= p {
        return Err(Error::Config(format!("factor count k = {k} must be below p = {p}")));
    }
    if t <= k {
        return Err(Error::Config(format!("need T > k, got T = {t}, k = {k}")));
    }
    if config.n_sweeps <= config.n_burn || config.thin == 0 {
        return Err(Error::Config(format!(
            "invalid sweep settings: sweeps {}, burn {}, thin {}",
            config.n_sweeps, config.n_burn, config.thin
        )));
    }
    let pr = &config.priors;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (xbar, s) = sample_moments(x);
    let s2 = s.diagonal();
    let phi = pr.phi_factor * s2.mean();
    let psi_scale = &s2 * pr.psi_scale_factor;

    // start near the principal-component solution
    let mut mu = xbar.clone();
    let mut b = DMatrix::zeros(p, k);
    if k > 0 {
        let eig = SymmetricEigen::new(s.clone());
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let rest = order[k..].iter().map(|&i| eig.eigenvalues[i]).sum::<f64>() / (p - k) as f64;
        for (c, &i) in order[..k].iter().enumerate() {
            let scale = (eig.eigenvalues[i] - rest).max(1e-12).sqrt();
            b.set_column(c, &(eig.eigenvectors.column(i) * scale));
        }
    }
    let bbt = &b * b.transpose();
    let mut psi = DVector::from_fn(p, |j, _| (s2[j] - bbt[(j, j)]).max(0.1 * s2[j]));

    let mut draws = Vec::new();
    let mut f = DMatrix::<f64>::zeros(t, k);
    for sweep in 0..config.n_sweeps {
        let xc = DMatrix::from_fn(t, p, |i, j| x[(i, j)] - mu[j]);

        if k > 0 {
            // scores: P = I + BᵀΨ⁻¹B shared by all t
            let psi_inv_b = DMatrix::from_fn(p, k, |j, c| b[(j, c)] / psi[j]);
            let mut prec = b.tr_mul(&psi_inv_b);
            for c in 0..k {
                prec[(c, c)] += 1.0;
            }
            let chol = cholesky_with_jitter(&prec, "factor score precision")?;
            let lin = &xc * &psi_inv_b;
            let mean = chol.solve(&lin.transpose()).transpose();
            let z = DMatrix::from_fn(k, t, |_, _| randn(&mut rng));
            let noise = chol
                .l()
                .transpose()
                .solve_upper_triangular(&z)
                .ok_or_else(|| Error::Numerical("score draw".into()))?;
            f = mean + noise.transpose();

            // loadings, row by row
            let ftf = f.tr_mul(&f);
            let ftx = f.tr_mul(&xc);
            for j in 0..p {
                let mut prec = &ftf / psi[j];
                for c in 0..k {
                    prec[(c, c)] += 1.0 / pr.loading_var;
                }
                let lin = ftx.column(j) / psi[j];
                let row = mvn_from_precision(&mut rng, &prec, &lin, "loading precision")?;
                b.set_row(j, &row.transpose());
            }
        }

        // idiosyncratic variances
        let fitted = &f * b.transpose();
        for j in 0..p {
            let ss: f64 = (0..t).map(|i| (xc[(i, j)] - fitted[(i, j)]).powi(2)).sum();
            psi[j] = inverse_gamma(&mut rng, pr.psi_shape + 0.5 * t as f64, psi_scale[j] + 0.5 * ss)?;
        }

        // mean
        for j in 0..p {
            let prec = 1.0 / phi + t as f64 / psi[j];
            let sum: f64 = (0..t).map(|i| x[(i, j)] - fitted[(i, j)]).sum();
            let m = sum / psi[j] / prec;
            let z: f64 = randn(&mut rng);
            mu[j] = m + z / prec.sqrt();
        }

        if sweep >= config.n_burn && (sweep - config.n_burn) % config.thin == 0 {
            let mut sigma_x = &b * b.transpose();
            for j in 0..p {
                sigma_x[(j, j)] += psi[j];
            }
            symmetrize(&mut sigma_x);
            if nalgebra::Cholesky::new(sigma_x.clone()).is_none() {
                return Err(Error::NotPositiveDefinite(format!("Σ_x at sweep {sweep}")));
            }
            draws.push(FactorDraw {
                mu_x: mu.clone(),
                loadings: b.clone(),
                psi: psi.clone(),
                sigma_x,
            });
        }
    }
    Ok(draws)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simulate(t: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = 8;
        let b = DMatrix::from_fn(p, 2, |j, c| if c == 0 { 0.04 } else { 0.02 * ((j as f64) - 3.5) / 3.5 });
        let psi = DVector::from_fn(p, |j, _| 0.0004 * (1.0 + j as f64 / 8.0));
        let mu = DVector::from_fn(p, |j, _| 0.005 + 0.001 * j as f64);
        let mut x = DMatrix::zeros(t, p);
        for i in 0..t {
            let f = DVector::from_fn(2, |_, _| randn(&mut rng));
            let row = &mu + &b * f;
            for j in 0..p {
                let e: f64 = randn(&mut rng);
                x[(i, j)] = row[j] + psi[j].sqrt() * e;
            }
        }
        let mut sigma = &b * b.transpose();
        for j in 0..p {
            sigma[(j, j)] += psi[j];
        }
        (x, sigma, mu)
    }

    #[test]
    fn zero_factors_gives_diagonal() {
        let (x, _, _) = simulate(200, 1);
        let cfg = FactorConfig {
            k: Some(0),
            n_sweeps: 50,
            n_burn: 10,
            thin: 1,
            ..FactorConfig::default()
        };
        let draws = fit_factor_model(&x, &cfg).unwrap();
        assert_eq!(draws.len(), 40);
        for d in &draws {
            for i in 0..8 {
                for j in 0..8 {
                    if i != j {
                        assert_eq!(d.sigma_x[(i, j)], 0.0);
                    }
                }
                assert_eq!(d.sigma_x[(i, i)], d.psi[i]);
            }
        }
    }

    #[test]
    fn k_too_large() {
        let (x, _, _) = simulate(50, 2);
        let cfg = FactorConfig {
            k: Some(8),
            ..FactorConfig::default()
        };
        assert!(matches!(fit_factor_model(&x, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn recovers_covariance_and_is_deterministic() {
        let (x, sigma, mu) = simulate(1000, 3);
        let cfg = FactorConfig {
            k: Some(2),
            n_sweeps: 1500,
            n_burn: 500,
            thin: 2,
            seed: 7,
            ..FactorConfig::default()
        };
        let draws = fit_factor_model(&x, &cfg).unwrap();
        let mut mean = DMatrix::zeros(8, 8);
        let mut mean_mu = DVector::zeros(8);
        for d in &draws {
            mean += &d.sigma_x;
            mean_mu += &d.mu_x;
            let rebuilt = &d.loadings * d.loadings.transpose() + DMatrix::from_diagonal(&d.psi);
            assert!((&rebuilt - &d.sigma_x).amax() < 1e-10);
            assert!(d.psi.iter().all(|&v| v > 0.0));
        }
        mean /= draws.len() as f64;
        mean_mu /= draws.len() as f64;
        assert!((&mean - &sigma).norm() < 0.15 * sigma.norm());
        assert!((&mean_mu - &mu).amax() < 0.01);

        let again = fit_factor_model(&x, &cfg).unwrap();
        assert_eq!(draws, again);
    }

    #[test]
    fn default_k_heuristic() {
        let (x, _, _) = simulate(500, 4);
        let k = default_factor_count(&x);
        assert!((1..=6).contains(&k));
    }
}
