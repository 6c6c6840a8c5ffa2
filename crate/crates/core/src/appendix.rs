//! Bivariate closed forms comparing the conditional loss with the graphical
//! lasso, and a simulation study that checks end-to-end recovery from known
//! generating moments.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::AlignedData;
use crate::draws::{pair_draws, PosteriorDraw};
use crate::error::{Error, Result};
use crate::factor::{fit_factor_model, FactorConfig};
use crate::linalg::{cholesky_with_jitter, quantile_sorted, standard_normal_vector};
use crate::portfolio::{tangency_sharpe, tangency_sharpe_distribution, AssetMoments, Universe};
use crate::ssvs::{run_chain, ChainConfig, SsvsData};

/// Posterior-mean entries of a bivariate covariance `[[a, c], [c, b]]`, with
/// `a` the target variance and `b` the candidate variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivariateParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl BivariateParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a * b - c * c > 0.0) {
            return Err(Error::Validation(format!(
                "({a}, {b}, {c}) is not a positive definite covariance"
            )));
        }
        Ok(BivariateParams { a, b, c })
    }

    pub fn det(&self) -> f64 {
        self.a * self.b - self.c * self.c
    }
}

/// Maximizer of `−½bγ² + cγ − λ|γ|`: `sign(c)·max(|c| − λ, 0)/b`.
pub fn conditional_loss_optimum(p: &BivariateParams, lambda: f64) -> f64 {
    p.c.signum() * (p.c.abs() - lambda).max(0.0) / p.b
}

/// `ρ|g| − log(ψκ − g²) + aψ + bκ + 2cg`; `+∞` outside the positive
/// definite cone.
pub fn glasso_objective(p: &BivariateParams, rho: f64, g: f64, psi: f64, kappa: f64) -> f64 {
    let det = psi * kappa - g * g;
    if !(psi > 0.0 && kappa > 0.0 && det > 0.0) {
        return f64::INFINITY;
    }
    rho * g.abs() - det.ln() + p.a * psi + p.b * kappa + 2.0 * p.c * g
}

/// Off-diagonal precision entry g* minimizing the glasso objective, and the
/// implied covariance `−g*·det Σ̄`. Both are zero once `ρ ≥ 2|c|`.
pub fn glasso_optimum(p: &BivariateParams, rho: f64) -> Result<(f64, f64)> {
    if rho >= 2.0 * p.c.abs() {
        return Ok((0.0, 0.0));
    }
    // g takes the sign opposite to c; its first-order condition gives
    // g/det Γ = m with m = −sign(c)(|c| − ρ/2), and then g = m/(ab − m²).
    let m = -p.c.signum() * (p.c.abs() - 0.5 * rho);
    let denom = p.det() + p.c.abs() * rho - 0.25 * rho * rho;
    if denom.abs() < 1e-12 {
        return Err(Error::SingularPath(format!("denominator {denom} at rho = {rho}")));
    }
    let g = m / denom;
    Ok((g, -g * p.det()))
}

/// Stationary κ and ψ for a given g (positive roots).
pub fn glasso_stationary_diagonals(p: &BivariateParams, g: f64) -> (f64, f64) {
    let root = 1.0 + (1.0 + 4.0 * p.a * p.b * g * g).sqrt();
    (root / (2.0 * p.b), root / (2.0 * p.a))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathRow {
    pub t: f64,
    pub gamma_conditional: f64,
    pub gamma_glasso: f64,
}

/// Both solution paths on the shared axis `λ = t|c|`, `ρ = 2t|c|`,
/// `t = 0, 1/(n−1), …, 1`.
pub fn path_comparison_table(p: &BivariateParams, grid_size: usize) -> Result<Vec<PathRow>> {
    if grid_size < 2 {
        return Err(Error::Config("path comparison needs at least two grid points".into()));
    }
    (0..grid_size)
        .map(|k| {
            let t = k as f64 / (grid_size - 1) as f64;
            let (_, gl) = glasso_optimum(p, 2.0 * t * p.c.abs())?;
            Ok(PathRow {
                t,
                gamma_conditional: conditional_loss_optimum(p, t * p.c.abs()),
                gamma_glasso: gl,
            })
        })
        .collect()
}

/// Largest gap between the two paths after scaling each by its unpenalized
/// value.
pub fn normalized_path_gap(rows: &[PathRow]) -> f64 {
    let (c0, g0) = (rows[0].gamma_conditional, rows[0].gamma_glasso);
    rows.iter()
        .map(|r| (r.gamma_conditional / c0 - r.gamma_glasso / g0).abs())
        .fold(0.0, f64::max)
}

pub fn write_path_comparison_csv(path: impl AsRef<Path>, rows: &[PathRow]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("t,gamma_conditional,gamma_glasso\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.t, r.gamma_conditional, r.gamma_glasso).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Generating moments for simulated candidates and targets:
/// `X ~ N(μ_x, Σ_x)` and `R = Xβ + E` with `E_i ~ N(0, ψ_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTruth {
    pub mu_x: DVector<f64>,
    pub sigma_x: DMatrix<f64>,
    /// p×q
    pub beta: DMatrix<f64>,
    pub psi: DVector<f64>,
}

impl SimulationTruth {
    /// Ten candidates driven by two factors (a broad market factor and a
    /// size-like spread) and four targets, each loading on one to three
    /// candidates.
    pub fn synthetic_default() -> Self {
        let p = 10;
        let market = [0.045, 0.050, 0.042, 0.055, 0.040, 0.048, 0.035, 0.052, 0.044, 0.038];
        let spread = [0.000, 0.020, -0.015, 0.025, -0.010, 0.012, 0.005, -0.020, 0.018, -0.008];
        let idio = [0.010, 0.015, 0.012, 0.018, 0.011, 0.014, 0.020, 0.016, 0.013, 0.017];
        let b = DMatrix::from_fn(p, 2, |j, k| if k == 0 { market[j] } else { spread[j] });
        let mut sigma_x = &b * b.transpose();
        for j in 0..p {
            sigma_x[(j, j)] += idio[j] * idio[j];
        }
        // factor premia of 0.25 and 0.15 standard deviations per month
        let mu_x = &b * DVector::from_vec(vec![0.25, 0.15]);
        let mut beta = DMatrix::zeros(p, 4);
        beta[(0, 0)] = 1.0;
        beta[(1, 1)] = 0.8;
        beta[(0, 1)] = -0.5;
        beta[(2, 2)] = 0.6;
        beta[(3, 2)] = 0.4;
        beta[(4, 3)] = 0.7;
        beta[(6, 3)] = 0.3;
        beta[(0, 3)] = 0.2;
        let psi = DVector::from_vec(vec![0.012, 0.015, 0.010, 0.014]).map(|s| s * s);
        SimulationTruth {
            mu_x,
            sigma_x,
            beta,
            psi,
        }
    }

    /// Posterior means of a previous pipeline run.
    pub fn from_posterior(draws: &[PosteriorDraw]) -> Result<Self> {
        let first = draws
            .first()
            .ok_or_else(|| Error::Config("no draws to average".into()))?;
        let n = draws.len() as f64;
        let mut t = SimulationTruth {
            mu_x: DVector::zeros(first.p()),
            sigma_x: DMatrix::zeros(first.p(), first.p()),
            beta: DMatrix::zeros(first.p(), first.q()),
            psi: DVector::zeros(first.q()),
        };
        for d in draws {
            t.mu_x += &d.mu_x;
            t.sigma_x += &d.sigma_x;
            t.beta += &d.beta;
            t.psi += &d.psi_resid;
        }
        t.mu_x /= n;
        t.sigma_x /= n;
        t.beta /= n;
        t.psi /= n;
        Ok(t)
    }

    pub fn p(&self) -> usize {
        self.mu_x.len()
    }

    pub fn q(&self) -> usize {
        self.psi.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (p, q) = (self.p(), self.q());
        if self.sigma_x.shape() != (p, p) || self.beta.shape() != (p, q) {
            return Err(Error::Dimension("simulation moments disagree on p or q".into()));
        }
        if self.psi.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Validation("residual variances must be nonnegative".into()));
        }
        Ok(())
    }

    /// Target mean and covariance implied by the generating moments.
    pub fn target_moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let mu = self.beta.tr_mul(&self.mu_x);
        let mut s = self.beta.tr_mul(&(&self.sigma_x * &self.beta));
        for i in 0..self.q() {
            s[(i, i)] += self.psi[i];
        }
        (mu, s)
    }

    /// Sharpe ratio of the target tangency portfolio.
    pub fn tangency_sharpe(&self) -> Result<f64> {
        let (mu, s) = self.target_moments();
        tangency_sharpe(&mu, &s)
            .ok_or_else(|| Error::NotPositiveDefinite("target covariance of the simulation truth".into()))
    }

    /// Draws T rows of (X, R).
    pub fn simulate(&self, t: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.validate()?;
        let (p, q) = (self.p(), self.q());
        let l = cholesky_with_jitter(&self.sigma_x, "simulation Σ_x")?.l();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DMatrix::zeros(t, p);
        for r in 0..t {
            let row = &self.mu_x + &l * standard_normal_vector(&mut rng, p);
            x.set_row(r, &row.transpose());
        }
        let mut y = &x * &self.beta;
        for r in 0..t {
            let e = standard_normal_vector(&mut rng, q);
            for i in 0..q {
                y[(r, i)] += self.psi[i].sqrt() * e[i];
            }
        }
        Ok((x, y))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub t: usize,
    pub chain: ChainConfig,
    pub factor: FactorConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            t: 500,
            chain: ChainConfig::default(),
            factor: FactorConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryReport {
    pub seed: u64,
    /// (true, posterior mean) per β entry, candidate-major.
    pub beta_pairs: Vec<(f64, f64)>,
    pub beta_rmse: f64,
    pub inclusion: Vec<f64>,
    pub true_sharpe: f64,
    pub sharpe_samples: Vec<f64>,
    /// Fraction of posterior Sharpe samples at or below the truth.
    pub truth_quantile: f64,
    /// Central 90% posterior interval.
    pub interval: (f64, f64),
}

impl RecoveryReport {
    pub fn inside_90(&self) -> bool {
        self.interval.0 <= self.true_sharpe && self.true_sharpe <= self.interval.1
    }

    pub fn summary(&self) -> String {
        format!(
            "seed {}: beta RMSE {:.6}, true tangency Sharpe {:.6}, posterior 90% interval [{:.6}, {:.6}], truth at posterior quantile {:.4}{}",
            self.seed,
            self.beta_rmse,
            self.true_sharpe,
            self.interval.0,
            self.interval.1,
            self.truth_quantile,
            if self.inside_90() { "" } else { " (outside)" }
        )
    }
}

/// Simulates data from `truth`, fits both samplers and compares the
/// posterior with the generating values. The samplers' seeds are derived
/// from `seed`.
pub fn run_simulation_study(truth: &SimulationTruth, seed: u64, config: &SimulationConfig) -> Result<RecoveryReport> {
    let (x, r) = truth.simulate(config.t, seed)?;
    let data = AlignedData::from_matrices(x, r)?;
    let ssvs = SsvsData::new(&data);
    let chain_cfg = ChainConfig {
        seed: seed.wrapping_mul(2).wrapping_add(1),
        ..config.chain.clone()
    };
    let factor_cfg = FactorConfig {
        seed: seed.wrapping_mul(2).wrapping_add(2),
        ..config.factor.clone()
    };
    let chain = run_chain(&ssvs, &chain_cfg)?;
    let factor: Vec<_> = fit_factor_model(data.candidates.values(), &factor_cfg)?
        .iter()
        .map(|d| d.marginal())
        .collect();
    let draws = pair_draws(&chain.draws, &factor)?;

    let (p, q) = (truth.p(), truth.q());
    let n = draws.len() as f64;
    let beta_mean = draws.iter().fold(DMatrix::zeros(p, q), |acc, d| acc + &d.beta) / n;
    let mut beta_pairs = Vec::with_capacity(p * q);
    for j in 0..p {
        for i in 0..q {
            beta_pairs.push((truth.beta[(j, i)], beta_mean[(j, i)]));
        }
    }
    let beta_rmse =
        (beta_pairs.iter().map(|(a, b)| (a - b).powi(2)).sum::<f64>() / beta_pairs.len() as f64).sqrt();

    let moments = AssetMoments::from_draws(&draws, Universe::Targets, data.targets.labels())?;
    let mut samples = tangency_sharpe_distribution(&moments, "tangency")?.values;
    samples.sort_by(|a, b| a.total_cmp(b));
    let true_sharpe = truth.tangency_sharpe()?;
    let below = samples.iter().filter(|&&s| s <= true_sharpe).count();
    Ok(RecoveryReport {
        seed,
        beta_pairs,
        beta_rmse,
        inclusion: chain.inclusion,
        true_sharpe,
        truth_quantile: below as f64 / samples.len() as f64,
        interval: (quantile_sorted(&samples, 0.05), quantile_sorted(&samples, 0.95)),
        sharpe_samples: samples,
    })
}

/// `true_beta,posterior_mean_beta`.
pub fn write_recovery_csv(path: impl AsRef<Path>, report: &RecoveryReport) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("true_beta,posterior_mean_beta\n");
    for (a, b) in &report.beta_pairs {
        writeln!(out, "{a},{b}").unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> BivariateParams {
        BivariateParams::new(12.0, 1.0, 3.0).unwrap()
    }

    #[test]
    fn unpenalized_solutions_coincide() {
        let p = demo();
        assert_eq!(conditional_loss_optimum(&p, 0.0), 3.0);
        let (_, g) = glasso_optimum(&p, 0.0).unwrap();
        assert!((g - 3.0).abs() < 1e-12);
    }

    #[test]
    fn paths_hit_zero_at_the_thresholds() {
        let p = demo();
        assert_eq!(conditional_loss_optimum(&p, 3.0), 0.0);
        assert_eq!(glasso_optimum(&p, 6.0).unwrap(), (0.0, 0.0));
        let neg = BivariateParams::new(12.0, 1.0, -3.0).unwrap();
        assert_eq!(conditional_loss_optimum(&neg, 0.0), -3.0);
        assert!(glasso_optimum(&neg, 1.0).unwrap().0 > 0.0);
    }

    #[test]
    fn stationary_diagonals() {
        let p = demo();
        let (k, s) = glasso_stationary_diagonals(&p, 0.0);
        assert_eq!((k, s), (1.0, 1.0 / 12.0));
        let (k, s) = glasso_stationary_diagonals(&p, -0.37);
        assert!((k / s - 12.0).abs() < 1e-12);
    }

    #[test]
    fn first_order_conditions_hold() {
        let p = demo();
        for rho in [0.0, 0.5, 1.0, 3.0, 5.5] {
            let (g, _) = glasso_optimum(&p, rho).unwrap();
            let (k, s) = glasso_stationary_diagonals(&p, g);
            let det = s * k - g * g;
            // ∂/∂ψ, ∂/∂κ, ∂/∂g (g < 0 here)
            assert!((-k / det + p.a).abs() < 1e-10);
            assert!((-s / det + p.b).abs() < 1e-10);
            assert!((-rho + 2.0 * g / det + 2.0 * p.c).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_indefinite_params() {
        assert!(BivariateParams::new(1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn comparison_table_endpoints() {
        let rows = path_comparison_table(&demo(), 11).unwrap();
        assert_eq!(rows[0].gamma_conditional, 3.0);
        assert!((rows[0].gamma_glasso - 3.0).abs() < 1e-12);
        assert_eq!(rows[10].gamma_conditional, 0.0);
        assert_eq!(rows[10].gamma_glasso, 0.0);
        let wide = path_comparison_table(&BivariateParams::new(200.0, 1.0, 3.0).unwrap(), 11).unwrap();
        assert!(normalized_path_gap(&wide) < normalized_path_gap(&rows));
    }

    #[test]
    fn default_truth_is_consistent() {
        let t = SimulationTruth::synthetic_default();
        t.validate().unwrap();
        let s = t.tangency_sharpe().unwrap();
        assert!(s > 0.2 && s < 1.0, "{s}");
    }
}
