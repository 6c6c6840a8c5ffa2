//! Long-only allocation by maximizing the posterior mean Sharpe ratio, and
//! sampled Sharpe-ratio distributions.
//!
//! Returns are treated as excess returns; Sharpe ratios are in the units of
//! the data (monthly for monthly returns).

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::draws::PosteriorDraw;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioWeights {
    pub tickers: Vec<String>,
    pub w: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpeSamples {
    pub label: String,
    pub values: Vec<f64>,
}

impl SharpeSamples {
    pub fn mean(&self) -> f64 {
        crate::linalg::mean(&self.values)
    }
}

/// `wᵀμ / sqrt(wᵀΣw)`.
pub fn sharpe_per_draw(w: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let var = (sigma * w).dot(w);
    if !(var > 0.0) {
        return Err(Error::DegeneratePortfolio(format!(
            "portfolio variance is {var}"
        )));
    }
    Ok(w.dot(mu) / var.sqrt())
}

/// Maximal Sharpe ratio with unrestricted weights, `sqrt(μᵀΣ⁻¹μ)`, or
/// `None` when Σ is not positive definite.
pub fn tangency_sharpe(mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(sigma.clone())?;
    let z = chol.l().solve_lower_triangular(mu)?;
    Some(z.norm())
}

/// Per-draw mean vectors and covariance matrices for a labeled universe.
#[derive(Debug, Clone)]
pub struct AssetMoments {
    pub tickers: Vec<String>,
    pub mu: Vec<DVector<f64>>,
    pub sigma: Vec<DMatrix<f64>>,
}

/// `wᵀSw` without a temporary.
fn quad_form(s: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    let n = w.len();
    let a = s.as_slice();
    let mut total = 0.0;
    for j in 0..n {
        let wj = w[j];
        if wj == 0.0 {
            continue;
        }
        let col = &a[j * n..(j + 1) * n];
        let mut acc = 0.0;
        for i in 0..n {
            acc += col[i] * w[i];
        }
        total += wj * acc;
    }
    total
}

/// Which block of the joint model a distribution refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Universe {
    Targets,
    Candidates,
}

impl AssetMoments {
    pub fn from_draws(draws: &[PosteriorDraw], universe: Universe, tickers: &[String]) -> Result<Self> {
        let (mu, sigma): (Vec<_>, Vec<_>) = match universe {
            Universe::Candidates => draws.iter().map(|d| (d.mu_x.clone(), d.sigma_x.clone())).unzip(),
            Universe::Targets => draws.iter().map(|d| (d.mu_r(), d.sigma_r())).unzip(),
        };
        if let Some(m) = mu.first() {
            if m.len() != tickers.len() {
                return Err(Error::Dimension(format!(
                    "{} tickers for a universe of {} assets",
                    tickers.len(),
                    m.len()
                )));
            }
        }
        Ok(AssetMoments {
            tickers: tickers.to_vec(),
            mu,
            sigma,
        })
    }

    pub fn n_draws(&self) -> usize {
        self.mu.len()
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    fn index_of(&self, ticker: &str) -> Result<usize> {
        self.tickers
            .iter()
            .position(|t| t == ticker)
            .ok_or_else(|| Error::Lookup(ticker.to_string()))
    }

    /// Restricts every draw to the listed tickers, in the given order.
    pub fn subset(&self, tickers: &[String]) -> Result<AssetMoments> {
        let idx = tickers
            .iter()
            .map(|t| self.index_of(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(AssetMoments {
            tickers: tickers.to_vec(),
            mu: self.mu.iter().map(|m| m.select_rows(idx.iter())).collect(),
            sigma: self
                .sigma
                .iter()
                .map(|s| s.select_rows(idx.iter()).select_columns(idx.iter()))
                .collect(),
        })
    }

    /// Mean over draws of the Sharpe ratio at `w`.
    pub fn mean_sharpe(&self, w: &DVector<f64>) -> f64 {
        let total: f64 = self
            .mu
            .iter()
            .zip(&self.sigma)
            .map(|(m, s)| {
                let var = quad_form(s, w);
                if var > 0.0 {
                    w.dot(m) / var.sqrt()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .sum();
        total / self.n_draws() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeConfig {
    /// Differential weight.
    pub f: f64,
    /// Crossover probability.
    pub cr: f64,
    /// Population size per dimension.
    pub pop_factor: usize,
    pub min_generations: usize,
    pub max_generations: usize,
    /// Once past the minimum, stop when the best objective has improved by
    /// less than `stall_tolerance` over this many generations.
    pub stall_generations: usize,
    pub stall_tolerance: f64,
    pub seed: u64,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            f: 0.8,
            cr: 0.9,
            pop_factor: 10,
            min_generations: 300,
            max_generations: 3000,
            stall_generations: 50,
            stall_tolerance: 1e-10,
            seed: 3,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f > 0.0 && self.f <= 2.0) || !(0.0..=1.0).contains(&self.cr) {
            return Err(Error::Config(format!(
                "DE needs 0 < F <= 2 and 0 <= CR <= 1 (got F = {}, CR = {})",
                self.f, self.cr
            )));
        }
        if self.pop_factor == 0 || self.max_generations < self.min_generations {
            return Err(Error::Config("DE population or generation limits are inconsistent".into()));
        }
        Ok(())
    }
}

/// Clips negatives and renormalizes; `None` if nothing positive is left.
fn project(mut v: DVector<f64>) -> Option<DVector<f64>> {
    v.apply(|x| *x = x.max(0.0));
    let s = v.sum();
    if s > 0.0 && s.is_finite() {
        Some(v / s)
    } else {
        None
    }
}

fn random_simplex_point(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let v = DVector::from_fn(n, |_, _| -(1.0 - rng.random::<f64>()).ln());
    let s = v.sum();
    v / s
}

/// Differential evolution (rand/1/bin) over the simplex, maximizing the
/// posterior mean Sharpe ratio. `seeds` are extra starting members (for
/// example a subset solution embedded in a larger universe). Returns the
/// weights and the attained objective.
pub fn maximize_posterior_mean_sharpe(
    moments: &AssetMoments,
    config: &DeConfig,
    seeds: &[DVector<f64>],
) -> Result<(PortfolioWeights, f64)> {
    config.validate()?;
    let n = moments.n_assets();
    if n == 0 {
        return Err(Error::Config("cannot allocate over an empty asset set".into()));
    }
    if moments.n_draws() == 0 {
        return Err(Error::Config("no posterior draws to average over".into()));
    }
    if n == 1 {
        let w = DVector::from_element(1, 1.0);
        let obj = moments.mean_sharpe(&w);
        return Ok((
            PortfolioWeights {
                tickers: moments.tickers.clone(),
                w,
            },
            obj,
        ));
    }
    let np = (config.pop_factor * n).max(4);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut pop: Vec<DVector<f64>> = Vec::with_capacity(np);
    pop.push(DVector::from_element(n, 1.0 / n as f64));
    for s in seeds {
        if s.len() != n {
            return Err(Error::Dimension(format!(
                "seed member has {} weights for {n} assets",
                s.len()
            )));
        }
        if let Some(s) = project(s.clone()) {
            pop.push(s);
        }
    }
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        pop.push(e);
    }
    pop.truncate(np);
    while pop.len() < np {
        pop.push(random_simplex_point(&mut rng, n));
    }
    let mut fit: Vec<f64> = pop.par_iter().map(|w| moments.mean_sharpe(w)).collect();
    let best_of = |fit: &[f64]| {
        fit.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
    };
    let mut history = vec![best_of(&fit).1];

    for generation in 0..config.max_generations {
        let trials: Vec<DVector<f64>> = (0..np)
            .map(|i| {
                let picks = loop {
                    let s = sample(&mut rng, np, 3);
                    if !s.iter().any(|r| r == i) {
                        break s;
                    }
                };
                let (a, b, c) = (picks.index(0), picks.index(1), picks.index(2));
                let jrand = rng.random_range(0..n);
                let mut u = pop[i].clone();
                for j in 0..n {
                    if j == jrand || rng.random::<f64>() < config.cr {
                        u[j] = pop[a][j] + config.f * (pop[b][j] - pop[c][j]);
                    }
                }
                project(u).unwrap_or_else(|| pop[i].clone())
            })
            .collect();
        let trial_fit: Vec<f64> = trials.par_iter().map(|w| moments.mean_sharpe(w)).collect();
        for (i, (u, fu)) in trials.into_iter().zip(trial_fit).enumerate() {
            if fu >= fit[i] {
                pop[i] = u;
                fit[i] = fu;
            }
        }
        let best = best_of(&fit).1;
        history.push(best);
        let done = generation + 1;
        if done >= config.min_generations && done >= config.stall_generations {
            let before = history[done - config.stall_generations];
            if best - before <= config.stall_tolerance * best.abs().max(1.0) {
                break;
            }
        }
    }
    let (bi, bv) = best_of(&fit);
    Ok((
        PortfolioWeights {
            tickers: moments.tickers.clone(),
            w: pop[bi].clone(),
        },
        bv,
    ))
}

/// Per-draw maximal Sharpe ratio. Draws with a non-positive-definite
/// covariance are skipped; more than 1% skipped is an error.
pub fn tangency_sharpe_distribution(moments: &AssetMoments, label: &str) -> Result<SharpeSamples> {
    let vals: Vec<Option<f64>> = moments
        .mu
        .par_iter()
        .zip(&moments.sigma)
        .map(|(m, s)| tangency_sharpe(m, s))
        .collect();
    let skipped = vals.iter().filter(|v| v.is_none()).count();
    if skipped > 0 {
        log::warn!("{skipped} draws skipped: covariance not positive definite");
    }
    if skipped as f64 > 0.01 * vals.len() as f64 {
        return Err(Error::Numerical(format!(
            "{skipped} of {} draws have a singular covariance",
            vals.len()
        )));
    }
    Ok(SharpeSamples {
        label: label.to_string(),
        values: vals.into_iter().flatten().collect(),
    })
}

/// Per-draw Sharpe ratios of fixed weights. Weights are matched to the
/// universe by ticker.
pub fn sharpe_distribution_for_weights(
    weights: &PortfolioWeights,
    moments: &AssetMoments,
    label: &str,
) -> Result<SharpeSamples> {
    let sub = moments.subset(&weights.tickers)?;
    let values = sub
        .mu
        .iter()
        .zip(&sub.sigma)
        .map(|(m, s)| sharpe_per_draw(&weights.w, m, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(SharpeSamples {
        label: label.to_string(),
        values,
    })
}

/// `ticker,weight`.
pub fn write_weights_csv(path: impl AsRef<Path>, weights: &PortfolioWeights) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("ticker,weight\n");
    for (t, w) in weights.tickers.iter().zip(weights.w.iter()) {
        writeln!(out, "{t},{w}").unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads `ticker,weight` rows. Weights must be nonnegative; they are
/// renormalized to sum to one.
pub fn read_weights_csv(path: impl AsRef<Path>) -> Result<PortfolioWeights> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let mut tickers = Vec::new();
    let mut w = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        if rec.len() < 2 {
            return Err(Error::Parse {
                row: i + 2,
                column: None,
                message: "expected ticker,weight".into(),
            });
        }
        let v: f64 = rec[1].trim().parse().map_err(|_| Error::Parse {
            row: i + 2,
            column: Some("weight".into()),
            message: format!("bad number {:?}", &rec[1]),
        })?;
        if v < 0.0 {
            return Err(Error::Validation(format!("negative weight for {}", &rec[0])));
        }
        tickers.push(rec[0].trim().to_string());
        w.push(v);
    }
    let s: f64 = w.iter().sum();
    if !(s > 0.0) {
        return Err(Error::Validation(format!("weights in {} sum to zero", path.display())));
    }
    Ok(PortfolioWeights {
        tickers,
        w: DVector::from_vec(w) / s,
    })
}

/// `label,draw_index,sharpe`, each value multiplied by `scale`.
pub fn write_sharpe_csv(path: impl AsRef<Path>, samples: &[SharpeSamples], scale: f64) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("label,draw_index,sharpe\n");
    for s in samples {
        for (i, v) in s.values.iter().enumerate() {
            writeln!(out, "{},{i},{}", s.label, v * scale).unwrap();
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments_two(mu: &[(f64, f64)], var: (f64, f64), cov: f64) -> AssetMoments {
        AssetMoments {
            tickers: vec!["A".into(), "B".into()],
            mu: mu.iter().map(|&(a, b)| DVector::from_vec(vec![a, b])).collect(),
            sigma: mu
                .iter()
                .map(|_| DMatrix::from_row_slice(2, 2, &[var.0, cov, cov, var.1]))
                .collect(),
        }
    }

    #[test]
    fn single_asset_sharpe() {
        let s = sharpe_per_draw(
            &DVector::from_element(1, 1.0),
            &DVector::from_element(1, 0.01),
            &DMatrix::from_element(1, 1, 0.0004),
        )
        .unwrap();
        assert!((s - 0.5).abs() < 1e-15);
        assert!(matches!(
            sharpe_per_draw(&DVector::from_element(1, 1.0), &DVector::from_element(1, 0.01), &DMatrix::zeros(1, 1)),
            Err(Error::DegeneratePortfolio(_))
        ));
    }

    #[test]
    fn sharpe_is_scale_invariant() {
        let mu = DVector::from_vec(vec![0.01, 0.02, -0.005]);
        let sig = DMatrix::from_row_slice(3, 3, &[0.04, 0.01, 0.0, 0.01, 0.09, 0.02, 0.0, 0.02, 0.01]);
        let w = DVector::from_vec(vec![0.2, 0.5, 0.3]);
        let a = sharpe_per_draw(&w, &mu, &sig).unwrap();
        let b = sharpe_per_draw(&(&w * 7.0), &mu, &sig).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn diagonal_tangency() {
        let mu = DVector::from_vec(vec![0.01, 0.02]);
        let sig = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0004, 0.0016]));
        let t = tangency_sharpe(&mu, &sig).unwrap();
        assert!((t - (0.25f64 + 0.25).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn one_asset_gets_full_weight() {
        let m = AssetMoments {
            tickers: vec!["IWV".into()],
            mu: vec![DVector::from_element(1, 0.01)],
            sigma: vec![DMatrix::from_element(1, 1, 0.002)],
        };
        let (w, _) = maximize_posterior_mean_sharpe(&m, &DeConfig::default(), &[]).unwrap();
        assert_eq!(w.w[0], 1.0);
    }

    #[test]
    fn de_is_deterministic_and_feasible() {
        let m = moments_two(&[(0.01, 0.012), (0.008, 0.015), (0.011, 0.009)], (0.002, 0.003), 0.0005);
        let cfg = DeConfig::default();
        let (a, fa) = maximize_posterior_mean_sharpe(&m, &cfg, &[]).unwrap();
        let (b, fb) = maximize_posterior_mean_sharpe(&m, &cfg, &[]).unwrap();
        assert_eq!(a, b);
        assert_eq!(fa, fb);
        assert!((a.w.sum() - 1.0).abs() < 1e-12);
        assert!(a.w.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn symmetric_assets_give_flat_objective() {
        let m = moments_two(&[(0.01, 0.01)], (0.002, 0.002), 0.002);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        let mid = DVector::from_vec(vec![0.5, 0.5]);
        assert!((m.mean_sharpe(&e1) - m.mean_sharpe(&e2)).abs() < 1e-15);
        assert!((m.mean_sharpe(&e1) - m.mean_sharpe(&mid)).abs() < 1e-12);
    }

    #[test]
    fn unknown_ticker_is_lookup_error() {
        let m = moments_two(&[(0.01, 0.01)], (0.002, 0.002), 0.0);
        let w = PortfolioWeights {
            tickers: vec!["Z".into()],
            w: DVector::from_element(1, 1.0),
        };
        assert!(matches!(
            sharpe_distribution_for_weights(&w, &m, "z"),
            Err(Error::Lookup(_))
        ));
    }
}
