//! Long-only allocation maximizing the posterior mean Sharpe ratio over a
//! handful of simulated posterior draws, compared with the unconstrained
//! tangency Sharpe on each draw.

use etfsel::linalg::randn;
use etfsel::portfolio::{
    maximize_posterior_mean_sharpe, sharpe_distribution_for_weights, tangency_sharpe_distribution, AssetMoments,
    DeConfig,
};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> etfsel::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tickers: Vec<String> = ["SPY", "IWM", "TLT", "GLD"].iter().map(|s| s.to_string()).collect();
    let mu0 = DVector::from_vec(vec![0.006, 0.007, 0.003, 0.002]);
    let vol = DVector::from_vec(vec![0.045, 0.060, 0.040, 0.050]);
    let corr = DMatrix::from_row_slice(4, 4, &[
        1.0, 0.8, -0.2, 0.0, //
        0.8, 1.0, -0.2, 0.0, //
        -0.2, -0.2, 1.0, 0.2, //
        0.0, 0.0, 0.2, 1.0,
    ]);
    let sigma0 = DMatrix::from_fn(4, 4, |i, j| corr[(i, j)] * vol[i] * vol[j]);
    let n = 500;
    let moments = AssetMoments {
        tickers,
        mu: (0..n).map(|_| mu0.map(|m| m + 0.002 * randn(&mut rng))).collect(),
        sigma: (0..n).map(|_| sigma0.clone() * (1.0 + 0.1 * randn(&mut rng)).abs()).collect(),
    };
    let (w, obj) = maximize_posterior_mean_sharpe(&moments, &DeConfig::default(), &[])?;
    for (t, v) in w.tickers.iter().zip(w.w.iter()) {
        println!("{t:<4} {v:.4}");
    }
    let chosen = sharpe_distribution_for_weights(&w, &moments, "long-only")?;
    let tangency = tangency_sharpe_distribution(&moments, "tangency")?;
    println!("posterior mean Sharpe {obj:.4} (monthly), {:.4} annualized", obj * 12f64.sqrt());
    println!("mean tangency Sharpe {:.4}; long-only mean {:.4}", tangency.mean(), chosen.mean());
    Ok(())
}
