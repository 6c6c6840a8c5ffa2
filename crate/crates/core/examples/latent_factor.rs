//! Posterior of the candidate mean and covariance under a latent factor
//! model, on the bundled candidate panel.

use etfsel::data::load_returns_csv;
use etfsel::factor::{default_factor_count, fit_factor_model, FactorConfig};
use nalgebra::DMatrix;

fn main() -> etfsel::Result<()> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/candidates.csv");
    let panel = load_returns_csv(&path, "date")?;
    // keep the fully observed columns
    let keep: Vec<usize> = (0..panel.n_cols())
        .filter(|&j| panel.values().column(j).iter().all(|v| v.is_finite()))
        .collect();
    let panel = panel.select_columns(&keep);
    let x = panel.values();
    let k = default_factor_count(x);
    println!("{} months, {} candidates, {k} factors", x.nrows(), x.ncols());

    let draws = fit_factor_model(x, &FactorConfig { n_sweeps: 3000, n_burn: 1000, ..FactorConfig::default() })?;
    let n = draws.len() as f64;
    let sigma = draws.iter().fold(DMatrix::zeros(x.ncols(), x.ncols()), |a, d| a + &d.sigma_x) / n;
    println!("ticker   mean     vol");
    for (j, label) in panel.labels().iter().enumerate() {
        let mu = draws.iter().map(|d| d.mu_x[j]).sum::<f64>() / n;
        println!("{label:<6} {mu:>7.4} {:>7.4}", sigma[(j, j)].sqrt());
    }
    Ok(())
}
