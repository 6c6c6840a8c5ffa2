//! Regenerates the bundled synthetic panels in `data/`.
//!
//! Twenty ETF-like candidates are driven by five latent factors; eight
//! anomaly-like targets load on a handful of candidates each. A few
//! candidates only start trading part-way through the sample. Returns are
//! already in excess of the risk-free rate.
//!
//! ```text
//! cargo run --example generate_synthetic -- [OUT_DIR]
//! ```

use std::path::PathBuf;

use etfsel::data::{write_returns_csv, Month, ReturnsPanel};
use etfsel::linalg::randn;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const T: usize = 240;

fn main() -> etfsel::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data"));
    std::fs::create_dir_all(&out).map_err(|e| etfsel::Error::Config(format!("{}: {e}", out.display())))?;
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);

    // market, size, value, momentum, bonds
    let factor_vol = [0.045, 0.025, 0.025, 0.035, 0.015];
    let factor_mean = [0.006, 0.001, 0.002, 0.004, 0.002];
    let f = DMatrix::from_fn(T, 5, |_, k| factor_mean[k] + factor_vol[k] * randn(&mut rng));

    #[rustfmt::skip]
    let candidates: [(&str, [f64; 5], f64, usize); 20] = [
        ("SPY", [1.00, -0.10, 0.00, 0.00, 0.0], 0.004, 0),
        ("IVV", [1.00, -0.10, 0.00, 0.00, 0.0], 0.005, 30),
        ("VTI", [1.00, 0.05, 0.00, 0.00, 0.0], 0.006, 12),
        ("IWV", [1.00, 0.05, 0.02, 0.00, 0.0], 0.006, 0),
        ("IWM", [1.10, 0.90, 0.10, 0.00, 0.0], 0.012, 0),
        ("IJR", [1.05, 0.80, 0.25, 0.00, 0.0], 0.013, 0),
        ("IWO", [1.20, 0.95, -0.40, 0.10, 0.0], 0.015, 0),
        ("IWN", [1.00, 0.85, 0.55, -0.05, 0.0], 0.014, 0),
        ("IWD", [0.95, -0.05, 0.50, -0.10, 0.0], 0.010, 0),
        ("IWF", [1.05, -0.10, -0.45, 0.10, 0.0], 0.010, 0),
        ("IVE", [0.95, -0.10, 0.45, -0.10, 0.0], 0.011, 0),
        ("IVW", [1.05, -0.15, -0.40, 0.10, 0.0], 0.011, 0),
        ("MDY", [1.05, 0.45, 0.10, 0.00, 0.0], 0.012, 0),
        ("QQQ", [1.20, -0.05, -0.70, 0.15, 0.0], 0.020, 0),
        ("DIA", [0.90, -0.20, 0.15, 0.00, 0.0], 0.012, 0),
        ("MTUM", [1.00, 0.00, -0.10, 0.60, 0.0], 0.015, 160),
        ("VLUE", [1.00, 0.05, 0.60, -0.20, 0.0], 0.015, 160),
        ("AGG", [0.05, 0.00, 0.00, 0.00, 1.0], 0.004, 0),
        ("TLT", [-0.10, 0.00, 0.00, 0.00, 2.2], 0.012, 0),
        ("GLD", [0.10, 0.00, 0.00, 0.05, 0.4], 0.040, 50),
    ];
    let p = candidates.len();
    let mut x = DMatrix::zeros(T, p);
    for (j, (_, load, idio, _)) in candidates.iter().enumerate() {
        for t in 0..T {
            let common: f64 = (0..5).map(|k| load[k] * f[(t, k)]).sum();
            x[(t, j)] = common + idio * randn(&mut rng);
        }
    }

    let col = |name: &str| candidates.iter().position(|c| c.0 == name).unwrap();
    #[rustfmt::skip]
    let targets: [(&str, &[(&str, f64)], f64); 8] = [
        ("Mkt.RF", &[("SPY", 1.0)], 0.006),
        ("SMB", &[("IWM", 0.8), ("SPY", -0.8)], 0.012),
        ("HML", &[("IWD", 0.9), ("IWF", -0.9)], 0.012),
        ("RMW", &[("DIA", 0.3), ("QQQ", -0.2)], 0.018),
        ("CMA", &[("IVE", 0.4), ("IVW", -0.4)], 0.014),
        ("Mom", &[("IWF", 0.5), ("IWD", -0.5), ("SPY", 0.1)], 0.035),
        ("ST_Rev", &[("IWM", 0.2)], 0.030),
        ("LT_Rev", &[("IWN", 0.4), ("IWO", -0.2)], 0.020),
    ];
    let q = targets.len();
    let mut r = DMatrix::zeros(T, q);
    for (i, (_, loads, noise)) in targets.iter().enumerate() {
        for t in 0..T {
            let signal: f64 = loads.iter().map(|(c, b)| b * x[(t, col(c))]).sum();
            r[(t, i)] = signal + noise * randn(&mut rng);
        }
    }
    // late listings
    for (j, (_, _, _, start)) in candidates.iter().enumerate() {
        for t in 0..*start {
            x[(t, j)] = f64::NAN;
        }
    }

    let first = Month::new(2000, 1).unwrap();
    let dates: Vec<Month> = (0..T as i64).map(|i| first.add_months(i)).collect();
    let round = |m: DMatrix<f64>| m.map(|v| if v.is_nan() { v } else { (v * 1e6).round() / 1e6 });
    let cand = ReturnsPanel::new(
        dates.clone(),
        candidates.iter().map(|c| c.0.to_string()).collect(),
        round(x),
    )?;
    let labels = targets.iter().map(|t| t.0.to_string()).collect();
    let targ = ReturnsPanel::new(dates, labels, round(r))?;
    write_returns_csv(&cand, out.join("candidates.csv"), "date")?;
    write_returns_csv(&targ, out.join("targets.csv"), "date")?;
    println!("wrote {} and {}", out.join("candidates.csv").display(), out.join("targets.csv").display());
    Ok(())
}
