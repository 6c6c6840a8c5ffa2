//! Recovery study: simulate from known moments, refit, and check whether
//! the true tangency Sharpe ratio lands inside the posterior interval.

use etfsel::appendix::{run_simulation_study, SimulationConfig, SimulationTruth};

fn main() -> etfsel::Result<()> {
    let truth = SimulationTruth::synthetic_default();
    let cfg = SimulationConfig::default();
    let mut inside = 0;
    let seeds = 5;
    for seed in 0..seeds {
        let r = run_simulation_study(&truth, seed, &cfg)?;
        inside += r.inside_90() as usize;
        println!("{}", r.summary());
    }
    println!("{inside}/{seeds} intervals cover the truth");
    Ok(())
}
