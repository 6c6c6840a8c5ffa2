//! The whole workflow on the bundled data, writing every artifact the
//! command-line tool would: fit, select, allocate.
//!
//! ```text
//! cargo run --release --example end_to_end -- [OUT_DIR]
//! ```

use std::path::{Path, PathBuf};

use etfsel::config::RunConfig;
use etfsel::pipeline::{cmd_fit, cmd_portfolio, cmd_select};

fn main() -> etfsel::Result<()> {
    let data_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("etfsel_demo"));
    let cfg = RunConfig {
        targets: Some(data_dir.join("targets.csv")),
        candidates: Some(data_dir.join("candidates.csv")),
        out_dir: out.clone(),
        n_sweeps: 4000,
        n_burn: 1000,
        unpenalize: vec!["SPY:Mkt.RF".into()],
        annualize: true,
        ..RunConfig::default()
    };
    let post = cmd_fit(&cfg)?;
    println!("retained {} joint draws", post.draws.len());
    let sel = cmd_select(&cfg)?;
    println!("selected {:?}", sel.graph.selected_candidates);
    let alloc = cmd_portfolio(&cfg)?;
    for s in &alloc.samples {
        println!("{:<20} mean annualized Sharpe {:.3}", s.label, s.mean() * 12f64.sqrt());
    }
    println!("outputs in {}", out.display());
    Ok(())
}
