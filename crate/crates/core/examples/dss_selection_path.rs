//! Sparsifying a fitted posterior: trace the lasso path of the integrated
//! loss and pick the sparsest graph whose mean loss falls inside the dense
//! model's 40-60% quantile band.

use std::path::Path;

use etfsel::config::RunConfig;
use etfsel::pipeline::{fit_posterior, load_data, select_graph, SelectionSettings};

fn main() -> etfsel::Result<()> {
    let data_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let cfg = RunConfig {
        targets: Some(data_dir.join("targets.csv")),
        candidates: Some(data_dir.join("candidates.csv")),
        n_sweeps: 4000,
        n_burn: 1000,
        unpenalize: vec!["SPY:Mkt.RF".into()],
        ..RunConfig::default()
    };
    let data = load_data(&cfg)?;
    let post = fit_posterior(&data, &cfg.chain()?, &cfg.factor())?;
    let settings = SelectionSettings {
        d_policy: &cfg.d_policy()?,
        unpenalize: &cfg.unpenalize,
        path: &cfg.path(),
        band: cfg.band(),
    };
    let sel = select_graph(&post.draws, data.candidates.labels(), data.targets.labels(), &settings)?;
    for k in (0..sel.path.len()).step_by(10) {
        println!("lambda {:.3e}  edges {:>3}  mean loss {:.5}", sel.path.lambdas[k], sel.path.model_sizes[k], sel.path.loss_mean(k));
    }
    println!("band [{:.5}, {:.5}] -> point {} (lambda {:.3e})", sel.graph.band.0, sel.graph.band.1, sel.graph.path_index, sel.graph.lambda);
    for (c, t) in &sel.graph.edges {
        println!("  {c} -> {t}");
    }
    Ok(())
}
