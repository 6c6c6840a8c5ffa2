//! End-to-end steps: fit both samplers, summarize into a sparse graph,
//! allocate, and the file-based commands built on them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::DVector;
use rayon::prelude::*;

use crate::appendix::{
    normalized_path_gap, path_comparison_table, run_simulation_study, write_path_comparison_csv,
    write_recovery_csv, BivariateParams, RecoveryReport, SimulationConfig, SimulationTruth,
};
use crate::config::RunConfig;
use crate::data::{align_panels, load_returns_csv, AlignedData, ReturnsPanel};
use crate::draws::{
    pair_draws, read_chain_draws, read_marginal_draws, write_chain_draws, write_inclusion_csv,
    write_marginal_draws, ChainFile, MarginalFile, PosteriorDraw,
};
use crate::dss::{
    accumulate_moments, read_graph_tsv, select_model, solution_path, write_graph_tsv, write_path_csv, DPolicy,
    DrawLosses, LossPath, PathConfig, PenaltyWeights, PosteriorMoments, SelectionGraph,
};
use crate::error::{Error, Result};
use crate::factor::{fit_factor_model, FactorConfig, MarginalDraw};
use crate::portfolio::{
    maximize_posterior_mean_sharpe, read_weights_csv, sharpe_distribution_for_weights, tangency_sharpe_distribution,
    write_sharpe_csv, write_weights_csv, AssetMoments, DeConfig, PortfolioWeights, SharpeSamples, Universe,
};
use crate::ssvs::{run_chain, ChainConfig, ChainOutput, SsvsData};

pub const SSVS_DRAWS: &str = "ssvs_draws.tsv";
pub const FACTOR_DRAWS: &str = "factor_draws.tsv";
pub const INCLUSION: &str = "inclusion.csv";
pub const PATH: &str = "path.csv";
pub const GRAPH: &str = "graph.tsv";
pub const WEIGHTS_SELECTED: &str = "weights_selected.csv";
pub const WEIGHTS_DENSE: &str = "weights_dense.csv";
pub const SHARPE_SAMPLES: &str = "sharpe_samples.csv";
pub const PORTFOLIO_SUMMARY: &str = "portfolio_summary.csv";

/// Output of both samplers, paired by position.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub chain: ChainOutput,
    pub marginal: Vec<MarginalDraw>,
    pub draws: Vec<PosteriorDraw>,
}

/// Runs the model search and the factor model (concurrently) on aligned data.
pub fn fit_posterior(data: &AlignedData, chain: &ChainConfig, factor: &FactorConfig) -> Result<Posterior> {
    if chain.retained() != (factor.n_sweeps.saturating_sub(factor.n_burn)).div_ceil(factor.thin.max(1)) {
        return Err(Error::Config(
            "the two samplers must retain the same number of draws".into(),
        ));
    }
    let ssvs = SsvsData::new(data);
    let (chain, marginal) = rayon::join(
        || run_chain(&ssvs, chain),
        || fit_factor_model(data.candidates.values(), factor),
    );
    let chain = chain?;
    let marginal: Vec<MarginalDraw> = marginal?.iter().map(|d| d.marginal()).collect();
    let draws = pair_draws(&chain.draws, &marginal)?;
    Ok(Posterior {
        chain,
        marginal,
        draws,
    })
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub moments: PosteriorMoments,
    pub path: LossPath,
    pub graph: SelectionGraph,
}

pub struct SelectionSettings<'a> {
    pub d_policy: &'a DPolicy,
    pub unpenalize: &'a [String],
    pub path: &'a PathConfig,
    pub band: (f64, f64),
}

/// Integrates the loss over the draws, traces the lasso path and applies the
/// quantile-band rule.
pub fn select_graph(
    draws: &[PosteriorDraw],
    candidates: &[String],
    targets: &[String],
    settings: &SelectionSettings,
) -> Result<Selection> {
    let moments = accumulate_moments(draws, settings.d_policy)?;
    let weights = PenaltyWeights::with_unpenalized(candidates, targets, settings.unpenalize)?;
    let losses = DrawLosses::new(draws, &moments.d);
    let path = solution_path(&moments, &losses, &weights, candidates, targets, settings.path)?;
    let graph = select_model(&path, settings.band)?;
    Ok(Selection { moments, path, graph })
}

#[derive(Debug, Clone)]
pub struct Allocation {
    pub selected: PortfolioWeights,
    pub selected_objective: f64,
    pub dense: PortfolioWeights,
    pub dense_objective: f64,
    /// selected, dense, tangency over targets, tangency over candidates.
    pub samples: Vec<SharpeSamples>,
}

/// DE allocations over the selected subset and over all candidates, plus the
/// per-draw tangency Sharpe ratios. The dense search is seeded with the
/// subset solution so the larger feasible set is explored from there.
pub fn allocate(
    draws: &[PosteriorDraw],
    candidates: &[String],
    targets: &[String],
    selected: &[String],
    de: &DeConfig,
) -> Result<Allocation> {
    if selected.is_empty() {
        return Err(Error::Config("the selected graph has no candidates".into()));
    }
    let cand = AssetMoments::from_draws(draws, Universe::Candidates, candidates)?;
    let sub = cand.subset(selected)?;
    let (sel_w, sel_obj) = maximize_posterior_mean_sharpe(&sub, de, &[])?;
    let mut embedded = DVector::zeros(candidates.len());
    for (t, w) in sel_w.tickers.iter().zip(sel_w.w.iter()) {
        let j = candidates.iter().position(|c| c == t).expect("subset of candidates");
        embedded[j] = *w;
    }
    let (dense_w, dense_obj) = maximize_posterior_mean_sharpe(&cand, de, &[embedded])?;
    let targ = AssetMoments::from_draws(draws, Universe::Targets, targets)?;
    let samples = vec![
        sharpe_distribution_for_weights(&sel_w, &cand, "selected")?,
        sharpe_distribution_for_weights(&dense_w, &cand, "dense")?,
        tangency_sharpe_distribution(&targ, "tangency_targets")?,
        tangency_sharpe_distribution(&cand, "tangency_candidates")?,
    ];
    Ok(Allocation {
        selected: sel_w,
        selected_objective: sel_obj,
        dense: dense_w,
        dense_objective: dense_obj,
        samples,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    p.as_ref()
        .ok_or_else(|| Error::Config(format!("no {what} file given")))
}

/// Loads and aligns the configured panels, applying the date window and the
/// optional risk-free adjustment.
pub fn load_data(cfg: &RunConfig) -> Result<AlignedData> {
    let (start, end) = cfg.window_bounds()?;
    let mut targets = load_returns_csv(required(&cfg.targets, "targets")?, &cfg.date_col)?.restrict(start, end);
    let mut candidates =
        load_returns_csv(required(&cfg.candidates, "candidates")?, &cfg.date_col)?.restrict(start, end);
    if let Some(rf) = &cfg.risk_free {
        let j = targets
            .column_index(rf)
            .ok_or_else(|| Error::Lookup(rf.clone()))?;
        let rf_col = align_rf(&candidates, &targets.select_columns(&[j]));
        let keep: Vec<usize> = (0..targets.n_cols()).filter(|&k| k != j).collect();
        targets = targets.select_columns(&keep);
        let mut values = candidates.values().clone();
        for mut col in values.column_iter_mut() {
            col -= &rf_col;
        }
        candidates = ReturnsPanel::new(candidates.dates().to_vec(), candidates.labels().to_vec(), values)?;
    }
    align_panels(&targets, &candidates)
}

/// The risk-free column reindexed to the candidate months. Months missing
/// from the targets file get NaN; alignment discards them.
fn align_rf(candidates: &ReturnsPanel, rf: &ReturnsPanel) -> DVector<f64> {
    DVector::from_iterator(
        candidates.n_rows(),
        candidates.dates().iter().map(|d| match rf.dates().binary_search(d) {
            Ok(i) => rf.values()[(i, 0)],
            Err(_) => f64::NAN,
        }),
    )
}

/// Fits both samplers and writes the draw files and inclusion CSV.
pub fn cmd_fit(cfg: &RunConfig) -> Result<Posterior> {
    let data = load_data(cfg)?;
    info!("fitting T = {}, p = {}, q = {}", data.t(), data.p(), data.q());
    let post = fit_posterior(&data, &cfg.chain()?, &cfg.factor())?;
    let out = &cfg.out_dir;
    ensure_dir(out)?;
    write_chain_draws(out.join(SSVS_DRAWS), &ChainFile::from(&post.chain))?;
    write_marginal_draws(
        out.join(FACTOR_DRAWS),
        &MarginalFile {
            candidates: post.chain.candidates.clone(),
            sweeps: post.chain.sweeps.clone(),
            draws: post.marginal.clone(),
        },
    )?;
    write_inclusion_csv(out.join(INCLUSION), &post.chain.candidates, &post.chain.inclusion)?;
    cfg.write_resolved(out.join("fit.config.toml"))?;
    Ok(post)
}

/// Paired draws and labels as stored by [`cmd_fit`].
pub struct StoredDraws {
    pub candidates: Vec<String>,
    pub targets: Vec<String>,
    pub draws: Vec<PosteriorDraw>,
}

pub fn load_draws(dir: &Path) -> Result<StoredDraws> {
    let chain = read_chain_draws(dir.join(SSVS_DRAWS))?;
    let marg = read_marginal_draws(dir.join(FACTOR_DRAWS))?;
    if chain.candidates != marg.candidates {
        return Err(Error::Pairing("draw files list different candidates".into()));
    }
    if chain.sweeps != marg.sweeps {
        return Err(Error::Pairing("draw files retain different sweeps".into()));
    }
    let draws = pair_draws(&chain.draws, &marg.draws)?;
    Ok(StoredDraws {
        candidates: chain.candidates,
        targets: chain.targets,
        draws,
    })
}

/// Reads the draws in `out_dir`, writes the path CSV and the selected graph.
pub fn cmd_select(cfg: &RunConfig) -> Result<Selection> {
    let out = &cfg.out_dir;
    let stored = load_draws(out)?;
    let d_policy = cfg.d_policy()?;
    let path_cfg = cfg.path();
    let sel = select_graph(
        &stored.draws,
        &stored.candidates,
        &stored.targets,
        &SelectionSettings {
            d_policy: &d_policy,
            unpenalize: &cfg.unpenalize,
            path: &path_cfg,
            band: cfg.band(),
        },
    )?;
    write_path_csv(out.join(PATH), &sel.path)?;
    write_graph_tsv(out.join(GRAPH), &sel.graph)?;
    cfg.write_resolved(out.join("select.config.toml"))?;
    info!(
        "selected {} edges over {} candidates",
        sel.graph.edges.len(),
        sel.graph.selected_candidates.len()
    );
    Ok(sel)
}

/// Allocates over the selected graph's candidates and over all candidates,
/// and writes weights and Sharpe-ratio samples.
pub fn cmd_portfolio(cfg: &RunConfig) -> Result<Allocation> {
    let out = &cfg.out_dir;
    let stored = load_draws(out)?;
    let edges = read_graph_tsv(out.join(GRAPH))?;
    let selected: Vec<String> = stored
        .candidates
        .iter()
        .filter(|c| edges.iter().any(|(e, _)| e == *c))
        .cloned()
        .collect();
    if let Some((c, _)) = edges.iter().find(|(c, _)| !stored.candidates.contains(c)) {
        return Err(Error::Lookup(c.clone()));
    }
    let alloc = allocate(&stored.draws, &stored.candidates, &stored.targets, &selected, &cfg.de())?;
    let scale = cfg.sharpe_scale();
    write_weights_csv(out.join(WEIGHTS_SELECTED), &alloc.selected)?;
    write_weights_csv(out.join(WEIGHTS_DENSE), &alloc.dense)?;
    write_sharpe_csv(out.join(SHARPE_SAMPLES), &alloc.samples, scale)?;

    let mut summary = String::from("label,mean_sharpe\n");
    for s in &alloc.samples {
        writeln!(summary, "{},{}", s.label, s.mean() * scale).unwrap();
    }
    let cand = AssetMoments::from_draws(&stored.draws, Universe::Candidates, &stored.candidates)?;
    for file in &cfg.fixed_weights {
        let w = read_weights_csv(file)?;
        let stem = file
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Config(format!("cannot name output for {}", file.display())))?;
        let samples = sharpe_distribution_for_weights(&w, &cand, stem)?;
        write_sharpe_csv(out.join(format!("sharpe_{stem}.csv")), std::slice::from_ref(&samples), scale)?;
        writeln!(summary, "{},{}", stem, samples.mean() * scale).unwrap();
    }
    let path = out.join(PORTFOLIO_SUMMARY);
    std::fs::write(&path, summary).map_err(|e| Error::io(&path, e))?;
    cfg.write_resolved(out.join("portfolio.config.toml"))?;
    Ok(alloc)
}

/// Row ranges `[start, start + window)` stepping by `step`.
pub fn rolling_windows(n_rows: usize, window: usize, step: usize) -> Result<Vec<(usize, usize)>> {
    if window == 0 || step == 0 {
        return Err(Error::Config("window and step must be positive".into()));
    }
    if window > n_rows {
        return Err(Error::Config(format!(
            "window of {window} months exceeds the {n_rows} months of data"
        )));
    }
    Ok((0..=(n_rows - window) / step)
        .map(|k| (k * step, k * step + window))
        .collect())
}

/// Runs fit, select and portfolio on each window, writing into
/// `out_dir/window_<start>_<end>`. Returns the window directories.
pub fn cmd_rolling(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let (start, end) = cfg.window_bounds()?;
    let targets = load_returns_csv(required(&cfg.targets, "targets")?, &cfg.date_col)?.restrict(start, end);
    let candidates = load_returns_csv(required(&cfg.candidates, "candidates")?, &cfg.date_col)?.restrict(start, end);
    let months: Vec<_> = targets
        .dates()
        .iter()
        .filter(|d| candidates.dates().binary_search(d).is_ok())
        .copied()
        .collect();
    let windows = rolling_windows(months.len(), cfg.window, cfg.step)?;
    ensure_dir(&cfg.out_dir)?;
    cfg.write_resolved(cfg.out_dir.join("rolling.config.toml"))?;
    let mut dirs = Vec::new();
    for (a, b) in windows {
        let (s, e) = (months[a], months[b - 1]);
        let dir = cfg.out_dir.join(format!("window_{s}_{e}"));
        let wcfg = RunConfig {
            start: Some(s.to_string()),
            end: Some(e.to_string()),
            out_dir: dir.clone(),
            ..cfg.clone()
        };
        info!("window {s} .. {e}");
        cmd_fit(&wcfg)?;
        cmd_select(&wcfg)?;
        cmd_portfolio(&wcfg)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Simulation study over `sim_seeds` consecutive seeds starting at `seed`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<RecoveryReport>> {
    let truth = if cfg.sim_from_draws {
        SimulationTruth::from_posterior(&load_draws(&cfg.out_dir)?.draws)?
    } else {
        SimulationTruth::synthetic_default()
    };
    if cfg.sim_seeds == 0 {
        return Err(Error::Config("sim_seeds must be at least 1".into()));
    }
    let sim = SimulationConfig {
        t: cfg.sim_t,
        chain: cfg.chain()?,
        factor: cfg.factor(),
    };
    let reports = (0..cfg.sim_seeds as u64)
        .into_par_iter()
        .map(|k| run_simulation_study(&truth, cfg.seed.wrapping_add(k), &sim))
        .collect::<Result<Vec<_>>>()?;

    let dir = cfg.out_dir.join("simulation");
    ensure_dir(&dir)?;
    let scale = cfg.sharpe_scale();
    let mut summary = String::new();
    let mut samples = Vec::new();
    for r in &reports {
        write_recovery_csv(dir.join(format!("recovery_seed{}.csv", r.seed)), r)?;
        writeln!(summary, "{}", r.summary()).unwrap();
        samples.push(SharpeSamples {
            label: format!("seed{}", r.seed),
            values: r.sharpe_samples.clone(),
        });
    }
    write_sharpe_csv(dir.join("tangency_sharpe.csv"), &samples, scale)?;
    let inside = reports.iter().filter(|r| r.inside_90()).count();
    writeln!(
        summary,
        "coverage: {inside}/{} seeds have the true tangency Sharpe inside the central 90% interval",
        reports.len()
    )
    .unwrap();
    let path = dir.join("summary.txt");
    std::fs::write(&path, summary).map_err(|e| Error::io(&path, e))?;
    cfg.write_resolved(cfg.out_dir.join("simulate.config.toml"))?;
    Ok(reports)
}

/// Path comparison tables for the configured (a, b, c) and for a = 200.
pub fn cmd_bench_glasso(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    ensure_dir(&cfg.out_dir)?;
    let mut a_values = vec![cfg.bench_a];
    if cfg.bench_a != 200.0 {
        a_values.push(200.0);
    }
    let mut files = Vec::new();
    let mut summary = String::from("a,b,c,max_normalized_gap\n");
    for a in a_values {
        let params = BivariateParams::new(a, cfg.bench_b, cfg.bench_c)?;
        let rows = path_comparison_table(&params, cfg.bench_grid)?;
        let file = cfg.out_dir.join(format!("glasso_a{a}.csv"));
        write_path_comparison_csv(&file, &rows)?;
        writeln!(summary, "{a},{},{},{}", cfg.bench_b, cfg.bench_c, normalized_path_gap(&rows)).unwrap();
        files.push(file);
    }
    let path = cfg.out_dir.join("glasso_summary.csv");
    std::fs::write(&path, summary).map_err(|e| Error::io(&path, e))?;
    cfg.write_resolved(cfg.out_dir.join("bench-glasso.config.toml"))?;
    Ok(files)
}
