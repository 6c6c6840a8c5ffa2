use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use etfsel::config::RunConfig;
use etfsel::pipeline;

/// Sparse ETF selection and Sharpe-ratio allocation.
#[derive(Parser)]
#[command(name = "etfsel", version)]
struct Cli {
    /// Flat TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct DataArgs {
    #[arg(long)]
    targets: Option<PathBuf>,
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long)]
    date_col: Option<String>,
    /// First month (YYYY-MM).
    #[arg(long)]
    start: Option<String>,
    /// Last month (YYYY-MM).
    #[arg(long)]
    end: Option<String>,
    /// Targets-file column holding the risk-free rate to subtract from the candidates.
    #[arg(long)]
    risk_free: Option<String>,
}

#[derive(Args, Default)]
struct SamplerArgs {
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    burn: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// `multiplicity` or `uniform`.
    #[arg(long)]
    prior: Option<String>,
    /// Fixed g instead of empirical Bayes.
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    shuffle_coords: bool,
    /// Latent factor count.
    #[arg(long)]
    factors: Option<usize>,
}

#[derive(Args, Default)]
struct SelectArgs {
    /// Quantile band of the dense model's loss, e.g. `--band 0.4 0.6`.
    #[arg(long, num_args = 2, value_names = ["LOW", "HIGH"])]
    band: Option<Vec<f64>>,
    /// `candidate:target` edge to leave unpenalized (repeatable).
    #[arg(long)]
    unpenalize: Vec<String>,
    /// Number of lambda grid points.
    #[arg(long)]
    grid: Option<usize>,
    /// `residual`, `identity` or `fixed`.
    #[arg(long)]
    d_policy: Option<String>,
}

#[derive(Args, Default)]
struct PortfolioArgs {
    /// `ticker,weight` file of a fixed benchmark (repeatable).
    #[arg(long)]
    fixed_weights: Vec<PathBuf>,
    /// Report Sharpe ratios multiplied by sqrt(12).
    #[arg(long)]
    annualize: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the model search and the factor model; write draws and inclusion probabilities.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Trace the lasso path over stored draws and pick a sparse graph.
    Select {
        #[command(flatten)]
        select: SelectArgs,
    },
    /// Allocate over the selected and the full candidate sets.
    Portfolio {
        #[command(flatten)]
        portfolio: PortfolioArgs,
    },
    /// Fit, select and allocate over overlapping windows.
    Rolling {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[command(flatten)]
        select: SelectArgs,
        #[command(flatten)]
        portfolio: PortfolioArgs,
        /// Window length in months.
        #[arg(long)]
        window: Option<usize>,
        /// Step between window starts in months.
        #[arg(long)]
        step: Option<usize>,
    },
    /// Recovery study on data simulated from known moments.
    Simulate {
        #[command(flatten)]
        sampler: SamplerArgs,
        #[arg(long)]
        seeds: Option<usize>,
        /// Simulated sample length.
        #[arg(long)]
        t: Option<usize>,
        /// Take the generating moments from the draws in --out-dir.
        #[arg(long)]
        from_draws: bool,
    },
    /// Bivariate conditional-loss vs graphical-lasso solution paths.
    BenchGlasso {
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        grid: Option<usize>,
    },
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl DataArgs {
    fn apply(self, c: &mut RunConfig) {
        if self.targets.is_some() {
            c.targets = self.targets;
        }
        if self.candidates.is_some() {
            c.candidates = self.candidates;
        }
        set(&mut c.date_col, self.date_col);
        if self.start.is_some() {
            c.start = self.start;
        }
        if self.end.is_some() {
            c.end = self.end;
        }
        if self.risk_free.is_some() {
            c.risk_free = self.risk_free;
        }
    }
}

impl SamplerArgs {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.n_sweeps, self.sweeps);
        set(&mut c.n_burn, self.burn);
        set(&mut c.thin, self.thin);
        set(&mut c.model_prior, self.prior);
        if self.g.is_some() {
            c.g_fixed = self.g;
        }
        c.shuffle_coords |= self.shuffle_coords;
        if self.factors.is_some() {
            c.factors = self.factors;
        }
    }
}

impl SelectArgs {
    fn apply(self, c: &mut RunConfig) {
        if let Some(b) = self.band {
            c.band_low = b[0];
            c.band_high = b[1];
        }
        c.unpenalize.extend(self.unpenalize);
        set(&mut c.lambda_grid, self.grid);
        set(&mut c.d_policy, self.d_policy);
    }
}

impl PortfolioArgs {
    fn apply(self, c: &mut RunConfig) {
        c.fixed_weights.extend(self.fixed_weights);
        c.annualize |= self.annualize;
    }
}

fn run(cli: Cli) -> etfsel::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.out_dir, cli.out_dir);
    set(&mut cfg.seed, cli.seed);
    match cli.command {
        Command::Fit { data, sampler } => {
            data.apply(&mut cfg);
            sampler.apply(&mut cfg);
            pipeline::cmd_fit(&cfg)?;
        }
        Command::Select { select } => {
            select.apply(&mut cfg);
            pipeline::cmd_select(&cfg)?;
        }
        Command::Portfolio { portfolio } => {
            portfolio.apply(&mut cfg);
            pipeline::cmd_portfolio(&cfg)?;
        }
        Command::Rolling {
            data,
            sampler,
            select,
            portfolio,
            window,
            step,
        } => {
            data.apply(&mut cfg);
            sampler.apply(&mut cfg);
            select.apply(&mut cfg);
            portfolio.apply(&mut cfg);
            set(&mut cfg.window, window);
            set(&mut cfg.step, step);
            pipeline::cmd_rolling(&cfg)?;
        }
        Command::Simulate {
            sampler,
            seeds,
            t,
            from_draws,
        } => {
            sampler.apply(&mut cfg);
            set(&mut cfg.sim_seeds, seeds);
            set(&mut cfg.sim_t, t);
            cfg.sim_from_draws |= from_draws;
            let reports = pipeline::cmd_simulate(&cfg)?;
            let inside = reports.iter().filter(|r| r.inside_90()).count();
            println!(
                "coverage: {inside}/{} seeds have the true tangency Sharpe inside the central 90% interval",
                reports.len()
            );
        }
        Command::BenchGlasso { a, b, c, grid } => {
            set(&mut cfg.bench_a, a);
            set(&mut cfg.bench_b, b);
            set(&mut cfg.bench_c, c);
            set(&mut cfg.bench_grid, grid);
            pipeline::cmd_bench_glasso(&cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
