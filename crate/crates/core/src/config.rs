//! Run configuration: a flat TOML file of key/value pairs. Every key is
//! optional; command-line flags override file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Month;
use crate::dss::{DPolicy, PathConfig};
use crate::error::{Error, Result};
use crate::factor::{FactorConfig, FactorPriors};
use crate::portfolio::DeConfig;
use crate::ssvs::{ChainConfig, GPolicy, ModelPrior};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub targets: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub date_col: String,
    pub start: Option<String>,
    pub end: Option<String>,
    /// Column of the targets file holding the risk-free rate; when set it is
    /// removed from the targets and subtracted from every candidate.
    pub risk_free: Option<String>,
    pub out_dir: PathBuf,
    pub seed: u64,

    pub n_sweeps: usize,
    pub n_burn: usize,
    pub thin: usize,
    /// `multiplicity` or `uniform`.
    pub model_prior: String,
    /// Fixed g for every column and model; empirical Bayes when unset.
    pub g_fixed: Option<f64>,
    pub shuffle_coords: bool,

    pub factors: Option<usize>,
    pub loading_var: f64,
    pub psi_shape: f64,
    pub psi_scale_factor: f64,
    pub phi_factor: f64,

    /// `residual`, `identity` or `fixed` (with `d_fixed`).
    pub d_policy: String,
    pub d_fixed: Vec<f64>,
    pub lambda_grid: usize,
    pub lambda_min_ratio: f64,
    pub band_low: f64,
    pub band_high: f64,
    /// `candidate:target` edges left unpenalized.
    pub unpenalize: Vec<String>,

    pub de_f: f64,
    pub de_cr: f64,
    pub de_pop_factor: usize,
    pub de_min_generations: usize,
    pub de_max_generations: usize,
    pub de_stall_generations: usize,
    pub fixed_weights: Vec<PathBuf>,
    /// Multiply reported Sharpe ratios by sqrt(12).
    pub annualize: bool,

    pub window: usize,
    pub step: usize,

    pub sim_seeds: usize,
    pub sim_t: usize,
    /// Use posterior means from the draws in `out_dir` instead of the bundled
    /// synthetic moments.
    pub sim_from_draws: bool,

    pub bench_a: f64,
    pub bench_b: f64,
    pub bench_c: f64,
    pub bench_grid: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let de = DeConfig::default();
        let fp = FactorPriors::default();
        RunConfig {
            targets: None,
            candidates: None,
            date_col: "date".into(),
            start: None,
            end: None,
            risk_free: None,
            out_dir: PathBuf::from("out"),
            seed: 1,
            n_sweeps: 10_000,
            n_burn: 2_000,
            thin: 5,
            model_prior: "multiplicity".into(),
            g_fixed: None,
            shuffle_coords: false,
            factors: None,
            loading_var: fp.loading_var,
            psi_shape: fp.psi_shape,
            psi_scale_factor: fp.psi_scale_factor,
            phi_factor: fp.phi_factor,
            d_policy: "residual".into(),
            d_fixed: Vec::new(),
            lambda_grid: 100,
            lambda_min_ratio: 1e-4,
            band_low: 0.4,
            band_high: 0.6,
            unpenalize: Vec::new(),
            de_f: de.f,
            de_cr: de.cr,
            de_pop_factor: de.pop_factor,
            de_min_generations: de.min_generations,
            de_max_generations: de.max_generations,
            de_stall_generations: de.stall_generations,
            fixed_weights: Vec::new(),
            annualize: false,
            window: 120,
            step: 60,
            sim_seeds: 10,
            sim_t: 500,
            sim_from_draws: false,
            bench_a: 12.0,
            bench_b: 1.0,
            bench_c: 3.0,
            bench_grid: 101,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes the resolved configuration next to the outputs.
    pub fn write_resolved(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    fn month(s: &Option<String>) -> Result<Option<Month>> {
        s.as_deref()
            .map(|v| v.parse().map_err(|_| Error::Config(format!("bad month {v:?}, expected YYYY-MM"))))
            .transpose()
    }

    pub fn window_bounds(&self) -> Result<(Option<Month>, Option<Month>)> {
        Ok((Self::month(&self.start)?, Self::month(&self.end)?))
    }

    pub fn model_prior(&self) -> Result<ModelPrior> {
        match self.model_prior.as_str() {
            "multiplicity" | "multiplicity-adjusted" => Ok(ModelPrior::MultiplicityAdjusted),
            "uniform" => Ok(ModelPrior::Uniform),
            other => Err(Error::Config(format!("unknown model prior {other:?}"))),
        }
    }

    pub fn chain(&self) -> Result<ChainConfig> {
        let g_policy = match self.g_fixed {
            Some(g) if g >= 0.0 => GPolicy::Fixed(g),
            Some(g) => return Err(Error::Config(format!("g must be nonnegative, got {g}"))),
            None => GPolicy::EmpiricalBayes,
        };
        let c = ChainConfig {
            n_sweeps: self.n_sweeps,
            n_burn: self.n_burn,
            thin: self.thin,
            seed: self.seed,
            prior: self.model_prior()?,
            g_policy,
            shuffle_coords: self.shuffle_coords,
        };
        c.validate()?;
        Ok(c)
    }

    /// Same sweep schedule as the chain, so the two samplers retain the same
    /// number of draws.
    pub fn factor(&self) -> FactorConfig {
        FactorConfig {
            k: self.factors,
            n_sweeps: self.n_sweeps,
            n_burn: self.n_burn,
            thin: self.thin,
            seed: self.seed.wrapping_add(1),
            priors: FactorPriors {
                loading_var: self.loading_var,
                psi_shape: self.psi_shape,
                psi_scale_factor: self.psi_scale_factor,
                phi_factor: self.phi_factor,
            },
        }
    }

    pub fn d_policy(&self) -> Result<DPolicy> {
        match self.d_policy.as_str() {
            "residual" => Ok(DPolicy::ResidualPrecision),
            "identity" => Ok(DPolicy::Identity),
            "fixed" => Ok(DPolicy::Fixed(self.d_fixed.clone())),
            other => Err(Error::Config(format!("unknown D policy {other:?}"))),
        }
    }

    pub fn path(&self) -> PathConfig {
        PathConfig {
            grid_size: self.lambda_grid,
            min_ratio: self.lambda_min_ratio,
            ..PathConfig::default()
        }
    }

    pub fn band(&self) -> (f64, f64) {
        (self.band_low, self.band_high)
    }

    pub fn de(&self) -> DeConfig {
        DeConfig {
            f: self.de_f,
            cr: self.de_cr,
            pop_factor: self.de_pop_factor,
            min_generations: self.de_min_generations,
            max_generations: self.de_max_generations,
            stall_generations: self.de_stall_generations,
            stall_tolerance: DeConfig::default().stall_tolerance,
            seed: self.seed.wrapping_add(2),
        }
    }

    pub fn sharpe_scale(&self) -> f64 {
        if self.annualize {
            12f64.sqrt()
        } else {
            1.0
        }
    }
}
