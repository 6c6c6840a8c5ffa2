//! Matrix-variate stochastic search variable selection.
//!
//! One binary inclusion vector γ governs all q target regressions at once.
//! With independent g-priors per target column, the Bayes factor of a model
//! against the intercept-only model factorizes into a product of univariate
//! g-prior Bayes factors:
//!
//! ```text
//! log B_γ0 = Σ_i [ (T-k-1)/2 · log(1+g_i) - (T+1)/2 · log(1 + g_i · SSE_γ^i / SSE_0^i) ]
//! ```
//!
//! Intercepts are handled by centering targets and candidates, which matches
//! the centering matrix inside the g-prior covariance. All Bayes-factor
//! arithmetic stays in log space.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::AlignedData;
use crate::error::{Error, Result};
use crate::linalg::{center_columns, inverse_gamma, standard_normal_vector};

/// Inclusion vector over the p candidate assets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelIndicator {
    gamma: Vec<bool>,
}

impl ModelIndicator {
    pub fn empty(p: usize) -> Self {
        ModelIndicator {
            gamma: vec![false; p],
        }
    }

    pub fn from_bools(gamma: Vec<bool>) -> Self {
        ModelIndicator { gamma }
    }

    pub fn from_included(p: usize, included: &[usize]) -> Self {
        let mut m = Self::empty(p);
        for &j in included {
            m.gamma[j] = true;
        }
        m
    }

    /// Model number `code` in binary, with bit j giving candidate j.
    pub fn from_code(p: usize, code: u64) -> Self {
        ModelIndicator {
            gamma: (0..p).map(|j| code >> j & 1 == 1).collect(),
        }
    }

    pub fn p(&self) -> usize {
        self.gamma.len()
    }

    pub fn k(&self) -> usize {
        self.gamma.iter().filter(|&&b| b).count()
    }

    pub fn get(&self, j: usize) -> bool {
        self.gamma[j]
    }

    pub fn set(&mut self, j: usize, value: bool) {
        self.gamma[j] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.gamma
    }

    pub fn included(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.gamma[j]).collect()
    }

    pub fn to_bitstring(&self) -> String {
        self.gamma.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bitstring(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Validation(format!("bad indicator bitstring {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(ModelIndicator::from_bools)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelPrior {
    Uniform,
    /// Equal mass on each model size, split evenly within a size.
    #[default]
    MultiplicityAdjusted,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GPolicy {
    /// Local empirical Bayes, ĝ = max(F - 1, 0) per target column and model.
    #[default]
    EmpiricalBayes,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesFactorParts {
    pub per_column_log_bf: Vec<f64>,
    pub g_values: Vec<f64>,
    pub sse_gamma: Vec<f64>,
    pub sse_null: Vec<f64>,
}

impl BayesFactorParts {
    pub fn total(&self) -> f64 {
        self.per_column_log_bf.iter().sum()
    }
}

/// Centered cross-products of the aligned data; everything the Bayes factors
/// and conditional posteriors need.
#[derive(Debug, Clone)]
pub struct SsvsData {
    t: usize,
    xtx: DMatrix<f64>,
    xtr: DMatrix<f64>,
    sse_null: DVector<f64>,
    candidates: Vec<String>,
    targets: Vec<String>,
}

impl SsvsData {
    pub fn new(data: &AlignedData) -> Self {
        let xc = center_columns(data.candidates.values());
        let rc = center_columns(data.targets.values());
        let xtx = xc.tr_mul(&xc);
        let xtr = xc.tr_mul(&rc);
        let sse_null = DVector::from_iterator(
            rc.ncols(),
            rc.column_iter().map(|c| c.norm_squared()),
        );
        SsvsData {
            t: data.t(),
            xtx,
            xtr,
            sse_null,
            candidates: data.candidates.labels().to_vec(),
            targets: data.targets.labels().to_vec(),
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn p(&self) -> usize {
        self.xtx.nrows()
    }

    pub fn q(&self) -> usize {
        self.xtr.ncols()
    }

    pub fn candidates(&self) -> &[String] {
        &self.candidates
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    /// Factorizes the centered Gram matrix of the selected columns.
    fn gram_factor(&self, gamma: &ModelIndicator) -> Result<(Vec<usize>, Cholesky<f64, Dyn>)> {
        let idx = gamma.included();
        let singular = || Error::Singular {
            columns: idx.iter().map(|&j| self.candidates[j].clone()).collect(),
        };
        let g = self.xtx.select_rows(idx.iter()).select_columns(idx.iter());
        let chol = Cholesky::new(g.clone()).ok_or_else(singular)?;
        // near-collinear columns give a tiny pivot relative to the diagonal
        let l = chol.l_dirty();
        for (i, &j) in idx.iter().enumerate() {
            let pivot = l[(i, i)] * l[(i, i)];
            if !(pivot > 1e-12 * self.xtx[(j, j)]) {
                return Err(singular());
            }
        }
        Ok((idx, chol))
    }

    /// Per target column: residual sum of squares and OLS coefficients on
    /// the selected centered columns.
    fn fit(&self, gamma: &ModelIndicator) -> Result<Option<Fit>> {
        if gamma.k() == 0 {
            return Ok(None);
        }
        let (idx, chol) = self.gram_factor(gamma)?;
        let b = self.xtr.select_rows(idx.iter());
        let beta_hat = chol.solve(&b);
        let sse = DVector::from_fn(self.q(), |i, _| {
            let ssr = b.column(i).dot(&beta_hat.column(i));
            (self.sse_null[i] - ssr).max(self.sse_null[i] * 1e-14)
        });
        Ok(Some(Fit {
            idx,
            chol,
            beta_hat,
            sse,
        }))
    }
}

struct Fit {
    idx: Vec<usize>,
    chol: Cholesky<f64, Dyn>,
    beta_hat: DMatrix<f64>,
    sse: DVector<f64>,
}

/// ĝ = max(F - 1, 0) with F = (R²/k) / ((1 - R²)/(T - 1 - k)).
pub fn empirical_bayes_g(r_squared: f64, t: usize, k: usize) -> Result<f64> {
    if t <= k + 1 {
        return Err(Error::DegreesOfFreedom { t, k });
    }
    if k == 0 {
        return Ok(0.0);
    }
    let f = (r_squared / k as f64) / ((1.0 - r_squared) / (t - 1 - k) as f64);
    Ok((f - 1.0).max(0.0))
}

fn g_for(policy: GPolicy, r_squared: f64, t: usize, k: usize) -> Result<f64> {
    match policy {
        GPolicy::EmpiricalBayes => empirical_bayes_g(r_squared, t, k),
        GPolicy::Fixed(g) if g >= 0.0 => Ok(g),
        GPolicy::Fixed(g) => Err(Error::Config(format!("fixed g must be nonnegative, got {g}"))),
    }
}

/// Log Bayes factor of `gamma` against the intercept-only model, column by
/// column.
pub fn log_bayes_factor(
    gamma: &ModelIndicator,
    data: &SsvsData,
    g_policy: GPolicy,
) -> Result<BayesFactorParts> {
    let q = data.q();
    let t = data.t;
    let k = gamma.k();
    let sse_null: Vec<f64> = data.sse_null.iter().copied().collect();
    if t <= k + 1 {
        return Err(Error::DegreesOfFreedom { t, k });
    }
    let Some(fit) = data.fit(gamma)? else {
        return Ok(BayesFactorParts {
            per_column_log_bf: vec![0.0; q],
            g_values: vec![0.0; q],
            sse_gamma: sse_null.clone(),
            sse_null,
        });
    };
    let mut per_column_log_bf = Vec::with_capacity(q);
    let mut g_values = Vec::with_capacity(q);
    for i in 0..q {
        let ratio = fit.sse[i] / sse_null[i];
        let g = g_for(g_policy, 1.0 - ratio, t, k)?;
        let lbf = 0.5 * (t - k - 1) as f64 * g.ln_1p() - 0.5 * (t + 1) as f64 * (g * ratio).ln_1p();
        per_column_log_bf.push(lbf);
        g_values.push(g);
    }
    Ok(BayesFactorParts {
        per_column_log_bf,
        g_values,
        sse_gamma: fit.sse.iter().copied().collect(),
        sse_null,
    })
}

fn ln_choose(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

pub fn log_model_prior(gamma: &ModelIndicator, prior: ModelPrior, p: usize) -> f64 {
    match prior {
        ModelPrior::Uniform => -(p as f64) * std::f64::consts::LN_2,
        ModelPrior::MultiplicityAdjusted => -((p + 1) as f64).ln() - ln_choose(p, gamma.k()),
    }
}

/// Unnormalized log posterior over models, with a memo of visited models.
pub struct ModelSpace<'a> {
    data: &'a SsvsData,
    prior: ModelPrior,
    g_policy: GPolicy,
    cache: HashMap<ModelIndicator, Option<f64>>,
}

const CACHE_LIMIT: usize = 1 << 18;

impl<'a> ModelSpace<'a> {
    pub fn new(data: &'a SsvsData, prior: ModelPrior, g_policy: GPolicy) -> Self {
        ModelSpace {
            data,
            prior,
            g_policy,
            cache: HashMap::new(),
        }
    }

    /// `None` when the model's design is singular.
    pub fn log_posterior(&mut self, gamma: &ModelIndicator) -> Result<Option<f64>> {
        if let Some(v) = self.cache.get(gamma) {
            return Ok(*v);
        }
        let value = match log_bayes_factor(gamma, self.data, self.g_policy) {
            Ok(parts) => Some(parts.total() + log_model_prior(gamma, self.prior, self.data.p())),
            Err(Error::Singular { columns }) => {
                warn!("skipping singular model over {columns:?}");
                None
            }
            Err(e) => return Err(e),
        };
        if self.cache.len() >= CACHE_LIMIT {
            self.cache.clear();
        }
        self.cache.insert(gamma.clone(), value);
        Ok(value)
    }

    /// One Gibbs pass over every coordinate. Coordinates are visited in
    /// ascending order unless `shuffle` is set.
    pub fn sweep<R: Rng + ?Sized>(
        &mut self,
        state: &ModelIndicator,
        rng: &mut R,
        shuffle: bool,
    ) -> Result<ModelIndicator> {
        let mut gamma = state.clone();
        let mut order: Vec<usize> = (0..gamma.p()).collect();
        if shuffle {
            order.shuffle(rng);
        }
        for j in order {
            let mut with = gamma.clone();
            with.set(j, true);
            let mut without = gamma.clone();
            without.set(j, false);
            let (la, lb) = (self.log_posterior(&with)?, self.log_posterior(&without)?);
            // always consume one uniform so the stream stays aligned
            let u: f64 = rng.random();
            match (la, lb) {
                (Some(la), Some(lb)) => {
                    gamma.set(j, u < inclusion_probability(la, lb));
                }
                _ => warn!("coordinate {j}: singular neighbour, keeping current value"),
            }
        }
        Ok(gamma)
    }
}

/// Full-conditional probability of inclusion from the two unnormalized log
/// posteriors, `1 / (1 + exp(lb - la))`.
pub fn inclusion_probability(log_with: f64, log_without: f64) -> f64 {
    1.0 / (1.0 + (log_without - log_with).exp())
}

/// Single Gibbs sweep over the inclusion indicators.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &ModelIndicator,
    data: &SsvsData,
    prior: ModelPrior,
    g_policy: GPolicy,
    rng: &mut R,
) -> Result<ModelIndicator> {
    ModelSpace::new(data, prior, g_policy).sweep(state, rng, false)
}

/// Exact posterior over all 2^p models. Singular models get probability 0.
pub fn enumerate_posterior(
    data: &SsvsData,
    prior: ModelPrior,
    g_policy: GPolicy,
) -> Result<Vec<(ModelIndicator, f64)>> {
    let p = data.p();
    if p > 20 {
        return Err(Error::Config(format!("exhaustive enumeration needs p <= 20, got {p}")));
    }
    let mut space = ModelSpace::new(data, prior, g_policy);
    let mut logs = Vec::with_capacity(1 << p);
    for code in 0..(1u64 << p) {
        let m = ModelIndicator::from_code(p, code);
        let lp = space.log_posterior(&m)?.unwrap_or(f64::NEG_INFINITY);
        logs.push((m, lp));
    }
    let max = logs.iter().map(|(_, l)| *l).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logs.iter().map(|(_, l)| (l - max).exp()).sum();
    Ok(logs
        .into_iter()
        .map(|(m, l)| (m, (l - max).exp() / z))
        .collect())
}

/// Marginal inclusion probabilities implied by an enumerated posterior.
pub fn inclusion_from_enumeration(posterior: &[(ModelIndicator, f64)]) -> Vec<f64> {
    let p = posterior.first().map_or(0, |(m, _)| m.p());
    let mut incl = vec![0.0; p];
    for (m, w) in posterior {
        for j in m.included() {
            incl[j] += w;
        }
    }
    incl
}

/// One retained draw from the conditional (target given candidate) model.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDraw {
    pub gamma: ModelIndicator,
    /// p×q; rows of excluded candidates are exactly zero.
    pub beta: DMatrix<f64>,
    /// Residual standard deviation per target column.
    pub sigma: DVector<f64>,
    /// Residual variance per target column.
    pub psi_resid: DVector<f64>,
}

impl ConditionalDraw {
    /// Builds a draw from residual standard deviations.
    pub fn from_sigma(gamma: ModelIndicator, beta: DMatrix<f64>, sigma: DVector<f64>) -> Self {
        let psi_resid = sigma.map(|s| s * s);
        ConditionalDraw {
            gamma,
            beta,
            sigma,
            psi_resid,
        }
    }
}

/// Draws σ²_i from its inverse-gamma marginal posterior and then β^i_γ from
/// N(s·β̂, s·σ²_i·(X_γᵀX_γ)⁻¹) with s = g_i/(1+g_i), for every target column.
pub fn sample_beta_sigma<R: Rng + ?Sized>(
    gamma: &ModelIndicator,
    data: &SsvsData,
    g: &[f64],
    rng: &mut R,
) -> Result<ConditionalDraw> {
    let (p, q, t) = (data.p(), data.q(), data.t);
    if g.len() != q {
        return Err(Error::Dimension(format!("expected {q} g values, got {}", g.len())));
    }
    let fit = data.fit(gamma)?;
    let shape = 0.5 * (t - 1) as f64;
    let mut beta = DMatrix::zeros(p, q);
    let mut psi = DVector::zeros(q);
    for i in 0..q {
        let shrink = g[i] / (1.0 + g[i]);
        let sse0 = data.sse_null[i];
        let resid = match &fit {
            None => sse0,
            Some(f) => sse0 - shrink * (sse0 - f.sse[i]),
        };
        let s2 = inverse_gamma(rng, shape, 0.5 * resid)?;
        psi[i] = s2;
        if let Some(f) = &fit {
            let z = standard_normal_vector(rng, f.idx.len());
            let noise = f
                .chol
                .l()
                .transpose()
                .solve_upper_triangular(&z)
                .ok_or_else(|| Error::Numerical("triangular solve in beta draw".into()))?;
            let draw = f.beta_hat.column(i) * shrink + noise * (shrink * s2).sqrt();
            for (r, &j) in f.idx.iter().enumerate() {
                beta[(j, i)] = draw[r];
            }
        }
    }
    Ok(ConditionalDraw {
        gamma: gamma.clone(),
        beta,
        sigma: psi.map(f64::sqrt),
        psi_resid: psi,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub n_sweeps: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
    pub prior: ModelPrior,
    pub g_policy: GPolicy,
    pub shuffle_coords: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_sweeps: 10_000,
            n_burn: 2_000,
            thin: 5,
            seed: 1,
            prior: ModelPrior::default(),
            g_policy: GPolicy::default(),
            shuffle_coords: false,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sweeps <= self.n_burn {
            return Err(Error::Config(format!(
                "n_sweeps ({}) must exceed n_burn ({})",
                self.n_sweeps, self.n_burn
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of draws a chain with this configuration retains.
    pub fn retained(&self) -> usize {
        (self.n_sweeps - self.n_burn).div_ceil(self.thin)
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub draws: Vec<ConditionalDraw>,
    /// Sweep index of each retained draw.
    pub sweeps: Vec<usize>,
    pub inclusion: Vec<f64>,
    /// Visit counts of retained models keyed by bitstring.
    pub model_counts: BTreeMap<String, usize>,
    pub candidates: Vec<String>,
    pub targets: Vec<String>,
}

/// Runs the stochastic search from the empty model, keeping every `thin`-th
/// sweep after burn-in together with a (β, σ) draw for the visited model.
pub fn run_chain(data: &SsvsData, config: &ChainConfig) -> Result<ChainOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut space = ModelSpace::new(data, config.prior, config.g_policy);
    let mut state = ModelIndicator::empty(data.p());
    let mut draws = Vec::with_capacity(config.retained());
    let mut sweeps = Vec::with_capacity(config.retained());
    let mut counts = vec![0usize; data.p()];
    let mut model_counts = BTreeMap::new();
    for sweep in 0..config.n_sweeps {
        state = space.sweep(&state, &mut rng, config.shuffle_coords)?;
        if sweep < config.n_burn || (sweep - config.n_burn) % config.thin != 0 {
            continue;
        }
        let g = log_bayes_factor(&state, data, config.g_policy)?.g_values;
        draws.push(sample_beta_sigma(&state, data, &g, &mut rng)?);
        sweeps.push(sweep);
        for j in state.included() {
            counts[j] += 1;
        }
        *model_counts.entry(state.to_bitstring()).or_insert(0) += 1;
    }
    let n = draws.len() as f64;
    Ok(ChainOutput {
        inclusion: counts.iter().map(|&c| c as f64 / n).collect(),
        draws,
        sweeps,
        model_counts,
        candidates: data.candidates.clone(),
        targets: data.targets.clone(),
    })
}
