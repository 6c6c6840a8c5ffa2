//! Posterior summarization of the conditional regression of targets on
//! candidates: integrated loss, its weighted-lasso form, the solution path and
//! the quantile-band choice of a sparse graph.
//!
//! The action γ is a q×p matrix (targets × candidates). With
//! `H = E[Σ_x + μ_xμ_xᵀ]` and `f = E[βᵀ(Σ_x + μ_xμ_xᵀ)]`, the loss is
//! `−½ tr(DγHγᵀ) + tr(Dfγᵀ)`. Writing `G = D^{1/2}γ`, `C = D^{1/2}f` and
//! `H = LLᵀ`, maximizing the penalized loss is the lasso
//! `½‖(Lᵀ⊗I) vec G − vec(C L⁻ᵀ)‖² + λ Σ w|G|`.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::draws::PosteriorDraw;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, mean, quantile_sorted, symmetrize};

/// How the conditional precision D is set.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum DPolicy {
    /// Inverse posterior-mean residual variances.
    #[default]
    ResidualPrecision,
    Identity,
    /// Explicit diagonal.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct PosteriorMoments {
    /// p×p second moment of the candidates.
    pub h: DMatrix<f64>,
    /// q×p cross moment of targets and candidates.
    pub f: DMatrix<f64>,
    /// Diagonal of D.
    pub d: DVector<f64>,
    /// Lower Cholesky factor of `h`.
    pub l: DMatrix<f64>,
}

impl PosteriorMoments {
    pub fn p(&self) -> usize {
        self.h.nrows()
    }

    pub fn q(&self) -> usize {
        self.f.nrows()
    }

    /// Builds moments directly from H, f and D.
    pub fn from_parts(h: DMatrix<f64>, f: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        if h.nrows() != h.ncols() || f.ncols() != h.nrows() || d.len() != f.nrows() {
            return Err(Error::Dimension(format!(
                "H is {}×{}, f is {}×{}, D has {} entries",
                h.nrows(),
                h.ncols(),
                f.nrows(),
                f.ncols(),
                d.len()
            )));
        }
        if d.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Validation("D must have positive finite entries".into()));
        }
        let l = cholesky_with_jitter(&h, "H")?.l();
        Ok(PosteriorMoments { h, f, d, l })
    }

    /// The unpenalized optimum `f H⁻¹`.
    pub fn dense_action(&self) -> DMatrix<f64> {
        // f H⁻¹ = (H⁻¹ fᵀ)ᵀ
        let chol = nalgebra::Cholesky::new(&self.l * self.l.transpose())
            .expect("LLᵀ is positive definite");
        chol.solve(&self.f.transpose()).transpose()
    }
}

/// Averages the paired draws into H and f. Covariances use the 1/N
/// normalization so that H and f are exactly the means of the per-draw
/// second moments.
pub fn accumulate_moments(draws: &[PosteriorDraw], policy: &DPolicy) -> Result<PosteriorMoments> {
    let n = draws.len();
    if n < 2 {
        return Err(Error::Pairing(format!(
            "at least two paired draws are needed, got {n}"
        )));
    }
    let p = draws[0].p();
    let q = draws[0].q();
    if draws.iter().any(|d| d.p() != p || d.q() != q || d.beta.shape() != (p, q)) {
        return Err(Error::Dimension("draws disagree on p or q".into()));
    }
    let nf = n as f64;
    let mu_r: Vec<DVector<f64>> = draws.iter().map(|d| d.mu_r()).collect();
    let mu_x_bar = draws.iter().fold(DVector::zeros(p), |acc, d| acc + &d.mu_x) / nf;
    let mu_r_bar = mu_r.iter().fold(DVector::zeros(q), |acc, m| acc + m) / nf;

    let mut sigma_bar = DMatrix::zeros(p, p);
    let mut cov_mu = DMatrix::zeros(p, p);
    let mut beta_sigma = DMatrix::zeros(q, p);
    let mut cov_rx = DMatrix::zeros(q, p);
    for (d, mr) in draws.iter().zip(&mu_r) {
        sigma_bar += &d.sigma_x;
        let dx = &d.mu_x - &mu_x_bar;
        let dr = mr - &mu_r_bar;
        cov_mu += &dx * dx.transpose();
        beta_sigma += d.beta.tr_mul(&d.sigma_x);
        cov_rx += &dr * dx.transpose();
    }
    let mut h = (sigma_bar + cov_mu) / nf + &mu_x_bar * mu_x_bar.transpose();
    symmetrize(&mut h);
    let f = (beta_sigma + cov_rx) / nf + &mu_r_bar * mu_x_bar.transpose();

    let d = match policy {
        DPolicy::ResidualPrecision => {
            let psi = draws.iter().fold(DVector::zeros(q), |acc, d| acc + &d.psi_resid) / nf;
            psi.map(|v| 1.0 / v)
        }
        DPolicy::Identity => DVector::from_element(q, 1.0),
        DPolicy::Fixed(v) => {
            if v.len() != q {
                return Err(Error::Config(format!(
                    "fixed D has {} entries but there are {q} targets",
                    v.len()
                )));
            }
            DVector::from_column_slice(v)
        }
    };
    PosteriorMoments::from_parts(h, f, d)
}

/// `−½ tr(DγHγᵀ) + tr(Dfγᵀ)`.
pub fn loss_value(gamma: &DMatrix<f64>, m: &PosteriorMoments) -> f64 {
    assert_eq!(gamma.shape(), m.f.shape(), "action has the wrong shape");
    let gh = gamma * &m.h;
    let mut total = 0.0;
    for i in 0..gamma.nrows() {
        let quad = gh.row(i).dot(&gamma.row(i));
        let lin = m.f.row(i).dot(&gamma.row(i));
        total += m.d[i] * (lin - 0.5 * quad);
    }
    total
}

/// The loss evaluated at a single draw, i.e. with H and f replaced by
/// `Σ_x + μ_xμ_xᵀ` and `βᵀ(Σ_x + μ_xμ_xᵀ)`.
pub fn loss_value_per_draw(gamma: &DMatrix<f64>, draw: &PosteriorDraw, d: &DVector<f64>) -> f64 {
    let m = &draw.sigma_x + &draw.mu_x * draw.mu_x.transpose();
    let f = draw.beta.tr_mul(&m);
    draw_loss(gamma, &m, &f, d, &support(gamma))
}

fn support(gamma: &DMatrix<f64>) -> Vec<usize> {
    (0..gamma.ncols())
        .filter(|&j| gamma.column(j).iter().any(|&v| v != 0.0))
        .collect()
}

fn draw_loss(gamma: &DMatrix<f64>, m: &DMatrix<f64>, f: &DMatrix<f64>, d: &DVector<f64>, cols: &[usize]) -> f64 {
    let mut total = 0.0;
    for i in 0..gamma.nrows() {
        let mut quad = 0.0;
        let mut lin = 0.0;
        for &a in cols {
            let ga = gamma[(i, a)];
            if ga == 0.0 {
                continue;
            }
            lin += f[(i, a)] * ga;
            for &b in cols {
                quad += ga * m[(a, b)] * gamma[(i, b)];
            }
        }
        total += d[i] * (lin - 0.5 * quad);
    }
    total
}

/// Per-draw second moments cached for repeated loss evaluation.
pub struct DrawLosses {
    m: Vec<DMatrix<f64>>,
    f: Vec<DMatrix<f64>>,
    d: DVector<f64>,
}

impl DrawLosses {
    pub fn new(draws: &[PosteriorDraw], d: &DVector<f64>) -> Self {
        let (m, f) = draws
            .par_iter()
            .map(|dr| {
                let m = &dr.sigma_x + &dr.mu_x * dr.mu_x.transpose();
                let f = dr.beta.tr_mul(&m);
                (m, f)
            })
            .unzip();
        DrawLosses { m, f, d: d.clone() }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Loss of one action against every draw, in draw order.
    pub fn evaluate(&self, gamma: &DMatrix<f64>) -> Vec<f64> {
        let cols = support(gamma);
        self.m
            .par_iter()
            .zip(&self.f)
            .map(|(m, f)| draw_loss(gamma, m, f, &self.d, &cols))
            .collect()
    }
}

/// Nonnegative penalty weight per (target, candidate) entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyWeights {
    /// q×p weights.
    pub weights: DMatrix<f64>,
}

impl PenaltyWeights {
    pub fn uniform(q: usize, p: usize) -> Self {
        PenaltyWeights {
            weights: DMatrix::from_element(q, p, 1.0),
        }
    }

    /// Uniform weights with the listed `candidate:target` edges unpenalized.
    pub fn with_unpenalized(candidates: &[String], targets: &[String], edges: &[String]) -> Result<Self> {
        let mut w = Self::uniform(targets.len(), candidates.len());
        for e in edges {
            let (c, t) = e
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("edge {e:?} is not of the form candidate:target")))?;
            let j = candidates
                .iter()
                .position(|x| x == c)
                .ok_or_else(|| Error::Lookup(c.to_string()))?;
            let i = targets
                .iter()
                .position(|x| x == t)
                .ok_or_else(|| Error::Lookup(t.to_string()))?;
            w.weights[(i, j)] = 0.0;
        }
        Ok(w)
    }
}

/// The lasso reformulation of the integrated loss.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    h: DMatrix<f64>,
    l: DMatrix<f64>,
    /// D^{1/2} f
    c: DMatrix<f64>,
    d_sqrt: DVector<f64>,
}

impl LassoProblem {
    pub fn new(m: &PosteriorMoments) -> Self {
        let d_sqrt = m.d.map(f64::sqrt);
        let mut c = m.f.clone();
        for (i, mut row) in c.row_iter_mut().enumerate() {
            row *= d_sqrt[i];
        }
        LassoProblem {
            h: &m.l * m.l.transpose(),
            l: m.l.clone(),
            c,
            d_sqrt,
        }
    }

    pub fn p(&self) -> usize {
        self.h.nrows()
    }

    pub fn q(&self) -> usize {
        self.c.nrows()
    }

    /// The explicit pq×pq design `Lᵀ ⊗ I_q`, acting on column-major `vec G`.
    pub fn design(&self) -> DMatrix<f64> {
        self.l.transpose().kronecker(&DMatrix::<f64>::identity(self.q(), self.q()))
    }

    /// `vec(D^{1/2} f L⁻ᵀ)`.
    pub fn response(&self) -> Result<DVector<f64>> {
        // Y = C L⁻ᵀ  ⇔  L Yᵀ = Cᵀ
        let yt = self
            .l
            .solve_lower_triangular(&self.c.transpose())
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factor of H is singular".into()))?;
        let y = yt.transpose();
        Ok(DVector::from_column_slice(y.as_slice()))
    }

    /// `½‖(Lᵀ⊗I) vec G − y‖² + λ Σ w|G|`, computed without the constant
    /// `½‖y‖²`.
    pub fn objective(&self, g: &DMatrix<f64>, lambda: f64, w: &PenaltyWeights) -> f64 {
        let gh = g * &self.h;
        let smooth = 0.5 * gh.component_mul(g).sum() - self.c.component_mul(g).sum();
        smooth + lambda * w.weights.component_mul(&g.abs()).sum()
    }

    /// Maps a rescaled solution G back to the action γ = D^{−1/2} G.
    pub fn to_action(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let mut gamma = g.clone();
        for (i, mut row) in gamma.row_iter_mut().enumerate() {
            row /= self.d_sqrt[i];
        }
        gamma
    }

    pub fn to_rescaled(&self, gamma: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = gamma.clone();
        for (i, mut row) in g.row_iter_mut().enumerate() {
            row *= self.d_sqrt[i];
        }
        g
    }

    /// Coordinate descent at fixed thresholds, starting from `g`.
    /// Returns the number of sweeps used.
    fn coordinate_descent(&self, thresholds: &DMatrix<f64>, g: &mut DMatrix<f64>, config: &PathConfig) -> usize {
        let (q, p) = (self.q(), self.p());
        let mut r = &self.c - &*g * &self.h;
        let scale = 1.0 + self.c.amax();
        for sweep in 1..=config.max_sweeps {
            let mut max_change = 0.0f64;
            for i in 0..q {
                for j in 0..p {
                    let hjj = self.h[(j, j)];
                    let old = g[(i, j)];
                    let z = r[(i, j)] + old * hjj;
                    let t = thresholds[(i, j)];
                    let new = if t.is_infinite() { 0.0 } else { soft_threshold(z, t) / hjj };
                    let delta = new - old;
                    if delta != 0.0 {
                        g[(i, j)] = new;
                        for b in 0..p {
                            r[(i, b)] -= delta * self.h[(j, b)];
                        }
                        max_change = max_change.max(delta.abs() * hjj);
                    }
                }
            }
            if max_change <= config.tolerance * scale {
                return sweep;
            }
        }
        warn!(
            "coordinate descent stopped after {} sweeps without meeting the tolerance",
            config.max_sweeps
        );
        config.max_sweeps
    }

    /// Minimizes the lasso objective at a single λ, warm-started from `start`.
    pub fn solve(
        &self,
        lambda: f64,
        w: &PenaltyWeights,
        start: Option<&DMatrix<f64>>,
        config: &PathConfig,
    ) -> DMatrix<f64> {
        let thresholds = w.weights.map(|v| lambda * v);
        let mut g = start.cloned().unwrap_or_else(|| DMatrix::zeros(self.q(), self.p()));
        self.coordinate_descent(&thresholds, &mut g, config);
        g
    }

    /// Smallest λ at which every penalized entry is zero, together with the
    /// solution there (nonzero only on unpenalized entries).
    pub fn lambda_max(&self, w: &PenaltyWeights, config: &PathConfig) -> (f64, DMatrix<f64>) {
        let thresholds = w.weights.map(|v| if v > 0.0 { f64::INFINITY } else { 0.0 });
        let mut g = DMatrix::zeros(self.q(), self.p());
        self.coordinate_descent(&thresholds, &mut g, config);
        let r = &self.c - &g * &self.h;
        let mut lmax = 0.0f64;
        for (idx, &wt) in w.weights.iter().enumerate() {
            if wt > 0.0 {
                lmax = lmax.max(r[idx].abs() / wt);
            }
        }
        (lmax, g)
    }
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    pub grid_size: usize,
    /// Smallest λ as a fraction of λ_max.
    pub min_ratio: f64,
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Entries with magnitude above this count as edges.
    pub edge_threshold: f64,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            grid_size: 100,
            min_ratio: 1e-4,
            tolerance: 1e-13,
            max_sweeps: 200_000,
            edge_threshold: 1e-8,
        }
    }
}

/// Geometric grid from `lmax` down to `lmax * min_ratio`.
pub fn lambda_grid(lmax: f64, grid_size: usize, min_ratio: f64) -> Vec<f64> {
    if grid_size == 1 {
        return vec![lmax];
    }
    let step = min_ratio.ln() / (grid_size - 1) as f64;
    (0..grid_size).map(|k| lmax * (step * k as f64).exp()).collect()
}

#[derive(Debug, Clone)]
pub struct LossPath {
    pub candidates: Vec<String>,
    pub targets: Vec<String>,
    pub lambdas: Vec<f64>,
    /// Actions γ (q×p) per grid point.
    pub actions: Vec<DMatrix<f64>>,
    pub loss_draws: Vec<Vec<f64>>,
    pub model_sizes: Vec<usize>,
    pub edge_threshold: f64,
}

impl LossPath {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn loss_mean(&self, k: usize) -> f64 {
        mean(&self.loss_draws[k])
    }

    pub fn edges(&self, k: usize) -> Vec<(usize, usize)> {
        edges_of(&self.actions[k], self.edge_threshold)
    }
}

/// (candidate, target) index pairs of entries above the threshold,
/// candidate-major.
fn edges_of(gamma: &DMatrix<f64>, threshold: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..gamma.ncols() {
        for i in 0..gamma.nrows() {
            if gamma[(i, j)].abs() > threshold {
                out.push((j, i));
            }
        }
    }
    out
}

/// Traces the weighted-lasso path and scores each point against every draw.
pub fn solution_path(
    moments: &PosteriorMoments,
    draws: &DrawLosses,
    weights: &PenaltyWeights,
    candidates: &[String],
    targets: &[String],
    config: &PathConfig,
) -> Result<LossPath> {
    let (q, p) = (moments.q(), moments.p());
    if weights.weights.shape() != (q, p) {
        return Err(Error::Dimension(format!(
            "penalty weights are {:?}, expected ({q}, {p})",
            weights.weights.shape()
        )));
    }
    if weights.weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
        return Err(Error::Config("penalty weights must be finite and nonnegative".into()));
    }
    if config.grid_size < 2 {
        return Err(Error::Config("the lambda grid needs at least two points".into()));
    }
    if candidates.len() != p || targets.len() != q {
        return Err(Error::Dimension("label counts do not match the moments".into()));
    }
    let problem = LassoProblem::new(moments);
    let (lmax, start) = problem.lambda_max(weights, config);

    let lambdas = if lmax > 0.0 {
        lambda_grid(lmax, config.grid_size, config.min_ratio)
    } else {
        warn!("no penalized entry can enter the model; the path is a single dense point");
        vec![0.0]
    };

    let mut g = start;
    let mut actions = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        g = problem.solve(lambda, weights, Some(&g), config);
        let mut gamma = problem.to_action(&g);
        // exact zeros keep the support (and per-draw cost) tight
        gamma.apply(|v| {
            if v.abs() <= config.edge_threshold {
                *v = 0.0
            }
        });
        actions.push(gamma);
    }
    let loss_draws: Vec<Vec<f64>> = actions.iter().map(|a| draws.evaluate(a)).collect();
    let model_sizes = actions
        .iter()
        .map(|a| edges_of(a, config.edge_threshold).len())
        .collect();
    Ok(LossPath {
        candidates: candidates.to_vec(),
        targets: targets.to_vec(),
        lambdas,
        actions,
        loss_draws,
        model_sizes,
        edge_threshold: config.edge_threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionGraph {
    /// (candidate, target) pairs.
    pub edges: Vec<(String, String)>,
    /// Candidates with at least one edge, in column order.
    pub selected_candidates: Vec<String>,
    /// Index of the chosen path point.
    pub path_index: usize,
    pub lambda: f64,
    /// The dense-point loss quantiles that defined the band.
    pub band: (f64, f64),
}

/// Chooses the sparsest path point whose mean loss lies inside the
/// `[low_q, high_q]` quantile band of the densest point's per-draw losses.
pub fn select_model(path: &LossPath, band: (f64, f64)) -> Result<SelectionGraph> {
    let (lo, hi) = band;
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::Config(format!(
            "quantile band ({lo}, {hi}) must satisfy 0 <= low < high <= 1"
        )));
    }
    if path.is_empty() {
        return Err(Error::Config("empty solution path".into()));
    }
    let dense = path.len() - 1;
    let mut sorted = path.loss_draws[dense].clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let (qlo, qhi) = (quantile_sorted(&sorted, lo), quantile_sorted(&sorted, hi));

    let chosen = (0..path.len())
        .find(|&k| {
            let m = path.loss_mean(k);
            m >= qlo && m <= qhi
        })
        .unwrap_or_else(|| {
            warn!("no path point has its mean loss inside the band; using the densest point");
            dense
        });
    let idx = path.edges(chosen);
    let edges = idx
        .iter()
        .map(|&(j, i)| (path.candidates[j].clone(), path.targets[i].clone()))
        .collect();
    let mut selected: Vec<usize> = idx.iter().map(|&(j, _)| j).collect();
    selected.dedup();
    Ok(SelectionGraph {
        edges,
        selected_candidates: selected.into_iter().map(|j| path.candidates[j].clone()).collect(),
        path_index: chosen,
        lambda: path.lambdas[chosen],
        band: (qlo, qhi),
    })
}

/// `lambda,model_size,loss_mean,loss_q05,loss_q40,loss_q60,loss_q95`.
pub fn write_path_csv(path: impl AsRef<Path>, loss_path: &LossPath) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("lambda,model_size,loss_mean,loss_q05,loss_q40,loss_q60,loss_q95\n");
    for k in 0..loss_path.len() {
        let mut s = loss_path.loss_draws[k].clone();
        s.sort_by(|a, b| a.total_cmp(b));
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            loss_path.lambdas[k],
            loss_path.model_sizes[k],
            loss_path.loss_mean(k),
            quantile_sorted(&s, 0.05),
            quantile_sorted(&s, 0.40),
            quantile_sorted(&s, 0.60),
            quantile_sorted(&s, 0.95)
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One `candidate<TAB>target` line per edge.
pub fn write_graph_tsv(path: impl AsRef<Path>, graph: &SelectionGraph) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (c, t) in &graph.edges {
        writeln!(out, "{c}\t{t}").unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_graph_tsv(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_once('\t')
                .map(|(c, t)| (c.to_string(), t.to_string()))
                .ok_or_else(|| Error::Parse {
                    row: i + 1,
                    column: None,
                    message: "expected candidate<TAB>target".into(),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssvs::ModelIndicator;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_draw(rng: &mut ChaCha8Rng, p: usize, q: usize) -> PosteriorDraw {
        let a = DMatrix::from_fn(p, p, |_, _| crate::linalg::randn(rng) * 0.1);
        PosteriorDraw {
            gamma: ModelIndicator::empty(p),
            beta: DMatrix::from_fn(p, q, |_, _| crate::linalg::randn(rng) * 0.5),
            psi_resid: DVector::from_fn(q, |_, _| 0.01 + 0.01 * crate::linalg::randn(rng).abs()),
            mu_x: DVector::from_fn(p, |_, _| 0.01 * crate::linalg::randn(rng)),
            sigma_x: &a * a.transpose() + DMatrix::identity(p, p) * 0.01,
        }
    }

    fn draws(n: usize, p: usize, q: usize, seed: u64) -> Vec<PosteriorDraw> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| random_draw(&mut rng, p, q)).collect()
    }

    #[test]
    fn one_draw_is_a_pairing_error() {
        let d = draws(1, 3, 2, 1);
        assert!(matches!(
            accumulate_moments(&d, &DPolicy::Identity),
            Err(Error::Pairing(_))
        ));
    }

    #[test]
    fn identical_draws_have_no_covariance_terms() {
        let one = draws(1, 3, 2, 2).pop().unwrap();
        let m = accumulate_moments(&[one.clone(), one.clone()], &DPolicy::Identity).unwrap();
        let h = &one.sigma_x + &one.mu_x * one.mu_x.transpose();
        assert!((&m.h - &h).amax() < 1e-15);
        assert!((&m.l * m.l.transpose() - &m.h).amax() < 1e-12);
    }

    #[test]
    fn zero_action_has_zero_loss() {
        let d = draws(10, 4, 3, 3);
        let m = accumulate_moments(&d, &DPolicy::ResidualPrecision).unwrap();
        let z = DMatrix::zeros(3, 4);
        assert_eq!(loss_value(&z, &m), 0.0);
        assert_eq!(loss_value_per_draw(&z, &d[0], &m.d), 0.0);
    }

    #[test]
    fn mean_draw_loss_matches_integrated_loss() {
        let d = draws(50, 4, 3, 4);
        let m = accumulate_moments(&d, &DPolicy::ResidualPrecision).unwrap();
        let gamma = DMatrix::from_fn(3, 4, |i, j| ((i * 4 + j) as f64).sin());
        let ev = DrawLosses::new(&d, &m.d);
        let per = ev.evaluate(&gamma);
        assert!((mean(&per) - loss_value(&gamma, &m)).abs() < 1e-10);
        assert!((per[7] - loss_value_per_draw(&gamma, &d[7], &m.d)).abs() < 1e-14);
    }

    #[test]
    fn dense_action_is_the_maximum() {
        let d = draws(20, 4, 2, 5);
        let m = accumulate_moments(&d, &DPolicy::ResidualPrecision).unwrap();
        let star = m.dense_action();
        let top = loss_value(&star, &m);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let g = DMatrix::from_fn(2, 4, |_, _| crate::linalg::randn(&mut rng));
            let diff = &g - &star;
            let expect = -0.5 * (0..2)
                .map(|i| m.d[i] * (diff.row(i) * &m.h).dot(&diff.row(i)))
                .sum::<f64>();
            assert!((loss_value(&g, &m) - top - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn orthonormal_design_soft_thresholds() {
        let f = DMatrix::from_row_slice(2, 3, &[0.5, -0.2, 0.05, -1.0, 0.3, 0.0]);
        let m = PosteriorMoments::from_parts(DMatrix::identity(3, 3), f.clone(), DVector::from_element(2, 1.0)).unwrap();
        let prob = LassoProblem::new(&m);
        assert_eq!(prob.design(), DMatrix::identity(6, 6));
        let g = prob.solve(0.25, &PenaltyWeights::uniform(2, 3), None, &PathConfig::default());
        let expect = f.map(|v| soft_threshold(v, 0.25));
        assert!((g - expect).amax() < 1e-14);
    }

    #[test]
    fn unpenalized_edge_is_always_present() {
        let d = draws(30, 4, 2, 6);
        let m = accumulate_moments(&d, &DPolicy::ResidualPrecision).unwrap();
        let cands: Vec<String> = ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect();
        let targs: Vec<String> = ["R1", "R2"].iter().map(|s| s.to_string()).collect();
        let w = PenaltyWeights::with_unpenalized(&cands, &targs, &["C:R2".to_string()]).unwrap();
        let ev = DrawLosses::new(&d, &m.d);
        let cfg = PathConfig {
            grid_size: 20,
            ..PathConfig::default()
        };
        let path = solution_path(&m, &ev, &w, &cands, &targs, &cfg).unwrap();
        assert_eq!(path.model_sizes[0], 1);
        for a in &path.actions {
            assert!(a[(1, 2)].abs() > 1e-8);
        }
        assert!(PenaltyWeights::with_unpenalized(&cands, &targs, &["Z:R1".to_string()]).is_err());
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let d = draws(30, 5, 3, 7);
        let m = accumulate_moments(&d, &DPolicy::ResidualPrecision).unwrap();
        let w = PenaltyWeights::uniform(3, 5);
        let prob = LassoProblem::new(&m);
        let cfg = PathConfig::default();
        let (lmax, g0) = prob.lambda_max(&w, &cfg);
        assert_eq!(g0.amax(), 0.0);
        assert_eq!(prob.solve(lmax, &w, None, &cfg).amax(), 0.0);
        assert!(prob.solve(lmax * 0.99, &w, None, &cfg).amax() > 0.0);
    }

    #[test]
    fn band_checks_and_single_point() {
        let path = LossPath {
            candidates: vec!["A".into()],
            targets: vec!["R".into()],
            lambdas: vec![0.1],
            actions: vec![DMatrix::from_element(1, 1, 0.5)],
            loss_draws: vec![vec![1.0, 2.0, 3.0]],
            model_sizes: vec![1],
            edge_threshold: 1e-8,
        };
        let g = select_model(&path, (0.4, 0.6)).unwrap();
        assert_eq!(g.edges, vec![("A".to_string(), "R".to_string())]);
        assert!(select_model(&path, (0.6, 0.4)).is_err());
    }
}
