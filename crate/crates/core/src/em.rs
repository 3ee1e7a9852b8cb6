//! EM estimation: component log-densities, the E-step, initialization and the
//! restart-driven EM loop.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covmodels::{count_free_params, mstep_covariance, SufficientStats};
use crate::error::{Error, Result};
use crate::prior::{log_prior, map_mstep, PriorSpec};
use crate::selection::{bic, icl};
use crate::types::{DataMatrix, FitResult, MixtureParameters, ModelSpec, Responsibilities};

/// Lloyd iterations run after k-means++ seeding.
pub const KMEANS_MAX_ITER: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    KmeansPp,
    RandomPartition,
    /// Fixed 0-based component index per observation.
    GivenPartition(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmControl {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub n_restarts: usize,
    pub init: InitStrategy,
    pub seed: u64,
}

impl Default for EmControl {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_iter: 1000,
            n_restarts: 32,
            init: InitStrategy::KmeansPp,
            seed: 0,
        }
    }
}

impl EmControl {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidArgument("rel_tol must be positive".into()));
        }
        if self.max_iter == 0 || self.n_restarts == 0 {
            return Err(Error::InvalidArgument("max_iter and n_restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-component Cholesky data reused across all rows.
struct ComponentDensity {
    chol_l: DMatrix<f64>,
    log_norm: f64,
}

fn component_densities(params: &MixtureParameters) -> Result<Vec<ComponentDensity>> {
    let d = params.d() as f64;
    params
        .cov
        .iter()
        .zip(&params.pro)
        .enumerate()
        .map(|(c, (cov, &pro))| {
            let chol = cov
                .clone()
                .cholesky()
                .ok_or_else(|| Error::singular(Some(c), "covariance is not positive definite"))?;
            let l = chol.unpack();
            let half_logdet: f64 = l.diagonal().iter().map(|v| v.ln()).sum();
            let log_norm = pro.ln() - 0.5 * d * (2.0 * std::f64::consts::PI).ln() - half_logdet;
            Ok(ComponentDensity { chol_l: l, log_norm })
        })
        .collect()
}

/// `log(π_k φ(x_i; μ_k, Σ_k))` for every row and component.
pub fn log_density_components(x: &DataMatrix, params: &MixtureParameters) -> Result<DMatrix<f64>> {
    let (n, d, k) = (x.n(), x.d(), params.k());
    if params.d() != d || params.mean.len() != k || params.cov.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "data has d={d}, parameters have d={} and K={k}",
            params.d()
        )));
    }
    let comps = component_densities(params)?;
    let xs = x.values();
    let mut out = DMatrix::zeros(n, k);
    let mut centered = xs.clone();
    let mut quad = DVector::zeros(n);
    for (c, comp) in comps.iter().enumerate() {
        let linv = comp
            .chol_l
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or_else(|| Error::singular(Some(c), "covariance is not positive definite"))?;
        for j in 0..d {
            let mu = params.mean[c][j];
            centered.column_mut(j).zip_apply(&xs.column(j), |v, x| *v = x - mu);
        }
        // rows of Y = (x_i − μ_c)ᵀ L⁻ᵀ, so the quadratic form is a row norm
        let y = &centered * linv.transpose();
        quad.fill(0.0);
        for j in 0..d {
            quad.zip_apply(&y.column(j), |q, v| *q += v * v);
        }
        out.column_mut(c).zip_apply(&quad, |o, q| *o = comp.log_norm - 0.5 * q);
    }
    Ok(out)
}

/// Responsibilities plus (weighted log-likelihood, plain log-likelihood).
fn e_step_weighted(
    x: &DataMatrix,
    params: &MixtureParameters,
    weights: Option<&[f64]>,
) -> Result<(Responsibilities, f64, f64)> {
    let (n, k) = (x.n(), params.k());
    // rows of the transposed table are contiguous
    let mut z = log_density_components(x, params)?.transpose();
    let mut weighted = 0.0;
    let mut plain = 0.0;
    for (i, mut row) in z.column_iter_mut().enumerate() {
        let max = row.max();
        if !max.is_finite() {
            return Err(Error::singular(None, format!("observation {} has zero density", i + 1)));
        }
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row /= sum;
        let lse = max + sum.ln();
        plain += lse;
        weighted += weights.map_or(1.0, |w| w[i]) * lse;
    }
    debug_assert_eq!(z.shape(), (k, n));
    Ok((Responsibilities::from_raw(z.transpose()), weighted, plain))
}

/// Posterior membership probabilities and the mixture log-likelihood.
pub fn e_step(x: &DataMatrix, params: &MixtureParameters) -> Result<(Responsibilities, f64)> {
    let (z, _, loglik) = e_step_weighted(x, params, None)?;
    Ok((z, loglik))
}

/// MAP labels (1-based); ties go to the lowest component index.
pub fn map_classify(z: &Responsibilities) -> Vec<usize> {
    let m = z.matrix();
    (0..z.n())
        .map(|i| {
            let mut best = 0;
            for c in 1..z.k() {
                if m[(i, c)] > m[(i, best)] {
                    best = c;
                }
            }
            best + 1
        })
        .collect()
}

fn restart_rng(seed: u64, restart_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart_index as u64);
    rng
}

fn sq_dist(x: &DMatrix<f64>, i: usize, center: &[f64]) -> f64 {
    center.iter().enumerate().map(|(j, c)| (x[(i, j)] - c).powi(2)).sum()
}

fn nearest(x: &DMatrix<f64>, i: usize, centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let dist = sq_dist(x, i, center);
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

/// Initial hard partition as 0-based component indices.
///
/// Deterministic in `(control.seed, restart_index)`; every component is non-empty.
pub fn initialize(x: &DataMatrix, k: usize, control: &EmControl, restart_index: usize) -> Result<Vec<usize>> {
    let n = x.n();
    if k == 0 {
        return Err(Error::InvalidArgument("number of components must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("K = {k} exceeds the number of observations n = {n}")));
    }
    let mut rng = restart_rng(control.seed, restart_index);
    let partition = match &control.init {
        InitStrategy::GivenPartition(p) => {
            if p.len() != n || p.iter().any(|&c| c >= k) {
                return Err(Error::InvalidArgument("given partition does not match data and K".into()));
            }
            return Ok(p.clone());
        }
        InitStrategy::RandomPartition => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut part = vec![0; n];
            for (pos, &i) in order.iter().enumerate() {
                part[i] = if pos < k { pos } else { rng.random_range(0..k) };
            }
            part
        }
        InitStrategy::KmeansPp => kmeans_pp(x, k, &mut rng),
    };
    Ok(fill_empty(x, k, partition))
}

fn kmeans_pp(x: &DataMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let (n, d) = (x.n(), x.d());
    let xs = x.values();
    let point = |i: usize| -> Vec<f64> { (0..d).map(|j| xs[(i, j)]).collect() };

    let mut centers = vec![point(rng.random_range(0..n))];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(xs, i, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = point(pick);
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(sq_dist(xs, i, &c));
        }
        centers.push(c);
    }

    let mut part: Vec<usize> = (0..n).map(|i| nearest(xs, i, &centers).0).collect();
    for _ in 0..KMEANS_MAX_ITER {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in part.iter().enumerate() {
            counts[c] += 1;
            for j in 0..d {
                sums[c][j] += xs[(i, j)];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next: Vec<usize> = (0..n).map(|i| nearest(xs, i, &centers).0).collect();
        if next == part {
            break;
        }
        part = next;
    }
    part
}

/// Moves the point farthest from its cluster centroid into each empty cluster.
fn fill_empty(x: &DataMatrix, k: usize, mut part: Vec<usize>) -> Vec<usize> {
    let (n, d) = (x.n(), x.d());
    let xs = x.values();
    loop {
        let mut counts = vec![0usize; k];
        for &c in &part {
            counts[c] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return part;
        };
        let mut centers = vec![vec![0.0; d]; k];
        for (i, &c) in part.iter().enumerate() {
            for j in 0..d {
                centers[c][j] += xs[(i, j)] / counts[c] as f64;
            }
        }
        let donor = (0..n)
            .filter(|&i| counts[part[i]] > 1)
            .map(|i| (i, sq_dist(xs, i, &centers[part[i]])))
            .fold((usize::MAX, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0;
        part[donor] = empty;
    }
}

fn m_step(
    x: &DataMatrix,
    z: &Responsibilities,
    weights: Option<&[f64]>,
    spec: &ModelSpec,
    prior: Option<&PriorSpec>,
) -> Result<MixtureParameters> {
    let stats = SufficientStats::compute(x, z, weights)?;
    let total: f64 = stats.nk.iter().sum();
    let pro: Vec<f64> = stats.nk.iter().map(|w| w / total).collect();
    let (mean, cov) = match prior {
        Some(p) => {
            let up = map_mstep(&stats, p, spec.code, total)?;
            (up.means, up.covs)
        }
        None => {
            let covs = mstep_covariance(spec.code, &stats, total)?;
            (stats.xbar, covs)
        }
    };
    Ok(MixtureParameters { pro, mean, cov })
}

#[derive(Debug, Clone)]
struct Chain {
    params: MixtureParameters,
    z: Responsibilities,
    loglik: f64,
    objective: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

enum Start<'a> {
    Partition(Vec<usize>),
    Params(&'a MixtureParameters),
}

fn run_chain(
    x: &DataMatrix,
    weights: Option<&[f64]>,
    spec: &ModelSpec,
    prior: Option<&PriorSpec>,
    start: Start<'_>,
    control: &EmControl,
) -> Result<Chain> {
    let mut params = match start {
        Start::Partition(p) => m_step(x, &Responsibilities::from_partition(&p, spec.k)?, weights, spec, prior)?,
        Start::Params(p) => p.clone(),
    };
    let evaluate = |params: &MixtureParameters| -> Result<(Responsibilities, f64, f64)> {
        let (z, weighted, plain) = e_step_weighted(x, params, weights)?;
        let objective = match prior {
            Some(p) => weighted + log_prior(params, p)?,
            None => weighted,
        };
        Ok((z, objective, plain))
    };
    let (mut z, mut objective, mut loglik) = evaluate(&params)?;
    let mut trace = vec![objective];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < control.max_iter {
        params = m_step(x, &z, weights, spec, prior)?;
        let (next_z, next_obj, next_ll) = evaluate(&params)?;
        iterations += 1;
        let change = (next_obj - objective).abs() / (1.0 + next_obj.abs());
        z = next_z;
        objective = next_obj;
        loglik = next_ll;
        trace.push(objective);
        if change < control.rel_tol {
            converged = true;
            break;
        }
    }
    Ok(Chain {
        params,
        z,
        loglik,
        objective,
        trace,
        iterations,
        converged,
    })
}

fn check_inputs(x: &DataMatrix, spec: &ModelSpec, prior: Option<&PriorSpec>, control: &EmControl) -> Result<()> {
    control.validate()?;
    if !spec.code.is_fitted() {
        return Err(Error::UnsupportedModel(spec.code.to_string()));
    }
    if spec.k == 0 || spec.k > x.n() {
        return Err(Error::InvalidArgument(format!(
            "K = {} must be between 1 and n = {}",
            spec.k,
            x.n()
        )));
    }
    if let Some(p) = prior {
        if p.d() != x.d() {
            return Err(Error::DimensionMismatch("prior and data dimensions differ".into()));
        }
        p.validate()?;
    }
    Ok(())
}

fn finish(x: &DataMatrix, spec: ModelSpec, prior: Option<&PriorSpec>, chain: Chain, restart: usize) -> Result<FitResult> {
    let n = x.n();
    let df = count_free_params(spec.code, x.d(), spec.k);
    let bic_value = bic(chain.loglik, df, n);
    let classification = map_classify(&chain.z);
    let icl_value = icl(bic_value, &chain.z, &classification)?;
    Ok(FitResult {
        model: spec,
        n,
        params: chain.params,
        loglik: chain.loglik,
        objective: chain.objective,
        df,
        bic: bic_value,
        icl: icl_value,
        z: chain.z,
        classification,
        iterations: chain.iterations,
        converged: chain.converged,
        prior_used: prior.cloned(),
        restart,
        objective_trace: chain.trace,
    })
}

/// Fits one model by EM from `control.n_restarts` initial partitions and keeps
/// the chain with the highest final objective (lowest restart index on ties).
pub fn fit(x: &DataMatrix, spec: &ModelSpec, prior: Option<&PriorSpec>, control: &EmControl) -> Result<FitResult> {
    check_inputs(x, spec, prior, control)?;
    let restarts = if spec.k == 1 || matches!(control.init, InitStrategy::GivenPartition(_)) {
        1
    } else {
        control.n_restarts
    };
    let chains: Vec<Result<Chain>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let partition = initialize(x, spec.k, control, r)?;
            run_chain(x, None, spec, prior, Start::Partition(partition), control)
        })
        .collect();
    let mut best: Option<(usize, Chain)> = None;
    let mut last_err = None;
    for (r, chain) in chains.into_iter().enumerate() {
        match chain {
            Ok(c) => {
                if best.as_ref().is_none_or(|(_, b)| c.objective > b.objective) {
                    best = Some((r, c));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((r, chain)) => finish(x, *spec, prior, chain, r),
        None => Err(Error::AllChainsFailed {
            model: spec.code.to_string(),
            k: spec.k,
            restarts,
            last: last_err.map(|e| e.to_string()).unwrap_or_default(),
        }),
    }
}

/// Single EM chain started from given parameters, with optional observation
/// weights multiplying the responsibilities in every sufficient statistic.
pub fn fit_from(
    x: &DataMatrix,
    spec: &ModelSpec,
    prior: Option<&PriorSpec>,
    start: &MixtureParameters,
    weights: Option<&[f64]>,
    control: &EmControl,
) -> Result<FitResult> {
    check_inputs(x, spec, prior, control)?;
    if start.k() != spec.k || start.d() != x.d() {
        return Err(Error::DimensionMismatch("starting parameters do not match the model".into()));
    }
    if let Some(w) = weights {
        if w.len() != x.n() || w.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be non-negative, one per observation".into()));
        }
    }
    let chain = run_chain(x, weights, spec, prior, Start::Params(start), control)?;
    finish(x, *spec, prior, chain, 0)
}

/// Closed-form single-Gaussian estimates: sample mean and covariance (denominator n).
pub fn gaussian_mle(x: &DataMatrix) -> (DVector<f64>, DMatrix<f64>) {
    (x.column_means(), x.covariance_mle())
}
