//! Conjugate prior regularization.
//!
//! Weights get a uniform prior on the simplex, each component mean a Gaussian
//! `N(μ_P, Σ_k/κ_P)` and each covariance an inverse Wishart with `ν_P` degrees
//! of freedom and scale matrix `Ψ`. EM then climbs the log-posterior, and the
//! M-step returns posterior modes instead of maximum-likelihood estimates.
//!
//! For constrained codes the same prior density is evaluated at every
//! component covariance, so after profiling out the means the covariance
//! update is the ordinary constrained M-step applied to regularized counts
//! `n_k + ν_P + d + 2` and regularized scatters
//! `Ψ + W_k + κ_P n_k/(n_k + κ_P) (x̄_k − μ_P)(x̄_k − μ_P)ᵀ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::covmodels::{constrained_covariances, ModelCode, SufficientStats};
use crate::error::{Error, Result};
use crate::types::{check_positive_definite, serde_mat, DataMatrix, MixtureParameters};

pub const DEFAULT_SHRINKAGE: f64 = 0.1;

/// Hyperparameters of the normal / inverse-Wishart prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    #[serde(with = "serde_mat::vector")]
    pub mean: DVector<f64>,
    pub shrinkage: f64,
    pub dof: f64,
    /// Scale matrix added to every component scatter.
    #[serde(with = "serde_mat::matrix")]
    pub scale: DMatrix<f64>,
}

impl PriorSpec {
    pub fn new(mean: DVector<f64>, shrinkage: f64, dof: f64, scale: DMatrix<f64>) -> Result<Self> {
        let spec = Self {
            mean,
            shrinkage,
            dof,
            scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn d(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        if !(self.shrinkage > 0.0) {
            return Err(Error::InvalidArgument("prior shrinkage must be positive".into()));
        }
        if !(self.dof > d as f64 - 1.0) {
            return Err(Error::InvalidArgument(format!(
                "prior degrees of freedom must exceed d − 1 = {}",
                d as f64 - 1.0
            )));
        }
        if self.scale.nrows() != d || self.scale.ncols() != d {
            return Err(Error::DimensionMismatch("prior scale must be d × d".into()));
        }
        check_positive_definite(&self.scale, None)
            .map_err(|e| Error::InvalidArgument(format!("prior scale is not positive definite: {e}")))
    }

    /// Log of the Gaussian mean kernel `−κ/2 (μ − μ_P)ᵀ Σ⁻¹ (μ − μ_P)`.
    pub fn log_mean_kernel(&self, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::singular(None, "Cholesky factorization failed"))?;
        let diff = mean - &self.mean;
        Ok(-0.5 * self.shrinkage * diff.dot(&chol.solve(&diff)))
    }

    /// Count added to each component's effective size by the prior.
    pub fn count_offset(&self) -> f64 {
        self.dof + self.d() as f64 + 2.0
    }
}

/// Default hyperparameters with optional overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorControl {
    pub shrinkage: f64,
    /// Degrees of freedom; `None` means `d + 2`.
    pub dof: Option<f64>,
    /// Multiplier applied to the default scale matrix.
    pub scale_mult: f64,
}

impl Default for PriorControl {
    fn default() -> Self {
        Self {
            shrinkage: DEFAULT_SHRINKAGE,
            dof: None,
            scale_mult: 1.0,
        }
    }
}

impl PriorControl {
    /// Hyperparameters for `data` and a `k`-component model: prior mean at the
    /// sample mean, scale `S / K^(2/d)` with `S` the sample covariance
    /// (denominator n).
    pub fn resolve(&self, x: &DataMatrix, k: usize) -> Result<PriorSpec> {
        let (n, d) = (x.n(), x.d());
        if n <= d {
            return Err(Error::Data(format!(
                "need more observations than variables for a default prior (n = {n}, d = {d})"
            )));
        }
        if k == 0 {
            return Err(Error::InvalidArgument("number of components must be at least 1".into()));
        }
        let s = x.covariance_mle();
        check_positive_definite(&s, None).map_err(|_| {
            Error::Data("sample covariance is rank deficient; remove constant or collinear columns".into())
        })?;
        let factor = (k as f64).powf(2.0 / d as f64);
        PriorSpec::new(
            x.column_means(),
            self.shrinkage,
            self.dof.unwrap_or(d as f64 + 2.0),
            s * (self.scale_mult / factor),
        )
    }
}

/// Default prior for `k` components.
pub fn default_prior(x: &DataMatrix, k: usize) -> Result<PriorSpec> {
    PriorControl::default().resolve(x, k)
}

/// Posterior-mode means and covariances for one M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct MapUpdate {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

/// Means and covariances maximizing the complete-data log-posterior.
///
/// Mixing weights are unaffected by the uniform simplex prior and remain `nk / n`.
pub fn map_mstep(stats: &SufficientStats, prior: &PriorSpec, code: ModelCode, _n: f64) -> Result<MapUpdate> {
    let d = prior.d();
    if stats.xbar.first().map_or(0, DVector::len) != d {
        return Err(Error::DimensionMismatch("prior and data dimensions differ".into()));
    }
    let kappa = prior.shrinkage;
    let mut means = Vec::with_capacity(stats.k());
    let mut scatters = Vec::with_capacity(stats.k());
    let mut counts = Vec::with_capacity(stats.k());
    for ((&nk, xbar), w) in stats.nk.iter().zip(&stats.xbar).zip(&stats.scatter) {
        means.push((xbar * nk + &prior.mean * kappa) / (nk + kappa));
        let diff = xbar - &prior.mean;
        let mut b = &prior.scale + w;
        b.ger(kappa * nk / (nk + kappa), &diff, &diff, 1.0);
        scatters.push(b);
        counts.push(nk + prior.count_offset());
    }
    let total = counts.iter().sum();
    let covs = constrained_covariances(code, &counts, &scatters, total)?;
    Ok(MapUpdate { means, covs })
}

fn ln_multivariate_gamma(a: f64, d: usize) -> f64 {
    let df = d as f64;
    df * (df - 1.0) / 4.0 * std::f64::consts::PI.ln()
        + (1..=d).map(|j| ln_gamma(a + (1.0 - j as f64) / 2.0)).sum::<f64>()
}

/// Log prior density of the mixture parameters (normalizing constants included).
pub fn log_prior(params: &MixtureParameters, prior: &PriorSpec) -> Result<f64> {
    let d = prior.d();
    if params.d() != d {
        return Err(Error::DimensionMismatch("prior and parameter dimensions differ".into()));
    }
    let df = d as f64;
    let nu = prior.dof;
    let scale_chol = prior
        .scale
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("prior scale is not positive definite".into()))?;
    let log_det_scale = 2.0 * scale_chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let iw_const = 0.5 * nu * log_det_scale - 0.5 * nu * df * 2f64.ln() - ln_multivariate_gamma(0.5 * nu, d);
    let normal_const = -0.5 * df * (2.0 * std::f64::consts::PI).ln() + 0.5 * df * prior.shrinkage.ln();

    let mut total = 0.0;
    for (c, (mean, cov)) in params.mean.iter().zip(&params.cov).enumerate() {
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::singular(Some(c), "Cholesky factorization failed"))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let diff = mean - &prior.mean;
        let quad = diff.dot(&chol.solve(&diff));
        let trace = (chol.inverse() * &prior.scale).trace();
        total += normal_const - 0.5 * log_det - 0.5 * prior.shrinkage * quad;
        total += iw_const - 0.5 * (nu + df + 1.0) * log_det - 0.5 * trace;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Responsibilities;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_data() -> DataMatrix {
        DataMatrix::from_rows(&[
            vec![1.0, 2.0],
            vec![1.5, 1.0],
            vec![0.2, 0.8],
            vec![4.0, 4.5],
            vec![5.0, 3.5],
            vec![4.4, 5.1],
        ])
        .unwrap()
    }

    fn hand_stats() -> SufficientStats {
        let z = Responsibilities::new(DMatrix::from_row_slice(
            6,
            2,
            &[0.9, 0.1, 0.8, 0.2, 1.0, 0.0, 0.3, 0.7, 0.0, 1.0, 0.15, 0.85],
        ))
        .unwrap();
        SufficientStats::compute(&small_data(), &z, None).unwrap()
    }

    fn prior2() -> PriorSpec {
        PriorSpec::new(
            DVector::from_vec(vec![2.5, 2.8]),
            0.1,
            4.0,
            DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.2, 0.6]),
        )
        .unwrap()
    }

    #[test]
    fn default_prior_values() {
        let x = small_data();
        let p = default_prior(&x, 3).unwrap();
        assert_eq!(p.dof, 4.0);
        assert_eq!(p.shrinkage, 0.1);
        assert_relative_eq!(p.mean, x.column_means(), epsilon = 1e-15);
        let p1 = default_prior(&x, 1).unwrap();
        assert_eq!(p1.scale, x.covariance_mle());
        assert_relative_eq!(p.scale, x.covariance_mle() / 3f64.powf(1.0), epsilon = 1e-12);
    }

    #[test]
    fn rank_deficient_data_is_rejected() {
        let x = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        let err = default_prior(&x, 2).unwrap_err();
        assert!(err.to_string().contains("rank deficient"));
    }

    #[test]
    fn vanishing_shrinkage_gives_weighted_means() {
        let stats = hand_stats();
        let mut p = prior2();
        p.shrinkage = 1e-13;
        let up = map_mstep(&stats, &p, ModelCode::VVV, 6.0).unwrap();
        for c in 0..2 {
            assert_relative_eq!(up.means[c], stats.xbar[c], epsilon = 1e-9);
        }
    }

    #[test]
    fn empty_component_mean_is_prior_mean() {
        let mut stats = hand_stats();
        stats.nk[1] = 0.0;
        stats.xbar[1] = DVector::zeros(2);
        stats.scatter[1] = DMatrix::zeros(2, 2);
        let p = prior2();
        let up = map_mstep(&stats, &p, ModelCode::VVV, 6.0).unwrap();
        assert_relative_eq!(up.means[1], p.mean, epsilon = 1e-14);
    }

    /// Posterior-mode formulas written out entry by entry.
    #[test]
    fn matches_hand_evaluated_posterior_mode() {
        let stats = hand_stats();
        let p = prior2();
        let (kappa, nu, d) = (0.1, 4.0, 2.0);
        let vvv = map_mstep(&stats, &p, ModelCode::VVV, 6.0).unwrap();
        let eee = map_mstep(&stats, &p, ModelCode::EEE, 6.0).unwrap();
        let vvi = map_mstep(&stats, &p, ModelCode::VVI, 6.0).unwrap();
        let mut pooled = [[0.0; 2]; 2];
        let mut pooled_count = 0.0;
        for c in 0..2 {
            let nk = stats.nk[c];
            let shrink = kappa * nk / (nk + kappa);
            let denom = nk + nu + d + 2.0;
            for a in 0..2 {
                let mean = (nk * stats.xbar[c][a] + kappa * p.mean[a]) / (nk + kappa);
                assert_relative_eq!(vvv.means[c][a], mean, epsilon = 1e-10);
                for b in 0..2 {
                    let da = stats.xbar[c][a] - p.mean[a];
                    let db = stats.xbar[c][b] - p.mean[b];
                    let num = p.scale[(a, b)] + stats.scatter[c][(a, b)] + shrink * da * db;
                    pooled[a][b] += num;
                    assert_relative_eq!(vvv.covs[c][(a, b)], num / denom, epsilon = 1e-10);
                    let diag = if a == b { num / denom } else { 0.0 };
                    assert_relative_eq!(vvi.covs[c][(a, b)], diag, epsilon = 1e-10);
                }
            }
            pooled_count += denom;
        }
        for a in 0..2 {
            for b in 0..2 {
                assert_relative_eq!(eee.covs[0][(a, b)], pooled[a][b] / pooled_count, epsilon = 1e-10);
            }
        }
    }

    fn single_component(mean: DVector<f64>, cov: DMatrix<f64>) -> MixtureParameters {
        MixtureParameters {
            pro: vec![1.0],
            mean: vec![mean],
            cov: vec![cov],
        }
    }

    #[test]
    fn prior_mode_is_a_local_maximum() {
        let p = prior2();
        let mode_cov = &p.scale / p.count_offset();
        let at_mode = log_prior(&single_component(p.mean.clone(), mode_cov.clone()), &p).unwrap();
        for a in 0..2 {
            for sign in [-1.0, 1.0] {
                let mut m = p.mean.clone();
                m[a] += 0.01 * sign;
                let v = log_prior(&single_component(m, mode_cov.clone()), &p).unwrap();
                assert!(v < at_mode);
                for b in a..2 {
                    let mut s = mode_cov.clone();
                    s[(a, b)] += 0.01 * sign;
                    s[(b, a)] = s[(a, b)];
                    let v = log_prior(&single_component(p.mean.clone(), s), &p).unwrap();
                    assert!(v < at_mode, "perturbing ({a},{b}) by {sign}");
                }
            }
        }
    }

    #[test]
    fn larger_shrinkage_lowers_mean_kernel() {
        let p = prior2();
        let mut q = p.clone();
        q.shrinkage *= 2.0;
        let cov = DMatrix::identity(2, 2);
        let m = &p.mean + DVector::from_vec(vec![0.3, -0.1]);
        assert!(q.log_mean_kernel(&m, &cov).unwrap() < p.log_mean_kernel(&m, &cov).unwrap());
    }

    /// Same density assembled from determinants and explicit inverses, with
    /// Γ₂(2) = √π Γ(2) Γ(3/2) = π/2 written out.
    #[test]
    fn log_prior_matches_explicit_density() {
        let p = prior2();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = MixtureParameters {
            pro: vec![0.4, 0.6],
            mean: (0..2).map(|_| DVector::from_fn(2, |_, _| rng.random_range(0.0..5.0))).collect(),
            cov: (0..2)
                .map(|_| {
                    let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
                    &a * a.transpose() + DMatrix::identity(2, 2) * 0.2
                })
                .collect(),
        };
        let pi = std::f64::consts::PI;
        let ln_gamma2 = (pi / 2.0).ln();
        let mut expected = 0.0;
        for c in 0..2 {
            let s = &params.cov[c];
            let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
            let inv = DMatrix::from_row_slice(2, 2, &[s[(1, 1)], -s[(0, 1)], -s[(1, 0)], s[(0, 0)]]) / det;
            let diff = &params.mean[c] - &p.mean;
            let quad = (diff.transpose() * &inv * &diff)[(0, 0)];
            // N(μ | μ_P, Σ/κ) in two dimensions
            let normal = -(2.0 * pi).ln() - 0.5 * (det / (p.shrinkage * p.shrinkage)).ln() - 0.5 * p.shrinkage * quad;
            let det_scale = p.scale.determinant();
            let iw = 0.5 * 4.0 * det_scale.ln() - 4.0 * 2f64.ln() - ln_gamma2 - 0.5 * (4.0 + 3.0) * det.ln()
                - 0.5 * (&p.scale * &inv).trace();
            expected += normal + iw;
        }
        assert_relative_eq!(log_prior(&params, &p).unwrap(), expected, epsilon = 1e-10);
    }

    #[test]
    fn vanishing_prior_approaches_mle() {
        // κ → 0 and Ψ → 0: the mode tends to W_k / (n_k + ν + d + 2), which
        // approaches the MLE W_k / n_k as n_k grows.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..4000)
            .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..2.0)])
            .collect();
        let x = DataMatrix::from_rows(&rows).unwrap();
        let z = Responsibilities::from_partition(&vec![0; x.n()], 1).unwrap();
        let stats = SufficientStats::compute(&x, &z, None).unwrap();
        let p = PriorSpec::new(DVector::zeros(2), 1e-12, 1.0 + 1e-9, DMatrix::identity(2, 2) * 1e-12).unwrap();
        let up = map_mstep(&stats, &p, ModelCode::VVV, x.n() as f64).unwrap();
        let mle = &stats.scatter[0] / stats.nk[0];
        let rel = (&up.covs[0] - &mle).abs().max() / mle.abs().max();
        assert!(rel <= p.count_offset() / stats.nk[0] + 1e-9, "rel gap {rel}");
        assert_relative_eq!(up.means[0], stats.xbar[0], epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn map_means_lie_between_sample_and_prior_mean(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut stats = hand_stats();
            stats.nk = vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)];
            let p = prior2();
            let up = map_mstep(&stats, &p, ModelCode::VVI, 6.0).unwrap();
            for c in 0..2 {
                let t = p.shrinkage / (stats.nk[c] + p.shrinkage);
                let on_segment = &stats.xbar[c] * (1.0 - t) + &p.mean * t;
                prop_assert!((&up.means[c] - on_segment).abs().max() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&t));
            }
        }
    }
}
