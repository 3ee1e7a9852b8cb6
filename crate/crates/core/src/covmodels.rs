//! The parsimonious covariance family.
//!
//! Each covariance is factored as `Σ_k = λ_k U_k Δ_k U_kᵀ` with volume `λ_k`,
//! unit-determinant diagonal shape `Δ_k` and orthogonal orientation `U_k`.
//! A three-letter code says, per factor, whether it is equal across
//! components (E), varying (V) or the identity (I).
//!
//! Ten codes have closed-form or simple fixed-point M-steps and can be fitted.
//! EVE, VVE, VEE and EVV need iterative rotation updates; they parse and have
//! parameter counts so selection tables can list them as unavailable.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{check_positive_definite, DataMatrix, Responsibilities};

/// Relative tolerance and iteration cap for the VEI/VEV fixed-point loops.
pub const INNER_REL_TOL: f64 = 1e-8;
pub const INNER_MAX_ITER: usize = 100;

/// Effective counts below this are treated as empty components.
pub const MIN_COMPONENT_WEIGHT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelCode {
    EII,
    VII,
    EEI,
    VEI,
    EVI,
    VVI,
    EEE,
    VEE,
    EVE,
    VVE,
    EEV,
    VEV,
    EVV,
    VVV,
}

impl ModelCode {
    /// All fourteen members of the family, in conventional order.
    pub const ALL: [ModelCode; 14] = [
        ModelCode::EII,
        ModelCode::VII,
        ModelCode::EEI,
        ModelCode::VEI,
        ModelCode::EVI,
        ModelCode::VVI,
        ModelCode::EEE,
        ModelCode::VEE,
        ModelCode::EVE,
        ModelCode::VVE,
        ModelCode::EEV,
        ModelCode::VEV,
        ModelCode::EVV,
        ModelCode::VVV,
    ];

    /// Codes this library can estimate.
    pub const FITTED: [ModelCode; 10] = [
        ModelCode::EII,
        ModelCode::VII,
        ModelCode::EEI,
        ModelCode::VEI,
        ModelCode::EVI,
        ModelCode::VVI,
        ModelCode::EEE,
        ModelCode::EEV,
        ModelCode::VEV,
        ModelCode::VVV,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelCode::EII => "EII",
            ModelCode::VII => "VII",
            ModelCode::EEI => "EEI",
            ModelCode::VEI => "VEI",
            ModelCode::EVI => "EVI",
            ModelCode::VVI => "VVI",
            ModelCode::EEE => "EEE",
            ModelCode::VEE => "VEE",
            ModelCode::EVE => "EVE",
            ModelCode::VVE => "VVE",
            ModelCode::EEV => "EEV",
            ModelCode::VEV => "VEV",
            ModelCode::EVV => "EVV",
            ModelCode::VVV => "VVV",
        }
    }

    pub fn constraints(self) -> Constraints {
        use Factor::*;
        let s = self.as_str().as_bytes();
        let letter = |b: u8| match b {
            b'E' => Equal,
            b'V' => Varying,
            _ => Identity,
        };
        Constraints {
            volume: letter(s[0]),
            shape: letter(s[1]),
            orientation: letter(s[2]),
            fitted: self.is_fitted(),
        }
    }

    pub fn is_fitted(self) -> bool {
        !matches!(self, ModelCode::EVE | ModelCode::VVE | ModelCode::VEE | ModelCode::EVV)
    }

    /// Diagonal (axis-aligned) covariances, including the isotropic codes.
    pub fn is_diagonal(self) -> bool {
        self.constraints().orientation == Factor::Identity
    }
}

impl fmt::Display for ModelCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        ModelCode::ALL
            .into_iter()
            .find(|c| c.as_str() == upper)
            .ok_or_else(|| Error::InvalidModelCode {
                code: s.to_string(),
                valid: ModelCode::ALL.map(|c| c.as_str()).join(", "),
            })
    }
}

impl TryFrom<String> for ModelCode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelCode> for String {
    fn from(c: ModelCode) -> String {
        c.as_str().to_string()
    }
}

/// How one geometric factor is shared across components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Factor {
    Equal,
    Varying,
    /// Identity: isotropic when in the shape slot, axis-aligned in the orientation slot.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraints {
    pub volume: Factor,
    pub shape: Factor,
    pub orientation: Factor,
    pub fitted: bool,
}

/// Parses a three-letter code into its per-factor constraints.
pub fn parse_model_code(code: &str) -> Result<Constraints> {
    Ok(code.parse::<ModelCode>()?.constraints())
}

/// Number of free parameters: `(K−1)` weights, `K·d` means, plus the covariance count.
pub fn count_free_params(code: ModelCode, d: usize, k: usize) -> usize {
    let rot = d * (d - 1) / 2;
    let cov = match code {
        ModelCode::EII => 1,
        ModelCode::VII => k,
        ModelCode::EEI => d,
        ModelCode::VEI => k + (d - 1),
        ModelCode::EVI => 1 + k * (d - 1),
        ModelCode::VVI => k * d,
        ModelCode::EEE => d * (d + 1) / 2,
        ModelCode::VEE => k + (d - 1) + rot,
        ModelCode::EVE => 1 + k * (d - 1) + rot,
        ModelCode::VVE => k * d + rot,
        ModelCode::EEV => d + k * rot,
        ModelCode::VEV => k + (d - 1) + k * rot,
        ModelCode::EVV => 1 + k * (d - 1) + k * rot,
        ModelCode::VVV => k * d * (d + 1) / 2,
    };
    (k - 1) + k * d + cov
}

/// Volume, shape and orientation of one covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovDecomposition {
    pub lambda: f64,
    /// Diagonal of Δ, decreasing, with unit product.
    pub shape: DVector<f64>,
    /// Columns are eigenvectors matched to `shape`.
    pub orientation: DMatrix<f64>,
}

impl CovDecomposition {
    pub fn compose(&self) -> DMatrix<f64> {
        let u = &self.orientation;
        let scaled = u * DMatrix::from_diagonal(&self.shape) * u.transpose() * self.lambda;
        symmetrize(scaled)
    }
}

/// Factors an SPD matrix as `λ U Δ Uᵀ`.
pub fn decompose_covariance(sigma: &DMatrix<f64>) -> Result<CovDecomposition> {
    if sigma.nrows() != sigma.ncols() || sigma.nrows() == 0 {
        return Err(Error::DimensionMismatch("covariance must be a non-empty square matrix".into()));
    }
    check_positive_definite(sigma, None)?;
    let (values, vectors) = sorted_eigen(sigma);
    let d = values.len() as f64;
    let log_lambda = values.iter().map(|v| v.ln()).sum::<f64>() / d;
    let lambda = log_lambda.exp();
    Ok(CovDecomposition {
        lambda,
        shape: values / lambda,
        orientation: vectors,
    })
}

/// Symmetric eigendecomposition with eigenvalues in decreasing order.
///
/// Eigenvectors are sign-normalized so the first non-negligible entry is
/// positive; near-equal eigenvalues are ordered by lexicographically larger
/// eigenvector, so the identity keeps the standard basis.
pub(crate) fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = symmetrize(m.clone()).symmetric_eigen();
    let d = eig.eigenvalues.len();
    let mut cols: Vec<(f64, DVector<f64>)> = (0..d)
        .map(|j| {
            let mut v = eig.eigenvectors.column(j).into_owned();
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    v.neg_mut();
                }
            }
            (eig.eigenvalues[j], v)
        })
        .collect();
    let scale = cols.iter().map(|c| c.0.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    cols.sort_by(|a, b| {
        if (a.0 - b.0).abs() <= 1e-12 * scale {
            lexicographic(&b.1, &a.1)
        } else {
            b.0.total_cmp(&a.0)
        }
    });
    let values = DVector::from_iterator(d, cols.iter().map(|c| c.0));
    let vectors = DMatrix::from_columns(&cols.iter().map(|c| c.1.clone()).collect::<Vec<_>>());
    (values, vectors)
}

fn lexicographic(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Weighted counts, means and scatter matrices feeding the M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub nk: Vec<f64>,
    pub xbar: Vec<DVector<f64>>,
    pub scatter: Vec<DMatrix<f64>>,
}

impl SufficientStats {
    /// Statistics from responsibilities, with optional per-observation weights.
    pub fn compute(x: &DataMatrix, z: &Responsibilities, weights: Option<&[f64]>) -> Result<Self> {
        let (n, d, k) = (x.n(), x.d(), z.k());
        if z.n() != n {
            return Err(Error::DimensionMismatch(format!("{} responsibilities for {n} rows", z.n())));
        }
        if let Some(w) = weights {
            if w.len() != n {
                return Err(Error::DimensionMismatch(format!("{} weights for {n} rows", w.len())));
            }
        }
        let xs = x.values();
        let mut nk = vec![0.0; k];
        let mut xbar = Vec::with_capacity(k);
        let mut scatter = Vec::with_capacity(k);
        let mut centered = xs.clone();
        for c in 0..k {
            let mut r = z.matrix().column(c).into_owned();
            if let Some(w) = weights {
                r.zip_apply(&DVector::from_column_slice(w), |ri, wi| *ri *= wi);
            }
            nk[c] = r.sum();
            let mean = if nk[c] > 0.0 { xs.tr_mul(&r) / nk[c] } else { DVector::zeros(d) };
            for j in 0..d {
                let m = mean[j];
                centered.column_mut(j).zip_apply(&xs.column(j), |v, x| *v = x - m);
            }
            let mut weighted = centered.clone();
            for j in 0..d {
                weighted.column_mut(j).component_mul_assign(&r);
            }
            scatter.push(weighted.tr_mul(&centered));
            xbar.push(mean);
        }
        let scatter = scatter.into_iter().map(symmetrize).collect();
        Ok(Self { nk, xbar, scatter })
    }

    pub fn k(&self) -> usize {
        self.nk.len()
    }
}

/// Maximum-likelihood covariances under `code`'s constraints.
///
/// `n` is the total count used by the pooled (equal-volume) updates; for
/// ordinary data it equals `Σ nk`.
pub fn mstep_covariance(code: ModelCode, stats: &SufficientStats, n: f64) -> Result<Vec<DMatrix<f64>>> {
    if let Some(c) = stats.nk.iter().position(|&w| !(w >= MIN_COMPONENT_WEIGHT)) {
        return Err(Error::singular(Some(c), format!("effective count {:e} is empty", stats.nk[c])));
    }
    constrained_covariances(code, &stats.nk, &stats.scatter, n)
}

/// Maximizes `Σ_k −(m_k/2) log|Σ_k| − ½ tr(Σ_k⁻¹ B_k)` over the code's
/// constraint set, given counts `m_k`, scatters `B_k` and `total = Σ m_k`.
pub(crate) fn constrained_covariances(
    code: ModelCode,
    counts: &[f64],
    scatters: &[DMatrix<f64>],
    total: f64,
) -> Result<Vec<DMatrix<f64>>> {
    let k = counts.len();
    let d = scatters[0].nrows();
    let df = d as f64;
    let pooled = || scatters.iter().fold(DMatrix::zeros(d, d), |acc, w| acc + w);
    let covs: Vec<DMatrix<f64>> = match code {
        ModelCode::EII => {
            let sigma2 = pooled().trace() / (df * total);
            vec![DMatrix::identity(d, d) * sigma2; k]
        }
        ModelCode::VII => scatters
            .iter()
            .zip(counts)
            .map(|(w, &m)| DMatrix::identity(d, d) * (w.trace() / (df * m)))
            .collect(),
        ModelCode::EEI => {
            let diag = pooled().diagonal() / total;
            vec![DMatrix::from_diagonal(&diag); k]
        }
        ModelCode::VVI => scatters
            .iter()
            .zip(counts)
            .map(|(w, &m)| DMatrix::from_diagonal(&(w.diagonal() / m)))
            .collect(),
        ModelCode::EVI => {
            let diags: Vec<DVector<f64>> = scatters.iter().map(|w| w.diagonal()).collect();
            let geo: Vec<f64> = diags
                .iter()
                .enumerate()
                .map(|(c, v)| positive_geomean(v, c))
                .collect::<Result<_>>()?;
            let lambda = geo.iter().sum::<f64>() / total;
            diags
                .iter()
                .zip(&geo)
                .map(|(v, g)| DMatrix::from_diagonal(&(v * (lambda / g))))
                .collect()
        }
        ModelCode::VEI => {
            let diags: Vec<DVector<f64>> = scatters.iter().map(|w| w.diagonal()).collect();
            let (lambdas, shape) = common_shape_fixed_point(&diags, counts)?;
            lambdas
                .iter()
                .map(|&l| DMatrix::from_diagonal(&(&shape * l)))
                .collect()
        }
        ModelCode::EEE => vec![symmetrize(pooled() / total); k],
        ModelCode::EEV => {
            let eigs: Vec<(DVector<f64>, DMatrix<f64>)> = scatters.iter().map(sorted_eigen).collect();
            let summed = eigs
                .iter()
                .fold(DVector::zeros(d), |acc, (v, _)| acc + v.map(|x| x.max(0.0)));
            positive_geomean(&summed, 0)?;
            eigs.iter()
                .map(|(_, u)| symmetrize(u * DMatrix::from_diagonal(&(&summed / total)) * u.transpose()))
                .collect()
        }
        ModelCode::VEV => {
            let eigs: Vec<(DVector<f64>, DMatrix<f64>)> = scatters.iter().map(sorted_eigen).collect();
            let values: Vec<DVector<f64>> = eigs.iter().map(|(v, _)| v.map(|x| x.max(0.0))).collect();
            let (lambdas, shape) = common_shape_fixed_point(&values, counts)?;
            eigs.iter()
                .zip(&lambdas)
                .map(|((_, u), &l)| symmetrize(u * DMatrix::from_diagonal(&(&shape * l)) * u.transpose()))
                .collect()
        }
        ModelCode::VVV => scatters
            .iter()
            .zip(counts)
            .map(|(w, &m)| symmetrize(w / m))
            .collect(),
        other => return Err(Error::UnsupportedModel(other.to_string())),
    };
    for (c, s) in covs.iter().enumerate() {
        check_positive_definite(s, Some(c))?;
    }
    Ok(covs)
}

fn positive_geomean(v: &DVector<f64>, component: usize) -> Result<f64> {
    if v.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::singular(Some(component), "zero variance along an axis"));
    }
    Ok((v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp())
}

/// Alternating updates for a shape shared across components with varying
/// volumes. `values[k]` are the per-component diagonal scatter entries (or
/// eigenvalues) in the common axis order.
fn common_shape_fixed_point(values: &[DVector<f64>], counts: &[f64]) -> Result<(Vec<f64>, DVector<f64>)> {
    let d = values[0].len();
    let df = d as f64;
    let mut shape = DVector::from_element(d, 1.0);
    let volumes = |shape: &DVector<f64>| -> Vec<f64> {
        values
            .iter()
            .zip(counts)
            .map(|(v, &m)| v.component_div(shape).sum() / (df * m))
            .collect()
    };
    let criterion = |lambdas: &[f64], shape: &DVector<f64>| -> f64 {
        values
            .iter()
            .zip(counts)
            .zip(lambdas)
            .map(|((v, &m), &l)| m * df * l.ln() + v.component_div(shape).sum() / l)
            .sum()
    };
    let mut lambdas = volumes(&shape);
    let mut prev = f64::INFINITY;
    for _ in 0..INNER_MAX_ITER {
        if let Some(c) = lambdas.iter().position(|&l| !(l > 0.0)) {
            return Err(Error::singular(Some(c), "zero volume"));
        }
        let s = values
            .iter()
            .zip(&lambdas)
            .fold(DVector::zeros(d), |acc, (v, &l)| acc + v / l);
        let g = positive_geomean(&s, 0)?;
        shape = s / g;
        lambdas = volumes(&shape);
        let crit = criterion(&lambdas, &shape);
        if (prev - crit).abs() <= INNER_REL_TOL * (1.0 + crit.abs()) {
            break;
        }
        prev = crit;
    }
    if let Some(c) = lambdas.iter().position(|&l| !(l > 0.0)) {
        return Err(Error::singular(Some(c), "zero volume"));
    }
    Ok((lambdas, shape))
}

/// `Σ_k −(m_k/2) log|Σ_k| − ½ tr(Σ_k⁻¹ W_k)`: the part of the complete-data
/// log-likelihood that depends on the covariances.
pub fn covariance_objective(counts: &[f64], scatters: &[DMatrix<f64>], covs: &[DMatrix<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for (c, ((&m, w), s)) in counts.iter().zip(scatters).zip(covs).enumerate() {
        let chol = s
            .clone()
            .cholesky()
            .ok_or_else(|| Error::singular(Some(c), "Cholesky factorization failed"))?;
        let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        total += -0.5 * m * logdet - 0.5 * (chol.inverse() * w).trace();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(d, d) * 0.1
    }

    fn random_stats(rng: &mut impl Rng, d: usize, k: usize) -> SufficientStats {
        let nk: Vec<f64> = (0..k).map(|_| rng.random_range(5.0..50.0)).collect();
        SufficientStats {
            xbar: (0..k).map(|_| DVector::zeros(d)).collect(),
            scatter: nk.iter().map(|&m| random_spd(rng, d) * m).collect(),
            nk,
        }
    }

    #[test]
    fn parses_codes() {
        let vvi = parse_model_code("VVI").unwrap();
        assert_eq!(vvi.volume, Factor::Varying);
        assert_eq!(vvi.shape, Factor::Varying);
        assert_eq!(vvi.orientation, Factor::Identity);
        assert!(vvi.fitted);

        let eve = parse_model_code("EVE").unwrap();
        assert_eq!((eve.volume, eve.shape, eve.orientation), (Factor::Equal, Factor::Varying, Factor::Equal));
        assert!(!eve.fitted);

        let err = parse_model_code("ABC").unwrap_err();
        assert!(err.to_string().contains("VVV"));
    }

    #[test]
    fn free_parameter_counts() {
        assert_eq!(count_free_params(ModelCode::VVI, 3, 3), 20);
        assert_eq!(count_free_params(ModelCode::EII, 3, 1), 4);
        // VVV, d=3, K=3: 2 weights + 9 means + 3 * 6 covariance entries
        assert_eq!(count_free_params(ModelCode::VVV, 3, 3), 2 + 9 + 3 * 6);
    }

    #[test]
    fn identity_decomposes_trivially() {
        let dec = decompose_covariance(&DMatrix::identity(3, 3)).unwrap();
        assert_relative_eq!(dec.lambda, 1.0, epsilon = 1e-12);
        assert_relative_eq!(dec.shape, DVector::from_element(3, 1.0), epsilon = 1e-12);
        assert_relative_eq!(dec.orientation, DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn diagonal_decomposition_by_hand() {
        // det = 4, λ = 4^(1/2) = 2, Δ = diag(4, 1)/2
        let dec = decompose_covariance(&DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]))).unwrap();
        assert_relative_eq!(dec.lambda, 2.0, epsilon = 1e-12);
        assert_relative_eq!(dec.shape, DVector::from_vec(vec![2.0, 0.5]), epsilon = 1e-12);
        assert_relative_eq!(dec.orientation, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn non_spd_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(decompose_covariance(&m), Err(Error::Singular { .. })));
    }

    /// Four points, two per cluster, hard assignment.
    fn four_point_stats() -> (SufficientStats, [[f64; 2]; 4]) {
        let pts = [[0.0, 0.0], [2.0, 1.0], [5.0, 5.0], [6.0, 8.0]];
        let x = DataMatrix::from_rows(&pts.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap();
        let z = Responsibilities::from_partition(&[0, 0, 1, 1], 2).unwrap();
        (SufficientStats::compute(&x, &z, None).unwrap(), pts)
    }

    #[test]
    fn vvi_is_per_cluster_variance() {
        let (stats, pts) = four_point_stats();
        let covs = mstep_covariance(ModelCode::VVI, &stats, 4.0).unwrap();
        // cluster 1: mean (1, 0.5); variances ((1+1)/2, (0.25+0.25)/2)
        // cluster 2: mean (5.5, 6.5); variances ((0.25+0.25)/2, (2.25+2.25)/2)
        let expected = [[1.0, 0.25], [0.25, 2.25]];
        for c in 0..2 {
            for j in 0..2 {
                let m: f64 = (pts[2 * c][j] + pts[2 * c + 1][j]) / 2.0;
                let v = ((pts[2 * c][j] - m).powi(2) + (pts[2 * c + 1][j] - m).powi(2)) / 2.0;
                assert_relative_eq!(v, expected[c][j], epsilon = 1e-15);
                assert_relative_eq!(covs[c][(j, j)], expected[c][j], epsilon = 1e-12);
            }
            assert_eq!(covs[c][(0, 1)], 0.0);
            assert_eq!(covs[c][(1, 0)], 0.0);
        }
    }

    #[test]
    fn eee_is_pooled_scatter() {
        let (stats, _) = four_point_stats();
        let covs = mstep_covariance(ModelCode::EEE, &stats, 4.0).unwrap();
        // W1 = [[2, 1], [1, 0.5]], W2 = [[0.5, 1.5], [1.5, 4.5]]; pooled / 4
        let expected = DMatrix::from_row_slice(2, 2, &[2.5 / 4.0, 2.5 / 4.0, 2.5 / 4.0, 5.0 / 4.0]);
        assert_relative_eq!(covs[0], expected, epsilon = 1e-12);
        assert_eq!(covs[0], covs[1]);
    }

    #[test]
    fn eii_is_trace_over_nd() {
        let (stats, _) = four_point_stats();
        let covs = mstep_covariance(ModelCode::EII, &stats, 4.0).unwrap();
        // tr(W1 + W2) = 2.5 + 5 = 7.5; σ² = 7.5 / (4 * 2)
        let sigma2 = 7.5 / 8.0;
        assert_relative_eq!(covs[0], DMatrix::identity(2, 2) * sigma2, epsilon = 1e-12);
        assert_eq!(covs[0], covs[1]);
    }

    #[test]
    fn empty_component_is_singular() {
        let (mut stats, _) = four_point_stats();
        stats.nk[1] = 0.0;
        let err = mstep_covariance(ModelCode::VVV, &stats, 4.0).unwrap_err();
        assert!(matches!(err, Error::Singular { component: Some(1), .. }));
    }

    #[test]
    fn named_only_codes_have_no_mstep() {
        let (stats, _) = four_point_stats();
        assert!(matches!(
            mstep_covariance(ModelCode::EVE, &stats, 4.0),
            Err(Error::UnsupportedModel(_))
        ));
    }

    fn assert_structure(code: ModelCode, covs: &[DMatrix<f64>]) {
        let c = code.constraints();
        let d = covs[0].nrows();
        let decs: Vec<CovDecomposition> = covs.iter().map(|s| decompose_covariance(s).unwrap()).collect();
        if c.orientation == Factor::Identity {
            for s in covs {
                for i in 0..d {
                    for j in 0..d {
                        if i != j {
                            assert_eq!(s[(i, j)], 0.0, "{code} must be diagonal");
                        }
                    }
                }
            }
        }
        if c.shape == Factor::Identity {
            for s in covs {
                for i in 1..d {
                    assert_eq!(s[(i, i)], s[(0, 0)], "{code} must be isotropic");
                }
            }
        }
        if c.volume == Factor::Equal {
            for dec in &decs {
                assert_relative_eq!(dec.lambda, decs[0].lambda, max_relative = 1e-9);
            }
        }
        if c.shape == Factor::Equal {
            if c.orientation == Factor::Identity {
                // axis-aligned shapes compare in axis order, not sorted order
                let axis_shape = |s: &DMatrix<f64>| {
                    let dg = s.diagonal();
                    let g = (dg.iter().map(|v| v.ln()).sum::<f64>() / d as f64).exp();
                    dg / g
                };
                for s in covs {
                    assert_relative_eq!(axis_shape(s), axis_shape(&covs[0]), max_relative = 1e-9);
                }
            } else {
                for dec in &decs {
                    assert_relative_eq!(dec.shape, decs[0].shape, max_relative = 1e-9);
                }
            }
        }
        if matches!(code, ModelCode::EEE | ModelCode::EEI | ModelCode::EII) {
            for s in covs {
                assert_eq!(s, &covs[0]);
            }
        }
    }

    proptest! {
        #[test]
        fn decompose_compose_round_trip(seed in 0u64..1000, d in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sigma = random_spd(&mut rng, d);
            let dec = decompose_covariance(&sigma).unwrap();
            let det: f64 = dec.shape.iter().product();
            prop_assert!((det - 1.0).abs() < 1e-9);
            let utu = dec.orientation.transpose() * &dec.orientation;
            prop_assert!((utu - DMatrix::identity(d, d)).abs().max() < 1e-9);
            for w in dec.shape.as_slice().windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
            let back = dec.compose();
            prop_assert!((&back - &sigma).abs().max() <= 1e-9 * sigma.abs().max());
        }

        #[test]
        fn mstep_respects_structure(seed in 0u64..300, d in 2usize..5, k in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let stats = random_stats(&mut rng, d, k);
            let n: f64 = stats.nk.iter().sum();
            for code in ModelCode::FITTED {
                let covs = mstep_covariance(code, &stats, n).unwrap();
                prop_assert_eq!(covs.len(), k);
                assert_structure(code, &covs);
            }
        }

        #[test]
        fn vvv_dominates_constrained_codes(seed in 0u64..300, d in 2usize..5, k in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let stats = random_stats(&mut rng, d, k);
            let n: f64 = stats.nk.iter().sum();
            let vvv = covariance_objective(&stats.nk, &stats.scatter,
                &mstep_covariance(ModelCode::VVV, &stats, n).unwrap()).unwrap();
            for code in ModelCode::FITTED {
                let value = covariance_objective(&stats.nk, &stats.scatter,
                    &mstep_covariance(code, &stats, n).unwrap()).unwrap();
                prop_assert!(vvv >= value - 1e-9 * vvv.abs(), "{} beats VVV: {} > {}", code, value, vvv);
            }
        }

        #[test]
        fn parameter_count_monotone(d in 2usize..8, k in 2usize..10) {
            let eii = count_free_params(ModelCode::EII, d, k);
            let vvi = count_free_params(ModelCode::VVI, d, k);
            let vvv = count_free_params(ModelCode::VVV, d, k);
            prop_assert!(eii <= vvi && vvi <= vvv);
        }
    }

    /// Each constrained M-step should beat random feasible perturbations of
    /// its own solution.
    #[test]
    fn iterative_codes_are_local_maxima() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let stats = random_stats(&mut rng, 3, 3);
        let n: f64 = stats.nk.iter().sum();
        for code in [ModelCode::VEI, ModelCode::VEV] {
            let covs = mstep_covariance(code, &stats, n).unwrap();
            let best = covariance_objective(&stats.nk, &stats.scatter, &covs).unwrap();
            for _ in 0..50 {
                // rescale volumes independently and the shared shape jointly
                let tweak = DVector::from_fn(3, |_, _| rng.random_range(0.97..1.03));
                let g = (tweak.iter().map(|v: &f64| v.ln()).sum::<f64>() / 3.0).exp();
                let perturbed: Vec<DMatrix<f64>> = covs
                    .iter()
                    .map(|s| {
                        let vol = rng.random_range(0.97..1.03);
                        if code == ModelCode::VEI {
                            DMatrix::from_diagonal(&(s.diagonal().component_mul(&tweak) * (vol / g)))
                        } else {
                            let mut dc = decompose_covariance(s).unwrap();
                            dc.lambda *= vol;
                            dc.shape = dc.shape.component_mul(&tweak) / g;
                            dc.compose()
                        }
                    })
                    .collect();
                let value = covariance_objective(&stats.nk, &stats.scatter, &perturbed).unwrap();
                assert!(value <= best + 1e-9 * best.abs(), "{code}: {value} > {best}");
            }
        }
    }
}
