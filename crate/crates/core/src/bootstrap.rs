//! Nonparametric, parametric and weighted-likelihood bootstrap for fitted
//! mixtures, with percentile confidence intervals.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::quantile_sorted;
use crate::em::{fit_from, EmControl};
use crate::error::{Error, Result};
use crate::types::{align_parameters, DataMatrix, FitResult, MixtureParameters};

/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BootstrapType {
    /// Rows drawn with replacement.
    Bs,
    /// Rows simulated from the fitted mixture.
    Pb,
    /// Dirichlet observation weights.
    Wlbs,
}

impl std::str::FromStr for BootstrapType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bs" => Ok(Self::Bs),
            "pb" => Ok(Self::Pb),
            "wlbs" => Ok(Self::Wlbs),
            _ => Err(Error::InvalidArgument(format!("bootstrap type `{s}`; expected bs, pb or wlbs"))),
        }
    }
}

impl std::fmt::Display for BootstrapType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Bs => "bs",
            Self::Pb => "pb",
            Self::Wlbs => "wlbs",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Resample {
    Rows(DataMatrix),
    Weights(Vec<f64>),
}

/// Draws `n` rows from a mixture: component by `pro`, then a Gaussian draw.
pub fn simulate<R: Rng + ?Sized>(params: &MixtureParameters, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let d = params.d();
    let chol: Vec<DMatrix<f64>> = params
        .cov
        .iter()
        .enumerate()
        .map(|(c, s)| {
            s.clone()
                .cholesky()
                .map(|ch| ch.unpack())
                .ok_or_else(|| Error::singular(Some(c), "covariance is not positive definite"))
        })
        .collect::<Result<_>>()?;
    let pick = WeightedIndex::new(&params.pro)
        .map_err(|e| Error::InvalidArgument(format!("mixing proportions: {e}")))?;
    let mut out = DMatrix::zeros(n, d);
    for i in 0..n {
        let c = pick.sample(rng);
        let e = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        let draw = &params.mean[c] + &chol[c] * e;
        out.row_mut(i).copy_from(&draw.transpose());
    }
    Ok(out)
}

/// One bootstrap perturbation of the data.
pub fn resample<R: Rng + ?Sized>(x: &DataMatrix, fit: &FitResult, ty: BootstrapType, rng: &mut R) -> Result<Resample> {
    let n = x.n();
    match ty {
        BootstrapType::Bs => {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            Ok(Resample::Rows(x.select_rows(&idx)))
        }
        BootstrapType::Pb => {
            let values = simulate(&fit.params, n, rng)?;
            Ok(Resample::Rows(DataMatrix::new(values, x.column_names().to_vec())?))
        }
        BootstrapType::Wlbs => {
            let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = draws.iter().sum();
            Ok(Resample::Weights(draws.iter().map(|w| w * n as f64 / total).collect()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRun {
    #[serde(rename = "type")]
    pub ty: BootstrapType,
    pub nboot: usize,
    pub seed: u64,
    pub n_failed: usize,
    pub column_names: Vec<String>,
    pub reference: MixtureParameters,
    /// Successful replicates, label-aligned to `reference`, in replicate order.
    pub replicates: Vec<MixtureParameters>,
    /// Replicate index of each entry in `replicates`.
    pub replicate_index: Vec<usize>,
    /// Permutation applied to each replicate during alignment.
    pub permutations: Vec<Vec<usize>>,
}

fn replicate_rng(seed: u64, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    rng
}

fn one_replicate(x: &DataMatrix, fit: &FitResult, ty: BootstrapType, seed: u64, b: usize) -> Result<MixtureParameters> {
    let mut rng = replicate_rng(seed, b);
    let control = EmControl::with_seed(seed);
    let prior = fit.prior_used.as_ref();
    let refit = match resample(x, fit, ty, &mut rng)? {
        Resample::Rows(xb) => fit_from(&xb, &fit.model, prior, &fit.params, None, &control)?,
        Resample::Weights(w) => fit_from(x, &fit.model, prior, &fit.params, Some(&w), &control)?,
    };
    Ok(refit.params)
}

/// Refits `fit` on `nboot` perturbed datasets. Each replicate starts EM from
/// the reference parameters and is then label-aligned to them.
pub fn bootstrap_fit(x: &DataMatrix, fit: &FitResult, ty: BootstrapType, nboot: usize, seed: u64) -> Result<BootstrapRun> {
    if nboot == 0 {
        return Err(Error::InvalidArgument("nboot must be at least 1".into()));
    }
    if x.d() != fit.params.d() || x.n() != fit.n {
        return Err(Error::DimensionMismatch("data do not match the fitted model".into()));
    }
    let results: Vec<Result<MixtureParameters>> =
        (0..nboot).into_par_iter().map(|b| one_replicate(x, fit, ty, seed, b)).collect();
    let mut replicates = Vec::with_capacity(nboot);
    let mut replicate_index = Vec::with_capacity(nboot);
    let mut permutations = Vec::with_capacity(nboot);
    let mut n_failed = 0;
    for (b, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => {
                let (aligned, perm) = align_parameters(&fit.params, &p)?;
                replicates.push(aligned);
                replicate_index.push(b);
                permutations.push(perm);
            }
            Err(_) => n_failed += 1,
        }
    }
    if n_failed as f64 > MAX_FAILURE_FRACTION * nboot as f64 {
        return Err(Error::BootstrapFragile { failed: n_failed, nboot });
    }
    Ok(BootstrapRun {
        ty,
        nboot,
        seed,
        n_failed,
        column_names: x.column_names().to_vec(),
        reference: fit.params.clone(),
        replicates,
        replicate_index,
        permutations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameter {
    Pro,
    Mean,
    Var,
}

impl Parameter {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pro => "pro",
            Self::Mean => "mean",
            Self::Var => "var",
        }
    }
}

/// One scalar parameter: the proportion, a mean entry or a covariance diagonal entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterKey {
    pub parameter: Parameter,
    /// 1-based component.
    pub component: usize,
    pub variable: Option<String>,
}

fn scalar_parameters(p: &MixtureParameters, names: &[String]) -> Vec<(ParameterKey, f64)> {
    let mut out = Vec::new();
    for c in 0..p.k() {
        out.push((
            ParameterKey {
                parameter: Parameter::Pro,
                component: c + 1,
                variable: None,
            },
            p.pro[c],
        ));
    }
    for kind in [Parameter::Mean, Parameter::Var] {
        for c in 0..p.k() {
            for (j, name) in names.iter().enumerate() {
                let value = match kind {
                    Parameter::Mean => p.mean[c][j],
                    _ => p.cov[c][(j, j)],
                };
                let key = ParameterKey {
                    parameter: kind,
                    component: c + 1,
                    variable: Some(name.clone()),
                };
                out.push((key, value));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiRow {
    #[serde(flatten)]
    pub key: ParameterKey,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Percentile intervals at `(1 − level)/2` and `1 − (1 − level)/2`, using
/// linear interpolation between order statistics.
pub fn percentile_ci(run: &BootstrapRun, level: f64) -> Result<Vec<CiRow>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level {level} outside (0, 1)")));
    }
    if run.replicates.len() < 2 {
        return Err(Error::InvalidArgument("percentile intervals need at least 2 replicates".into()));
    }
    let alpha = (1.0 - level) / 2.0;
    let reference = scalar_parameters(&run.reference, &run.column_names);
    let draws: Vec<Vec<f64>> = run
        .replicates
        .iter()
        .map(|p| scalar_parameters(p, &run.column_names).into_iter().map(|(_, v)| v).collect())
        .collect();
    Ok(reference
        .into_iter()
        .enumerate()
        .map(|(i, (key, estimate))| {
            let mut v: Vec<f64> = draws.iter().map(|d| d[i]).collect();
            v.sort_by(f64::total_cmp);
            CiRow {
                key,
                estimate,
                lower: quantile_sorted(&v, alpha),
                upper: quantile_sorted(&v, 1.0 - alpha),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    /// 0-based replicate index.
    pub replicate: usize,
    #[serde(flatten)]
    pub key: ParameterKey,
    pub value: f64,
}

/// Long-format replicate draws, one row per (replicate, scalar parameter).
pub fn replicate_rows(run: &BootstrapRun) -> Vec<ReplicateRow> {
    run.replicates
        .iter()
        .zip(&run.replicate_index)
        .flat_map(|(p, &b)| {
            scalar_parameters(p, &run.column_names)
                .into_iter()
                .map(move |(key, value)| ReplicateRow { replicate: b, key, value })
        })
        .collect()
}

/// Mean Euclidean distance between replicate means and reference means.
pub fn mean_alignment_distance(reference: &MixtureParameters, replicates: &[MixtureParameters]) -> f64 {
    let total: f64 = replicates
        .iter()
        .map(|p| p.mean.iter().zip(&reference.mean).map(|(a, b)| (a - b).norm()).sum::<f64>())
        .sum();
    total / (replicates.len() * reference.k()).max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covmodels::ModelCode;
    use crate::em::fit;
    use crate::prior::default_prior;
    use crate::types::ModelSpec;
    use approx::assert_relative_eq;

    fn two_blobs(seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for center in [[0.0, 0.0], [6.0, 3.0]] {
            for _ in 0..60 {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                rows.push(vec![center[0] + a, center[1] + 0.5 * b]);
            }
        }
        DataMatrix::from_rows(&rows).unwrap()
    }

    fn reference_fit(x: &DataMatrix) -> FitResult {
        let spec = ModelSpec::new(ModelCode::VVI, 2).unwrap();
        let prior = default_prior(x, 2).unwrap();
        fit(x, &spec, Some(&prior), &EmControl::with_seed(1)).unwrap()
    }

    fn run_with(replicates: Vec<MixtureParameters>) -> BootstrapRun {
        BootstrapRun {
            ty: BootstrapType::Bs,
            nboot: replicates.len(),
            seed: 0,
            n_failed: 0,
            column_names: vec!["a".into()],
            reference: replicates[0].clone(),
            replicate_index: (0..replicates.len()).collect(),
            permutations: vec![vec![0]; replicates.len()],
            replicates,
        }
    }

    fn scalar(v: f64) -> MixtureParameters {
        MixtureParameters {
            pro: vec![1.0],
            mean: vec![DVector::from_element(1, v)],
            cov: vec![DMatrix::from_element(1, 1, 1.0)],
        }
    }

    #[test]
    fn bs_keeps_row_count() {
        let x = two_blobs(3);
        let f = reference_fit(&x);
        match resample(&x, &f, BootstrapType::Bs, &mut replicate_rng(0, 0)).unwrap() {
            Resample::Rows(xb) => assert_eq!((xb.n(), xb.d()), (x.n(), x.d())),
            Resample::Weights(_) => panic!("expected rows"),
        }
    }

    #[test]
    fn wlbs_weights_are_positive_and_sum_to_n() {
        let x = two_blobs(3);
        let f = reference_fit(&x);
        match resample(&x, &f, BootstrapType::Wlbs, &mut replicate_rng(9, 4)).unwrap() {
            Resample::Weights(w) => {
                assert_eq!(w.len(), x.n());
                assert!(w.iter().all(|&v| v > 0.0));
                assert!((w.iter().sum::<f64>() - x.n() as f64).abs() < 1e-9);
            }
            Resample::Rows(_) => panic!("expected weights"),
        }
    }

    #[test]
    fn pb_sample_mean_converges() {
        let params = MixtureParameters {
            pro: vec![1.0],
            mean: vec![DVector::from_vec(vec![1.5, -2.0])],
            cov: vec![DMatrix::identity(2, 2)],
        };
        let draws = simulate(&params, 100_000, &mut replicate_rng(5, 0)).unwrap();
        for j in 0..2 {
            let m = draws.column(j).mean();
            assert!((m - params.mean[0][j]).abs() < 0.02, "column {j}: {m}");
        }
    }

    #[test]
    fn refit_from_reference_is_a_fixed_point() {
        let x = two_blobs(11);
        let f = reference_fit(&x);
        let again = fit_from(&x, &f.model, f.prior_used.as_ref(), &f.params, None, &EmControl::default()).unwrap();
        for c in 0..2 {
            assert!((again.params.pro[c] - f.params.pro[c]).abs() < 1e-6);
            assert!((&again.params.mean[c] - &f.params.mean[c]).norm() < 1e-5);
        }
    }

    #[test]
    fn percentile_of_known_sequence() {
        let reps: Vec<MixtureParameters> = (1..=1000).map(|i| scalar(i as f64 / 1000.0)).collect();
        let ci = percentile_ci(&run_with(reps), 0.95).unwrap();
        let mean_row = ci.iter().find(|r| r.key.parameter == Parameter::Mean).unwrap();
        // type 7: h = 999 * 0.025 = 24.975 -> 0.025 + 0.975 * 0.001
        assert_relative_eq!(mean_row.lower, 0.025975, epsilon = 1e-12);
        assert_relative_eq!(mean_row.upper, 0.975025, epsilon = 1e-12);
    }

    #[test]
    fn constant_replicates_give_degenerate_interval() {
        let ci = percentile_ci(&run_with(vec![scalar(2.5); 50]), 0.9).unwrap();
        for row in ci {
            assert_eq!(row.lower, row.upper);
        }
        assert!(percentile_ci(&run_with(vec![scalar(1.0)]), 0.95).is_err());
    }

    #[test]
    fn runs_are_reproducible_and_aligned() {
        let x = two_blobs(21);
        let f = reference_fit(&x);
        for ty in [BootstrapType::Bs, BootstrapType::Pb, BootstrapType::Wlbs] {
            let a = bootstrap_fit(&x, &f, ty, 12, 77).unwrap();
            let b = bootstrap_fit(&x, &f, ty, 12, 77).unwrap();
            assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
            assert_eq!(a.replicates.len() + a.n_failed, 12);
            assert_eq!(replicate_rows(&a).len(), a.replicates.len() * (2 + 2 * 2 * 2));
        }
    }

    #[test]
    fn alignment_reduces_distance() {
        let x = two_blobs(5);
        let f = reference_fit(&x);
        let run = bootstrap_fit(&x, &f, BootstrapType::Bs, 8, 3).unwrap();
        // relabel replicates adversarially, then realign
        let swapped: Vec<MixtureParameters> = run.replicates.iter().map(|p| p.permuted(&[1, 0])).collect();
        let realigned: Vec<MixtureParameters> = swapped
            .iter()
            .map(|p| align_parameters(&f.params, p).unwrap().0)
            .collect();
        assert!(
            mean_alignment_distance(&f.params, &realigned) < mean_alignment_distance(&f.params, &swapped)
        );
    }
}
