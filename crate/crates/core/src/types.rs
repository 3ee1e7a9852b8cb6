//! Domain types shared by every stage of the pipeline, plus label alignment.
//!
//! Component labels exposed to users (`FitResult::classification`) are
//! 1-based, matching the way mixture software prints clustering tables.
//! Internal partitions and permutations are 0-based indices.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covmodels::ModelCode;
use crate::error::{Error, Result};
use crate::prior::PriorSpec;

/// Absolute tolerance used for probability sums.
pub const PROB_TOL: f64 = 1e-12;

/// Relative threshold on the smallest eigenvalue (scaled by trace/d) below
/// which a covariance is treated as singular.
pub const PD_REL_TOL: f64 = 1e-10;

/// Largest K for which label matching enumerates every permutation.
pub const EXHAUSTIVE_MATCH_MAX_K: usize = 8;

/// n × d table of continuous observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    #[serde(with = "serde_mat::rows")]
    values: DMatrix<f64>,
    column_names: Vec<String>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, column_names: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Data("data matrix must have at least one row and one column".into()));
        }
        if values.ncols() != column_names.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns but {} column names",
                values.ncols(),
                column_names.len()
            )));
        }
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (row, col) = (idx % values.nrows(), idx / values.nrows());
            return Err(Error::Data(format!(
                "non-finite value at row {}, column `{}`",
                row + 1,
                column_names[col]
            )));
        }
        Ok(Self { values, column_names })
    }

    /// Builds a matrix from row vectors, naming columns `X1..Xd`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("rows have unequal lengths".into()));
        }
        let values = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        let names = (1..=d).map(|j| format!("X{j}")).collect();
        Self::new(values, names)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }

    /// New matrix made of the given rows (repetitions allowed).
    pub fn select_rows(&self, idx: &[usize]) -> DataMatrix {
        let values = DMatrix::from_fn(idx.len(), self.d(), |i, j| self.values[(idx[i], j)]);
        DataMatrix {
            values,
            column_names: self.column_names.clone(),
        }
    }

    pub fn column_means(&self) -> DVector<f64> {
        DVector::from_fn(self.d(), |j, _| self.values.column(j).mean())
    }

    /// Sample covariance with denominator n.
    pub fn covariance_mle(&self) -> DMatrix<f64> {
        let mean = self.column_means();
        let n = self.n() as f64;
        let mut s = DMatrix::zeros(self.d(), self.d());
        for i in 0..self.n() {
            let r = self.row(i) - &mean;
            s.ger(1.0, &r, &r, 1.0);
        }
        s / n
    }
}

/// Covariance parameterization plus component count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub code: ModelCode,
    pub k: usize,
}

impl ModelSpec {
    pub fn new(code: ModelCode, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("number of components must be at least 1".into()));
        }
        Ok(Self { code, k })
    }
}

impl std::fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{}", self.code, self.k)
    }
}

/// Mixing proportions, component means and covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParameters {
    pub pro: Vec<f64>,
    #[serde(with = "serde_mat::vectors")]
    pub mean: Vec<DVector<f64>>,
    #[serde(with = "serde_mat::matrices")]
    pub cov: Vec<DMatrix<f64>>,
}

impl MixtureParameters {
    pub fn k(&self) -> usize {
        self.pro.len()
    }

    pub fn d(&self) -> usize {
        self.mean.first().map_or(0, DVector::len)
    }

    /// Checks proportions, shapes, symmetry and positive definiteness.
    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 || self.mean.len() != k || self.cov.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "{} proportions, {} means, {} covariances",
                k,
                self.mean.len(),
                self.cov.len()
            )));
        }
        let d = self.d();
        if self.pro.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidArgument("mixing proportions must be positive".into()));
        }
        let total: f64 = self.pro.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "mixing proportions sum to {total}, not 1"
            )));
        }
        for (c, (m, s)) in self.mean.iter().zip(&self.cov).enumerate() {
            if m.len() != d || s.nrows() != d || s.ncols() != d {
                return Err(Error::DimensionMismatch(format!("component {} has wrong shape", c + 1)));
            }
            check_positive_definite(s, Some(c))?;
        }
        Ok(())
    }

    /// Component `j` of the result is component `perm[j]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> MixtureParameters {
        MixtureParameters {
            pro: perm.iter().map(|&p| self.pro[p]).collect(),
            mean: perm.iter().map(|&p| self.mean[p].clone()).collect(),
            cov: perm.iter().map(|&p| self.cov[p].clone()).collect(),
        }
    }
}

/// Rejects non-symmetric matrices and those whose smallest eigenvalue falls
/// below `PD_REL_TOL * trace / d`.
pub fn check_positive_definite(s: &DMatrix<f64>, component: Option<usize>) -> Result<()> {
    let d = s.nrows();
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::singular(component, "non-finite covariance entry"));
    }
    let scale = s.abs().max().max(f64::MIN_POSITIVE);
    if (s - s.transpose()).abs().max() > 1e-10 * scale {
        return Err(Error::singular(component, "covariance is not symmetric"));
    }
    let trace = s.trace();
    if !(trace > 0.0) {
        return Err(Error::singular(component, "covariance has non-positive trace"));
    }
    let min_eig = s.clone().symmetric_eigenvalues().min();
    if !(min_eig > PD_REL_TOL * trace / d as f64) {
        return Err(Error::singular(
            component,
            format!("smallest eigenvalue {min_eig:e} relative to trace {trace:e}"),
        ));
    }
    Ok(())
}

/// n × K row-stochastic posterior membership probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Responsibilities {
    #[serde(with = "serde_mat::rows")]
    z: DMatrix<f64>,
}

impl Responsibilities {
    pub fn new(z: DMatrix<f64>) -> Result<Self> {
        if z.nrows() == 0 || z.ncols() == 0 {
            return Err(Error::DimensionMismatch("empty responsibility table".into()));
        }
        for (i, row) in z.row_iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {} has invalid probabilities", i + 1)));
            }
            let s = row.sum();
            if (s - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidArgument(format!("row {} sums to {s}", i + 1)));
            }
        }
        Ok(Self { z })
    }

    /// Hard 0/1 responsibilities from 0-based component indices.
    pub fn from_partition(partition: &[usize], k: usize) -> Result<Self> {
        if let Some(&bad) = partition.iter().find(|&&c| c >= k) {
            return Err(Error::InvalidArgument(format!("component index {bad} out of range for K={k}")));
        }
        let z = DMatrix::from_fn(partition.len(), k, |i, c| if partition[i] == c { 1.0 } else { 0.0 });
        Self::new(z)
    }

    pub(crate) fn from_raw(z: DMatrix<f64>) -> Self {
        Self { z }
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.z[(i, k)]
    }

    /// True when every entry is exactly 0 or 1.
    pub fn is_hard(&self) -> bool {
        self.z.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    /// Column `j` of the result is column `perm[j]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Responsibilities {
        let z = DMatrix::from_fn(self.n(), perm.len(), |i, j| self.z[(i, perm[j])]);
        Responsibilities { z }
    }

    /// Rows reordered so that row `i` of the result is row `order[i]` of `self`.
    pub fn select_rows(&self, order: &[usize]) -> Responsibilities {
        let z = DMatrix::from_fn(order.len(), self.k(), |i, c| self.z[(order[i], c)]);
        Responsibilities { z }
    }
}

/// Converged mixture fit together with its criteria and classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelSpec,
    pub n: usize,
    pub params: MixtureParameters,
    /// Log-likelihood at the estimates (at the posterior mode when a prior was used).
    pub loglik: f64,
    /// Final value of the monitored objective (log-likelihood plus log-prior).
    pub objective: f64,
    pub df: usize,
    pub bic: f64,
    pub icl: f64,
    pub z: Responsibilities,
    /// MAP labels in `1..=K`.
    pub classification: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub prior_used: Option<PriorSpec>,
    /// Index of the restart chain that produced this fit.
    pub restart: usize,
    pub objective_trace: Vec<f64>,
}

impl FitResult {
    /// Component sizes of the MAP partition.
    pub fn clustering_table(&self) -> Vec<usize> {
        let mut counts = vec![0; self.model.k];
        for &label in &self.classification {
            counts[label - 1] += 1;
        }
        counts
    }

    /// Relabels components so that new component `j` is old component `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> FitResult {
        let mut inverse = vec![0; perm.len()];
        for (j, &p) in perm.iter().enumerate() {
            inverse[p] = j;
        }
        FitResult {
            params: self.params.permuted(perm),
            z: self.z.permuted(perm),
            classification: self.classification.iter().map(|&l| inverse[l - 1] + 1).collect(),
            ..self.clone()
        }
    }
}

fn total_distance(reference: &[DVector<f64>], candidate: &[DVector<f64>], perm: &[usize]) -> f64 {
    perm.iter()
        .enumerate()
        .map(|(j, &p)| (&reference[j] - &candidate[p]).norm())
        .sum()
}

/// Permutation matching candidate components to reference components by
/// minimum total Euclidean distance between means.
///
/// Returns `perm` with candidate component `perm[j]` matched to reference `j`.
/// Exhaustive for K ≤ 8, greedy closest-pair matching above that.
pub fn match_components(reference: &[DVector<f64>], candidate: &[DVector<f64>]) -> Result<Vec<usize>> {
    let k = reference.len();
    if candidate.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "reference has {k} components, candidate has {}",
            candidate.len()
        )));
    }
    if reference.iter().chain(candidate).any(|m| m.len() != reference[0].len()) {
        return Err(Error::DimensionMismatch("component means differ in dimension".into()));
    }
    if k <= EXHAUSTIVE_MATCH_MAX_K {
        let mut best: Vec<usize> = (0..k).collect();
        let mut best_cost = total_distance(reference, candidate, &best);
        for perm in (0..k).permutations(k) {
            let cost = total_distance(reference, candidate, &perm);
            if cost < best_cost {
                best_cost = cost;
                best = perm;
            }
        }
        return Ok(best);
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(k * k);
    for (j, r) in reference.iter().enumerate() {
        for (c, m) in candidate.iter().enumerate() {
            pairs.push(((r - m).norm(), j, c));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut perm = vec![usize::MAX; k];
    let mut used = vec![false; k];
    for (_, j, c) in pairs {
        if perm[j] == usize::MAX && !used[c] {
            perm[j] = c;
            used[c] = true;
        }
    }
    Ok(perm)
}

/// Returns `candidate` with its components permuted to best match `reference`.
pub fn align_labels(reference: &MixtureParameters, candidate: &FitResult) -> Result<FitResult> {
    if reference.k() != candidate.params.k() || reference.d() != candidate.params.d() {
        return Err(Error::DimensionMismatch(format!(
            "reference is K={}, d={}; candidate is K={}, d={}",
            reference.k(),
            reference.d(),
            candidate.params.k(),
            candidate.params.d()
        )));
    }
    let perm = match_components(&reference.mean, &candidate.params.mean)?;
    Ok(candidate.permuted(&perm))
}

/// Parameter-only variant of [`align_labels`]; also returns the permutation used.
pub fn align_parameters(
    reference: &MixtureParameters,
    candidate: &MixtureParameters,
) -> Result<(MixtureParameters, Vec<usize>)> {
    let perm = match_components(&reference.mean, &candidate.mean)?;
    Ok((candidate.permuted(&perm), perm))
}

/// Nested-`Vec` serde representations for nalgebra containers, so JSON
/// artifacts read naturally (rows of numbers rather than flat column-major data).
pub(crate) mod serde_mat {
    use nalgebra::{DMatrix, DVector};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn from_rows<E: serde::de::Error>(rows: Vec<Vec<f64>>) -> Result<DMatrix<f64>, E> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(E::custom("ragged matrix"));
        }
        Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }

    pub mod rows {
        use super::*;

        pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
            to_rows(m).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
            from_rows(Vec::<Vec<f64>>::deserialize(d)?)
        }
    }

    pub mod vector {
        use super::*;

        pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
            v.as_slice().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
            Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
        }
    }

    pub mod vectors {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|x| x.as_slice().to_vec()).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<f64>>, D::Error> {
            Ok(Vec::<Vec<f64>>::deserialize(d)?.into_iter().map(DVector::from_vec).collect())
        }
    }

    pub mod matrices {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
            Vec::<Vec<Vec<f64>>>::deserialize(d)?.into_iter().map(from_rows).collect()
        }
    }

    pub mod matrix {
        use super::*;

        pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
            to_rows(m).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
            from_rows(Vec::<Vec<f64>>::deserialize(d)?)
        }
    }
}
