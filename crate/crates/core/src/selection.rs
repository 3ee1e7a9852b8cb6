//! Information criteria and the model × K grid search.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covmodels::{count_free_params, ModelCode};
use crate::em::{fit, EmControl};
use crate::error::{Error, Result};
use crate::prior::PriorControl;
use crate::types::{DataMatrix, FitResult, ModelSpec, Responsibilities};

/// Default share below which a component is reported as small.
pub const SMALL_CLASS_THRESHOLD: f64 = 0.05;

/// `2·loglik − df·log(n)`; larger is better.
pub fn bic(loglik: f64, df: usize, n: usize) -> f64 {
    2.0 * loglik - df as f64 * (n as f64).ln()
}

/// BIC penalized by the hard-assignment classification log-likelihood.
///
/// `labels` are 1-based MAP labels.
pub fn icl(bic: f64, z: &Responsibilities, labels: &[usize]) -> Result<f64> {
    if labels.len() != z.n() {
        return Err(Error::DimensionMismatch(format!("{} labels for {} rows", labels.len(), z.n())));
    }
    let mut penalty = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label == 0 || label > z.k() {
            return Err(Error::InvalidArgument(format!("label {label} out of range at row {}", i + 1)));
        }
        let p = z.get(i, label - 1);
        if p <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "row {} has zero probability for its assigned component",
                i + 1
            )));
        }
        penalty += p.ln();
    }
    Ok(bic + 2.0 * penalty)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub code: ModelCode,
    pub k: usize,
    pub bic: Option<f64>,
    pub icl: Option<f64>,
    pub loglik: Option<f64>,
    pub df: usize,
    pub converged: bool,
    pub available: bool,
    /// Why the cell is unavailable, if it is.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicDiff {
    pub code: ModelCode,
    pub k: usize,
    pub bic: f64,
    pub diff: f64,
}

/// Grid results ranked by BIC (unavailable cells last, in grid order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTable {
    pub n: usize,
    pub entries: Vec<SelectionEntry>,
    /// Index into `entries` of the highest-BIC eligible cell.
    pub best: Option<usize>,
    /// Top three eligible cells with their BIC difference to the best.
    pub bic_diffs: Vec<BicDiff>,
    pub include_nonconverged: bool,
}

impl SelectionTable {
    pub fn best_entry(&self) -> Option<&SelectionEntry> {
        self.best.map(|i| &self.entries[i])
    }

    /// Long-format `(code, K, BIC)` series for plotting one curve per code.
    pub fn bic_curves(&self) -> Vec<(ModelCode, usize, Option<f64>)> {
        let mut rows: Vec<(ModelCode, usize, Option<f64>)> =
            self.entries.iter().map(|e| (e.code, e.k, e.bic)).collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        rows
    }

    fn eligible(entry: &SelectionEntry, include_nonconverged: bool) -> bool {
        entry.available && entry.bic.is_some() && (entry.converged || include_nonconverged)
    }
}

/// Options for [`grid_search`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub codes: Vec<ModelCode>,
    pub k_range: RangeInclusive<usize>,
    pub prior: Option<PriorControl>,
    pub control: EmControl,
    pub include_nonconverged: bool,
}

impl GridOptions {
    pub fn new(codes: Vec<ModelCode>, k_range: RangeInclusive<usize>) -> Self {
        Self {
            codes,
            k_range,
            prior: None,
            control: EmControl::default(),
            include_nonconverged: false,
        }
    }
}

fn fit_cell(x: &DataMatrix, code: ModelCode, k: usize, opts: &GridOptions) -> Result<FitResult> {
    let spec = ModelSpec::new(code, k)?;
    let prior = opts.prior.as_ref().map(|p| p.resolve(x, k)).transpose()?;
    fit(x, &spec, prior.as_ref(), &opts.control)
}

/// Fits every (code, K) cell; failures and named-only codes become unavailable entries.
pub fn grid_search(x: &DataMatrix, opts: &GridOptions) -> Result<SelectionTable> {
    let (lo, hi) = (*opts.k_range.start(), *opts.k_range.end());
    if lo == 0 || lo > hi || hi > x.n() {
        return Err(Error::InvalidArgument(format!(
            "K range {lo}..{hi} must be non-empty and within 1..{}",
            x.n()
        )));
    }
    if opts.codes.is_empty() {
        return Err(Error::InvalidArgument("no model codes given".into()));
    }
    let mut codes = opts.codes.clone();
    codes.sort();
    codes.dedup();
    let cells: Vec<(ModelCode, usize)> = codes.iter().flat_map(|&c| (lo..=hi).map(move |k| (c, k))).collect();
    let d = x.d();
    let entries: Vec<SelectionEntry> = cells
        .par_iter()
        .map(|&(code, k)| {
            let df = count_free_params(code, d, k);
            let unavailable = |note: String| SelectionEntry {
                code,
                k,
                bic: None,
                icl: None,
                loglik: None,
                df,
                converged: false,
                available: false,
                note: Some(note),
            };
            if !code.is_fitted() {
                return unavailable("not fitted by this library".into());
            }
            match fit_cell(x, code, k, opts) {
                Ok(f) => SelectionEntry {
                    code,
                    k,
                    bic: Some(f.bic),
                    icl: Some(f.icl),
                    loglik: Some(f.loglik),
                    df,
                    converged: f.converged,
                    available: true,
                    note: None,
                },
                Err(e) => unavailable(e.to_string()),
            }
        })
        .collect();
    Ok(rank(x.n(), entries, opts.include_nonconverged))
}

fn rank(n: usize, mut entries: Vec<SelectionEntry>, include_nonconverged: bool) -> SelectionTable {
    // stable sort: eligible by BIC descending, then everything else in grid order
    entries.sort_by(|a, b| {
        let ea = SelectionTable::eligible(a, include_nonconverged);
        let eb = SelectionTable::eligible(b, include_nonconverged);
        match (ea, eb) {
            (true, true) => b.bic.unwrap().total_cmp(&a.bic.unwrap()),
            (true, false) => std::cmp::Ordering::Less,
            (false, true) => std::cmp::Ordering::Greater,
            (false, false) => std::cmp::Ordering::Equal,
        }
    });
    let eligible: Vec<usize> = (0..entries.len())
        .filter(|&i| SelectionTable::eligible(&entries[i], include_nonconverged))
        .collect();
    let best = eligible.first().copied();
    let bic_diffs = match best {
        Some(b) => {
            let top = entries[b].bic.unwrap();
            eligible
                .iter()
                .take(3)
                .map(|&i| BicDiff {
                    code: entries[i].code,
                    k: entries[i].k,
                    bic: entries[i].bic.unwrap(),
                    diff: entries[i].bic.unwrap() - top,
                })
                .collect()
        }
        None => Vec::new(),
    };
    SelectionTable {
        n,
        entries,
        best,
        bic_diffs,
        include_nonconverged,
    }
}

/// 0-based components whose share of the MAP partition is below `threshold`.
pub fn small_class_warning(result: &FitResult, threshold: f64) -> Vec<usize> {
    let n = result.classification.len().max(1) as f64;
    result
        .clustering_table()
        .iter()
        .enumerate()
        .filter(|(_, &count)| (count as f64) / n < threshold)
        .map(|(c, _)| c)
        .collect()
}
