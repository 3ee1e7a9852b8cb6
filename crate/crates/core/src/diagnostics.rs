//! Classification-quality diagnostics: normalized entropy and average
//! posterior probabilities (AvePP).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FitResult, Responsibilities};

pub const AVEPP_CUTOFF: f64 = 0.8;
/// Entropy below this is reported, never treated as a failure.
pub const ENTROPY_ADVISORY: f64 = 0.6;
pub const HISTOGRAM_BINS: usize = 21;
pub const HISTOGRAM_RANGE: (f64, f64) = (0.0, 1.05);

fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// `1 + Σ_i Σ_k z_ik log z_ik / (n log K)`; defined as 1 when K = 1.
pub fn entropy_total(z: &Responsibilities) -> f64 {
    let k = z.k();
    if k == 1 {
        return 1.0;
    }
    let sum: f64 = z.matrix().iter().map(|&p| xlogx(p)).sum();
    1.0 + sum / (z.n() as f64 * (k as f64).ln())
}

/// Count, mean, standard deviation (n − 1 denominator) and range of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    /// 1-based class label.
    pub class: usize,
    pub count: usize,
    pub mean: f64,
    pub sd: Option<f64>,
    pub min: f64,
    pub max: f64,
}

fn summarize(class: usize, values: &[f64]) -> ClassSummary {
    let count = values.len();
    let mean = values.iter().sum::<f64>() / count as f64;
    let sd = (count > 1).then(|| {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
    });
    ClassSummary {
        class,
        count,
        mean,
        sd,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

fn check_labels(z: &Responsibilities, labels: &[usize]) -> Result<()> {
    if labels.len() != z.n() {
        return Err(Error::DimensionMismatch(format!("{} labels for {} rows", labels.len(), z.n())));
    }
    if let Some(bad) = labels.iter().find(|&&l| l == 0 || l > z.k()) {
        return Err(Error::InvalidArgument(format!("label {bad} outside 1..={}", z.k())));
    }
    Ok(())
}

/// Groups per-row values by class; empty classes are skipped.
fn by_class(k: usize, labels: &[usize], values: &[f64]) -> Vec<ClassSummary> {
    (1..=k)
        .filter_map(|c| {
            let members: Vec<f64> = labels
                .iter()
                .zip(values)
                .filter(|(&l, _)| l == c)
                .map(|(_, &v)| v)
                .collect();
            (!members.is_empty()).then(|| summarize(c, &members))
        })
        .collect()
}

/// Per-case contributions `E_i` and their per-class summaries.
pub fn entropy_contributions(z: &Responsibilities, labels: &[usize]) -> Result<(Vec<f64>, Vec<ClassSummary>)> {
    check_labels(z, labels)?;
    let k = z.k();
    let m = z.matrix();
    let case: Vec<f64> = if k == 1 {
        vec![1.0; z.n()]
    } else {
        let log_k = (k as f64).ln();
        (0..z.n())
            .map(|i| 1.0 + (0..k).map(|c| xlogx(m[(i, c)])).sum::<f64>() / log_k)
            .collect()
    };
    let summary = by_class(k, labels, &case);
    Ok((case, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvePP {
    pub classes: Vec<ClassSummary>,
    /// 1-based classes whose mean MAP probability is below the cutoff.
    pub flagged: Vec<usize>,
    /// 1-based classes with no members (omitted from `classes`).
    pub empty: Vec<usize>,
}

/// Mean membership probability of each class among the rows assigned to it.
pub fn avepp(z: &Responsibilities, labels: &[usize]) -> Result<AvePP> {
    check_labels(z, labels)?;
    let probs: Vec<f64> = labels.iter().enumerate().map(|(i, &l)| z.get(i, l - 1)).collect();
    let classes = by_class(z.k(), labels, &probs);
    let flagged = classes.iter().filter(|c| c.mean < AVEPP_CUTOFF).map(|c| c.class).collect();
    let empty = (1..=z.k()).filter(|c| !labels.contains(c)).collect();
    Ok(AvePP {
        classes,
        flagged,
        empty,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub class: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Per-class histogram over `HISTOGRAM_RANGE` with `HISTOGRAM_BINS` bins.
pub fn class_histogram(k: usize, labels: &[usize], values: &[f64]) -> Vec<HistogramBin> {
    let (lo, hi) = HISTOGRAM_RANGE;
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut bins = Vec::with_capacity(k * HISTOGRAM_BINS);
    for c in 1..=k {
        let mut counts = [0usize; HISTOGRAM_BINS];
        for (&l, &v) in labels.iter().zip(values) {
            if l == c {
                let b = (((v - lo) / width).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
                counts[b] += 1;
            }
        }
        for (b, &count) in counts.iter().enumerate() {
            bins.push(HistogramBin {
                class: c,
                lower: lo + b as f64 * width,
                upper: lo + (b + 1) as f64 * width,
                count,
            });
        }
    }
    bins
}

/// Everything the diagnostics step reports for one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub k: usize,
    pub n: usize,
    pub entropy_total: f64,
    pub entropy_below_advisory: bool,
    pub notes: Vec<String>,
    pub classification: Vec<usize>,
    pub case_entropy: Vec<f64>,
    pub map_probability: Vec<f64>,
    pub class_entropy: Vec<ClassSummary>,
    pub avepp: AvePP,
    pub entropy_histogram: Vec<HistogramBin>,
    pub map_probability_histogram: Vec<HistogramBin>,
}

pub fn diagnose(fit: &FitResult) -> Result<DiagnosticsReport> {
    let z = &fit.z;
    let labels = &fit.classification;
    let k = z.k();
    let total = entropy_total(z);
    let (case_entropy, class_entropy) = entropy_contributions(z, labels)?;
    let pp = avepp(z, labels)?;
    let map_probability: Vec<f64> = labels.iter().enumerate().map(|(i, &l)| z.get(i, l - 1)).collect();
    let mut notes = Vec::new();
    if k == 1 {
        notes.push("K = 1: entropy is 1 by convention".to_string());
    }
    if total < ENTROPY_ADVISORY {
        notes.push(format!("entropy {total:.3} is below the {ENTROPY_ADVISORY} advisory level"));
    }
    for c in &pp.empty {
        notes.push(format!("class {c} has no members and is omitted from AvePP"));
    }
    for c in &pp.flagged {
        notes.push(format!("class {c} has AvePP below {AVEPP_CUTOFF}"));
    }
    Ok(DiagnosticsReport {
        k,
        n: z.n(),
        entropy_total: total,
        entropy_below_advisory: total < ENTROPY_ADVISORY,
        notes,
        classification: labels.clone(),
        entropy_histogram: class_histogram(k, labels, &case_entropy),
        map_probability_histogram: class_histogram(k, labels, &map_probability),
        case_entropy,
        map_probability,
        class_entropy,
        avepp: pp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::map_classify;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_z(seed: u64, n: usize, k: usize) -> Responsibilities {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::from_fn(n, k, |_, _| rng.random_range(0.01..1.0));
        for mut row in m.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        // renormalization leaves rows within rounding of 1
        Responsibilities::from_raw(m)
    }

    #[test]
    fn hard_assignment_has_entropy_one() {
        let z = Responsibilities::from_partition(&[0, 1, 2, 1], 3).unwrap();
        assert_eq!(entropy_total(&z), 1.0);
        let (case, _) = entropy_contributions(&z, &map_classify(&z)).unwrap();
        assert!(case.iter().all(|&e| e == 1.0));
    }

    #[test]
    fn uniform_rows_have_entropy_zero() {
        let z = Responsibilities::from_raw(DMatrix::from_element(5, 4, 0.25));
        assert_relative_eq!(entropy_total(&z), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn single_component_convention() {
        let z = Responsibilities::from_partition(&[0, 0], 1).unwrap();
        assert_eq!(entropy_total(&z), 1.0);
    }

    #[test]
    fn avepp_hard_and_even() {
        let hard = Responsibilities::from_partition(&[0, 1, 1], 2).unwrap();
        let pp = avepp(&hard, &[1, 2, 2]).unwrap();
        assert!(pp.classes.iter().all(|c| c.mean == 1.0));
        assert!(pp.flagged.is_empty());

        let even = Responsibilities::from_raw(DMatrix::from_element(4, 2, 0.5));
        let labels = vec![1, 2, 1, 2];
        let pp = avepp(&even, &labels).unwrap();
        assert!(pp.classes.iter().all(|c| c.mean == 0.5));
        assert_eq!(pp.flagged, vec![1, 2]);
    }

    #[test]
    fn empty_class_is_omitted() {
        let z = Responsibilities::from_raw(DMatrix::from_row_slice(2, 3, &[0.7, 0.2, 0.1, 0.6, 0.3, 0.1]));
        let pp = avepp(&z, &[1, 1]).unwrap();
        assert_eq!(pp.classes.len(), 1);
        assert_eq!(pp.empty, vec![2, 3]);
    }

    #[test]
    fn histogram_bins() {
        let bins = class_histogram(2, &[1, 1, 2], &[0.0, 1.04, 0.5]);
        assert_eq!(bins.len(), 2 * HISTOGRAM_BINS);
        assert_eq!(bins[0].count, 1);
        assert_eq!(bins[HISTOGRAM_BINS - 1].count, 1);
        assert_relative_eq!(bins[HISTOGRAM_BINS - 1].upper, 1.05, epsilon = 1e-12);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 3);
    }

    proptest! {
        #[test]
        fn mean_of_contributions_is_total(seed in 0u64..500, k in 2usize..6) {
            let z = random_z(seed, 40, k);
            let labels = map_classify(&z);
            let (case, _) = entropy_contributions(&z, &labels).unwrap();
            let mean = case.iter().sum::<f64>() / case.len() as f64;
            prop_assert!((mean - entropy_total(&z)).abs() < 1e-12);
            for e in case {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&e));
            }
            let pp = avepp(&z, &labels).unwrap();
            for c in pp.classes {
                prop_assert!(c.mean >= 1.0 / k as f64 - 1e-12 && c.mean <= 1.0);
            }
        }

        #[test]
        fn column_permutation_invariance(seed in 0u64..500) {
            let z = random_z(seed, 30, 3);
            let p = z.permuted(&[2, 0, 1]);
            prop_assert!((entropy_total(&z) - entropy_total(&p)).abs() < 1e-12);
        }

        #[test]
        fn sharpening_never_lowers_entropy(seed in 0u64..500, t in 0.0f64..1.0) {
            let z = random_z(seed, 20, 3);
            let labels = map_classify(&z);
            let mut m = z.matrix().clone();
            let row = seed as usize % 20;
            for c in 0..3 {
                let target = if c == labels[row] - 1 { 1.0 } else { 0.0 };
                m[(row, c)] = (1.0 - t) * m[(row, c)] + t * target;
            }
            let sharpened = Responsibilities::from_raw(m);
            prop_assert!(entropy_total(&sharpened) >= entropy_total(&z) - 1e-12);
        }
    }
}
