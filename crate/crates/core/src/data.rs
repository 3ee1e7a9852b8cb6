//! Delimited-text ingest and per-column descriptive summaries.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::DataMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub sep: char,
    /// Columns to keep, in this order (after renaming). `None` keeps all.
    pub columns: Option<Vec<String>>,
    /// `(old, new)` header renames.
    pub renames: Vec<(String, String)>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            sep: ',',
            columns: None,
            renames: Vec::new(),
        }
    }
}

fn is_url(source: &str) -> bool {
    source.starts_with("http://") || source.starts_with("https://")
}

/// Reads text from a local path or an http(s) URL.
pub fn read_source(source: &str) -> Result<String> {
    if is_url(source) {
        let mut resp = ureq::get(source)
            .call()
            .map_err(|e| Error::Data(format!("could not fetch {source}: {e}")))?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| Error::Data(format!("could not read {source}: {e}")))
    } else {
        Ok(std::fs::read_to_string(source)?)
    }
}

/// Loads a numeric table from a path or URL.
pub fn load(source: &str, opts: &IngestOptions) -> Result<DataMatrix> {
    parse_text(&read_source(source)?, opts)
}

fn parse_cell(raw: &str, decimal_comma: bool) -> Option<f64> {
    let t = raw.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return None;
    }
    if decimal_comma {
        t.replace(',', ".").parse().ok()
    } else {
        t.parse().ok()
    }
}

/// Parses delimited text with a header row. When the separator is not a comma
/// and a cell fails to parse, a decimal comma is tried before giving up.
pub fn parse_text(text: &str, opts: &IngestOptions) -> Result<DataMatrix> {
    if !opts.sep.is_ascii() {
        return Err(Error::InvalidArgument(format!("separator {:?} is not a single ASCII character", opts.sep)));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.sep as u8)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    for (old, new) in &opts.renames {
        let pos = header
            .iter()
            .position(|h| h == old)
            .ok_or_else(|| Error::Data(format!("cannot rename `{old}`: no such column")))?;
        header[pos] = new.clone();
    }
    let mut seen = HashSet::new();
    if let Some(dup) = header.iter().find(|h| !seen.insert(h.as_str())) {
        return Err(Error::Data(format!("duplicate column name `{dup}`")));
    }
    let keep: Vec<usize> = match &opts.columns {
        None => (0..header.len()).collect(),
        Some(cols) => cols
            .iter()
            .map(|c| {
                header
                    .iter()
                    .position(|h| h == c)
                    .ok_or_else(|| Error::Data(format!("column `{c}` not found; available: {}", header.join(", "))))
            })
            .collect::<Result<_>>()?,
    };
    if keep.is_empty() {
        return Err(Error::Data("no columns selected".into()));
    }
    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;
    if records.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    let parse_all = |decimal_comma: bool| -> Result<Vec<f64>> {
        let mut values = Vec::with_capacity(records.len() * keep.len());
        for (r, rec) in records.iter().enumerate() {
            for &j in &keep {
                let raw = rec.get(j).unwrap_or("");
                let v = parse_cell(raw, decimal_comma).ok_or_else(|| {
                    let what = if raw.trim().is_empty() || raw.trim().eq_ignore_ascii_case("na") {
                        "missing value".to_string()
                    } else {
                        format!("non-numeric value `{raw}`")
                    };
                    Error::Data(format!("row {}, column `{}`: {what}", r + 1, header[j]))
                })?;
                values.push(v);
            }
        }
        Ok(values)
    };
    let values = match parse_all(false) {
        Ok(v) => v,
        Err(e) if opts.sep != ',' => parse_all(true).map_err(|_| e)?,
        Err(e) => return Err(e),
    };
    let m = DMatrix::from_row_slice(records.len(), keep.len(), &values);
    DataMatrix::new(m, keep.iter().map(|&j| header[j].clone()).collect())
}

/// R-style type 7 quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub n: usize,
    pub n_unique: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); `None` for a single row.
    pub sd: Option<f64>,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

pub fn summarize(x: &DataMatrix) -> Vec<ColumnSummary> {
    x.values()
        .column_iter()
        .zip(x.column_names())
        .map(|(col, name)| {
            let mut v: Vec<f64> = col.iter().copied().collect();
            v.sort_by(f64::total_cmp);
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let sd = (n > 1).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
            let mut uniq = v.clone();
            uniq.dedup();
            ColumnSummary {
                name: name.clone(),
                n,
                n_unique: uniq.len(),
                mean,
                sd,
                min: v[0],
                median: quantile_sorted(&v, 0.5),
                max: v[n - 1],
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parses_selects_and_renames() {
        let text = "a,b,c\n1,2,3\n4,5,6\n";
        let opts = IngestOptions {
            columns: Some(vec!["c".into(), "alpha".into()]),
            renames: vec![("a".into(), "alpha".into())],
            ..Default::default()
        };
        let x = parse_text(text, &opts).unwrap();
        assert_eq!(x.column_names(), &["c".to_string(), "alpha".to_string()]);
        assert_eq!(x.values()[(1, 0)], 6.0);
        assert_eq!(x.values()[(1, 1)], 4.0);
    }

    #[test]
    fn semicolon_with_decimal_comma() {
        let x = parse_text(
            "u;v\n1,5;2\n3;4,25\n",
            &IngestOptions {
                sep: ';',
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(x.values()[(0, 0)], 1.5);
        assert_eq!(x.values()[(1, 1)], 4.25);
    }

    #[test]
    fn bad_cells_report_row() {
        let e = parse_text("a,b\n1,2\n3,\n", &IngestOptions::default()).unwrap_err();
        assert!(e.to_string().contains("row 2"), "{e}");
        assert!(e.to_string().contains("missing"), "{e}");
        let e = parse_text("a,b\n1,x\n", &IngestOptions::default()).unwrap_err();
        assert!(e.to_string().contains("non-numeric"), "{e}");
        let e = parse_text("a,b\n1,2\n", &IngestOptions {
            columns: Some(vec!["z".into()]),
            ..Default::default()
        })
        .unwrap_err();
        assert!(e.to_string().contains("not found"));
    }

    #[test]
    fn type7_quantiles() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_relative_eq!(quantile(&v, 0.5), 5.5);
        assert_relative_eq!(quantile(&v, 0.025), 1.225, epsilon = 1e-12);
        assert_relative_eq!(quantile(&v, 0.975), 9.775, epsilon = 1e-12);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 10.0);
    }

    #[test]
    fn summary_values() {
        let x = DataMatrix::from_rows(&[vec![1.0], vec![2.0], vec![2.0], vec![7.0]]).unwrap();
        let s = &summarize(&x)[0];
        assert_eq!((s.n, s.n_unique), (4, 3));
        assert_relative_eq!(s.mean, 3.0);
        // deviations -2,-1,-1,4 -> 22/3
        assert_relative_eq!(s.sd.unwrap(), (22.0f64 / 3.0).sqrt(), epsilon = 1e-14);
        assert_eq!((s.min, s.median, s.max), (1.0, 2.0, 7.0));
    }
}
