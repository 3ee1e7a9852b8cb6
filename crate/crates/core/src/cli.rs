//! Command-line front end: `parsimix <summary|select|fit|bootstrap|diagnose>`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_fit, percentile_ci, replicate_rows, BootstrapRun, BootstrapType, CiRow};
use crate::covmodels::ModelCode;
use crate::data::{self, ColumnSummary, IngestOptions};
use crate::diagnostics::{diagnose, DiagnosticsReport};
use crate::em::{fit, EmControl};
use crate::error::{Error, Result};
use crate::prior::PriorControl;
use crate::selection::{grid_search, small_class_warning, GridOptions, SelectionTable, SMALL_CLASS_THRESHOLD};
use crate::types::{DataMatrix, FitResult, ModelSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const THREADS_ENV: &str = "PARSIMIX_THREADS";
pub const MAX_K: usize = 50;
pub const CI_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Summary,
    Select,
    Fit,
    Bootstrap,
    Diagnose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorChoice {
    Default,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    fn json(self) -> bool {
        self != Format::Csv
    }
    fn csv(self) -> bool {
        self != Format::Json
    }
}

#[derive(Debug, Parser)]
#[command(name = "parsimix", version, about = "Model-based clustering with parsimonious Gaussian mixtures")]
struct Cli {
    command: Command,
    /// Path or http(s) URL of a delimited file with a header row.
    #[arg(long)]
    input: Option<String>,
    /// Field separator (single character; `tab` is accepted).
    #[arg(long, default_value = ",")]
    sep: String,
    /// Comma-separated columns to keep, after renames.
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<String>>,
    /// Header rename `old=new`; repeatable.
    #[arg(long = "rename")]
    renames: Vec<String>,
    /// Comma-separated model codes for `select` (default: all fitted codes).
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Component range `A..B` (or a single K) for `select`.
    #[arg(long, default_value = "1..9")]
    k_range: String,
    /// Model code for `fit`.
    #[arg(long)]
    model: Option<String>,
    /// Number of components for `fit`.
    #[arg(long)]
    k: Option<usize>,
    /// Conjugate prior on means and covariances, or plain maximum likelihood.
    #[arg(long, value_enum, default_value = "default")]
    prior: PriorChoice,
    /// Prior mean shrinkage (default 0.1).
    #[arg(long)]
    prior_kappa: Option<f64>,
    /// Prior degrees of freedom (default d + 2).
    #[arg(long)]
    prior_dof: Option<f64>,
    /// Multiplier on the default prior scale matrix.
    #[arg(long)]
    prior_scale_mult: Option<f64>,
    /// Seed for restarts and resampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 999)]
    nboot: usize,
    /// Bootstrap type: `bs` (nonparametric), `pb` (parametric) or `wlbs` (weighted likelihood).
    #[arg(long = "type", default_value = "bs")]
    boot_type: String,
    /// Fit artifact used by `bootstrap` and `diagnose` (default: OUT/fit.json).
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Artifact formats to write.
    #[arg(long, value_enum, default_value = "both")]
    format: Format,
    /// Let non-converged fits compete in model selection.
    #[arg(long)]
    include_nonconverged: bool,
}

/// Fully resolved settings, embedded in every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<String>,
    pub ingest: IngestOptions,
    pub models: Vec<ModelCode>,
    pub k_range: (usize, usize),
    pub model: Option<ModelCode>,
    pub k: Option<usize>,
    pub prior: Option<PriorControl>,
    pub seed: u64,
    pub nboot: usize,
    pub bootstrap_type: BootstrapType,
    pub fit_artifact: Option<PathBuf>,
    pub out: PathBuf,
    pub format: Format,
    pub include_nonconverged: bool,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataInfo {
    pub n: usize,
    pub d: usize,
    pub columns: Vec<String>,
}

/// JSON envelope written for every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub data: Option<DataInfo>,
    pub result: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifactBody {
    pub fit: FitResult,
    /// 1-based components holding less than the small-class threshold.
    pub small_classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapArtifactBody {
    pub run: BootstrapRun,
    pub level: f64,
    pub ci: Vec<CiRow>,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn parse_sep(s: &str) -> Result<char> {
    if s.eq_ignore_ascii_case("tab") || s == "\\t" {
        return Ok('\t');
    }
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii() => Ok(c),
        _ => Err(usage(format!("--sep must be one ASCII character, got `{s}`"))),
    }
}

/// Parses `A..B`, `A..=B` or a single `K`.
pub fn parse_k_range(s: &str) -> Result<(usize, usize)> {
    let bad = || usage(format!("--k-range `{s}` is not of the form A..B"));
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => {
            let b = b.strip_prefix('=').unwrap_or(b);
            (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?)
        }
        None => {
            let k = s.trim().parse().map_err(|_| bad())?;
            (k, k)
        }
    };
    if lo == 0 || lo > hi || hi > MAX_K {
        return Err(usage(format!("--k-range must satisfy 1 <= A <= B <= {MAX_K}, got {lo}..{hi}")));
    }
    Ok((lo, hi))
}

fn parse_threads() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

fn resolve(cli: Cli) -> Result<RunConfig> {
    let renames = cli
        .renames
        .iter()
        .map(|r| {
            r.split_once('=')
                .filter(|(a, b)| !a.is_empty() && !b.is_empty())
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .ok_or_else(|| usage(format!("--rename expects old=new, got `{r}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let models = match &cli.models {
        None => ModelCode::FITTED.to_vec(),
        Some(list) => list.iter().map(|m| m.trim().parse()).collect::<Result<Vec<ModelCode>>>()?,
    };
    let model = cli.model.as_deref().map(str::parse::<ModelCode>).transpose()?;
    let prior = match cli.prior {
        PriorChoice::None => {
            if cli.prior_kappa.is_some() || cli.prior_dof.is_some() || cli.prior_scale_mult.is_some() {
                return Err(usage("prior overrides given with --prior none"));
            }
            None
        }
        PriorChoice::Default => {
            let mut p = PriorControl::default();
            if let Some(v) = cli.prior_kappa {
                p.shrinkage = v;
            }
            p.dof = cli.prior_dof.or(p.dof);
            if let Some(v) = cli.prior_scale_mult {
                p.scale_mult = v;
            }
            Some(p)
        }
    };
    let config = RunConfig {
        command: cli.command,
        input: cli.input,
        ingest: IngestOptions {
            sep: parse_sep(&cli.sep)?,
            columns: cli.columns,
            renames,
        },
        models,
        k_range: parse_k_range(&cli.k_range)?,
        model,
        k: cli.k,
        prior,
        seed: cli.seed,
        nboot: cli.nboot,
        bootstrap_type: cli.boot_type.parse()?,
        fit_artifact: cli.fit,
        out: cli.out,
        format: cli.format,
        include_nonconverged: cli.include_nonconverged,
        threads: parse_threads()?,
    };
    match config.command {
        Command::Diagnose => {}
        _ if config.input.is_none() => return Err(usage("--input is required")),
        Command::Fit if config.model.is_none() || config.k.is_none() => {
            return Err(usage("fit needs --model and --k"));
        }
        Command::Bootstrap if config.nboot == 0 => return Err(usage("--nboot must be at least 1")),
        _ => {}
    }
    if config.k == Some(0) || config.k.is_some_and(|k| k > MAX_K) {
        return Err(usage(format!("--k must be in 1..={MAX_K}")));
    }
    Ok(config)
}

/// Rounds to 9 significant digits for CSV display.
pub fn fmt_csv(v: f64) -> String {
    if !v.is_finite() {
        return "NA".into();
    }
    let rounded: f64 = format!("{v:.8e}").parse().unwrap_or(v);
    format!("{rounded}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), fmt_csv)
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_artifact<T: DeserializeOwned>(path: &Path) -> Result<Artifact<T>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read artifact {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

struct Runner {
    config: RunConfig,
}

impl Runner {
    fn envelope<T>(&self, x: Option<&DataMatrix>, result: T) -> Artifact<T> {
        Artifact {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.config.seed,
            config: self.config.clone(),
            data: x.map(|x| DataInfo {
                n: x.n(),
                d: x.d(),
                columns: x.column_names().to_vec(),
            }),
            result,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.out.join(name)
    }

    fn load_data(&self) -> Result<DataMatrix> {
        let input = self.config.input.as_deref().ok_or_else(|| usage("--input is required"))?;
        data::load(input, &self.config.ingest)
    }

    fn fit_path(&self) -> PathBuf {
        self.config.fit_artifact.clone().unwrap_or_else(|| self.path("fit.json"))
    }

    fn control(&self) -> EmControl {
        EmControl::with_seed(self.config.seed)
    }

    fn run(&self) -> Result<()> {
        fs::create_dir_all(&self.config.out)?;
        match self.config.command {
            Command::Summary => self.summary(),
            Command::Select => self.select(),
            Command::Fit => self.fit(),
            Command::Bootstrap => self.bootstrap(),
            Command::Diagnose => self.diagnose(),
        }
    }

    fn summary(&self) -> Result<()> {
        let x = self.load_data()?;
        let table = data::summarize(&x);
        if self.config.format.json() {
            write_json(&self.path("summary.json"), &self.envelope(Some(&x), &table))?;
        }
        if self.config.format.csv() {
            write_csv(
                &self.path("summary.csv"),
                &["variable", "n", "n_unique", "mean", "sd", "min", "median", "max"],
                table.iter().map(|s: &ColumnSummary| {
                    vec![
                        s.name.clone(),
                        s.n.to_string(),
                        s.n_unique.to_string(),
                        fmt_csv(s.mean),
                        fmt_opt(s.sd),
                        fmt_csv(s.min),
                        fmt_csv(s.median),
                        fmt_csv(s.max),
                    ]
                }),
            )?;
        }
        println!("{} rows, {} columns", x.n(), x.d());
        for s in &table {
            println!(
                "{:<16} mean {:>10.4} sd {:>10.4} min {:>8.3} median {:>8.3} max {:>8.3} unique {}",
                s.name,
                s.mean,
                s.sd.unwrap_or(f64::NAN),
                s.min,
                s.median,
                s.max,
                s.n_unique
            );
        }
        Ok(())
    }

    fn select(&self) -> Result<()> {
        let x = self.load_data()?;
        let (lo, hi) = self.config.k_range;
        let opts = GridOptions {
            codes: self.config.models.clone(),
            k_range: lo..=hi,
            prior: self.config.prior.clone(),
            control: self.control(),
            include_nonconverged: self.config.include_nonconverged,
        };
        let table = grid_search(&x, &opts)?;
        self.write_selection(&x, &table)?;
        match table.best_entry() {
            Some(best) => {
                println!("best BIC: {},{} = {:.3}", best.code, best.k, best.bic.unwrap_or(f64::NAN));
                for d in &table.bic_diffs {
                    println!("  {},{} {:.3} ({:+.3})", d.code, d.k, d.bic, d.diff);
                }
                Ok(())
            }
            None => Err(Error::AllChainsFailed {
                model: "all models".into(),
                k: hi,
                restarts: opts.control.n_restarts,
                last: "no eligible cell in the grid".into(),
            }),
        }
    }

    fn write_selection(&self, x: &DataMatrix, table: &SelectionTable) -> Result<()> {
        if self.config.format.json() {
            write_json(&self.path("selection.json"), &self.envelope(Some(x), table))?;
        }
        if self.config.format.csv() {
            write_csv(
                &self.path("selection.csv"),
                &["rank", "model", "k", "bic", "icl", "loglik", "df", "converged", "available", "note"],
                table.entries.iter().enumerate().map(|(i, e)| {
                    vec![
                        (i + 1).to_string(),
                        e.code.to_string(),
                        e.k.to_string(),
                        fmt_opt(e.bic),
                        fmt_opt(e.icl),
                        fmt_opt(e.loglik),
                        e.df.to_string(),
                        e.converged.to_string(),
                        e.available.to_string(),
                        e.note.clone().unwrap_or_default(),
                    ]
                }),
            )?;
            write_csv(
                &self.path("bic_curves.csv"),
                &["model", "k", "bic"],
                table
                    .bic_curves()
                    .into_iter()
                    .map(|(code, k, bic)| vec![code.to_string(), k.to_string(), fmt_opt(bic)]),
            )?;
        }
        Ok(())
    }

    fn fit(&self) -> Result<()> {
        let x = self.load_data()?;
        let (code, k) = (self.config.model.expect("checked"), self.config.k.expect("checked"));
        let spec = ModelSpec::new(code, k)?;
        let prior = self.config.prior.as_ref().map(|p| p.resolve(&x, k)).transpose()?;
        let result = fit(&x, &spec, prior.as_ref(), &self.control())?;
        let small = small_class_warning(&result, SMALL_CLASS_THRESHOLD).iter().map(|c| c + 1).collect();
        let body = FitArtifactBody {
            fit: result,
            small_classes: small,
        };
        let f = &body.fit;
        // the fit artifact is always written as JSON: later commands read it
        write_json(&self.path("fit.json"), &self.envelope(Some(&x), &body))?;
        if self.config.format.csv() {
            let names = x.column_names();
            let mut rows = Vec::new();
            for c in 0..k {
                for (j, name) in names.iter().enumerate() {
                    rows.push(vec![
                        (c + 1).to_string(),
                        name.clone(),
                        fmt_csv(f.params.pro[c]),
                        fmt_csv(f.params.mean[c][j]),
                        fmt_csv(f.params.cov[c][(j, j)]),
                    ]);
                }
            }
            write_csv(&self.path("profile_means.csv"), &["component", "variable", "pro", "mean", "variance"], rows)?;
            let mut header = vec!["row".to_string(), "class".to_string()];
            header.extend((1..=k).map(|c| format!("z{c}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            write_csv(
                &self.path("fit.csv"),
                &header,
                (0..f.n).map(|i| {
                    let mut row = vec![(i + 1).to_string(), f.classification[i].to_string()];
                    row.extend((0..k).map(|c| fmt_csv(f.z.get(i, c))));
                    row
                }),
            )?;
        }
        println!(
            "{} fit: loglik {:.3}, df {}, BIC {:.3}, ICL {:.3}, {} iterations{}",
            f.model,
            f.loglik,
            f.df,
            f.bic,
            f.icl,
            f.iterations,
            if f.converged { "" } else { " (not converged)" }
        );
        println!("clustering table: {:?}", f.clustering_table());
        for c in &body.small_classes {
            eprintln!("warning[W_SMALL_CLASS]: component {c} holds less than {SMALL_CLASS_THRESHOLD} of the data");
        }
        Ok(())
    }

    fn load_fit(&self) -> Result<Artifact<FitArtifactBody>> {
        read_artifact(&self.fit_path())
    }

    fn bootstrap(&self) -> Result<()> {
        let artifact = self.load_fit()?;
        let x = self.load_data()?;
        let f = &artifact.result.fit;
        if x.n() != f.n || x.d() != f.params.d() {
            return Err(Error::DimensionMismatch(format!(
                "data are {}x{} but the fit was made on {}x{}",
                x.n(),
                x.d(),
                f.n,
                f.params.d()
            )));
        }
        let run = bootstrap_fit(&x, f, self.config.bootstrap_type, self.config.nboot, self.config.seed)?;
        let ci = if run.replicates.len() >= 2 {
            percentile_ci(&run, CI_LEVEL)?
        } else {
            Vec::new()
        };
        let body = BootstrapArtifactBody {
            run,
            level: CI_LEVEL,
            ci,
        };
        if self.config.format.json() {
            write_json(&self.path("bootstrap.json"), &self.envelope(Some(&x), &body))?;
        }
        if self.config.format.csv() {
            write_csv(
                &self.path("bootstrap.csv"),
                &["parameter", "component", "variable", "estimate", "lower", "upper"],
                body.ci.iter().map(|r| {
                    vec![
                        r.key.parameter.as_str().to_string(),
                        r.key.component.to_string(),
                        r.key.variable.clone().unwrap_or_default(),
                        fmt_csv(r.estimate),
                        fmt_csv(r.lower),
                        fmt_csv(r.upper),
                    ]
                }),
            )?;
            write_csv(
                &self.path("bootstrap_replicates.csv"),
                &["replicate", "parameter", "component", "variable", "value"],
                replicate_rows(&body.run).into_iter().map(|r| {
                    vec![
                        r.replicate.to_string(),
                        r.key.parameter.as_str().to_string(),
                        r.key.component.to_string(),
                        r.key.variable.unwrap_or_default(),
                        fmt_csv(r.value),
                    ]
                }),
            )?;
        }
        println!(
            "{} bootstrap: {} replicates, {} failed",
            body.run.ty, body.run.nboot, body.run.n_failed
        );
        for r in body.ci.iter() {
            println!(
                "  {:<4} {} {:<16} {:>10.4} [{:.4}, {:.4}]",
                r.key.parameter.as_str(),
                r.key.component,
                r.key.variable.as_deref().unwrap_or(""),
                r.estimate,
                r.lower,
                r.upper
            );
        }
        Ok(())
    }

    fn diagnose(&self) -> Result<()> {
        let artifact = self.load_fit()?;
        let report: DiagnosticsReport = diagnose(&artifact.result.fit)?;
        if self.config.format.json() {
            write_json(&self.path("diagnostics.json"), &self.envelope(None, &report))?;
        }
        if self.config.format.csv() {
            write_csv(
                &self.path("diagnostics.csv"),
                &["row", "class", "entropy", "map_probability"],
                (0..report.n).map(|i| {
                    vec![
                        (i + 1).to_string(),
                        report.classification[i].to_string(),
                        fmt_csv(report.case_entropy[i]),
                        fmt_csv(report.map_probability[i]),
                    ]
                }),
            )?;
            let summary_rows = report
                .class_entropy
                .iter()
                .map(|s| ("entropy", s))
                .chain(report.avepp.classes.iter().map(|s| ("avepp", s)))
                .map(|(what, s)| {
                    vec![
                        what.to_string(),
                        s.class.to_string(),
                        s.count.to_string(),
                        fmt_csv(s.mean),
                        fmt_opt(s.sd),
                        fmt_csv(s.min),
                        fmt_csv(s.max),
                    ]
                });
            write_csv(
                &self.path("diagnostics_classes.csv"),
                &["statistic", "class", "count", "mean", "sd", "min", "max"],
                summary_rows,
            )?;
            let hist = report
                .entropy_histogram
                .iter()
                .map(|b| ("entropy", b))
                .chain(report.map_probability_histogram.iter().map(|b| ("map_probability", b)))
                .map(|(what, b)| {
                    vec![
                        what.to_string(),
                        b.class.to_string(),
                        fmt_csv(b.lower),
                        fmt_csv(b.upper),
                        b.count.to_string(),
                    ]
                });
            write_csv(
                &self.path("diagnostics_histograms.csv"),
                &["statistic", "class", "lower", "upper", "count"],
                hist,
            )?;
        }
        println!("entropy {:.7}", report.entropy_total);
        for s in &report.avepp.classes {
            println!("  class {} n={} AvePP {:.3}", s.class, s.count, s.mean);
        }
        for note in &report.notes {
            eprintln!("note: {note}");
        }
        Ok(())
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("error[{}]: {e}", e.code());
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            eprint!("error[E_USAGE]: {e}");
            return EXIT_USAGE;
        }
    };
    let config = match resolve(cli) {
        Ok(c) => c,
        Err(e) => return report(&e),
    };
    let runner = Runner { config };
    let outcome = match runner.config.threads {
        None => runner.run(),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| runner.run()),
            Err(e) => Err(usage(format!("cannot build thread pool: {e}"))),
        },
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_range_forms() {
        assert_eq!(parse_k_range("1..9").unwrap(), (1, 9));
        assert_eq!(parse_k_range("2..=4").unwrap(), (2, 4));
        assert_eq!(parse_k_range("3").unwrap(), (3, 3));
        assert!(parse_k_range("0..3").is_err());
        assert!(parse_k_range("5..2").is_err());
        assert!(parse_k_range("1..51").is_err());
        assert!(parse_k_range("a..b").is_err());
    }

    #[test]
    fn csv_rounding() {
        assert_eq!(fmt_csv(0.1234567891234), "0.123456789");
        assert_eq!(fmt_csv(-4521.21345678), "-4521.21346");
        assert_eq!(fmt_csv(2.0), "2");
        assert_eq!(fmt_csv(f64::NAN), "NA");
    }

    #[test]
    fn separators() {
        assert_eq!(parse_sep(";").unwrap(), ';');
        assert_eq!(parse_sep("tab").unwrap(), '\t');
        assert!(parse_sep(";;").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["parsimix", "explode"]), EXIT_USAGE);
        assert_eq!(run(["parsimix", "fit", "--input", "x.csv"]), EXIT_USAGE);
        assert_eq!(run(["parsimix", "select", "--input", "x.csv", "--models", "ABC"]), EXIT_USAGE);
        assert_eq!(run(["parsimix", "--help"]), EXIT_OK);
    }
}
