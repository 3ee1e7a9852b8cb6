//! Percentile confidence intervals from the three resampling schemes.
//!
//!     cargo run --release --example bootstrap [-- engagement.csv]

use parsimix::bootstrap::{bootstrap_fit, percentile_ci, BootstrapType};
use parsimix::{default_prior, fit, EmControl, ModelCode, ModelSpec};

mod common;

fn main() -> parsimix::Result<()> {
    let x = common::data_from_args(&["PRE_ENG_COND", "PRE_ENG_COGN", "PRE_ENG_EMOC"]);
    let prior = default_prior(&x, 3)?;
    let f = fit(&x, &ModelSpec::new(ModelCode::VVI, 3)?, Some(&prior), &EmControl::with_seed(0))?;

    for ty in [BootstrapType::Bs, BootstrapType::Pb, BootstrapType::Wlbs] {
        let run = bootstrap_fit(&x, &f, ty, 199, 0)?;
        println!("\n{ty}: {} replicates, {} failed", run.nboot, run.n_failed);
        for row in percentile_ci(&run, 0.95)? {
            println!(
                "  {:<4} {} {:<12} {:>8.4}  [{:.4}, {:.4}]",
                row.key.parameter.as_str(),
                row.key.component,
                row.key.variable.as_deref().unwrap_or(""),
                row.estimate,
                row.lower,
                row.upper
            );
        }
    }
    Ok(())
}
