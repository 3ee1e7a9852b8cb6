//! Fit one model and print its parameters.
//!
//!     cargo run --release --example fit [-- engagement.csv]

use parsimix::{default_prior, fit, EmControl, ModelCode, ModelSpec};

mod common;

fn main() -> parsimix::Result<()> {
    let x = common::data_from_args(&["PRE_ENG_COND", "PRE_ENG_COGN", "PRE_ENG_EMOC"]);
    let spec = ModelSpec::new(ModelCode::VVI, 3)?;
    let prior = default_prior(&x, 3)?;
    let f = fit(&x, &spec, Some(&prior), &EmControl::with_seed(0))?;

    println!("{} with prior, n = {}", f.model, f.n);
    println!("loglik {:.3}  df {}  BIC {:.3}  ICL {:.3}", f.loglik, f.df, f.bic, f.icl);
    println!("iterations {} converged {} (best of restarts: chain {})", f.iterations, f.converged, f.restart);
    println!("clustering table {:?}", f.clustering_table());
    for c in 0..3 {
        println!(
            "component {}: pro {:.4} mean {} var {}",
            c + 1,
            f.params.pro[c],
            common::fmt_vec(f.params.mean[c].iter(), 3),
            common::fmt_vec(f.params.cov[c].diagonal().iter(), 4)
        );
    }
    Ok(())
}
