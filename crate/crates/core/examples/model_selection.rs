//! BIC grid over covariance codes and numbers of components.
//!
//!     cargo run --release --example model_selection [-- engagement.csv]

use parsimix::selection::small_class_warning;
use parsimix::{fit, grid_search, GridOptions, ModelCode, ModelSpec, PriorControl};

mod common;

fn main() -> parsimix::Result<()> {
    let x = common::data_from_args(&["PRE_ENG_COND", "PRE_ENG_COGN", "PRE_ENG_EMOC"]);
    let mut opts = GridOptions::new(ModelCode::FITTED.to_vec(), 1..=9);
    opts.prior = Some(PriorControl::default());
    let table = grid_search(&x, &opts)?;

    println!("Best BIC values:");
    for d in &table.bic_diffs {
        println!("  {},{}  BIC {:.3}  diff {:.3}", d.code, d.k, d.bic, d.diff);
    }
    println!("\nBIC by K (one curve per code):");
    for code in &opts.codes {
        let curve: Vec<String> = table
            .bic_curves()
            .into_iter()
            .filter(|(c, _, _)| c == code)
            .map(|(_, _, b)| b.map_or("   NA    ".into(), |b| format!("{b:9.1}")))
            .collect();
        println!("  {code}: {}", curve.join(" "));
    }

    let best = table.best_entry().expect("at least one model fitted");
    let spec = ModelSpec::new(best.code, best.k)?;
    let prior = PriorControl::default().resolve(&x, best.k)?;
    let f = fit(&x, &spec, Some(&prior), &opts.control)?;
    for c in small_class_warning(&f, 0.05) {
        println!("warning: component {} holds under 5% of the data", c + 1);
    }
    Ok(())
}
