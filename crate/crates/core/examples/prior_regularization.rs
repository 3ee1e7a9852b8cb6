//! Conjugate-prior regularization on heavily discretized data, where plain
//! maximum likelihood tends to collapse onto repeated values.

use parsimix::{fit, EmControl, ModelCode, ModelSpec, PriorControl};

mod common;

fn main() -> parsimix::Result<()> {
    let x = common::survey(300, 7);
    let spec = ModelSpec::new(ModelCode::VVV, 6)?;
    let control = EmControl::with_seed(1);

    match fit(&x, &spec, None, &control) {
        Ok(f) => println!("MLE:  loglik {:.3} BIC {:.3}", f.loglik, f.bic),
        Err(e) => println!("MLE failed: {e}"),
    }

    for kappa in [0.01, 0.1, 1.0] {
        let p = PriorControl {
            shrinkage: kappa,
            ..PriorControl::default()
        }
        .resolve(&x, 6)?;
        let f = fit(&x, &spec, Some(&p), &control)?;
        println!(
            "kappa {kappa:<5} loglik at MAP {:.3} objective {:.3} BIC {:.3}",
            f.loglik, f.objective, f.bic
        );
    }

    let p = PriorControl::default().resolve(&x, 6)?;
    println!("\ndefault hyperparameters: kappa {} dof {}", p.shrinkage, p.dof);
    println!("mean {}", common::fmt_vec(p.mean.iter(), 4));
    for r in p.scale.row_iter() {
        println!("scale {}", common::fmt_vec(r.iter(), 4));
    }
    Ok(())
}
