//! Entropy and average posterior probabilities of a fitted classification.

use parsimix::{default_prior, diagnose, fit, EmControl, ModelCode, ModelSpec};

mod common;

fn main() -> parsimix::Result<()> {
    let x = common::data_from_args(&["PRE_ENG_COND", "PRE_ENG_COGN", "PRE_ENG_EMOC"]);
    let prior = default_prior(&x, 3)?;
    let f = fit(&x, &ModelSpec::new(ModelCode::VVI, 3)?, Some(&prior), &EmControl::with_seed(0))?;
    let r = diagnose(&f)?;

    println!("entropy {:.7}", r.entropy_total);
    println!("class count  entropy(mean sd min max)      AvePP(mean sd min max)");
    for (e, p) in r.class_entropy.iter().zip(&r.avepp.classes) {
        println!(
            "{:>5} {:>5}  {:.3} {:.3} {:.3} {:.3}    {:.3} {:.3} {:.3} {:.3}",
            e.class,
            e.count,
            e.mean,
            e.sd.unwrap_or(f64::NAN),
            e.min,
            e.max,
            p.mean,
            p.sd.unwrap_or(f64::NAN),
            p.min,
            p.max
        );
    }
    for note in &r.notes {
        println!("note: {note}");
    }

    // text ridge of case entropies for class 1
    let bins: Vec<_> = r.entropy_histogram.iter().filter(|b| b.class == 1).collect();
    let top = bins.iter().map(|b| b.count).max().unwrap_or(1).max(1);
    for b in bins {
        println!("{:.2}-{:.2} {}", b.lower, b.upper, "#".repeat(40 * b.count / top));
    }
    Ok(())
}
