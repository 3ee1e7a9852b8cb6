//! Descriptive statistics of a delimited file.
//!
//!     cargo run --example summary -- data.csv ';'

use parsimix::{parse_text, summarize, IngestOptions};

mod common;

fn main() -> parsimix::Result<()> {
    let mut args = std::env::args().skip(1);
    let x = match args.next() {
        Some(path) => {
            let sep = args.next().and_then(|s| s.chars().next()).unwrap_or(',');
            parsimix::load(&path, &IngestOptions { sep, ..Default::default() })?
        }
        None => {
            // decimal commas are accepted when the separator is not a comma
            let inline = parse_text("a;b\n1,5;2\n2,25;4\n3;3,5\n", &IngestOptions { sep: ';', ..Default::default() })?;
            println!("inline table: {:?}\n", inline.values().as_slice());
            common::survey(717, 42)
        }
    };
    println!("{:<12} {:>5} {:>5} {:>7} {:>7} {:>5} {:>7} {:>5}", "name", "N", "Nunq", "Mean", "SD", "Min", "Median", "Max");
    for s in summarize(&x) {
        println!(
            "{:<12} {:>5} {:>5} {:>7.3} {:>7.3} {:>5} {:>7} {:>5}",
            s.name,
            s.n,
            s.n_unique,
            s.mean,
            s.sd.unwrap_or(f64::NAN),
            s.min,
            s.median,
            s.max
        );
    }
    Ok(())
}
