//! The covariance family: constraints, parameter counts and the
//! volume / shape / orientation decomposition.

use nalgebra::DMatrix;
use parsimix::{count_free_params, decompose_covariance, ModelCode};

fn main() -> parsimix::Result<()> {
    let (d, k) = (3, 4);
    println!("code  fitted  volume    shape     orientation  params(d={d},K={k})");
    for code in ModelCode::ALL {
        let c = code.constraints();
        println!(
            "{:<5} {:<7} {:<9} {:<9} {:<12} {}",
            code.as_str(),
            c.fitted,
            format!("{:?}", c.volume),
            format!("{:?}", c.shape),
            format!("{:?}", c.orientation),
            count_free_params(code, d, k)
        );
    }

    let sigma = DMatrix::from_row_slice(2, 2, &[4.0, 1.5, 1.5, 2.0]);
    let dec = decompose_covariance(&sigma)?;
    println!("\nSigma = {sigma}");
    println!("volume lambda = {:.6}", dec.lambda);
    println!("shape diag = {:?}", dec.shape.as_slice());
    println!("orientation = {}", dec.orientation);
    println!("recomposed = {}", dec.compose());

    // unknown and named-only codes
    println!("{}", "XYZ".parse::<ModelCode>().unwrap_err());
    Ok(())
}
