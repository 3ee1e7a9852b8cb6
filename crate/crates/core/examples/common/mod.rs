#![allow(dead_code)]

use parsimix::DataMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Survey-like data: three latent profiles on three 1-5 scales, rounded to
/// two decimals. Means stay clear of the scale ends so clamping is rare.
pub fn survey(n: usize, seed: u64) -> DataMatrix {
    let profiles = [
        (0.3, [3.2, 2.2, 2.5], [0.5, 0.45, 0.6]),
        (0.15, [4.3, 3.8, 4.2], [0.25, 0.4, 0.25]),
        (0.55, [3.9, 3.0, 3.5], [0.35, 0.4, 0.4]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let (_, mean, sd) = profiles
            .iter()
            .find(|p| {
                acc += p.0;
                u < acc
            })
            .unwrap_or(&profiles[2]);
        let row = (0..3)
            .map(|j| {
                let v: f64 = Normal::new(mean[j], sd[j]).unwrap().sample(&mut rng);
                ((v * 100.0).round() / 100.0).clamp(1.0, 5.0)
            })
            .collect();
        rows.push(row);
    }
    let x = DataMatrix::from_rows(&rows).unwrap();
    DataMatrix::new(
        x.values().clone(),
        vec!["Behavioral".into(), "Cognitive".into(), "Emotional".into()],
    )
    .unwrap()
}

/// Loads `path` (semicolon separated) if given, else synthetic survey data.
pub fn data_from_args(columns: &[&str]) -> DataMatrix {
    match std::env::args().nth(1) {
        Some(path) => parsimix::load(
            &path,
            &parsimix::IngestOptions {
                sep: ';',
                columns: Some(columns.iter().map(|s| s.to_string()).collect()),
                renames: vec![],
            },
        )
        .expect("readable input"),
        None => survey(717, 42),
    }
}

pub fn fmt_vec<'a>(v: impl IntoIterator<Item = &'a f64>, digits: usize) -> String {
    let parts: Vec<String> = v.into_iter().map(|x| format!("{x:.digits$}")).collect();
    format!("[{}]", parts.join(", "))
}
