//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oml_core::{load_csv, Dataset, Preprocessor, Triplet};

pub fn random_triplets(n: usize, dim: usize, seed: u64) -> Vec<Triplet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut v = || {
                (0..dim)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect::<Vec<f64>>()
            };
            Triplet::new(v(), v(), v()).expect("equal dims")
        })
        .collect()
}

/// Wine, z-scored.
pub fn wine() -> Dataset {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/wine.csv");
    let mut ds = load_csv(path, "label").expect("wine.csv");
    let pre = Preprocessor::fit(&ds.features, true, None).expect("fit");
    ds.features = pre.apply(&ds.features).expect("apply");
    ds
}
