//! Benchmark fixtures shared by the criterion targets in `benches/`.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use spopf_core::btd::BtdMatrix;
use spopf_core::{NetworkCase, Scenario};

/// A diagonally dominant symmetric block-tridiagonal matrix with `k` blocks
/// of size `b`, and a matching right-hand side.
pub fn random_btd(k: usize, b: usize, seed: u64) -> (BtdMatrix, DVector<f64>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let sub: Vec<DMatrix<f64>> = (1..k).map(|_| DMatrix::from_fn(b, b, |_, _| rng.random_range(-1.0..1.0))).collect();
    let diag = (0..k)
        .map(|_| {
            let m = DMatrix::from_fn(b, b, |_, _| rng.random_range(-1.0..1.0));
            let mut d = &m + m.transpose();
            for i in 0..b {
                d[(i, i)] += 4.0 * b as f64;
            }
            d
        })
        .collect();
    let rhs = DVector::from_fn(k * b, |_, _| rng.random_range(-1.0..1.0));
    (BtdMatrix::from_blocks(diag, sub).expect("consistent blocks"), rhs)
}

/// Path to a file in the workspace `data/` directory.
pub fn data_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

/// Loads a scenario from `data/` together with the case it names.
pub fn load_scenario(name: &str) -> (Scenario, NetworkCase) {
    let file = data_path(name);
    let sc = Scenario::from_json(&std::fs::read_to_string(&file).expect("scenario file")).expect("scenario");
    let case_file = sc.case_path(&file).expect("case path");
    let case = spopf_core::parse_case_matpower(&std::fs::read_to_string(case_file).expect("case file"))
        .expect("case")
        .case;
    (sc, case)
}
