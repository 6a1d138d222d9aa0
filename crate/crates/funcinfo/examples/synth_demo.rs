//! Generates a small synthetic classification dataset with known
//! informative features and writes it next to its layout sidecar, ready
//! for the `funcinfo` command-line tool:
//!
//! ```text
//! cargo run -p funcinfo --example synth_demo -- out/
//! ```
//!
//! Produces `out/train.csv`, `out/test.csv`, `out/layout.json` and prints
//! the ground-truth informative feature indices.

use std::path::PathBuf;

use funcinfo::data::{generate, save_csv, save_layout, Layout, SyntheticSpec};

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).expect("output directory must be creatable");

    // 8 features, 3 classes, features {0, 1, 2} carry the signal.
    let train_spec =
        SyntheticSpec::isotropic_blobs(8, 3, &[0, 1, 2], 2.0, 1.0, 200, 42).unwrap();
    let test_spec =
        SyntheticSpec::isotropic_blobs(8, 3, &[0, 1, 2], 2.0, 1.0, 50, 43).unwrap();

    let (train, mask) = generate(&train_spec).unwrap();
    let (test, _) = generate(&test_spec).unwrap();

    save_csv(&dir.join("train.csv"), &train).unwrap();
    save_csv(&dir.join("test.csv"), &test).unwrap();
    save_layout(&dir.join("layout.json"), Layout::Raw, None).unwrap();

    let informative: Vec<usize> =
        mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
    println!(
        "wrote {} train rows and {} test rows to {}",
        train.num_examples(),
        test.num_examples(),
        dir.display()
    );
    println!("informative features: {informative:?}");
}
