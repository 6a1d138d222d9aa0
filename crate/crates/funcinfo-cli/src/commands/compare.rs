//! `funcinfo compare`: Spearman rank correlation between two attribution
//! files, for quick method-vs-method agreement checks.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use funcinfo::explain::{read_attribution_csv, Attribution, AttributionMeta};
use funcinfo::eval::spearman;

use crate::config::CompareArgs;
use crate::error::CliError;

pub fn run(args: CompareArgs) -> Result<(), CliError> {
    let (left, left_meta) = read_attribution(&args.left)?;
    let (right, right_meta) = read_attribution(&args.right)?;
    if left.scores.len() != right.scores.len() {
        return Err(CliError::Config(format!(
            "attribution lengths differ: {} has {}, {} has {}",
            args.left.display(),
            left.scores.len(),
            args.right.display(),
            right.scores.len()
        )));
    }
    let rho = spearman(
        left.scores.as_slice().expect("contiguous scores"),
        right.scores.as_slice().expect("contiguous scores"),
    )?;
    println!("left: {} ({} features, class {})", left_meta.method, left.scores.len(), left.class);
    println!("right: {} ({} features, class {})", right_meta.method, right.scores.len(), right.class);
    println!("spearman: {rho}");
    Ok(())
}

fn read_attribution(path: &Path) -> Result<(Attribution, AttributionMeta), CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = BufReader::new(file);
    Ok(read_attribution_csv(&mut reader)?)
}
