//! Binary portable-graymap (P5) heatmap export.
//!
//! The format is an ASCII header — magic, an optional comment carrying the
//! run metadata, dimensions, maximum gray value — followed by one raw byte
//! per pixel, row-major from the top-left. Any image viewer or diff tool
//! can open it, and the bytes are fully specified, so heatmaps are
//! reproducible artifacts like every other output.

use std::io::Write;
use std::path::Path;

use funcinfo::data::ImageLayout;
use ndarray::ArrayView1;

use crate::error::CliError;

/// Collapses channel-planar per-feature scores to one value per pixel by
/// summing across channels, then min-max scales to 0..=255. A flat score
/// map renders as all black.
pub fn render_heatmap(scores: &ArrayView1<f64>, layout: &ImageLayout) -> Result<Vec<u8>, CliError> {
    if scores.len() != layout.len() {
        return Err(CliError::Config(format!(
            "scores cover {} features but the image layout has {}",
            scores.len(),
            layout.len()
        )));
    }
    let pixels = layout.pixels();
    let mut sums = vec![0.0f64; pixels];
    for c in 0..layout.channels {
        for p in 0..pixels {
            sums[p] += scores[c * pixels + p];
        }
    }
    let lo = sums.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    Ok(sums
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect())
}

/// Writes `bytes` (already scaled, row-major) as a P5 graymap.
pub fn write_pgm(
    path: &Path,
    layout: &ImageLayout,
    bytes: &[u8],
    meta_comment: &str,
) -> Result<(), CliError> {
    debug_assert_eq!(bytes.len(), layout.pixels());
    let mut out = Vec::with_capacity(bytes.len() + 64);
    write!(
        out,
        "P5\n# {meta_comment}\n{} {}\n255\n",
        layout.width, layout.height
    )?;
    out.extend_from_slice(bytes);
    std::fs::write(path, out)?;
    Ok(())
}
