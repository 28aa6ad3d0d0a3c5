//! File writers for CSVs, JSON and PGM images under the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use sdae_ivs::ivs::IvsStep;
use sdae_ivs::pgm::{rescale_unit, GrayImage};
use sdae_ivs::stack::StackModel;

use crate::CliError;

/// Writes `bytes` to `out/rel`, creating parent directories, and returns `rel`
/// with forward slashes so reports do not depend on the platform.
pub fn write_bytes(out: &Path, rel: &str, bytes: &[u8]) -> Result<String, CliError> {
    let path = out.join(rel);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(rel.to_string())
}

pub fn write_json<S: Serialize>(out: &Path, rel: &str, value: &S) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
    text.push('\n');
    write_bytes(out, rel, text.as_bytes())
}

pub fn write_image(out: &Path, rel: &str, image: &GrayImage) -> Result<String, CliError> {
    write_bytes(out, rel, &image.to_pgm())
}

/// `iteration,popcount,valid_error` rows, the axes of the selection-progress plot.
pub fn history_csv(history: &[IvsStep<f64>]) -> String {
    let mut s = String::from("iteration,popcount,valid_error\n");
    for step in history {
        writeln!(s, "{},{},{}", step.iteration, step.popcount, step.valid_error).unwrap();
    }
    s
}

/// Rows rendered as `shape` tiles, each min-max rescaled, ten per row.
pub fn tile_image(rows: &[Vec<f64>], shape: (usize, usize)) -> Result<GrayImage, CliError> {
    let tiles: Vec<Vec<f64>> = rows.iter().map(|r| rescale_unit(r)).collect();
    GrayImage::grid(&tiles, shape, 10, 1, 0.0).map_err(CliError::runtime)
}

/// Reconstruction grid: the first row holds the inputs, row `k` their
/// reconstructions through `k` layers.
pub fn reconstruction_image(
    model: &StackModel<f64>,
    inputs: &[&[f64]],
    shape: (usize, usize),
) -> Result<GrayImage, CliError> {
    let mut tiles: Vec<Vec<f64>> = inputs.iter().map(|x| x.to_vec()).collect();
    for k in 1..=model.depth() {
        for x in inputs {
            tiles.push(model.reconstruct_through(x, k).map_err(CliError::runtime)?);
        }
    }
    GrayImage::grid(&tiles, shape, inputs.len().max(1), 1, 0.0).map_err(CliError::runtime)
}
