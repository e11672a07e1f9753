//! End-to-end operations behind the CLI subcommands.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::color::{lab_to_rgb, rgb_to_lab, ColorSpace, RgbImage};
use crate::curves::{image_curve, monotone_project, remap_luminance, SampledCurve, CURVE_LEN};
use crate::error::{Error, Result};
use crate::gpr::{self, CvReport, GprModel};
use crate::preprocess::{list_images, pair_dataset, resize_long_edge, DatasetPair};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub color_space: ColorSpace,
    pub long_edge: usize,
    pub alpha: f64,
    pub folds: usize,
    pub grid: Vec<f64>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            color_space: ColorSpace::Srgb,
            long_edge: 500,
            alpha: gpr::DEFAULT_ALPHA,
            folds: gpr::DEFAULT_FOLDS,
            grid: gpr::DEFAULT_GRID.to_vec(),
            seed: gpr::DEFAULT_SEED,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.long_edge == 0 {
            return Err(Error::invalid("long edge must be at least 1"));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::invalid(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        if self.folds < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 folds, got {}",
                self.folds
            )));
        }
        if self.grid.is_empty() || self.grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::invalid(
                "length-scale grid must be non-empty and positive",
            ));
        }
        Ok(())
    }
}

/// Luminance curve of one image file.
pub fn curve_of_file(path: &Path, space: ColorSpace) -> Result<SampledCurve> {
    let img = RgbImage::open(path)?;
    Ok(image_curve(&rgb_to_lab(&img, space)))
}

pub struct FitOutcome {
    pub model: GprModel,
    pub report: CvReport,
    pub pairs_used: Vec<String>,
    pub failures: Vec<(PathBuf, String)>,
    pub elapsed: Duration,
}

fn rows_to_matrix(rows: &[SampledCurve]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), CURVE_LEN, |i, j| rows[i].values()[j])
}

/// Pair, decode, and learn raw-curve to target-curve regression.
pub fn fit_dataset(
    config: &PipelineConfig,
    raw_dir: &Path,
    target_dir: &Path,
) -> Result<FitOutcome> {
    config.validate()?;
    let start = Instant::now();
    let pairing = pair_dataset(raw_dir, target_dir)?;
    let total = pairing.pairs.len();

    let decoded: Vec<(&DatasetPair, Result<(SampledCurve, SampledCurve)>)> = pairing
        .pairs
        .par_iter()
        .map(|pair| {
            let curves = curve_of_file(&pair.raw_path, config.color_space)
                .and_then(|raw| Ok((raw, curve_of_file(&pair.target_path, config.color_space)?)));
            (pair, curves)
        })
        .collect();

    let mut xs = Vec::with_capacity(total);
    let mut ys = Vec::with_capacity(total);
    let mut pairs_used = Vec::with_capacity(total);
    let mut failures = Vec::new();
    for (pair, res) in decoded {
        match res {
            Ok((x, y)) => {
                xs.push(x);
                ys.push(y);
                pairs_used.push(pair.stem.clone());
            }
            Err(e) => {
                log::warn!("skipping pair {}: {e}", pair.stem);
                failures.push((pair.raw_path.clone(), e.to_string()));
            }
        }
    }
    if failures.len() * 10 > total {
        return Err(Error::TooManyFailures { failures, total });
    }
    if xs.len() < config.folds {
        return Err(Error::invalid(format!(
            "{} usable pair(s) cannot be split into {} folds",
            xs.len(),
            config.folds
        )));
    }

    let x = rows_to_matrix(&xs);
    let y = rows_to_matrix(&ys);
    let report = gpr::cross_validate(
        &x,
        &y,
        &config.grid,
        config.folds,
        config.alpha,
        config.seed,
    )?;
    let model = gpr::fit(&x, &y, report.selected, config.alpha)?.with_cv_seed(config.seed);

    Ok(FitOutcome {
        model,
        report,
        pairs_used,
        failures,
        elapsed: start.elapsed(),
    })
}

/// Predict the target curve for `img` and remap its luminance to it.
pub fn apply_model(model: &GprModel, img: &RgbImage, space: ColorSpace) -> Result<RgbImage> {
    let lab = rgb_to_lab(img, space);
    let predicted = model.predict(image_curve(&lab).values())?;
    let target = monotone_project(&predicted)?;
    lab_to_rgb(&remap_luminance(&lab, &target), space)
}

pub fn apply_model_file(
    model: &GprModel,
    input: &Path,
    output: &Path,
    space: ColorSpace,
) -> Result<()> {
    let img = RgbImage::open(input)?;
    apply_model(model, &img, space)?.save_png(output)
}

/// Resize every image in `input_dir` and write `<stem>.png` into `output_dir`.
/// Returns the written paths, sorted.
pub fn preprocess_dir(
    input_dir: &Path,
    output_dir: &Path,
    long_edge: usize,
) -> Result<Vec<PathBuf>> {
    if long_edge == 0 {
        return Err(Error::invalid("long edge must be at least 1"));
    }
    let inputs: Vec<(String, PathBuf)> = list_images(input_dir)?.into_iter().collect();
    if inputs.is_empty() {
        return Err(Error::EmptyDataset { unmatched: vec![] });
    }
    std::fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    inputs
        .par_iter()
        .map(|(stem, path)| {
            let img = RgbImage::open(path)?;
            let out = output_dir.join(format!("{stem}.png"));
            resize_long_edge(&img, long_edge)?.save_png(&out)?;
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = PipelineConfig {
            folds: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig {
            grid: vec![1.0, -2.0],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig {
            alpha: f64::NAN,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
