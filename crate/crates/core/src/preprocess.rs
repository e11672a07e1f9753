//! Dataset ingestion: long-edge bicubic resizing and raw/target pairing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::color::RgbImage;
use crate::error::{Error, Result};

/// Catmull-Rom.
const CUBIC_A: f64 = -0.5;

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "tif", "tiff", "bmp"];

fn cubic_weight(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((CUBIC_A + 2.0) * x - (CUBIC_A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((CUBIC_A * x - 5.0 * CUBIC_A) * x + 8.0 * CUBIC_A) * x - 4.0 * CUBIC_A
    } else {
        0.0
    }
}

/// Four source taps and weights for each destination coordinate, pixel centers
/// aligned, indices clamped to the edge.
fn taps(src_len: usize, dst_len: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = src_len as f64 / dst_len as f64;
    let last = src_len as isize - 1;
    (0..dst_len)
        .map(|d| {
            let center = (d as f64 + 0.5) * scale - 0.5;
            let base = center.floor();
            let frac = center - base;
            let base = base as isize;
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for k in 0..4 {
                idx[k] = (base + k as isize - 1).clamp(0, last) as usize;
                w[k] = cubic_weight(frac - (k as f64 - 1.0));
            }
            // Renormalize so constants stay constant to the last bit.
            let sum: f64 = w.iter().sum();
            (idx, w.map(|v| v / sum))
        })
        .collect()
}

/// Bicubic resample to exactly `width` x `height`, ignoring aspect ratio.
pub fn resize_exact(img: &RgbImage, width: usize, height: usize) -> Result<RgbImage> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "target size {width}x{height} is empty"
        )));
    }
    if (width, height) == (img.width(), img.height()) {
        return Ok(img.clone());
    }
    let src_w = img.width();
    let xt = taps(src_w, width);
    let yt = taps(img.height(), height);

    // Horizontal pass into a float buffer, then vertical with a single rounding.
    let mut horiz = vec![[0.0f64; 3]; width * img.height()];
    for y in 0..img.height() {
        let row = &img.pixels()[y * src_w..(y + 1) * src_w];
        for (x, (idx, w)) in xt.iter().enumerate() {
            let mut acc = [0.0; 3];
            for k in 0..4 {
                let p = row[idx[k]];
                for c in 0..3 {
                    acc[c] += w[k] * f64::from(p[c]);
                }
            }
            horiz[y * width + x] = acc;
        }
    }

    let mut out = Vec::with_capacity(width * height);
    for (idx, w) in &yt {
        for x in 0..width {
            let mut acc = [0.0; 3];
            for k in 0..4 {
                let p = horiz[idx[k] * width + x];
                for c in 0..3 {
                    acc[c] += w[k] * p[c];
                }
            }
            out.push(acc.map(|v| v.round().clamp(0.0, 255.0) as u8));
        }
    }
    RgbImage::new(width, height, out)
}

/// Output dimensions for a long-edge resize: the long edge becomes
/// `target_long`, the short edge is rounded half-up with a floor of one pixel.
pub fn long_edge_dims(width: usize, height: usize, target_long: usize) -> (usize, usize) {
    let (long, short) = if width >= height {
        (width, height)
    } else {
        (height, width)
    };
    // round(target * short / long) in integers; all quantities are positive.
    let scaled = ((2 * target_long * short + long) / (2 * long)).max(1);
    if width >= height {
        (target_long, scaled)
    } else {
        (scaled, target_long)
    }
}

pub fn resize_long_edge(img: &RgbImage, target_long: usize) -> Result<RgbImage> {
    if target_long == 0 {
        return Err(Error::invalid("long edge target must be at least 1"));
    }
    let (w, h) = long_edge_dims(img.width(), img.height(), target_long);
    resize_exact(img, w, h)
}

/// A raw image and its retouched counterpart sharing a file stem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPair {
    pub stem: String,
    pub raw_path: PathBuf,
    pub target_path: PathBuf,
}

#[derive(Debug, Clone, Default)]
pub struct Pairing {
    /// Sorted by stem.
    pub pairs: Vec<DatasetPair>,
    /// Files present on only one side.
    pub unmatched: Vec<PathBuf>,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// Image files in `dir` keyed by stem.
pub fn list_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() || !is_image(&path) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()).map(str::to_owned) else {
            continue;
        };
        if let Some(prev) = out.insert(stem.clone(), path.clone()) {
            return Err(Error::invalid(format!(
                "duplicate stem {stem:?}: {} and {}",
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

/// Match files of two directories by stem.
pub fn pair_dataset(raw_dir: &Path, target_dir: &Path) -> Result<Pairing> {
    let mut raw = list_images(raw_dir)?;
    let mut target = list_images(target_dir)?;

    let mut pairing = Pairing::default();
    let stems: Vec<String> = raw.keys().cloned().collect();
    for stem in stems {
        if let Some(target_path) = target.remove(&stem) {
            let raw_path = raw.remove(&stem).expect("stem came from raw");
            pairing.pairs.push(DatasetPair {
                stem,
                raw_path,
                target_path,
            });
        }
    }
    pairing.unmatched.extend(raw.into_values());
    pairing.unmatched.extend(target.into_values());

    for path in &pairing.unmatched {
        log::warn!("unmatched file: {}", path.display());
    }
    if pairing.pairs.is_empty() {
        return Err(Error::EmptyDataset {
            unmatched: pairing.unmatched,
        });
    }
    Ok(pairing)
}
