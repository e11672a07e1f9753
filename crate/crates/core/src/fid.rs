//! Fréchet distance between Gaussian fits of two feature sets.
//!
//! `d² = ‖μ₁ − μ₂‖² + Tr(C₁) + Tr(C₂) − 2·Tr √(C₁^½ C₂ C₁^½)`
//!
//! The cross term goes through the symmetric product so that only square
//! roots of PSD matrices are ever taken.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::color::RgbImage;
use crate::error::{Error, Result};
use crate::preprocess::{list_images, resize_exact};

/// Side of the square thumbnail used by [`tiny_image_features`].
pub const TINY_SIDE: usize = 16;
pub const TINY_DIM: usize = TINY_SIDE * TINY_SIDE * 3;

const SYMMETRY_TOLERANCE: f64 = 1e-6;
const RIDGE_RATIO: f64 = 1e-10;

/// `N x d` embeddings stored as `f32`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    data: Vec<f32>,
    pub source_tag: String,
}

impl FeatureSet {
    pub fn new(dim: usize, data: Vec<f32>, source_tag: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values do not form rows of width {dim}",
                data.len()
            )));
        }
        let count = data.len() / dim;
        if count < 2 {
            return Err(Error::InsufficientSamples {
                required: 2,
                got: count,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature set contains non-finite values"));
        }
        Ok(FeatureSet {
            dim,
            data,
            source_tag: source_tag.into(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], source_tag: impl Into<String>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("feature rows have differing lengths"));
        }
        let data = rows.iter().flatten().map(|&v| v as f32).collect();
        Self::new(dim, data, source_tag)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Mean and covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::invalid(format!(
                "mean has {} entries but covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(GaussianStats { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Column means and unbiased covariance, symmetrized.
pub fn fit_gaussian(fs: &FeatureSet) -> Result<GaussianStats> {
    let (n, d) = (fs.count(), fs.dim());
    if n < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            got: n,
        });
    }
    let x = DMatrix::from_fn(n, d, |i, j| f64::from(fs.data[i * d + j]));
    let mean = x.row_mean().transpose();
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let s = centered.tr_mul(&centered) / (n - 1) as f64;
    let cov = (&s + s.transpose()) * 0.5;
    Ok(GaussianStats { mean, cov })
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::invalid(format!(
            "matrix is {}x{}, not square",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (max deviation {asym:e})"
        )));
    }
    Ok(())
}

fn symmetric_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new((m + m.transpose()) * 0.5)
}

/// Principal square root of a symmetric PSD matrix. Negative eigenvalues from
/// rounding are clipped to zero.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(m)?;
    let eig = symmetric_eigen(m);
    let q = &eig.eigenvectors;
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let scaled = q * DMatrix::from_diagonal(&roots);
    let r = scaled * q.transpose();
    Ok((&r + r.transpose()) * 0.5)
}

/// Trace of the PSD square root, without forming it.
fn trace_sqrtm_psd(m: &DMatrix<f64>) -> f64 {
    symmetric_eigen(m)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .sum()
}

fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = symmetric_eigen(m).eigenvalues;
    (ev.min(), ev.max())
}

/// The Fréchet distance before clipping at zero.
pub fn frechet_distance_raw(s1: &GaussianStats, s2: &GaussianStats) -> Result<f64> {
    if s1.dim() != s2.dim() {
        return Err(Error::invalid(format!(
            "feature dimensions differ: {} vs {}",
            s1.dim(),
            s2.dim()
        )));
    }
    check_symmetric(&s1.cov)?;
    check_symmetric(&s2.cov)?;
    let d = s1.dim();
    let (mut c1, mut c2) = (s1.cov.clone(), s2.cov.clone());

    // Rank-deficient covariances (N < d) get the same small ridge on both sides.
    let needs_ridge = [&c1, &c2].iter().any(|c| {
        let (lo, hi) = eigen_range(c);
        lo < RIDGE_RATIO * hi
    });
    if needs_ridge {
        let eps = RIDGE_RATIO * c1.trace().max(c2.trace()) / d as f64;
        for i in 0..d {
            c1[(i, i)] += eps;
            c2[(i, i)] += eps;
        }
    }

    let root1 = sqrtm_psd(&c1)?;
    let cross = &root1 * &c2 * &root1;
    let tr_cross = trace_sqrtm_psd(&((&cross + cross.transpose()) * 0.5));
    let diff = &s1.mean - &s2.mean;
    Ok(diff.norm_squared() + c1.trace() + c2.trace() - 2.0 * tr_cross)
}

/// Squared Fréchet distance `d²`, clipped at zero.
pub fn frechet_distance(s1: &GaussianStats, s2: &GaussianStats) -> Result<f64> {
    let raw = frechet_distance_raw(s1, s2)?;
    Ok(if raw > 0.0 { raw } else { 0.0 })
}

/// Deterministic 768-d stand-in embedding: a 16x16 bicubic thumbnail,
/// channels scaled to `[0, 1]`, interleaved RGB in row-major order.
pub fn tiny_image_features(img: &RgbImage) -> Vec<f64> {
    let thumb = resize_exact(img, TINY_SIDE, TINY_SIDE).expect("thumbnail size is non-zero");
    thumb
        .pixels()
        .iter()
        .flat_map(|p| p.map(|c| f64::from(c) / 255.0))
        .collect()
}

/// Extract tiny features for every image in `dir`, rows sorted by file name.
pub fn extract_dir_features(dir: &Path) -> Result<FeatureSet> {
    let mut paths: Vec<PathBuf> = list_images(dir)?.into_values().collect();
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    let rows = paths
        .par_iter()
        .map(|p| RgbImage::open(p).map(|img| tiny_image_features(&img)))
        .collect::<Result<Vec<_>>>()?;
    FeatureSet::from_rows(&rows, format!("tiny:{}", dir.display()))
}

const FEAT_MAGIC: &[u8; 4] = b"FEAT";
const FEAT_VERSION: u32 = 1;
const FEAT_HEADER_LEN: usize = 4 + 4 + 4 + 8;

/// Serialize to the `FEAT` layout; the trailing CRC32 covers the f32 payload.
pub fn encode_features(fs: &FeatureSet) -> Vec<u8> {
    let mut buf = Vec::with_capacity(FEAT_HEADER_LEN + 4 * fs.data.len() + 4);
    buf.extend_from_slice(FEAT_MAGIC);
    buf.extend_from_slice(&FEAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(fs.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(fs.count() as u64).to_le_bytes());
    for v in &fs.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf[FEAT_HEADER_LEN..]);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<FeatureSet> {
    let err = |offset: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < 4 || &bytes[..4] != FEAT_MAGIC {
        return Err(err(0, "bad magic, expected \"FEAT\"".into()));
    }
    if bytes.len() < FEAT_HEADER_LEN {
        return Err(err(bytes.len(), "truncated header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FEAT_VERSION {
        return Err(err(4, format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if dim == 0 {
        return Err(err(8, "zero feature dimension".into()));
    }
    let payload_len = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(dim))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| err(12, format!("{count} rows of dimension {dim} overflow")))?;
    let payload_end = FEAT_HEADER_LEN
        .checked_add(payload_len)
        .ok_or_else(|| err(12, "payload size overflows".into()))?;
    if bytes.len() < payload_end + 4 {
        let rows_present = (bytes.len() - FEAT_HEADER_LEN) / (4 * dim);
        return Err(err(
            bytes.len(),
            format!("truncated: header claims {count} rows, file holds {rows_present} complete row(s) and no checksum"),
        ));
    }
    if bytes.len() > payload_end + 4 {
        return Err(err(payload_end + 4, "trailing bytes after checksum".into()));
    }
    let payload = &bytes[FEAT_HEADER_LEN..payload_end];
    let stored = u32::from_le_bytes(bytes[payload_end..].try_into().unwrap());
    let actual = crc32fast::hash(payload);
    if stored != actual {
        return Err(err(
            payload_end,
            format!("checksum mismatch: stored {stored:08x}, computed {actual:08x}"),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureSet::new(dim, data, path.display().to_string())
}

pub fn write_features(fs: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_features(fs))
        .map_err(|e| Error::io(path, e))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, path)
}
