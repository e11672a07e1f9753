//! Multi-output Gaussian process regression with an isotropic RBF kernel.
//!
//! All output columns share one kernel matrix and one Cholesky factor. Only
//! the posterior mean is computed.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// `exp(-20)`, the noise term used when none is given.
pub const DEFAULT_ALPHA: f64 = 2.061_153_622_438_558e-9;

pub const DEFAULT_GRID: [f64; 7] = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0];

pub const DEFAULT_FOLDS: usize = 5;

pub const DEFAULT_SEED: u64 = 0x5EED;

/// Two CV scores closer than this are treated as tied.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfKernel {
    length_scale: f64,
}

impl RbfKernel {
    pub fn new(length_scale: f64) -> Result<Self> {
        if !(length_scale.is_finite() && length_scale > 0.0) {
            return Err(Error::invalid(format!(
                "length scale must be positive, got {length_scale}"
            )));
        }
        Ok(RbfKernel { length_scale })
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        (-d2 / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    /// Gram matrix of the rows of `x`; the upper triangle is mirrored so the
    /// result is exactly symmetric.
    pub fn gram(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let rows = row_vecs(x);
        let n = rows.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.eval(&rows[i], &rows[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

fn row_vecs(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Lower Cholesky factor, or `None` when a pivot is not strictly positive.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0 && d.is_finite()) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Solve `L Lᵀ X = B` in place, column by column.
fn cholesky_solve(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    for c in 0..b.ncols() {
        for i in 0..n {
            let mut s = b[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * b[(k, c)];
            }
            b[(i, c)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)] * b[(k, c)];
            }
            b[(i, c)] = s / l[(i, i)];
        }
    }
}

fn with_noise(k: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    let mut m = k.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += alpha;
    }
    m
}

/// A fitted regressor. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct GprModel {
    x_train: DMatrix<f64>,
    alpha: f64,
    kernel: RbfKernel,
    chol: DMatrix<f64>,
    dual: DMatrix<f64>,
    cv_seed: u64,
}

fn check_training_set(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::invalid("training set is empty"));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::invalid(format!(
            "{} inputs but {} targets",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.ncols() == 0 || y.ncols() == 0 {
        return Err(Error::invalid("zero-width training data"));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data contains non-finite values"));
    }
    Ok(())
}

pub fn fit(x: &DMatrix<f64>, y: &DMatrix<f64>, kernel: RbfKernel, alpha: f64) -> Result<GprModel> {
    check_training_set(x, y)?;
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid(format!(
            "alpha must be finite and non-negative, got {alpha}"
        )));
    }
    let k = kernel.gram(x);
    let Some(chol) = cholesky_lower(&with_noise(&k, alpha)) else {
        return Err(Error::IllConditioned {
            alpha,
            min_alpha: smallest_working_alpha(&k, alpha),
        });
    };
    let mut dual = y.clone();
    cholesky_solve(&chol, &mut dual);
    Ok(GprModel {
        x_train: x.clone(),
        alpha,
        kernel,
        chol,
        dual,
        cv_seed: DEFAULT_SEED,
    })
}

fn smallest_working_alpha(k: &DMatrix<f64>, alpha: f64) -> f64 {
    let mut candidate = if alpha > 0.0 {
        alpha * 2.0
    } else {
        f64::EPSILON
    };
    // Terminates: past the largest absolute row sum K + aI is diagonally dominant.
    while candidate.is_finite() {
        if cholesky_lower(&with_noise(k, candidate)).is_some() {
            return candidate;
        }
        candidate *= 2.0;
    }
    f64::INFINITY
}

impl GprModel {
    pub fn kernel(&self) -> RbfKernel {
        self.kernel
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn cv_seed(&self) -> u64 {
        self.cv_seed
    }

    pub fn with_cv_seed(mut self, seed: u64) -> Self {
        self.cv_seed = seed;
        self
    }

    pub fn x_train(&self) -> &DMatrix<f64> {
        &self.x_train
    }

    pub fn dual(&self) -> &DMatrix<f64> {
        &self.dual
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn n_train(&self) -> usize {
        self.x_train.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.x_train.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.dual.ncols()
    }

    /// Posterior mean at `x`. Not projected onto valid curves.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "query has {} features, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("query contains non-finite values"));
        }
        let k_star = DVector::from_iterator(
            self.n_train(),
            self.x_train
                .row_iter()
                .map(|row| self.kernel.eval(x, row.clone_owned().as_slice())),
        );
        Ok((self.dual.tr_mul(&k_star)).iter().copied().collect())
    }

    pub fn predict_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(x.nrows(), self.output_dim());
        for (i, row) in row_vecs(x).iter().enumerate() {
            let p = self.predict(row)?;
            out.row_mut(i).copy_from_slice(&p);
        }
        Ok(out)
    }
}

/// Outcome of a grid search over length scales.
#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub selected: RbfKernel,
    /// `(length_scale, mean held-out RMSE)` in grid order. Candidates whose
    /// fit failed on some fold score `+inf`.
    pub scores: Vec<(f64, f64)>,
    pub seed: u64,
}

/// Shuffle `0..n` with `seed`, then cut into `folds` contiguous blocks.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    (0..folds)
        .map(|f| order[f * n / folds..(f + 1) * n / folds].to_vec())
        .collect()
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    m.select_rows(rows.iter())
}

fn rmse(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    ((a - b).norm_squared() / a.len() as f64).sqrt()
}

/// Mean held-out RMSE of one length scale over the given folds.
pub fn cv_score(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    kernel: RbfKernel,
    alpha: f64,
    folds: &[Vec<usize>],
) -> f64 {
    let n = x.nrows();
    let mut total = 0.0;
    for held in folds {
        let train: Vec<usize> = (0..n).filter(|i| !held.contains(i)).collect();
        let model = match fit(
            &select_rows(x, &train),
            &select_rows(y, &train),
            kernel,
            alpha,
        ) {
            Ok(m) => m,
            Err(_) => return f64::INFINITY,
        };
        let pred = model
            .predict_rows(&select_rows(x, held))
            .expect("fold rows share the training width");
        total += rmse(&pred, &select_rows(y, held));
    }
    total / folds.len() as f64
}

/// Pick the length scale with the lowest mean held-out RMSE. Near-ties go to
/// the larger length scale.
pub fn cross_validate(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    grid: &[f64],
    folds: usize,
    alpha: f64,
    seed: u64,
) -> Result<CvReport> {
    check_training_set(x, y)?;
    if folds < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if x.nrows() < folds {
        return Err(Error::invalid(format!(
            "{} training rows cannot be split into {folds} folds",
            x.nrows()
        )));
    }
    if grid.is_empty() {
        return Err(Error::invalid("empty length-scale grid"));
    }
    let kernels = grid
        .iter()
        .map(|&l| RbfKernel::new(l))
        .collect::<Result<Vec<_>>>()?;
    let split = fold_assignment(x.nrows(), folds, seed);

    let scores: Vec<(f64, f64)> = kernels
        .par_iter()
        .map(|k| (k.length_scale(), cv_score(x, y, *k, alpha, &split)))
        .collect();

    let best = scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let selected = if best.is_finite() {
        scores
            .iter()
            .filter(|s| s.1 - best < TIE_TOLERANCE)
            .map(|s| s.0)
            .fold(f64::NEG_INFINITY, f64::max)
    } else if scores.len() == 1 {
        scores[0].0
    } else {
        return Err(Error::invalid(
            "every length scale failed to fit on some fold; raise alpha",
        ));
    };

    Ok(CvReport {
        selected: RbfKernel::new(selected)?,
        scores,
        seed,
    })
}

const MODEL_MAGIC: &[u8; 4] = b"GPRM";
const MODEL_VERSION: u32 = 1;
const MODEL_HEADER_LEN: usize = 4 + 4 * 4 + 8 * 3;

fn push_matrix(buf: &mut Vec<u8>, m: &DMatrix<f64>) {
    for row in m.row_iter() {
        for v in row.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

impl GprModel {
    /// Serialize to the little-endian `GPRM` layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, d_in, d_out) = (self.n_train(), self.input_dim(), self.output_dim());
        let mut buf = Vec::with_capacity(MODEL_HEADER_LEN + 8 * n * (d_in + d_out + n));
        buf.extend_from_slice(MODEL_MAGIC);
        for v in [MODEL_VERSION, n as u32, d_in as u32, d_out as u32] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&self.alpha.to_le_bytes());
        buf.extend_from_slice(&self.kernel.length_scale().to_le_bytes());
        buf.extend_from_slice(&self.cv_seed.to_le_bytes());
        push_matrix(&mut buf, &self.x_train);
        push_matrix(&mut buf, &self.dual);
        push_matrix(&mut buf, &self.chol);
        buf
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = ByteReader {
            bytes,
            pos: 0,
            path,
        };
        if r.take(4)? != MODEL_MAGIC {
            return Err(r.error_at(0, "bad magic, expected \"GPRM\""));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(r.error_at(4, format!("unsupported version {version}")));
        }
        let n = r.u32()? as usize;
        let d_in = r.u32()? as usize;
        let d_out = r.u32()? as usize;
        if n == 0 || d_in == 0 || d_out == 0 {
            return Err(r.error_at(8, "zero-sized model"));
        }
        let alpha = r.f64()?;
        let length_scale = r.f64()?;
        let cv_seed = r.u64()?;
        let kernel =
            RbfKernel::new(length_scale).map_err(|_| r.error_at(28, "invalid length scale"))?;
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(r.error_at(20, "invalid alpha"));
        }
        let expected = n
            .checked_mul(d_in + d_out + n)
            .and_then(|v| v.checked_mul(8))
            .ok_or_else(|| r.error_at(8, "matrix sizes overflow"))?;
        if bytes.len() - MODEL_HEADER_LEN != expected {
            let offset = bytes.len().min(MODEL_HEADER_LEN + expected) as u64;
            return Err(r.error_at(
                offset,
                format!(
                    "payload is {} bytes, header implies {expected}",
                    bytes.len() - MODEL_HEADER_LEN
                ),
            ));
        }
        let x_train = r.matrix(n, d_in)?;
        let dual = r.matrix(n, d_out)?;
        let chol = r.matrix(n, n)?;
        Ok(GprModel {
            x_train,
            alpha,
            kernel,
            chol,
            dual,
            cv_seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl ByteReader<'_> {
    fn error_at(&self, offset: u64, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset,
            message: message.into(),
        }
    }

    fn take(&mut self, len: usize) -> Result<&[u8]> {
        let end = self.pos + len;
        if end > self.bytes.len() {
            return Err(self.error_at(self.bytes.len() as u64, "unexpected end of file"));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let start = self.pos;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(self.f64()?);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(self.error_at(start as u64, "non-finite matrix entry"));
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }
}
