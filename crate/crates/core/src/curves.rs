//! Luminance CDFs sampled on a 51-point lattice, and histogram-matching
//! remaps of the L channel.

use crate::color::LabImage;
use crate::error::{Error, Result};

/// Number of lattice points: L = 0, 2, ..., 100.
pub const CURVE_LEN: usize = 51;
/// Spacing between lattice points in L units.
pub const LEVEL_STEP: f64 = 2.0;

pub fn level(i: usize) -> f64 {
    LEVEL_STEP * i as f64
}

/// A luminance CDF evaluated on the 51-point lattice.
///
/// Values are in `[0, 1]`, non-decreasing, and the last one is exactly 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledCurve([f64; CURVE_LEN]);

impl SampledCurve {
    pub fn new(values: &[f64]) -> Result<Self> {
        let values: [f64; CURVE_LEN] = values.try_into().map_err(|_| {
            Error::invalid(format!(
                "curve needs {CURVE_LEN} values, got {}",
                values.len()
            ))
        })?;
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("curve value {v} outside [0, 1]")));
        }
        if let Some(i) = values.windows(2).position(|w| w[0] > w[1]) {
            return Err(Error::invalid(format!(
                "curve decreases at index {}",
                i + 1
            )));
        }
        if values[CURVE_LEN - 1] != 1.0 {
            return Err(Error::invalid("curve must end at 1"));
        }
        Ok(SampledCurve(values))
    }

    pub fn values(&self) -> &[f64; CURVE_LEN] {
        &self.0
    }

    /// Piecewise-linear interpolation over the lattice, clamped outside `[0, 100]`.
    pub fn eval(&self, l: f64) -> f64 {
        let pos = (l / LEVEL_STEP).clamp(0.0, (CURVE_LEN - 1) as f64);
        let i = (pos.floor() as usize).min(CURVE_LEN - 2);
        let t = pos - i as f64;
        self.0[i] + t * (self.0[i + 1] - self.0[i])
    }

    /// Pseudo-inverse `inf { l : G(l) >= p }` of the interpolated curve.
    ///
    /// Inside a rising segment the answer is interpolated linearly; a flat
    /// segment resolves to its left end.
    pub fn quantile(&self, p: f64) -> f64 {
        let v = &self.0;
        // First lattice index reaching p; always exists for p <= 1.
        let i = v.partition_point(|&x| x < p).min(CURVE_LEN - 1);
        if i == 0 {
            return 0.0;
        }
        let (lo, hi) = (v[i - 1], v[i]);
        level(i - 1) + LEVEL_STEP * (p - lo) / (hi - lo)
    }

    /// Largest absolute difference between two curves on the lattice.
    pub fn ks_distance(&self, other: &SampledCurve) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Euclidean distance between the 51-vectors.
    pub fn l2_distance(&self, other: &SampledCurve) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Right-continuous step CDF of an image's L values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    support: Vec<f64>,
    cum: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empty image"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite luminance"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let total = sorted.len() as f64;

        let mut support = Vec::new();
        let mut cum = Vec::new();
        for (i, &v) in sorted.iter().enumerate() {
            if sorted.get(i + 1) != Some(&v) {
                support.push(v);
                cum.push((i + 1) as f64 / total);
            }
        }
        Ok(EmpiricalCdf { support, cum })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn cum(&self) -> &[f64] {
        &self.cum
    }

    /// F(x): share of pixels with L <= x.
    pub fn eval(&self, x: f64) -> f64 {
        match self.support.partition_point(|&s| s <= x) {
            0 => 0.0,
            k => self.cum[k - 1],
        }
    }
}

pub fn empirical_cdf(img: &LabImage) -> EmpiricalCdf {
    EmpiricalCdf::from_values(img.l()).expect("LabImage is non-empty with L in [0, 100]")
}

pub fn sample_curve(cdf: &EmpiricalCdf) -> SampledCurve {
    let mut values = [0.0; CURVE_LEN];
    for (i, v) in values.iter_mut().enumerate() {
        *v = cdf.eval(level(i));
    }
    values[CURVE_LEN - 1] = 1.0;
    SampledCurve(values)
}

/// Shorthand for `sample_curve(&empirical_cdf(img))`.
pub fn image_curve(img: &LabImage) -> SampledCurve {
    sample_curve(&empirical_cdf(img))
}

/// Project arbitrary regressor output onto the set of valid curves: running
/// maximum, clamp to `[0, 1]`, last value pinned to 1.
pub fn monotone_project(raw: &[f64]) -> Result<SampledCurve> {
    if raw.len() != CURVE_LEN {
        return Err(Error::invalid(format!(
            "curve needs {CURVE_LEN} values, got {}",
            raw.len()
        )));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite curve value"));
    }
    let mut values = [0.0; CURVE_LEN];
    let mut running = f64::NEG_INFINITY;
    for (out, &v) in values.iter_mut().zip(raw) {
        running = running.max(v);
        *out = running.clamp(0.0, 1.0);
    }
    values[CURVE_LEN - 1] = 1.0;
    Ok(SampledCurve(values))
}

/// Histogram-match the L channel to `target` via `T(L) = G⁻(F(L))`, with F the
/// image's full empirical CDF. The a and b planes are copied unchanged.
pub fn remap_luminance(img: &LabImage, target: &SampledCurve) -> LabImage {
    let cdf = empirical_cdf(img);
    let mapped: Vec<f64> = cdf
        .cum
        .iter()
        .map(|&p| target.quantile(p).clamp(0.0, 100.0))
        .collect();
    let l = img
        .l()
        .iter()
        .map(|&v| {
            let k = cdf.support.partition_point(|&s| s < v);
            mapped[k]
        })
        .collect();
    img.with_luminance(l).expect("remapped L stays in [0, 100]")
}
