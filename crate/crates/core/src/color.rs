//! 8-bit RGB images and the CIELAB working space.
//!
//! Conversions follow the usual chain: gamma expansion to linear light, a
//! 3x3 matrix to CIE XYZ, then the CIE 1976 L*a*b* nonlinearity relative to
//! the D65 white of the chosen RGB space. L* is natively in `[0, 100]`; a*
//! and b* are left unscaled.

use std::path::Path;

use crate::error::{Error, Result};

/// RGB working space of 8-bit images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum ColorSpace {
    /// IEC 61966-2-1 sRGB, D65.
    #[default]
    #[value(name = "srgb")]
    Srgb,
    /// Adobe RGB (1998), D65.
    #[value(name = "adobe")]
    AdobeRgb,
}

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

const ADOBE_TO_XYZ: [[f64; 3]; 3] = [
    [0.576_730_9, 0.185_554_0, 0.188_185_2],
    [0.297_376_9, 0.627_349_1, 0.075_274_1],
    [0.027_034_3, 0.070_687_2, 0.991_108_5],
];

const ADOBE_GAMMA: f64 = 563.0 / 256.0;

// CIE constants in their exact rational form.
const LAB_EPSILON: f64 = 216.0 / 24389.0;
const LAB_KAPPA: f64 = 24389.0 / 27.0;

impl ColorSpace {
    fn to_xyz(self) -> &'static [[f64; 3]; 3] {
        match self {
            ColorSpace::Srgb => &SRGB_TO_XYZ,
            ColorSpace::AdobeRgb => &ADOBE_TO_XYZ,
        }
    }

    fn decode(self, v: f64) -> f64 {
        match self {
            ColorSpace::Srgb => {
                if v <= 0.040_45 {
                    v / 12.92
                } else {
                    ((v + 0.055) / 1.055).powf(2.4)
                }
            }
            ColorSpace::AdobeRgb => v.powf(ADOBE_GAMMA),
        }
    }

    fn encode(self, v: f64) -> f64 {
        let v = v.max(0.0);
        match self {
            ColorSpace::Srgb => {
                if v <= 0.003_130_8 {
                    v * 12.92
                } else {
                    1.055 * v.powf(1.0 / 2.4) - 0.055
                }
            }
            ColorSpace::AdobeRgb => v.powf(1.0 / ADOBE_GAMMA),
        }
    }
}

/// Precomputed forward/inverse matrices and reference white for one space.
///
/// The white is taken as the image of RGB (1,1,1) so that every neutral gray
/// lands on a* = b* = 0 up to rounding.
struct Transform {
    space: ColorSpace,
    forward: [[f64; 3]; 3],
    inverse: [[f64; 3]; 3],
    white: [f64; 3],
}

impl Transform {
    fn new(space: ColorSpace) -> Self {
        let forward = *space.to_xyz();
        let white = [
            forward[0].iter().sum(),
            forward[1].iter().sum(),
            forward[2].iter().sum(),
        ];
        Transform {
            space,
            forward,
            inverse: invert3(&forward),
            white,
        }
    }

    fn rgb_to_lab(&self, rgb: [u8; 3]) -> [f64; 3] {
        let lin = rgb.map(|c| self.space.decode(f64::from(c) / 255.0));
        let xyz = mul3(&self.forward, lin);
        let f = [0, 1, 2].map(|i| lab_f(xyz[i] / self.white[i]));
        let l = (116.0 * f[1] - 16.0).clamp(0.0, 100.0);
        [l, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])]
    }

    fn lab_to_rgb(&self, lab: [f64; 3]) -> [u8; 3] {
        let l = lab[0].clamp(0.0, 100.0);
        let fy = (l + 16.0) / 116.0;
        let fx = fy + lab[1] / 500.0;
        let fz = fy - lab[2] / 200.0;
        let yr = if l > LAB_KAPPA * LAB_EPSILON {
            fy * fy * fy
        } else {
            l / LAB_KAPPA
        };
        let xyz = [
            lab_f_inv(fx) * self.white[0],
            yr * self.white[1],
            lab_f_inv(fz) * self.white[2],
        ];
        mul3(&self.inverse, xyz).map(|c| quantize(self.space.encode(c)))
    }
}

fn lab_f(t: f64) -> f64 {
    if t > LAB_EPSILON {
        t.cbrt()
    } else {
        (LAB_KAPPA * t + 16.0) / 116.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    let cube = f * f * f;
    if cube > LAB_EPSILON {
        cube
    } else {
        (116.0 * f - 16.0) / LAB_KAPPA
    }
}

/// Round half away from zero and clamp to the 8-bit range.
fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

fn mul3(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let cof =
        |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj = [
        [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    let det = m[0][0] * adj[0][0] + m[0][1] * adj[1][0] + m[0][2] * adj[2][0];
    adj.map(|row| row.map(|v| v / det))
}

/// An 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("empty image ({width}x{height})")));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "{} pixels given for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(RgbImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        Self::new(width, height, vec![rgb; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    /// Decode an image file. Grayscale is expanded to RGB; an alpha channel is
    /// dropped with a warning.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let decoded = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        if decoded.color().has_alpha() {
            log::warn!("{}: alpha channel dropped", path.display());
        }
        Ok(Self::from(decoded.into_rgb8()))
    }

    /// Encode as PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        image::RgbImage::from(self)
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }
}

impl From<image::RgbImage> for RgbImage {
    fn from(img: image::RgbImage) -> Self {
        let (width, height) = (img.width() as usize, img.height() as usize);
        RgbImage {
            width,
            height,
            pixels: img.pixels().map(|p| p.0).collect(),
        }
    }
}

impl From<&RgbImage> for image::RgbImage {
    fn from(img: &RgbImage) -> Self {
        let raw = img.pixels.iter().flatten().copied().collect();
        image::RgbImage::from_raw(img.width as u32, img.height as u32, raw)
            .expect("pixel buffer matches dimensions")
    }
}

/// A CIELAB image with planar channels. L is kept in `[0, 100]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    width: usize,
    height: usize,
    l: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl LabImage {
    pub fn new(width: usize, height: usize, l: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let n = width * height;
        if n == 0 {
            return Err(Error::invalid(format!("empty image ({width}x{height})")));
        }
        if l.len() != n || a.len() != n || b.len() != n {
            return Err(Error::invalid(format!(
                "channel lengths ({}, {}, {}) do not match {width}x{height}",
                l.len(),
                a.len(),
                b.len()
            )));
        }
        if let Some(bad) = l.iter().find(|v| !(0.0..=100.0).contains(*v)) {
            return Err(Error::invalid(format!("L value {bad} outside [0, 100]")));
        }
        Ok(LabImage {
            width,
            height,
            l,
            a,
            b,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn l(&self) -> &[f64] {
        &self.l
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Swap in a new luminance plane, keeping a and b untouched.
    pub fn with_luminance(&self, l: Vec<f64>) -> Result<Self> {
        Self::new(self.width, self.height, l, self.a.clone(), self.b.clone())
    }
}

pub fn rgb_to_lab(img: &RgbImage, space: ColorSpace) -> LabImage {
    let t = Transform::new(space);
    let n = img.pixels.len();
    let (mut l, mut a, mut b) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for &p in &img.pixels {
        let lab = t.rgb_to_lab(p);
        l.push(lab[0]);
        a.push(lab[1]);
        b.push(lab[2]);
    }
    LabImage {
        width: img.width,
        height: img.height,
        l,
        a,
        b,
    }
}

pub fn lab_to_rgb(img: &LabImage, space: ColorSpace) -> Result<RgbImage> {
    let t = Transform::new(space);
    let mut pixels = Vec::with_capacity(img.l.len());
    for i in 0..img.l.len() {
        let lab = [img.l[i], img.a[i], img.b[i]];
        if lab.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite Lab value at pixel {i}")));
        }
        pixels.push(t.lab_to_rgb(lab));
    }
    RgbImage::new(img.width, img.height, pixels)
}

/// Convert a single pixel; handy for tests and probes.
pub fn pixel_to_lab(rgb: [u8; 3], space: ColorSpace) -> [f64; 3] {
    Transform::new(space).rgb_to_lab(rgb)
}

pub fn lab_to_pixel(lab: [f64; 3], space: ColorSpace) -> [u8; 3] {
    Transform::new(space).lab_to_rgb(lab)
}
