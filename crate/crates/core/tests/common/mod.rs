#![allow(dead_code)]

use curvesmith::color::{lab_to_rgb, rgb_to_lab, ColorSpace, RgbImage};
use curvesmith::curves::SampledCurve;
use curvesmith::LabImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A smooth "photo-like" image: a tilted gradient, a few soft colored blobs,
/// a random exposure curve and a little sensor noise.
pub fn natural_image(seed: u64, width: usize, height: usize) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let base: [f64; 3] = [
        rng.random_range(0.2..0.8),
        rng.random_range(0.2..0.8),
        rng.random_range(0.2..0.8),
    ];
    let slope: f64 = rng.random_range(0.1..0.5);
    let blobs: Vec<(f64, f64, f64, [f64; 3])> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.08..0.3),
                [
                    rng.random_range(-0.4..0.4),
                    rng.random_range(-0.4..0.4),
                    rng.random_range(-0.4..0.4),
                ],
            )
        })
        .collect();
    let gamma: f64 = rng.random_range(0.6..1.8);
    let noise: Vec<f64> = (0..width * height * 3)
        .map(|_| rng.random_range(-0.02..0.02))
        .collect();

    RgbImage::from_fn(width, height, |x, y| {
        let u = x as f64 / width as f64;
        let v = y as f64 / height as f64;
        let g = slope * ((u - 0.5) * dx + (v - 0.5) * dy);
        let mut px = [0u8; 3];
        for c in 0..3 {
            let mut val = base[c] + g;
            for (bx, by, r, col) in &blobs {
                let d2 = (u - bx).powi(2) + (v - by).powi(2);
                val += col[c] * (-d2 / (2.0 * r * r)).exp();
            }
            val = val.clamp(0.0, 1.0).powf(gamma) + noise[(y * width + x) * 3 + c];
            px[c] = (val.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        px
    })
    .unwrap()
}

pub fn noise_image(seed: u64, width: usize, height: usize) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RgbImage::from_fn(width, height, |_, _| {
        [rng.random(), rng.random(), rng.random()]
    })
    .unwrap()
}

/// Brighten luminance with `L' = 100 (L/100)^0.5`, keeping a and b.
pub fn gamma_brighten(img: &RgbImage, space: ColorSpace) -> RgbImage {
    let lab = rgb_to_lab(img, space);
    let l = lab
        .l()
        .iter()
        .map(|&v| 100.0 * (v / 100.0).sqrt())
        .collect();
    let out: LabImage = lab.with_luminance(l).unwrap();
    lab_to_rgb(&out, space).unwrap()
}

/// Random valid curve: sorted uniforms with the last value pinned to 1.
pub fn random_curve(rng: &mut ChaCha8Rng) -> SampledCurve {
    let mut v: Vec<f64> = (0..51).map(|_| rng.random::<f64>()).collect();
    v.sort_by(f64::total_cmp);
    v[50] = 1.0;
    SampledCurve::new(&v).unwrap()
}
