//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line; run with
//! `cargo test --test acceptance -- --nocapture --test-threads 1` to see them.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use curvesmith::color::{lab_to_pixel, pixel_to_lab, rgb_to_lab, ColorSpace, RgbImage};
use curvesmith::curves::{image_curve, remap_luminance, SampledCurve};
use curvesmith::fid::{
    fit_gaussian, frechet_distance, sqrtm_psd, tiny_image_features, FeatureSet, GaussianStats,
};
use curvesmith::gpr::{fit, RbfKernel, DEFAULT_ALPHA};
use curvesmith::preprocess::resize_long_edge;
use curvesmith::{cli, GprModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(name: &str, ok: bool, detail: String) {
    println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

fn random_feature_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> FeatureSet {
    let mix = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z = DVector::from_fn(d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            (&mix * z).iter().map(|v| v + 3.0).collect()
        })
        .collect();
    FeatureSet::from_rows(&rows, "random").unwrap()
}

#[test]
fn fid_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.random_range(2..=64);
        let n = rng.random_range(d + 2..=2 * d + 20);
        let s = fit_gaussian(&random_feature_set(&mut rng, n, d)).unwrap();
        worst = worst.max(frechet_distance(&s, &s).unwrap());
    }
    let elapsed = start.elapsed();
    verdict(
        "FID identity",
        worst <= 1e-6 && elapsed < Duration::from_secs(5),
        format!("max d2(S,S) = {worst:.3e} over 20 sets, {elapsed:.2?}"),
    );
}

#[test]
fn fid_closed_form_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..=32);
        let mu1: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mu2: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(0.01..4.0)).collect();
        let b: Vec<f64> = (0..d).map(|_| rng.random_range(0.01..4.0)).collect();
        let expected: f64 = (0..d)
            .map(|i| (mu1[i] - mu2[i]).powi(2) + (a[i].sqrt() - b[i].sqrt()).powi(2))
            .sum();
        let s1 = GaussianStats::new(
            DVector::from_vec(mu1),
            DMatrix::from_diagonal(&DVector::from_vec(a)),
        )
        .unwrap();
        let s2 = GaussianStats::new(
            DVector::from_vec(mu2),
            DMatrix::from_diagonal(&DVector::from_vec(b)),
        )
        .unwrap();
        let got = frechet_distance(&s1, &s2).unwrap();
        worst = worst.max((got - expected).abs() / expected.max(f64::MIN_POSITIVE));
    }
    verdict(
        "FID closed form",
        worst <= 1e-3,
        format!("max relative error {worst:.3e} over 100 cases"),
    );
}

#[test]
fn sqrtm_reconstruction() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    for d in [2, 8, 32, 64] {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
        let m = &a * a.transpose() + DMatrix::identity(d, d) * 1e-3;
        let r = sqrtm_psd(&m).unwrap();
        worst = worst.max((&r * &r - &m).norm() / m.norm());
    }
    verdict(
        "sqrtm reconstruction",
        worst <= 1e-8,
        format!("max relative Frobenius error {worst:.3e}"),
    );
}

/// Dense route: explicit inverse of the full kernel matrix.
fn dense_predict(x: &DMatrix<f64>, y: &DMatrix<f64>, ell: f64, alpha: f64, q: &[f64]) -> Vec<f64> {
    let n = x.nrows();
    let k = |a: &[f64], b: &[f64]| {
        let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum();
        (-d2 / (2.0 * ell * ell)).exp()
    };
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    let gram = DMatrix::from_fn(n, n, |i, j| {
        k(&rows[i], &rows[j]) + if i == j { alpha } else { 0.0 }
    });
    let k_star = DVector::from_fn(n, |i, _| k(q, &rows[i]));
    let inv = gram.try_inverse().unwrap();
    (y.transpose() * inv * k_star).iter().copied().collect()
}

fn curve_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let rows: Vec<SampledCurve> = (0..n).map(|_| common::random_curve(rng)).collect();
    DMatrix::from_fn(n, 51, |i, j| rows[i].values()[j])
}

#[test]
fn gpr_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let ell = 0.5;
    let mut worst: f64 = 0.0;
    for n in [1, 2, 5, 10, 25, 50] {
        let x = curve_matrix(&mut rng, n);
        let y = curve_matrix(&mut rng, n);
        let model = fit(&x, &y, RbfKernel::new(ell).unwrap(), DEFAULT_ALPHA).unwrap();
        for _ in 0..5 {
            let q = *common::random_curve(&mut rng).values();
            let got = model.predict(&q).unwrap();
            let want = dense_predict(&x, &y, ell, DEFAULT_ALPHA, &q);
            for (g, w) in got.iter().zip(&want) {
                worst = worst.max((g - w).abs());
            }
        }
    }
    verdict(
        "GPR oracle equivalence",
        worst <= 1e-8,
        format!("max |cholesky - dense| = {worst:.3e}"),
    );
}

#[test]
fn gpr_interpolation() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let x = curve_matrix(&mut rng, 20);
    let y = curve_matrix(&mut rng, 20);
    let k = RbfKernel::new(0.5).unwrap();
    let err = |alpha: f64| {
        let m = fit(&x, &y, k, alpha).unwrap();
        (m.predict_rows(&x).unwrap() - &y).amax()
    };
    let (tight, loose) = (err(1e-12), err(1.0));
    verdict(
        "GPR interpolation",
        tight <= 1e-4 && loose > tight,
        format!("max train error {tight:.3e} at alpha=1e-12, {loose:.3e} at alpha=1"),
    );
}

#[test]
fn curve_pipeline() {
    let mut worst_ratio: f64 = 0.0;
    let mut valid = true;
    let mut chroma_kept = true;
    for i in 0..50u64 {
        let img = rgb_to_lab(&common::natural_image(1000 + i, 48, 36), ColorSpace::Srgb);
        let curve = image_curve(&img);
        valid &= SampledCurve::new(curve.values()).is_ok();

        let target = image_curve(&rgb_to_lab(
            &common::natural_image(5000 + i, 40, 40),
            ColorSpace::Srgb,
        ));
        let out = remap_luminance(&img, &target);
        chroma_kept &= out.a() == img.a() && out.b() == img.b();

        let mut distinct = img.l().to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let bound = (2.0 / 51.0f64).max(2.0 / distinct.len() as f64);
        let ks = image_curve(&out).ks_distance(&target);
        worst_ratio = worst_ratio.max(ks / bound);
    }
    verdict(
        "Curve pipeline",
        valid && chroma_kept && worst_ratio <= 1.0,
        format!(
            "curves valid: {valid}, a/b identical: {chroma_kept}, max KS/bound = {worst_ratio:.3}"
        ),
    );
}

fn write_gamma_dataset(root: &Path, train: u64, held: u64) {
    for dir in ["raw", "target", "held_raw", "held_target", "out"] {
        std::fs::create_dir_all(root.join(dir)).unwrap();
    }
    for i in 0..train + held {
        let raw = common::natural_image(i, 60, 45);
        let target = common::gamma_brighten(&raw, ColorSpace::Srgb);
        let (rd, td) = if i < train {
            ("raw", "target")
        } else {
            ("held_raw", "held_target")
        };
        raw.save_png(root.join(rd).join(format!("img{i:03}.png")))
            .unwrap();
        target
            .save_png(root.join(td).join(format!("img{i:03}.png")))
            .unwrap();
    }
}

fn run_cli(args: &[&str]) -> i32 {
    let mut full = vec!["curvesmith"];
    full.extend_from_slice(args);
    cli::run(full)
}

fn file_curve(path: &Path) -> SampledCurve {
    image_curve(&rgb_to_lab(
        &RgbImage::open(path).unwrap(),
        ColorSpace::Srgb,
    ))
}

#[test]
fn gamma_recovery_end_to_end() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_gamma_dataset(root, 40, 10);
    let model = root.join("model.gprm");
    let p = |s: &str| root.join(s).to_str().unwrap().to_owned();

    let code = run_cli(&[
        "fit",
        "--raw-dir",
        &p("raw"),
        "--target-dir",
        &p("target"),
        "--out",
        &p("model.gprm"),
        "--folds",
        "5",
    ]);
    assert_eq!(code, 0);

    let (mut before, mut after) = (0.0, 0.0);
    for i in 40..50 {
        let name = format!("img{i:03}.png");
        let raw = root.join("held_raw").join(&name);
        let out = root.join("out").join(&name);
        let code = run_cli(&[
            "apply",
            "--model",
            model.to_str().unwrap(),
            "--input",
            raw.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let truth = file_curve(&root.join("held_target").join(&name));
        before += file_curve(&raw).l2_distance(&truth);
        after += file_curve(&out).l2_distance(&truth);
    }
    let (before, after) = (before / 10.0, after / 10.0);
    let elapsed = start.elapsed();
    let selected = GprModel::load(&model).unwrap().kernel().length_scale();
    verdict(
        "Gamma recovery",
        after <= 0.5 * before && elapsed < Duration::from_secs(120),
        format!(
            "mean curve distance {before:.4} -> {after:.4} ({:.1}% reduction), length scale {selected}, {elapsed:.2?}",
            100.0 * (1.0 - after / before)
        ),
    );
}

fn tiny_set(images: impl Iterator<Item = RgbImage>, tag: &str) -> FeatureSet {
    let rows: Vec<Vec<f64>> = images.map(|img| tiny_image_features(&img)).collect();
    FeatureSet::from_rows(&rows, tag).unwrap()
}

#[test]
fn fid_ordering_sanity() {
    let natural = tiny_set(
        (0..200).map(|i| common::natural_image(20_000 + i, 32, 24)),
        "natural",
    );
    let holdout = tiny_set(
        (200..400).map(|i| common::natural_image(20_000 + i, 32, 24)),
        "holdout",
    );
    let noise = tiny_set(
        (0..200).map(|i| common::noise_image(30_000 + i, 32, 24)),
        "noise",
    );
    let a = fit_gaussian(&natural).unwrap();
    let same = frechet_distance(&a, &fit_gaussian(&holdout).unwrap()).unwrap();
    let far = frechet_distance(&a, &fit_gaussian(&noise).unwrap()).unwrap();
    verdict(
        "FID ordering",
        same < far,
        format!("d2(natural, holdout) = {same:.4} < d2(natural, noise) = {far:.4}"),
    );
}

#[test]
fn color_round_trip() {
    let mut worst = 0i16;
    let mut check = |p: [u8; 3], space: ColorSpace| {
        let back = lab_to_pixel(pixel_to_lab(p, space), space);
        for c in 0..3 {
            worst = worst.max((i16::from(back[c]) - i16::from(p[c])).abs());
        }
    };
    for space in [ColorSpace::Srgb, ColorSpace::AdobeRgb] {
        for g in 0..=255u8 {
            check([g, g, g], space);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for _ in 0..100_000 {
        check([rng.random(), rng.random(), rng.random()], ColorSpace::Srgb);
    }
    verdict(
        "Color round trip",
        worst <= 1,
        format!("max channel error {worst} level(s)"),
    );
}

#[test]
fn resize_contract() {
    let img = RgbImage::filled(1000, 800, [90, 140, 210]).unwrap();
    let out = resize_long_edge(&img, 500).unwrap();
    let dims = (out.width(), out.height());
    let constant = out.pixels().iter().all(|p| {
        p.iter()
            .zip([90u8, 140, 210])
            .all(|(a, b)| a.abs_diff(b) <= 1)
    });
    verdict(
        "Resize",
        dims == (500, 400) && constant,
        format!(
            "1000x800 -> {}x{}, constant color kept: {constant}",
            dims.0, dims.1
        ),
    );
}

#[test]
fn fit_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_gamma_dataset(root, 12, 0);
    let p = |s: &str| root.join(s).to_str().unwrap().to_owned();
    let args = |out: &str, jobs: &str| {
        vec![
            "fit".to_owned(),
            "--raw-dir".into(),
            p("raw"),
            "--target-dir".into(),
            p("target"),
            "--out".into(),
            p(out),
            "--seed".into(),
            "7".into(),
            "--jobs".into(),
            jobs.into(),
        ]
    };
    let a = args("a.gprm", "0");
    let b = args("b.gprm", "1");
    assert_eq!(
        run_cli(&a.iter().map(String::as_str).collect::<Vec<_>>()),
        0
    );
    assert_eq!(
        run_cli(&b.iter().map(String::as_str).collect::<Vec<_>>()),
        0
    );
    let (x, y) = (
        std::fs::read(root.join("a.gprm")).unwrap(),
        std::fs::read(root.join("b.gprm")).unwrap(),
    );
    verdict(
        "Determinism",
        x == y,
        format!("model files {} bytes, identical: {}", x.len(), x == y),
    );
}
