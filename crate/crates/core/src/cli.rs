//! Command-line front end. Flags fall back to `CURVESMITH_*` environment
//! variables, then to built-in defaults.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::color::{rgb_to_lab, ColorSpace, RgbImage};
use crate::curves::image_curve;
use crate::error::{Error, Result};
use crate::fid::{extract_dir_features, fit_gaussian, frechet_distance, read_features};
use crate::gpr::{self, GprModel};
use crate::pipeline::{apply_model_file, fit_dataset, preprocess_dir, PipelineConfig};

#[derive(Debug, Parser)]
#[command(
    name = "curvesmith",
    version,
    about = "Learn and apply a retoucher's luminance curve"
)]
pub struct Cli {
    /// Worker threads for per-image work (0 = logical CPUs).
    #[arg(long, global = true, env = "CURVESMITH_JOBS", default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SpaceArg {
    /// RGB working space of the images.
    #[arg(long, env = "CURVESMITH_SPACE", value_enum, default_value_t = ColorSpace::Srgb)]
    pub space: ColorSpace,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resize every image of a directory so its long edge has a given length.
    Preprocess {
        #[arg(long)]
        input_dir: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, env = "CURVESMITH_LONG_EDGE", default_value_t = 500)]
        long_edge: usize,
        #[command(flatten)]
        space: SpaceArg,
    },
    /// Learn raw-to-retouched curves from paired directories.
    Fit {
        #[arg(long)]
        raw_dir: PathBuf,
        #[arg(long)]
        target_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "CURVESMITH_ALPHA", default_value_t = gpr::DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, env = "CURVESMITH_FOLDS", default_value_t = gpr::DEFAULT_FOLDS)]
        folds: usize,
        /// Candidate RBF length scales, comma separated.
        #[arg(long, env = "CURVESMITH_GRID", value_delimiter = ',', default_values_t = gpr::DEFAULT_GRID.to_vec())]
        grid: Vec<f64>,
        /// Seed of the fold shuffle.
        #[arg(long, env = "CURVESMITH_SEED", default_value_t = gpr::DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        space: SpaceArg,
    },
    /// Retouch one image with a fitted model.
    Apply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        space: SpaceArg,
    },
    /// Print the 51-point luminance curve of an image.
    Curve {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, conflicts_with = "csv")]
        json: bool,
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        space: SpaceArg,
    },
    /// Fréchet distance between two feature sets or two image directories.
    Fid {
        #[arg(long, requires = "features_b", conflicts_with_all = ["images_a", "images_b"])]
        features_a: Option<PathBuf>,
        #[arg(long, requires = "features_a")]
        features_b: Option<PathBuf>,
        #[arg(long, requires = "images_b")]
        images_a: Option<PathBuf>,
        #[arg(long, requires = "images_a")]
        images_b: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Extractor::Tiny)]
        extractor: Extractor,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Extractor {
    /// 16x16 thumbnail, 768 values.
    Tiny,
}

fn run_command(command: Command) -> Result<()> {
    match command {
        Command::Preprocess {
            input_dir,
            output_dir,
            long_edge,
            space: _,
        } => {
            let written = preprocess_dir(&input_dir, &output_dir, long_edge)?;
            log::info!(
                "wrote {} image(s) to {}",
                written.len(),
                output_dir.display()
            );
        }
        Command::Fit {
            raw_dir,
            target_dir,
            out,
            alpha,
            folds,
            grid,
            seed,
            space,
        } => {
            let config = PipelineConfig {
                color_space: space.space,
                alpha,
                folds,
                grid,
                seed,
                ..Default::default()
            };
            let outcome = fit_dataset(&config, &raw_dir, &target_dir)?;
            outcome.model.save(&out)?;
            println!("length_scale\tcv_rmse\tselected");
            for (ell, score) in &outcome.report.scores {
                let mark = if *ell == outcome.report.selected.length_scale() {
                    "*"
                } else {
                    ""
                };
                println!("{ell}\t{score:.6}\t{mark}");
            }
            eprintln!(
                "fitted {} pair(s) ({} skipped) in {:.2?}; model written to {}",
                outcome.pairs_used.len(),
                outcome.failures.len(),
                outcome.elapsed,
                out.display()
            );
        }
        Command::Apply {
            model,
            input,
            output,
            space,
        } => {
            let model = GprModel::load(&model)?;
            apply_model_file(&model, &input, &output, space.space)?;
        }
        Command::Curve {
            image,
            json: _,
            csv,
            space,
        } => {
            let img = RgbImage::open(&image)?;
            let curve = image_curve(&rgb_to_lab(&img, space.space));
            let values = curve.values().map(|v| v.to_string());
            if csv {
                for v in values {
                    println!("{v}");
                }
            } else {
                println!("[{}]", values.join(","));
            }
        }
        Command::Fid {
            features_a,
            features_b,
            images_a,
            images_b,
            extractor: Extractor::Tiny,
        } => {
            let (a, b) = match (features_a, features_b, images_a, images_b) {
                (Some(fa), Some(fb), None, None) => (read_features(fa)?, read_features(fb)?),
                (None, None, Some(da), Some(db)) => {
                    (extract_dir_features(&da)?, extract_dir_features(&db)?)
                }
                _ => {
                    return Err(Error::invalid(
                        "give either --features-a/--features-b or --images-a/--images-b",
                    ))
                }
            };
            let d2 = frechet_distance(&fit_gaussian(&a)?, &fit_gaussian(&b)?)?;
            println!("{d2:.4}");
        }
    }
    Ok(())
}

/// Parse `args`, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 1;
        }
    };
    match pool.install(|| run_command(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            report_details(&e);
            e.exit_code()
        }
    }
}

fn report_details(e: &Error) {
    match e {
        Error::EmptyDataset { unmatched } => {
            for p in unmatched {
                eprintln!("  unmatched: {}", p.display());
            }
        }
        Error::TooManyFailures { failures, .. } => {
            for (p, why) in failures {
                eprintln!("  failed: {}: {why}", p.display());
            }
        }
        _ => {}
    }
}

pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    run(std::env::args_os())
}
