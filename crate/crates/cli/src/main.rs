//! `splatkit` command-line tool.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use splatkit::densify::{extract_points, QuantileMode};
use splatkit::raster::{render, BlendParams};
use splatkit::simplify::{importance_prune, importance_sample, GlobalImportance, ImportanceMetric};
use splatkit::synthetic::{generate_synthetic, scene_checksum, SyntheticParams};
use splatkit::train::{evaluate, train_from, TrainConfig, TrainMode};
use splatkit::GaussianSetf;
use splatkit_io::{
    load_scene, read_file, read_ply, save_scene, write_file, write_image, write_ply,
    write_points_ply,
};

#[derive(Parser)]
#[command(
    name = "splatkit",
    version,
    about = "CPU Gaussian splatting with aggressive densification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a scene directory; writes model.ply, log.csv and config.toml.
    Train {
        #[arg(long)]
        scene: PathBuf,
        /// TOML file overriding the mode preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<TrainMode>,
        #[arg(long)]
        seed: Option<u64>,
        /// Divide every iteration constant by this factor.
        #[arg(long)]
        desk_scale: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one view of a model.
    Render {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        view: usize,
        /// Output image; `.png` or 16-bit PPM otherwise.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reproject rendered depth of every view into a colored point cloud.
    ExtractPoints {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reduce a model by importance sampling (--ratio) or pruning (--keep-q).
    #[command(group(ArgGroup::new("amount").required(true).args(["ratio", "keep_q"])))]
    Simplify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        keep_q: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print PSNR, SSIM and Chamfer distance of a model against a scene.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scene: PathBuf,
    },
    /// Write a synthetic scene directory plus its ground-truth model.
    GenSynthetic {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        gaussians: usize,
        #[arg(long, default_value_t = 24)]
        views: usize,
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<TrainMode, String> {
    s.parse().map_err(|e: splatkit::SplatError| e.to_string())
}

/// Failure while running a well-formed command.
struct DataError(String);

impl<E: std::fmt::Display> From<E> for DataError {
    fn from(e: E) -> Self {
        Self(e.to_string())
    }
}

type Outcome = Result<(), DataError>;

fn load_model(path: &Path) -> Result<GaussianSetf, DataError> {
    Ok(read_ply(&read_file(path)?)?)
}

fn load_config(path: Option<&Path>, mode: Option<TrainMode>) -> Result<TrainConfig, DataError> {
    let Some(p) = path else {
        return Ok(TrainConfig::for_mode(mode.unwrap_or_default()));
    };
    let text =
        String::from_utf8(read_file(p)?).map_err(|e| DataError(format!("{}: {e}", p.display())))?;
    Ok(match mode {
        Some(m) => TrainConfig::from_toml_with_mode(&text, m)?,
        None => TrainConfig::from_toml(&text, TrainMode::default())?,
    })
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Train {
            scene,
            config,
            mode,
            seed,
            desk_scale,
            out,
        } => {
            let bundle = load_scene::<f32>(&scene)?;
            let mut cfg = load_config(config.as_deref(), mode)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(d) = desk_scale {
                cfg.desk_scale = d;
            }
            // Keep the log reproducible across runs.
            cfg.log_wall_time = false;
            let sc = &bundle.scene;
            let initial = splatkit::densify::gaussians_from_points(
                &sc.init_points,
                cfg.sh_degree,
                &cfg.seed_params,
            )?;
            let result = train_from(sc, &cfg, initial)?;
            write_file(&out.join("model.ply"), &write_ply(&result.set))?;
            write_file(&out.join("log.csv"), result.log.to_csv().as_bytes())?;
            write_file(&out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
            if let Some(last) = result.log.last() {
                println!(
                    "trained {} iterations: {} Gaussians, loss {:.6}",
                    last.iteration, last.n_gaussians, last.loss
                );
            }
        }
        Command::Render {
            model,
            scene,
            view,
            out,
        } => {
            let set = load_model(&model)?;
            let bundle = load_scene::<f32>(&scene)?;
            let cam = bundle.scene.cameras.get(view).ok_or_else(|| {
                DataError(format!(
                    "view {view} out of range, scene has {}",
                    bundle.scene.cameras.len()
                ))
            })?;
            let img = render(&set, cam, None, [0.0; 3], &BlendParams::default()).color;
            write_image(&out, &img)?;
        }
        Command::ExtractPoints { model, scene, out } => {
            let set = load_model(&model)?;
            let bundle = load_scene::<f32>(&scene)?;
            let sc = &bundle.scene;
            let cloud =
                extract_points(&set, &sc.cameras, Some(&sc.images), &BlendParams::default())?;
            write_file(&out, &write_points_ply(&cloud))?;
            println!("{} points", cloud.len());
        }
        Command::Simplify {
            model,
            scene,
            ratio,
            keep_q,
            seed,
            out,
        } => {
            let set = load_model(&model)?;
            let bundle = load_scene::<f32>(&scene)?;
            let stats =
                GlobalImportance::from_views(&set, &bundle.scene.cameras, &BlendParams::default());
            let scores = stats.scores(ImportanceMetric::BlendWeight);
            let (kept, _) = match (ratio, keep_q) {
                (Some(r), _) => {
                    if !(r > 0.0 && r <= 1.0) {
                        return Err(DataError(format!("--ratio must lie in (0, 1], got {r}")));
                    }
                    let target = (r * set.len() as f64).round() as usize;
                    importance_sample(&set, &scores, target, seed)?
                }
                (None, Some(q)) => importance_prune(&set, &scores, q, QuantileMode::ByCount)?,
                (None, None) => unreachable!("clap enforces one of --ratio/--keep-q"),
            };
            write_file(&out, &write_ply(&kept))?;
            println!("kept {} of {} Gaussians", kept.len(), set.len());
        }
        Command::Eval { model, scene } => {
            let set = load_model(&model)?;
            let bundle = load_scene::<f32>(&scene)?;
            let sc = &bundle.scene;
            let report = evaluate(
                &set,
                &sc.cameras,
                &sc.images,
                [0.0; 3],
                sc.reference_points.as_deref(),
            )?;
            println!("psnr {:.4}", report.mean_psnr);
            println!("ssim {:.6}", report.mean_ssim);
            match report.chamfer {
                Some(c) => println!("chamfer {c:.6}"),
                None => println!("chamfer n/a"),
            }
            println!("gaussians {}", set.len());
        }
        Command::GenSynthetic {
            seed,
            gaussians,
            views,
            resolution,
            out,
        } => {
            let params = SyntheticParams {
                seed,
                n_gaussians: gaussians,
                n_views: views,
                resolution,
                ..SyntheticParams::default()
            };
            let syn = generate_synthetic(&params)?;
            save_scene(&out, &syn.scene)?;
            write_file(&out.join("ground_truth.ply"), &write_ply(&syn.ground_truth))?;
            println!("checksum {:016x}", scene_checksum(&syn.scene));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(DataError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
