//! Training loop: rendering, loss, gradients, optimizer steps and the
//! densification, simplification and culling schedule.

mod config;
mod log;
mod loss;

pub use self::config::{TrainConfig, TrainMode};
pub use self::log::{LogRow, TrainLog, CSV_HEADER, EVENT_ORDER};
pub use self::loss::compute_loss;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::densify::{
    aggressive_clone_with, depth_reinitialize, gaussians_from_points, identify_critical,
    prune_low_opacity, reset_opacity, scene_extent, vanilla_clone_split, DensifyEvent, DensifyPlan,
    PointCloud,
};
use crate::error::{Result, SplatError};
use crate::grad::{backward_into, ParamGrads};
use crate::image::Image;
use crate::linalg::Vec3;
use crate::metrics::{chamfer, psnr, ssim, MetricReport};
use crate::optim::{keep_plan, AdamParams, OptimState, ParamGroup, RowOrigin};
use crate::raster::{render, BlendParams};
use crate::scalar::Real;
use crate::scene::{Camera, GaussianSet};
use crate::simplify::{gather_reports, importance_prune, importance_sample, GlobalImportance};
use crate::visibility::{culling_active, masks_from_reports, VisibilityTable};

/// Training views, their target images, the initial sparse points and an
/// optional reference point cloud for geometry evaluation.
#[derive(Clone, Debug)]
pub struct TrainScene<T> {
    pub cameras: Vec<Camera<T>>,
    pub images: Vec<Image<T>>,
    pub init_points: PointCloud<T>,
    pub reference_points: Option<Vec<Vec3<T>>>,
}

impl<T: Real> TrainScene<T> {
    pub fn validate(&self) -> Result<()> {
        if self.cameras.len() < 2 {
            return Err(SplatError::InvalidArgument(format!(
                "training needs at least 2 views, got {}",
                self.cameras.len()
            )));
        }
        if self.images.len() != self.cameras.len() {
            return Err(SplatError::ShapeMismatch {
                what: "target images",
                expected: self.cameras.len(),
                got: self.images.len(),
            });
        }
        for (k, (cam, img)) in self.cameras.iter().zip(&self.images).enumerate() {
            if cam.width != img.width || cam.height != img.height {
                return Err(SplatError::InvalidArgument(format!(
                    "view {k}: camera is {}x{} but image is {}x{}",
                    cam.width, cam.height, img.width, img.height
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput<T> {
    pub set: GaussianSet<T>,
    pub log: TrainLog,
}

/// Trains from Gaussians seeded at the scene's initial points.
pub fn train<T: Real>(scene: &TrainScene<T>, config: &TrainConfig) -> Result<TrainOutput<T>> {
    if scene.init_points.is_empty() {
        return Err(SplatError::EmptyPointSet);
    }
    let init = gaussians_from_points(&scene.init_points, config.sh_degree, &config.seed_params)?;
    train_from(scene, config, init)
}

/// Trains starting from an explicit Gaussian set.
pub fn train_from<T: Real>(
    scene: &TrainScene<T>,
    config: &TrainConfig,
    initial: GaussianSet<T>,
) -> Result<TrainOutput<T>> {
    let mut trainer = Trainer::new(scene, config, initial)?;
    for iter in 1..=trainer.cfg.total_iters {
        trainer.iteration(iter)?;
    }
    Ok(TrainOutput {
        set: trainer.set,
        log: trainer.log,
    })
}

/// Shuffled view order, reshuffled at every epoch.
struct ViewOrder {
    rng: ChaCha8Rng,
    n: usize,
    queue: Vec<usize>,
}

impl ViewOrder {
    fn next(&mut self) -> usize {
        if self.queue.is_empty() {
            use rand::seq::SliceRandom;
            self.queue = (0..self.n).collect();
            self.queue.shuffle(&mut self.rng);
            self.queue.reverse();
        }
        self.queue.pop().expect("non-empty view queue")
    }
}

struct Trainer<'a, T: Real> {
    scene: &'a TrainScene<T>,
    cfg: TrainConfig,
    half_cameras: Vec<Camera<T>>,
    half_images: Vec<Image<T>>,
    set: GaussianSet<T>,
    opt: OptimState<T>,
    grads: ParamGrads<T>,
    table: Option<VisibilityTable>,
    order: ViewOrder,
    rng: ChaCha8Rng,
    blend: BlendParams<T>,
    background: [T; 3],
    extent: T,
    log: TrainLog,
    started: Instant,
}

impl<'a, T: Real> Trainer<'a, T> {
    fn new(
        scene: &'a TrainScene<T>,
        config: &TrainConfig,
        mut initial: GaussianSet<T>,
    ) -> Result<Self> {
        config.validate()?;
        scene.validate()?;
        let cfg = config.scaled();
        if initial.sh_degree() != cfg.sh_degree {
            initial = initial.with_sh_degree(cfg.sh_degree);
        }
        initial.check_consistent()?;
        let extent = scene_extent(&scene.cameras);
        let mut lrs = cfg.lrs.clone();
        if cfg.scale_position_lr {
            lrs.spatial_scale = extent.to_f64_lossy();
        }
        let (half_cameras, half_images) = if cfg.half_res_until > 0 {
            (
                scene
                    .cameras
                    .iter()
                    .map(|c| c.scaled(T::lit(0.5)))
                    .collect(),
                scene.images.iter().map(Image::downsample_2x).collect(),
            )
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(Self {
            scene,
            half_cameras,
            half_images,
            opt: OptimState::new(&initial, lrs, AdamParams::default()),
            grads: ParamGrads::zeros_like(&initial),
            set: initial,
            table: None,
            order: ViewOrder {
                rng: ChaCha8Rng::seed_from_u64(cfg.seed),
                n: scene.cameras.len(),
                queue: Vec::new(),
            },
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5DEE_CE66_D1CE_5EED),
            blend: BlendParams::default(),
            background: cfg.background.map(T::lit),
            extent,
            log: TrainLog::default(),
            started: Instant::now(),
            cfg,
        })
    }

    fn views(&self, iter: usize) -> (&[Camera<T>], &[Image<T>]) {
        if iter < self.cfg.half_res_until {
            (&self.half_cameras, &self.half_images)
        } else {
            (&self.scene.cameras, &self.scene.images)
        }
    }

    fn in_culling_window(&self, iter: usize) -> bool {
        self.cfg.culling && iter >= self.cfg.culling_begin && iter < self.cfg.culling_end
    }

    /// Installs an edited set and carries optimizer state, gradient
    /// statistics and visibility masks across.
    fn install(&mut self, set: GaussianSet<T>, rows: &[RowOrigin]) -> Result<()> {
        self.opt.resize(rows)?;
        self.grads.remap_rows(rows, set.coeffs_per_gaussian());
        if let Some(t) = self.table.as_mut() {
            t.remap(rows);
        }
        self.set = set;
        Ok(())
    }

    fn apply_plan(&mut self, plan: &DensifyPlan<T>) -> Result<bool> {
        if plan.is_noop() {
            return Ok(false);
        }
        let (set, rows) = plan.apply(&self.set)?;
        self.install(set, &rows)?;
        Ok(true)
    }

    fn iteration(&mut self, iter: usize) -> Result<()> {
        let degree = self.cfg.active_sh_degree(iter);
        self.set.set_active_sh_degree(degree);
        let view = self.order.next();
        let culled = self.cfg.culling
            && culling_active(
                iter,
                self.cfg.culling_begin,
                self.cfg.culling_end,
                self.table.as_ref(),
                self.set.len(),
            );
        let (loss, view_psnr) = {
            let (cams, imgs) = if iter < self.cfg.half_res_until {
                (&self.half_cameras, &self.half_images)
            } else {
                (&self.scene.cameras, &self.scene.images)
            };
            let (cam, target) = (&cams[view], &imgs[view]);
            let mask = if culled {
                self.table.as_ref().and_then(|t| t.mask(view))
            } else {
                None
            };
            let out = render(&self.set, cam, mask, self.background, &self.blend);
            let (loss, dl) = compute_loss(&out.color, target, T::lit(self.cfg.lambda_dssim));
            if !loss.is_finite() {
                return Err(SplatError::NonFiniteLoss {
                    iteration: iter,
                    view,
                    loss: loss.to_f64_lossy(),
                });
            }
            backward_into(
                &self.set,
                cam,
                mask,
                self.background,
                &self.blend,
                &dl,
                &mut self.grads,
            )?;
            (loss.to_f64_lossy(), psnr(&out.color, target))
        };
        self.opt.step(&mut self.set, &self.grads)?;

        // Evaluation sees the model as optimized so far, before this
        // iteration's edits.
        let eval_due = self.cfg.eval_iters.contains(&iter);
        let eval_psnr = if eval_due {
            Some(
                evaluate(
                    &self.set,
                    &self.scene.cameras,
                    &self.scene.images,
                    self.background,
                    None,
                )?
                .mean_psnr,
            )
        } else {
            None
        };

        let mut events: Vec<String> = Vec::new();
        self.densify_step(iter, &mut events)?;
        self.simplify_step(iter, &mut events)?;
        self.set.check_consistent()?;

        if iter.is_multiple_of(self.cfg.log_interval.max(1))
            || iter == 1
            || iter == self.cfg.total_iters
            || !events.is_empty()
            || eval_due
        {
            let chamfer_dist = match &self.scene.reference_points {
                Some(r) if !self.set.is_empty() => {
                    Some(chamfer(&self.set.centers, r)?.to_f64_lossy())
                }
                _ => None,
            };
            let wall_ms = if self.cfg.log_wall_time {
                self.started.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            };
            self.log.push(LogRow {
                iteration: iter,
                n_gaussians: self.set.len(),
                loss,
                psnr: view_psnr,
                eval_psnr,
                chamfer: chamfer_dist,
                wall_ms,
                events,
            });
        }
        Ok(())
    }

    /// Runs the densification events scheduled for `iter`.
    fn densify_step(&mut self, iter: usize, events: &mut Vec<String>) -> Result<()> {
        for ev in self.cfg.densify_schedule().events(iter) {
            match ev {
                DensifyEvent::VanillaCloneSplit => {
                    let plan = vanilla_clone_split(
                        &self.set,
                        &self.grads,
                        T::lit(self.cfg.grad_threshold),
                        T::lit(self.cfg.percent_dense),
                        self.extent,
                        &mut self.rng,
                    )?;
                    self.apply_plan(&plan)?;
                    self.grads.reset_stats();
                    events.push("vanilla".into());
                    let prune = prune_low_opacity(&self.set, T::lit(self.cfg.min_opacity));
                    if self.apply_plan(&prune)? {
                        events.push("prune".into());
                    }
                }
                DensifyEvent::IdentifyClone => {
                    let reports = {
                        let (cams, _) = self.views(iter);
                        gather_reports(&self.set, cams, &self.blend)
                    };
                    let stats = GlobalImportance::from_reports(self.set.len(), &reports)?;
                    let rebuild = self.in_culling_window(iter);
                    if rebuild {
                        self.table = Some(masks_from_reports(
                            &reports,
                            self.cfg.culling_keep_q,
                            self.cfg.quantile_mode,
                            self.cfg.culling_scope,
                            iter,
                        )?);
                    }
                    let critical = identify_critical(
                        &self.set,
                        &stats,
                        self.cfg.ident_criterion,
                        self.cfg.ident_keep_q,
                        self.cfg.quantile_mode,
                        &mut self.rng,
                    )?;
                    let plan = aggressive_clone_with(&self.set, &critical, self.cfg.clone_variant)?;
                    self.apply_plan(&plan)?;
                    events.push("clone".into());
                    if rebuild {
                        events.push("cull_rebuild".into());
                    }
                }
                DensifyEvent::DepthReinit => {
                    let fresh = depth_reinitialize(
                        &self.set,
                        &self.scene.cameras,
                        &self.scene.images,
                        self.set.len(),
                        &self.blend,
                        &self.cfg.seed_params,
                        &mut self.rng,
                    )?;
                    let rows = vec![RowOrigin::Fresh; fresh.len()];
                    self.install(fresh, &rows)?;
                    events.push("reinit".into());
                }
                DensifyEvent::OpacityReset => {
                    reset_opacity(&mut self.set, T::lit(self.cfg.opacity_reset_value));
                    self.opt.reset_rows(ParamGroup::Opacity, 0..self.set.len());
                    events.push("opacity_reset".into());
                }
            }
        }
        sort_events(events);
        Ok(())
    }

    fn simplify_step(&mut self, iter: usize, events: &mut Vec<String>) -> Result<()> {
        let Some(k) = self.cfg.simplify_event(iter) else {
            return Ok(());
        };
        if self.set.is_empty() {
            return Ok(());
        }
        let reports = {
            let (cams, _) = self.views(iter);
            gather_reports(&self.set, cams, &self.blend)
        };
        let stats = GlobalImportance::from_reports(self.set.len(), &reports)?;
        let scores = stats.scores(self.cfg.importance_metric);
        let rebuild = self.in_culling_window(iter);
        if rebuild {
            self.table = Some(masks_from_reports(
                &reports,
                self.cfg.culling_keep_q,
                self.cfg.quantile_mode,
                self.cfg.culling_scope,
                iter,
            )?);
        }
        let (reduced, keep) = match self.cfg.mode {
            TrainMode::Msv2d => importance_prune(
                &self.set,
                &scores,
                self.cfg.prune_keep_q,
                self.cfg.quantile_mode,
            )?,
            _ => {
                let ratio = self.cfg.simplify_ratios[k];
                let n = self.set.len();
                let target = ((n as f64 * ratio).round() as usize).clamp(1, n);
                let seed = self
                    .cfg
                    .seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add(iter as u64);
                importance_sample(&self.set, &scores, target, seed)?
            }
        };
        self.install(reduced, &keep_plan(&keep))?;
        events.push("simplify".into());
        if rebuild {
            events.push("cull_rebuild".into());
        }
        sort_events(events);
        Ok(())
    }
}

fn sort_events(events: &mut Vec<String>) {
    events.sort_by_key(|e| {
        EVENT_ORDER
            .iter()
            .position(|o| o == e)
            .unwrap_or(usize::MAX)
    });
    events.dedup();
}

/// Per-view and mean image metrics of full-resolution, full-SH, unmasked
/// renders, plus an optional Chamfer distance to reference points.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub per_view: Vec<MetricReport>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub chamfer: Option<f64>,
}

pub fn evaluate<T: Real>(
    set: &GaussianSet<T>,
    cameras: &[Camera<T>],
    targets: &[Image<T>],
    background: [T; 3],
    reference: Option<&[Vec3<T>]>,
) -> Result<EvalReport> {
    if targets.len() != cameras.len() {
        return Err(SplatError::ShapeMismatch {
            what: "evaluation targets",
            expected: cameras.len(),
            got: targets.len(),
        });
    }
    let mut full = set.clone();
    full.set_active_sh_degree(full.sh_degree());
    let params = BlendParams::default();
    let chamfer_dist = match reference {
        Some(r) if !set.is_empty() && !r.is_empty() => {
            Some(chamfer(&set.centers, r)?.to_f64_lossy())
        }
        _ => None,
    };
    let mut per_view = Vec::with_capacity(cameras.len());
    for (cam, target) in cameras.iter().zip(targets) {
        if cam.width != target.width || cam.height != target.height {
            return Err(SplatError::InvalidArgument(format!(
                "camera is {}x{} but target is {}x{}",
                cam.width, cam.height, target.width, target.height
            )));
        }
        let out = render(&full, cam, None, background, &params);
        per_view.push(MetricReport {
            psnr: psnr(&out.color, target),
            ssim: ssim(&out.color, target).to_f64_lossy(),
            chamfer: chamfer_dist,
        });
    }
    let n = per_view.len().max(1) as f64;
    Ok(EvalReport {
        mean_psnr: per_view.iter().map(|m| m.psnr).sum::<f64>() / n,
        mean_ssim: per_view.iter().map(|m| m.ssim).sum::<f64>() / n,
        per_view,
        chamfer: chamfer_dist,
    })
}
