//! Training schedule and hyperparameters.

use serde::{Deserialize, Serialize};

use crate::densify::{
    CloneVariant, DensifySchedule, IdentCriterion, QuantileMode, SeedParams, Strategy,
};
use crate::error::{Result, SplatError};
use crate::optim::LearningRates;
use crate::simplify::ImportanceMetric;
use crate::visibility::ThresholdScope;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Aggressive densification with importance sampling.
    #[default]
    Msv2,
    /// Aggressive densification with deterministic importance pruning.
    Msv2d,
    /// Gradient-driven densification only.
    Progressive,
}

impl std::str::FromStr for TrainMode {
    type Err = SplatError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "msv2" => Ok(Self::Msv2),
            "msv2d" => Ok(Self::Msv2d),
            "progressive" => Ok(Self::Progressive),
            _ => Err(SplatError::InvalidArgument(format!(
                "unknown training mode '{s}'"
            ))),
        }
    }
}

/// Every training constant. Iteration counts are given at full scale and
/// divided by `desk_scale` when training starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub total_iters: usize,
    pub seed: u64,
    /// Divides every iteration constant; 1 keeps the full schedule.
    pub desk_scale: usize,

    pub densify_start: usize,
    pub densify_end: usize,
    /// Cadence of gradient-driven clone/split (0 disables).
    pub vanilla_interval: usize,
    /// Cadence of critical identification plus aggressive clone (0 disables).
    pub clone_interval: usize,
    pub reinit_iter: Option<usize>,
    pub opacity_reset_interval: usize,
    /// Run gradient-driven densification alongside the aggressive clone.
    pub vanilla_in_aggressive: bool,
    pub grad_threshold: f64,
    /// Clone/split boundary as a fraction of the scene extent.
    pub percent_dense: f64,
    pub min_opacity: f64,
    pub opacity_reset_value: f64,

    pub ident_criterion: IdentCriterion,
    pub ident_keep_q: f64,
    pub clone_variant: CloneVariant,
    pub quantile_mode: QuantileMode,

    pub simplify_iters: Vec<usize>,
    /// Fraction of Gaussians kept by each sampling event.
    pub simplify_ratios: Vec<f64>,
    /// Quantile kept by importance pruning (msv2d).
    pub prune_keep_q: f64,
    pub importance_metric: ImportanceMetric,

    pub culling: bool,
    pub culling_begin: usize,
    pub culling_end: usize,
    pub culling_keep_q: f64,
    pub culling_scope: ThresholdScope,

    pub lambda_dssim: f64,
    /// Train at half resolution before this iteration.
    pub half_res_until: usize,
    /// Stored SH degree of the model.
    pub sh_degree: usize,
    /// SH stays at degree 0 before this iteration.
    pub sh_disabled_until: usize,
    /// After `sh_disabled_until`, the active degree grows by one per interval.
    pub sh_interval: usize,

    pub background: [f64; 3],
    pub lrs: LearningRates,
    /// Multiply the position learning rate by the camera extent.
    pub scale_position_lr: bool,
    pub seed_params: SeedParams,

    pub log_interval: usize,
    /// Iterations at which the mean PSNR over all training views is logged.
    pub eval_iters: Vec<usize>,
    /// Record wall-clock time in the log (breaks bit-identical logs).
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::msv2()
    }
}

impl TrainConfig {
    pub fn msv2() -> Self {
        Self {
            mode: TrainMode::Msv2,
            total_iters: 18_000,
            seed: 0,
            desk_scale: 1,
            densify_start: 500,
            densify_end: 3_000,
            vanilla_interval: 100,
            clone_interval: 250,
            reinit_iter: Some(2_000),
            opacity_reset_interval: 0,
            vanilla_in_aggressive: true,
            grad_threshold: 2e-4,
            percent_dense: 0.01,
            min_opacity: 0.005,
            opacity_reset_value: 0.01,
            ident_criterion: IdentCriterion::MaxWeight,
            ident_keep_q: 0.99,
            clone_variant: CloneVariant::AlphaSigma,
            quantile_mode: QuantileMode::ByCount,
            simplify_iters: vec![3_000, 8_000],
            simplify_ratios: vec![0.4, 0.6],
            prune_keep_q: 0.9,
            importance_metric: ImportanceMetric::BlendWeight,
            culling: true,
            culling_begin: 500,
            culling_end: 13_000,
            culling_keep_q: 0.99,
            culling_scope: ThresholdScope::PerView,
            lambda_dssim: 0.2,
            half_res_until: 3_000,
            sh_degree: 3,
            sh_disabled_until: 3_000,
            sh_interval: 1_000,
            background: [0.0; 3],
            lrs: LearningRates::default(),
            scale_position_lr: true,
            seed_params: SeedParams::default(),
            log_interval: 100,
            eval_iters: Vec::new(),
            log_wall_time: false,
        }
    }

    pub fn msv2d() -> Self {
        Self {
            mode: TrainMode::Msv2d,
            ..Self::msv2()
        }
    }

    pub fn progressive() -> Self {
        Self {
            mode: TrainMode::Progressive,
            total_iters: 30_000,
            densify_end: 15_000,
            clone_interval: 0,
            reinit_iter: None,
            opacity_reset_interval: 3_000,
            simplify_iters: Vec::new(),
            simplify_ratios: Vec::new(),
            culling: false,
            half_res_until: 0,
            sh_disabled_until: 0,
            ..Self::msv2()
        }
    }

    pub fn for_mode(mode: TrainMode) -> Self {
        match mode {
            TrainMode::Msv2 => Self::msv2(),
            TrainMode::Msv2d => Self::msv2d(),
            TrainMode::Progressive => Self::progressive(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SplatError::InvalidArgument(m));
        if self.desk_scale == 0 {
            return bad("desk_scale must be at least 1".into());
        }
        if self.total_iters == 0 {
            return bad("total_iters must be positive".into());
        }
        if self.densify_start > self.densify_end || self.densify_end > self.total_iters {
            return bad(format!(
                "densify window [{}, {}) must lie within {} iterations",
                self.densify_start, self.densify_end, self.total_iters
            ));
        }
        if self.culling
            && (self.culling_begin > self.culling_end
                || self.culling_end > self.total_iters
                || self.densify_end > self.culling_end)
        {
            return bad(format!(
                "culling window [{}, {}) must cover the densify end and lie within {} iterations",
                self.culling_begin, self.culling_end, self.total_iters
            ));
        }
        if !(0.0..1.0).contains(&self.lambda_dssim) {
            return bad(format!(
                "lambda_dssim must lie in [0, 1), got {}",
                self.lambda_dssim
            ));
        }
        if self.sh_degree > crate::scene::sh::MAX_SH_DEGREE {
            return bad(format!("sh_degree {} exceeds 3", self.sh_degree));
        }
        if self.mode == TrainMode::Msv2 && self.simplify_ratios.len() != self.simplify_iters.len() {
            return bad("simplify_ratios and simplify_iters must have equal length".into());
        }
        if self
            .simplify_ratios
            .iter()
            .any(|r| !(*r > 0.0 && *r <= 1.0))
        {
            return bad("simplify ratios must lie in (0, 1]".into());
        }
        for q in [self.ident_keep_q, self.culling_keep_q, self.prune_keep_q] {
            if !(q > 0.0 && q < 1.0) {
                return bad(format!("keep quantiles must lie in (0, 1), got {q}"));
            }
        }
        Ok(())
    }

    /// Copy with every iteration constant divided by `desk_scale` and the
    /// position learning-rate decay stretched over the scaled run.
    pub fn scaled(&self) -> Self {
        let s = self.desk_scale.max(1);
        let at = |v: usize| v / s;
        let every = |v: usize| if v == 0 { 0 } else { (v / s).max(1) };
        let mut c = self.clone();
        c.total_iters = at(self.total_iters).max(1);
        c.densify_start = at(self.densify_start);
        c.densify_end = at(self.densify_end);
        c.vanilla_interval = every(self.vanilla_interval);
        c.clone_interval = every(self.clone_interval);
        c.reinit_iter = self.reinit_iter.map(at);
        c.opacity_reset_interval = every(self.opacity_reset_interval);
        c.simplify_iters = self.simplify_iters.iter().map(|&v| at(v)).collect();
        c.culling_begin = at(self.culling_begin);
        c.culling_end = at(self.culling_end);
        c.half_res_until = at(self.half_res_until);
        c.sh_disabled_until = at(self.sh_disabled_until);
        c.sh_interval = every(self.sh_interval);
        c.log_interval = every(self.log_interval);
        c.eval_iters = self.eval_iters.iter().map(|&v| at(v)).collect();
        c.lrs.position_max_steps = c.total_iters;
        c.desk_scale = 1;
        c
    }

    pub fn densify_schedule(&self) -> DensifySchedule {
        DensifySchedule {
            strategy: match self.mode {
                TrainMode::Progressive => Strategy::Progressive,
                TrainMode::Msv2 | TrainMode::Msv2d => Strategy::Aggressive,
            },
            start: self.densify_start,
            end: self.densify_end,
            vanilla_interval: self.vanilla_interval,
            clone_interval: self.clone_interval,
            reinit_iter: self.reinit_iter,
            opacity_reset_interval: self.opacity_reset_interval,
            vanilla_in_aggressive: self.vanilla_in_aggressive,
        }
    }

    /// Active SH degree at `iter`.
    pub fn active_sh_degree(&self, iter: usize) -> usize {
        if iter < self.sh_disabled_until {
            0
        } else if self.sh_interval == 0 {
            self.sh_degree
        } else {
            ((iter - self.sh_disabled_until) / self.sh_interval).min(self.sh_degree)
        }
    }

    /// Index into `simplify_iters` if a simplification is due at `iter`.
    pub fn simplify_event(&self, iter: usize) -> Option<usize> {
        if self.mode == TrainMode::Progressive {
            return None;
        }
        self.simplify_iters.iter().position(|&v| v == iter)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| SplatError::InvalidArgument(format!("config serialization: {e}")))
    }

    /// Parses a possibly partial config. Missing keys take the preset of the
    /// `mode` key (or `fallback_mode` when absent).
    pub fn from_toml(text: &str, fallback_mode: TrainMode) -> Result<Self> {
        let parse_err =
            |e: &dyn std::fmt::Display| SplatError::InvalidArgument(format!("config parse: {e}"));
        let overlay: toml::Table = toml::from_str(text).map_err(|e| parse_err(&e))?;
        let mode = match overlay.get("mode") {
            Some(v) => v
                .as_str()
                .ok_or_else(|| parse_err(&"mode must be a string"))?
                .parse()?,
            None => fallback_mode,
        };
        Self::merged(overlay, mode)
    }

    /// Like [`Self::from_toml`], but `mode` overrides any mode in the text.
    pub fn from_toml_with_mode(text: &str, mode: TrainMode) -> Result<Self> {
        let mut overlay: toml::Table = toml::from_str(text)
            .map_err(|e| SplatError::InvalidArgument(format!("config parse: {e}")))?;
        overlay.remove("mode");
        Self::merged(overlay, mode)
    }

    fn merged(overlay: toml::Table, mode: TrainMode) -> Result<Self> {
        let parse_err =
            |e: &dyn std::fmt::Display| SplatError::InvalidArgument(format!("config parse: {e}"));
        let base = toml::Table::try_from(Self::for_mode(mode)).map_err(|e| parse_err(&e))?;
        merge_tables(base, overlay)
            .try_into()
            .map_err(|e| parse_err(&e))
    }
}

fn merge_tables(mut base: toml::Table, overlay: toml::Table) -> toml::Table {
    for (k, v) in overlay {
        let merged = match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                toml::Value::Table(merge_tables(b, o))
            }
            (_, v) => v,
        };
        base.insert(k, merged);
    }
    base
}
