//! Density control: gradient-driven clone/split, critical-Gaussian
//! identification with aggressive cloning, and depth reinitialization.

mod identify;
mod plan;
mod quantile;
mod reinit;
mod schedule;

pub use identify::{identify_critical, IdentCriterion};
pub use plan::{
    aggressive_clone, aggressive_clone_params, aggressive_clone_with, prune_low_opacity,
    reset_opacity, scene_extent, vanilla_clone_split, CloneVariant, DensifyPlan, PlanKind,
    DEFAULT_GRAD_THRESHOLD, DEFAULT_MIN_OPACITY, DEFAULT_SCALE_THRESHOLD, MAX_CLONE_OPACITY,
    SPLIT_SCALE_DIVISOR,
};
pub use quantile::{keep_above, keep_top_quantile, quantile_threshold, QuantileMode};
pub use reinit::{
    depth_reinitialize, extract_points, gaussians_from_points, reproject_depth, PointCloud,
    SeedParams,
};
pub use schedule::{DensifyEvent, DensifySchedule, Strategy};
