//! Evaluation: alignment, joint errors, Hausdorff distance and tape
//! measurements.

mod align;
mod hausdorff;
mod joints;
mod report;
mod tape;

pub use align::{procrustes_align, AlignMode, SimilarityTransform};
pub use hausdorff::{directed_sq_brute_force, directed_sq_grid, hausdorff, HausdorffMethod};
pub use joints::{auc, mpjpe, pa_mpjpe, pck, per_joint_errors_mm, AUC_SAMPLES, PCK_THRESHOLD_MM};
pub use report::{aggregate, evaluate, format_table, EvalOptions, MetricsReport};
pub use tape::{
    convex_hull_perimeter, relative_errors, tape_measurements, tape_measurements_at, torso_faces, torso_vertices,
    CutHeights, Measurements, RelativeErrors, MEASUREMENT_NAMES,
};
