//! Multi-view, multi-stage corrective fitting. Each block sees one view and
//! corrects that view's camera and the shared body parameters; the body
//! flows along the whole chain, each camera only from stage to stage.

mod config;
mod corrector;
mod loss;
mod schedule;

pub use crate::observation::{Joints3dObservation, ViewFeature};
pub use config::{CorrectorKind, FitConfig, ParamMask, StartView, DAMPING_CAP};
pub use corrector::{apply_step, corrector, Correction};
pub use loss::{step_loss, LossBreakdown};
pub use schedule::{
    fit_batch, init_state, pad_views, run_schedule, run_schedule_keyed, BlockRecord, FitJob, FitReport, FitState,
};
