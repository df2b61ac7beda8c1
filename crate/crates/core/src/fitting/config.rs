use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectorKind {
    /// Damped Gauss-Newton (Levenberg-Marquardt) step.
    #[default]
    GaussNewton,
    /// Plain gradient step with step-size backoff.
    Gradient,
}

/// First view of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StartView {
    Random { seed: u64 },
    Fixed { index: usize },
}

impl Default for StartView {
    fn default() -> Self {
        StartView::Fixed { index: 0 }
    }
}

/// Which parameter groups the corrector may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamMask {
    pub camera: bool,
    pub pose: bool,
    pub shape: bool,
}

impl Default for ParamMask {
    fn default() -> Self {
        Self {
            camera: true,
            pose: true,
            shape: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub stages: usize,
    /// Weight of the 2D joint loss, 1/pixel.
    pub lambda2d: f64,
    /// Weight of the 3D joint loss, 1/m^2.
    pub lambda3d: f64,
    /// Weight of the parameter loss when ground-truth parameters are given.
    pub lambda_smpl: f64,
    pub corrector: CorrectorKind,
    /// Initial Levenberg-Marquardt damping.
    pub damping: f64,
    /// Step size of the gradient corrector.
    pub learning_rate: f64,
    /// Corrector steps per block visit.
    pub max_inner_iters: usize,
    pub start_view: StartView,
    /// Stage-level convergence threshold on the mean loss decrease.
    pub convergence_tol: f64,
    /// Huber transition inside the Gauss-Newton model, pixels.
    pub huber_delta_px: f64,
    /// Inputs with fewer views are padded up to this count.
    pub min_views: usize,
    pub optimize: ParamMask,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            stages: 3,
            lambda2d: 1.0,
            lambda3d: 100.0,
            lambda_smpl: 1.0,
            corrector: CorrectorKind::GaussNewton,
            damping: 1.0,
            learning_rate: 1e-4,
            max_inner_iters: 20,
            start_view: StartView::default(),
            convergence_tol: 1e-10,
            huber_delta_px: 1.0,
            min_views: 4,
            optimize: ParamMask::default(),
        }
    }
}

/// Largest damping (or step-size divisor) tried before a zero step is returned.
pub const DAMPING_CAP: f64 = 1e8;

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.stages == 0 {
            return bad("stages must be at least 1".into());
        }
        for (name, w) in [
            ("lambda2d", self.lambda2d),
            ("lambda3d", self.lambda3d),
            ("lambda_smpl", self.lambda_smpl),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {w}"));
            }
        }
        if !(self.damping.is_finite() && (0.0..=DAMPING_CAP).contains(&self.damping)) {
            return bad(format!(
                "damping must lie in [0, {DAMPING_CAP:e}], got {}",
                self.damping
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.max_inner_iters == 0 {
            return bad("max_inner_iters must be at least 1".into());
        }
        if !(self.convergence_tol.is_finite() && self.convergence_tol >= 0.0) {
            return bad(format!("convergence_tol must be >= 0, got {}", self.convergence_tol));
        }
        if !(self.huber_delta_px.is_finite() && self.huber_delta_px > 0.0) {
            return bad(format!("huber_delta_px must be positive, got {}", self.huber_delta_px));
        }
        if self.min_views == 0 {
            return bad("min_views must be at least 1".into());
        }
        Ok(())
    }

    /// First view of the chain for `n` views; `key` separates instances of a
    /// batch under a random start.
    pub fn start_index(&self, n: usize, key: u64) -> Result<usize> {
        match self.start_view {
            StartView::Fixed { index } if index < n => Ok(index),
            StartView::Fixed { index } => Err(Error::Config(format!("start view {index} out of range for {n} views"))),
            StartView::Random { seed } => Ok(stream_rng(seed, key).random_range(0..n)),
        }
    }
}
