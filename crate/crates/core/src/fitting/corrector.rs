use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::config::{CorrectorKind, FitConfig, DAMPING_CAP};
use super::loss::{linearize, step_loss};
use crate::body_model::{BodyParams, BodyTemplate};
use crate::camera::{CameraParams, CAMERA_DOF};
use crate::error::Result;
use crate::observation::ViewFeature;

/// Relative floor on the damping diagonal, so parameters the view cannot see
/// get a well-posed (zero) update.
const DIAG_FLOOR: f64 = 1e-9;
/// Relative eigenvalue cutoff of the scaled normal matrix.
const EIGEN_CUTOFF: f64 = 1e-12;

/// Additive update of one view's camera and of the shared body parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    /// `[log s, r, t]` increment.
    pub camera: [f64; CAMERA_DOF],
    /// `[pose, shape]` increment.
    pub body: Vec<f64>,
    pub loss_before: f64,
    pub loss_after: f64,
    /// Damping (Gauss-Newton) or step divisor (gradient) of the accepted step.
    pub damping: f64,
    /// Step attempts rejected before acceptance.
    pub retries: usize,
    /// No improving step was found below the damping cap; the correction is zero.
    pub capped: bool,
    /// The normal equations gave no finite step at any damping.
    pub singular: bool,
}

impl Correction {
    pub fn is_zero(&self) -> bool {
        self.camera.iter().chain(&self.body).all(|x| *x == 0.0)
    }

    pub fn camera_norm(&self) -> f64 {
        self.camera.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn body_norm(&self) -> f64 {
        self.body.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Applies an increment in optimizer coordinates; pose components are
/// clamped to `[-pi, pi]`.
pub fn apply_step(
    template: &BodyTemplate,
    camera: &CameraParams,
    body: &BodyParams,
    step: &DVector<f64>,
) -> Result<(CameraParams, BodyParams)> {
    let mut c = camera.to_vec();
    for (x, d) in c.iter_mut().zip(step.rows(0, CAMERA_DOF).iter()) {
        *x += d;
    }
    let mut b = body.to_vec();
    for (x, d) in b.iter_mut().zip(step.rows(CAMERA_DOF, step.len() - CAMERA_DOF).iter()) {
        *x += d;
    }
    let pd = template.pose_dim();
    for x in b[..pd].iter_mut() {
        *x = x.clamp(-std::f64::consts::PI, std::f64::consts::PI);
    }
    Ok((CameraParams::from_vec(&c), BodyParams::from_slice(template, &b)?))
}

fn active_columns(template: &BodyTemplate, config: &FitConfig) -> Vec<usize> {
    let pd = template.pose_dim();
    let m = config.optimize;
    let mut cols = Vec::new();
    if m.camera {
        cols.extend(0..CAMERA_DOF);
    }
    if m.pose {
        cols.extend(CAMERA_DOF..CAMERA_DOF + pd);
    }
    if m.shape {
        cols.extend(CAMERA_DOF + pd..CAMERA_DOF + pd + template.shape_dim());
    }
    cols
}

/// One corrective step for a single view. Gauss-Newton solves
/// `(J'J + damping * diag(J'J)) d = -J'r` (minimum-norm in the
/// diagonally scaled coordinates when `J'J` is rank deficient); the gradient variant takes
/// `d = -lr * J'r`. A step that does not lower the exact view loss is retried
/// with ten times the damping (or a tenth of the step) until `DAMPING_CAP`,
/// after which a zero step is returned.
pub fn corrector(
    feature: &ViewFeature,
    camera: &CameraParams,
    body: &BodyParams,
    template: &BodyTemplate,
    config: &FitConfig,
    gt: Option<&BodyParams>,
) -> Result<Correction> {
    let loss_before = step_loss(template, body, camera, feature, gt, config)?.total;
    let n_full = CAMERA_DOF + template.pose_dim() + template.shape_dim();
    let zero = |retries, capped, singular, damping| Correction {
        camera: [0.0; CAMERA_DOF],
        body: vec![0.0; n_full - CAMERA_DOF],
        loss_before,
        loss_after: loss_before,
        damping,
        retries,
        capped,
        singular,
    };
    let cols = active_columns(template, config);
    if loss_before == 0.0 || cols.is_empty() {
        return Ok(zero(0, false, false, config.damping));
    }
    let lin = linearize(template, body, camera, feature, gt, config)?;
    let jac = DMatrix::from_fn(lin.jac.nrows(), cols.len(), |r, c| lin.jac[(r, cols[c])]);
    let grad = jac.transpose() * &lin.r;
    if grad.amax() == 0.0 {
        return Ok(zero(0, false, false, config.damping));
    }
    let normal = jac.transpose() * &jac;
    let max_diag = normal.diagonal().amax();
    let diag = normal
        .diagonal()
        .map(|d| d.max(DIAG_FLOOR * max_diag).max(f64::MIN_POSITIVE));
    // In coordinates scaled by diag^(-1/2) the damping term is `damping * I`,
    // so one eigendecomposition serves every damping level. Directions the
    // view cannot see (eigenvalues at round-off level) get no update.
    let inv_sqrt = diag.map(|d| 1.0 / d.sqrt());
    let scaled = DMatrix::from_fn(normal.nrows(), normal.ncols(), |i, j| {
        normal[(i, j)] * inv_sqrt[i] * inv_sqrt[j]
    });
    let eig = scaled.symmetric_eigen();
    let cutoff = EIGEN_CUTOFF * eig.eigenvalues.amax();
    let rhs = eig.eigenvectors.transpose() * (-grad.component_mul(&inv_sqrt));
    let solve = |damping: f64| -> Option<DVector<f64>> {
        let mut y = DVector::zeros(rhs.len());
        for (k, &ev) in eig.eigenvalues.iter().enumerate() {
            if ev > cutoff {
                y += eig.eigenvectors.column(k) * (rhs[k] / (ev + damping));
            }
        }
        let step = y.component_mul(&inv_sqrt);
        step.iter().all(|x| x.is_finite()).then_some(step)
    };

    let expand = |d: &DVector<f64>| {
        let mut full = DVector::zeros(n_full);
        for (i, &c) in cols.iter().enumerate() {
            full[c] = d[i];
        }
        full
    };

    let mut damping = match config.corrector {
        CorrectorKind::GaussNewton => config.damping,
        CorrectorKind::Gradient => 1.0,
    };
    let mut retries = 0;
    let mut factorised = false;
    loop {
        let step = match config.corrector {
            CorrectorKind::GaussNewton => solve(damping),
            CorrectorKind::Gradient => Some(-(config.learning_rate / damping) * &grad),
        };
        if let Some(step) = step.filter(|s| s.iter().all(|x| x.is_finite())) {
            factorised = true;
            let full = expand(&step);
            let (c2, b2) = apply_step(template, camera, body, &full)?;
            if c2.is_finite() && b2.is_finite() {
                let after = step_loss(template, &b2, &c2, feature, gt, config)?.total;
                if after < loss_before {
                    let dc = c2.to_vec();
                    let c0 = camera.to_vec();
                    let db: Vec<f64> = b2.to_vec().iter().zip(body.to_vec()).map(|(a, b)| a - b).collect();
                    return Ok(Correction {
                        camera: std::array::from_fn(|i| dc[i] - c0[i]),
                        body: db,
                        loss_before,
                        loss_after: after,
                        damping,
                        retries,
                        capped: false,
                        singular: false,
                    });
                }
            }
        }
        retries += 1;
        damping = if damping == 0.0 { 1e-9 } else { damping * 10.0 };
        if damping > DAMPING_CAP {
            return Ok(zero(retries, true, !factorised, damping));
        }
    }
}
