use nalgebra::Vector3;

use super::align::{procrustes_align, AlignMode};
use crate::error::{Error, Result};

/// Default PCK threshold and AUC range, millimetres.
pub const PCK_THRESHOLD_MM: f64 = 150.0;
/// Default number of AUC thresholds (5 mm spacing over 0..150 mm).
pub const AUC_SAMPLES: usize = 31;

fn check_pair(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Dimension {
            what: "joint sets",
            expected: gt.len(),
            got: pred.len(),
        });
    }
    if gt.is_empty() {
        return Err(Error::Empty("joint set"));
    }
    Ok(())
}

/// Euclidean error of every joint, millimetres.
pub fn per_joint_errors_mm(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<Vec<f64>> {
    check_pair(pred, gt)?;
    Ok(pred.iter().zip(gt).map(|(p, g)| (p - g).norm() * 1000.0).collect())
}

/// Mean per-joint position error, millimetres.
pub fn mpjpe(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<f64> {
    let e = per_joint_errors_mm(pred, gt)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// MPJPE after aligning `pred` onto `gt`.
pub fn pa_mpjpe(pred: &[Vector3<f64>], gt: &[Vector3<f64>], mode: AlignMode) -> Result<f64> {
    check_pair(pred, gt)?;
    let (_, aligned) = procrustes_align(pred, gt, mode)?;
    mpjpe(&aligned, gt)
}

/// Fraction of errors at or below `threshold`.
pub fn pck(errors_mm: &[f64], threshold_mm: f64) -> Result<f64> {
    if errors_mm.is_empty() {
        return Err(Error::Empty("error list"));
    }
    let hits = errors_mm.iter().filter(|&&e| e <= threshold_mm).count();
    Ok(hits as f64 / errors_mm.len() as f64)
}

/// Trapezoidal area under PCK(t) for `samples` evenly spaced thresholds on
/// `[0, max_threshold]`, normalised to `[0, 1]`.
pub fn auc(errors_mm: &[f64], max_threshold_mm: f64, samples: usize) -> Result<f64> {
    if samples < 2 {
        return Err(Error::Config("auc needs at least two thresholds".into()));
    }
    if !(max_threshold_mm > 0.0) {
        return Err(Error::Config("auc range must be positive".into()));
    }
    let steps = samples - 1;
    let curve = (0..samples)
        .map(|i| pck(errors_mm, max_threshold_mm * i as f64 / steps as f64))
        .collect::<Result<Vec<_>>>()?;
    let area: f64 = curve.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum();
    Ok(area / steps as f64)
}
