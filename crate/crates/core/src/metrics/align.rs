use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `x -> scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * x) + self.translation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    /// Scale, rotation and translation.
    #[default]
    Similarity,
    /// Rotation and translation only.
    Rigid,
}

/// Relative singular-value threshold below which the point configuration is
/// treated as collinear.
const RANK_TOL: f64 = 1e-10;

/// Least-squares alignment of `pred` onto `gt`, minimising
/// `sum |s R pred_i + t - gt_i|^2`. Returns the transform and the aligned
/// prediction.
pub fn procrustes_align(
    pred: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    mode: AlignMode,
) -> Result<(SimilarityTransform, Vec<Vector3<f64>>)> {
    if pred.len() != gt.len() {
        return Err(Error::Dimension {
            what: "alignment point sets",
            expected: gt.len(),
            got: pred.len(),
        });
    }
    if gt.len() < 3 {
        return Err(Error::Degenerate(format!(
            "alignment needs at least 3 points, got {}",
            gt.len()
        )));
    }
    let n = gt.len() as f64;
    let mu_p = pred.iter().sum::<Vector3<f64>>() / n;
    let mu_g = gt.iter().sum::<Vector3<f64>>() / n;
    let var_p: f64 = pred.iter().map(|p| (p - mu_p).norm_squared()).sum();
    let var_g: f64 = gt.iter().map(|g| (g - mu_g).norm_squared()).sum();
    if var_g <= 0.0 || !var_g.is_finite() {
        return Err(Error::Degenerate("ground-truth points are all coincident".into()));
    }
    if var_p <= 0.0 || !var_p.is_finite() {
        return Err(Error::Degenerate("predicted points are all coincident".into()));
    }
    let mut cov = Matrix3::zeros();
    for (p, g) in pred.iter().zip(gt) {
        cov += (g - mu_g) * (p - mu_p).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut sv = svd.singular_values;
    // nalgebra does not promise an order; sort a copy for the rank test.
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted[1] <= RANK_TOL * sorted[0] {
        return Err(Error::Degenerate(
            "point configuration is collinear (cross-covariance rank < 2)".into(),
        ));
    }
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        // Flip the direction of the smallest singular value.
        let smallest = (0..3).min_by(|&a, &b| sv[a].total_cmp(&sv[b])).expect("3 values");
        d[(smallest, smallest)] = -1.0;
        sv[smallest] = -sv[smallest];
    }
    let rotation = u * d * v_t;
    let scale = match mode {
        AlignMode::Similarity => sv.sum() / var_p,
        AlignMode::Rigid => 1.0,
    };
    let translation = mu_g - scale * (rotation * mu_p);
    let t = SimilarityTransform {
        scale,
        rotation,
        translation,
    };
    let aligned = pred.iter().map(|p| t.apply(p)).collect();
    Ok((t, aligned))
}
