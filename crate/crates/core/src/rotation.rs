//! Axis-angle rotations.
//!
//! Derivatives use the left Jacobian of SO(3): for `R = exp([r]x)`,
//! `dR/dr_i = [J_l(r) e_i]x R`, so perturbing `r` rotates the output about the
//! world-frame axis `J_l(r) e_i`.

use nalgebra::{Matrix3, Vector3};

/// Below this angle the closed forms switch to second-order Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-8;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation matrix of an axis-angle vector.
pub fn rodrigues(r: &Vector3<f64>) -> Matrix3<f64> {
    let theta = r.norm();
    let k = skew(r);
    if theta < SMALL_ANGLE {
        return Matrix3::identity() + k + 0.5 * k * k;
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Matrix3::identity() + a * k + b * k * k
}

/// Left Jacobian of SO(3) at `r`.
pub fn left_jacobian(r: &Vector3<f64>) -> Matrix3<f64> {
    let theta = r.norm();
    let k = skew(r);
    if theta < SMALL_ANGLE {
        return Matrix3::identity() + 0.5 * k + (1.0 / 6.0) * k * k;
    }
    let t2 = theta * theta;
    let a = (1.0 - theta.cos()) / t2;
    let b = (theta - theta.sin()) / (t2 * theta);
    Matrix3::identity() + a * k + b * k * k
}

/// Maps an axis-angle vector to the equivalent one with magnitude in `[0, pi]`.
pub fn canonicalize(r: &Vector3<f64>) -> Vector3<f64> {
    let theta = r.norm();
    if !theta.is_finite() || theta <= std::f64::consts::PI {
        return *r;
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let wrapped = theta.rem_euclid(two_pi);
    let axis = r / theta;
    if wrapped <= std::f64::consts::PI {
        axis * wrapped
    } else {
        -axis * (two_pi - wrapped)
    }
}

/// Rotation by `angle` about the vertical (+y) axis.
pub fn yaw(angle: f64) -> Vector3<f64> {
    Vector3::new(0.0, angle, 0.0)
}
