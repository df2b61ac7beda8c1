//! Weak-perspective camera: `x = s * R[0..2] * X + t`, where `R` is the full
//! rotation of an axis-angle vector. The rotation also carries the body's
//! global orientation for that view.

use nalgebra::{DMatrix, Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotation::{canonicalize, left_jacobian, rodrigues, yaw};

/// Number of optimized camera parameters: log-scale, rotation (3), translation (2).
pub const CAMERA_DOF: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    /// Pixels per meter, positive.
    pub scale: f64,
    /// Axis-angle, radians.
    pub rotation: [f64; 3],
    /// Pixels.
    pub translation: [f64; 2],
}

impl Default for CameraParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl CameraParams {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: [0.0; 3],
            translation: [0.0; 2],
        }
    }

    pub fn rotation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.rotation)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        rodrigues(&self.rotation_vector())
    }

    pub fn translation_vector(&self) -> Vector2<f64> {
        Vector2::from(self.translation)
    }

    /// Optimizer coordinates `[log s, r0, r1, r2, t0, t1]`.
    pub fn to_vec(&self) -> [f64; CAMERA_DOF] {
        let r = self.rotation;
        let t = self.translation;
        [self.scale.ln(), r[0], r[1], r[2], t[0], t[1]]
    }

    pub fn from_vec(x: &[f64]) -> Self {
        Self {
            scale: x[0].exp(),
            rotation: [x[1], x[2], x[3]],
            translation: [x[4], x[5]],
        }
    }

    /// Same camera with the rotation magnitude wrapped into `[0, pi]`.
    pub fn canonical(&self) -> Self {
        let r = canonicalize(&self.rotation_vector());
        Self {
            rotation: [r.x, r.y, r.z],
            ..*self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.scale.is_finite()
            && self.scale > 0.0
            && self.rotation.iter().chain(&self.translation).all(|x| x.is_finite())
    }

    /// `s` times the top two rows of the rotation.
    pub fn linear_part(&self) -> Matrix2x3<f64> {
        self.scale * self.rotation_matrix().fixed_rows::<2>(0).into_owned()
    }
}

pub fn project_point(camera: &CameraParams, point: &Vector3<f64>) -> Vector2<f64> {
    camera.linear_part() * point + camera.translation_vector()
}

pub fn project(camera: &CameraParams, points: &[Vector3<f64>]) -> Vec<Vector2<f64>> {
    let m = camera.linear_part();
    let t = camera.translation_vector();
    points.iter().map(|p| m * p + t).collect()
}

/// Derivatives of the `2N` stacked projections (rows `2*i + c`).
#[derive(Debug, Clone)]
pub struct ProjectionJacobian {
    pub projections: Vec<Vector2<f64>>,
    /// `2N x 6` with respect to `[log s, r, t]`.
    pub d_camera: DMatrix<f64>,
    /// Per point `2 x 3` block; the full point Jacobian is block diagonal.
    pub d_point: Matrix2x3<f64>,
}

impl ProjectionJacobian {
    /// Dense `2N x 3N` point Jacobian.
    pub fn d_points_dense(&self) -> DMatrix<f64> {
        let n = self.projections.len();
        let mut out = DMatrix::zeros(2 * n, 3 * n);
        for i in 0..n {
            out.view_mut((2 * i, 3 * i), (2, 3)).copy_from(&self.d_point);
        }
        out
    }
}

pub fn projection_jacobian(camera: &CameraParams, points: &[Vector3<f64>]) -> ProjectionJacobian {
    let rot = camera.rotation_matrix();
    let jl = left_jacobian(&camera.rotation_vector());
    let s = camera.scale;
    let t = camera.translation_vector();
    let n = points.len();
    let mut d_camera = DMatrix::zeros(2 * n, CAMERA_DOF);
    let mut projections = Vec::with_capacity(n);
    for (i, p) in points.iter().enumerate() {
        let rp = rot * p;
        let x = s * Vector2::new(rp.x, rp.y) + t;
        projections.push(x);
        for c in 0..2 {
            d_camera[(2 * i + c, 0)] = x[c] - t[c];
            d_camera[(2 * i + c, 4 + c)] = 1.0;
        }
        for a in 0..3 {
            let w = jl.column(a).into_owned();
            let d = w.cross(&rp);
            d_camera[(2 * i, 1 + a)] = s * d.x;
            d_camera[(2 * i + 1, 1 + a)] = s * d.y;
        }
    }
    ProjectionJacobian {
        projections,
        d_camera,
        d_point: s * rot.fixed_rows::<2>(0).into_owned(),
    }
}

/// Yaw angles (radians) of the canonical rig: front, back, left, right for
/// four views, evenly spaced otherwise.
pub fn canonical_yaws(n: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    if n == 4 {
        vec![0.0, PI, 0.5 * PI, 1.5 * PI]
    } else {
        (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect()
    }
}

/// Unit-scale, zero-translation cameras around the vertical axis.
pub fn canonical_views(n: usize) -> Result<Vec<CameraParams>> {
    if n == 0 {
        return Err(Error::Config("canonical_views needs at least one view".into()));
    }
    Ok(canonical_yaws(n)
        .into_iter()
        .map(|a| {
            CameraParams {
                rotation: yaw(a).into(),
                ..CameraParams::identity()
            }
            .canonical()
        })
        .collect())
}
