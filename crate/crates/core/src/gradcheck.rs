//! Finite-difference checks of the analytic Jacobians.

use nalgebra::{DMatrix, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::body_model::{joints3d, joints_jacobian, BodyParams, BodyTemplate};
use crate::camera::{project, projection_jacobian, CameraParams};
use crate::error::Result;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Pass threshold on the worst relative error.
pub const REL_TOL: f64 = 1e-5;

/// Central differences of `f` at `x`, one column per coordinate.
pub fn central_difference<F>(x: &[f64], step: f64, mut f: F) -> DMatrix<f64>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut probe = x.to_vec();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f(&probe);
        probe[i] = x[i] - step;
        let down = f(&probe);
        probe[i] = x[i];
        cols.push(up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * step)).collect());
    }
    let rows = cols.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows, x.len(), |r, c| cols[c][r])
}

/// Worst entrywise `|a - n| / max(|a|, |n|, floor)`, where the floor is
/// `1e-3 * max(1, max |n|)` so that structurally zero entries compare on an
/// absolute scale tied to the Jacobian's magnitude.
pub fn max_relative_error(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "jacobian shapes differ");
    let floor = 1e-3 * numeric.amax().max(1.0);
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckOptions {
    pub draws: usize,
    pub seed: u64,
    /// Pose components are drawn from `[-max_angle, max_angle]` radians.
    pub max_angle: f64,
    /// Shape components are drawn from `[-max_shape, max_shape]`.
    pub max_shape: f64,
    /// Perturbs every analytic Jacobian before comparison (negative control).
    pub corrupt: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            draws: 100,
            seed: 0,
            max_angle: 1.0,
            max_shape: 3.0,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub draws: usize,
    pub worst_rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub suites: Vec<SuiteResult>,
    pub tolerance: f64,
    pub passed: bool,
}

fn corrupt(m: &mut DMatrix<f64>) {
    let bump = 0.1 * m.amax().max(1.0);
    if let Some(x) = m.iter_mut().next() {
        *x += bump;
    }
}

fn random_body(rng: &mut ChaCha8Rng, template: &BodyTemplate, opts: &GradcheckOptions) -> BodyParams {
    let mut body = BodyParams::zeros(template);
    for r in body.pose.iter_mut().flatten() {
        *r = rng.random_range(-opts.max_angle..=opts.max_angle);
    }
    for b in body.shape.iter_mut() {
        *b = rng.random_range(-opts.max_shape..=opts.max_shape);
    }
    body
}

fn random_camera(rng: &mut ChaCha8Rng) -> CameraParams {
    let r = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    CameraParams {
        scale: rng.random_range(20.0..300.0),
        rotation: [r.x * 1.8, r.y * 1.8, r.z * 1.8],
        translation: [rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0)],
    }
}

fn flat3(xs: &[Vector3<f64>]) -> Vec<f64> {
    xs.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn flat2(xs: &[Vector2<f64>]) -> Vec<f64> {
    xs.iter().flat_map(|p| [p.x, p.y]).collect()
}

/// Compares the joint and projection Jacobians against central differences
/// over seeded random draws.
pub fn run_gradcheck(template: &BodyTemplate, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let all: Vec<usize> = (0..template.joint_count()).collect();
    let pd = template.pose_dim();
    let mut worst = [0.0_f64; 4];
    for _ in 0..opts.draws {
        let body = random_body(&mut rng, template, opts);
        let mut jac = joints_jacobian(template, &body, &all)?;
        let x0 = body.to_vec();
        let fd = central_difference(&x0, FD_STEP, |x| {
            let b = BodyParams::from_slice(template, x).expect("sized");
            flat3(&joints3d(template, &b).expect("valid"))
        });
        let fd_pose = fd.columns(0, pd).into_owned();
        let fd_shape = fd.columns(pd, template.shape_dim()).into_owned();
        if opts.corrupt {
            corrupt(&mut jac.d_pose);
            corrupt(&mut jac.d_shape);
        }
        worst[0] = worst[0].max(max_relative_error(&jac.d_pose, &fd_pose));
        worst[1] = worst[1].max(max_relative_error(&jac.d_shape, &fd_shape));

        let cam = random_camera(&mut rng);
        let points = jac.joints.clone();
        let pj = projection_jacobian(&cam, &points);
        let fd_cam = central_difference(&cam.to_vec(), FD_STEP, |x| {
            flat2(&project(&CameraParams::from_vec(x), &points))
        });
        let fd_pts = central_difference(&flat3(&points), FD_STEP, |x| {
            let ps: Vec<_> = x.chunks(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect();
            flat2(&project(&cam, &ps))
        });
        let mut d_cam = pj.d_camera.clone();
        let mut d_pts = pj.d_points_dense();
        if opts.corrupt {
            corrupt(&mut d_cam);
            corrupt(&mut d_pts);
        }
        worst[2] = worst[2].max(max_relative_error(&d_cam, &fd_cam));
        worst[3] = worst[3].max(max_relative_error(&d_pts, &fd_pts));
    }
    let names = ["joints3d/pose", "joints3d/shape", "project/camera", "project/points"];
    let suites: Vec<SuiteResult> = names
        .iter()
        .zip(worst)
        .map(|(name, w)| SuiteResult {
            name: (*name).to_string(),
            draws: opts.draws,
            worst_rel_err: w,
            passed: w < REL_TOL,
        })
        .collect();
    let passed = suites.iter().all(|s| s.passed);
    Ok(GradcheckReport {
        suites,
        tolerance: REL_TOL,
        passed,
    })
}
