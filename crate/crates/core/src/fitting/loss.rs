use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::config::FitConfig;
use crate::body_model::{joints3d, joints_jacobian, BodyParams, BodyTemplate};
use crate::camera::{project, projection_jacobian, CameraParams, CAMERA_DOF};
use crate::error::{Error, Result};
use crate::observation::ViewFeature;
use crate::rotation::left_jacobian;

/// Per-view loss terms (unweighted) and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Mean absolute 2D coordinate error over visible joints, pixels.
    pub l2d: f64,
    /// Mean squared root-relative 3D joint error in the camera frame, m^2.
    pub l3d: f64,
    /// Squared distance to the ground-truth parameters.
    pub lsmpl: f64,
    pub total: f64,
}

fn check_constraints(feature: &ViewFeature, gt: Option<&BodyParams>) -> Result<()> {
    let has3d = feature.joints3d.as_ref().is_some_and(|o| o.mask.iter().any(|m| *m));
    if feature.visible_count() == 0 && !has3d && gt.is_none() {
        return Err(Error::NoConstraints);
    }
    Ok(())
}

fn smpl_term(body: &BodyParams, gt: &BodyParams) -> Result<f64> {
    let (a, b) = (body.to_vec(), gt.to_vec());
    if a.len() != b.len() {
        return Err(Error::Dimension {
            what: "ground-truth parameters",
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum())
}

/// Exact composite loss of one view:
/// `lambda2d * L2D + lambda3d * L3D + lambda_smpl * L_SMPL`.
pub fn step_loss(
    template: &BodyTemplate,
    body: &BodyParams,
    camera: &CameraParams,
    feature: &ViewFeature,
    gt: Option<&BodyParams>,
    config: &FitConfig,
) -> Result<LossBreakdown> {
    feature.validate(template.keypoint_count())?;
    check_constraints(feature, gt)?;
    let joints = joints3d(template, body)?;
    let kp: Vec<Vector3<f64>> = template.keypoint_map().iter().map(|&k| joints[k]).collect();

    let mut abs_sum = 0.0;
    let mut visible = 0usize;
    for (j, p) in project(camera, &kp).iter().enumerate() {
        if feature.visibility[j] {
            let e = p - feature.point(j);
            abs_sum += e.x.abs() + e.y.abs();
            visible += 1;
        }
    }
    let l2d = if visible > 0 {
        abs_sum / (2 * visible) as f64
    } else {
        0.0
    };

    let rot = camera.rotation_matrix();
    let mut sq_sum = 0.0;
    let mut supervised = 0usize;
    for (j, x) in kp.iter().enumerate() {
        if let Some(target) = feature.point3(j) {
            sq_sum += (rot * (x - joints[0]) - target).norm_squared();
            supervised += 1;
        }
    }
    let l3d = if supervised > 0 {
        sq_sum / supervised as f64
    } else {
        0.0
    };

    let lsmpl = match gt {
        Some(g) => smpl_term(body, g)?,
        None => 0.0,
    };
    Ok(LossBreakdown {
        l2d,
        l3d,
        lsmpl,
        total: config.lambda2d * l2d + config.lambda3d * l3d + config.lambda_smpl * lsmpl,
    })
}

/// Residuals `r` and Jacobian (columns `[camera (6), pose, shape]`) of the
/// smoothed view objective `0.5 |r|^2`, with the 2D term Huber-weighted.
#[derive(Debug, Clone)]
pub(crate) struct Linearization {
    pub r: DVector<f64>,
    pub jac: DMatrix<f64>,
}

pub(crate) fn linearize(
    template: &BodyTemplate,
    body: &BodyParams,
    camera: &CameraParams,
    feature: &ViewFeature,
    gt: Option<&BodyParams>,
    config: &FitConfig,
) -> Result<Linearization> {
    check_constraints(feature, gt)?;
    let pd = template.pose_dim();
    let bd = template.shape_dim();
    let cols = CAMERA_DOF + pd + bd;
    let j_n = template.keypoint_count();
    let mut selection = template.keypoint_map().to_vec();
    selection.push(0);
    let jj = joints_jacobian(template, body, &selection)?;
    let kp = &jj.joints[..j_n];
    let root = jj.joints[j_n];
    // 3 x (pose + shape) derivative of selected joint `row`.
    let body_block = |row: usize| -> DMatrix<f64> {
        let mut m = DMatrix::zeros(3, pd + bd);
        m.view_mut((0, 0), (3, pd)).copy_from(&jj.d_pose.rows(3 * row, 3));
        m.view_mut((0, pd), (3, bd)).copy_from(&jj.d_shape.rows(3 * row, 3));
        m
    };

    let mut rows: Vec<(f64, DVector<f64>)> = Vec::new();

    let visible: Vec<usize> = (0..j_n).filter(|&j| feature.visibility[j]).collect();
    if !visible.is_empty() && config.lambda2d > 0.0 {
        let pj = projection_jacobian(camera, kp);
        let c2 = config.lambda2d / (2 * visible.len()) as f64;
        let delta = config.huber_delta_px;
        for &j in &visible {
            let e: Vector2<f64> = pj.projections[j] - feature.point(j);
            let dbody = pj.d_point * body_block(j).fixed_rows::<3>(0);
            for c in 0..2 {
                let w = if e[c].abs() <= delta { 1.0 } else { delta / e[c].abs() };
                let k = (c2 * w).sqrt();
                let mut g = DVector::zeros(cols);
                for a in 0..CAMERA_DOF {
                    g[a] = k * pj.d_camera[(2 * j + c, a)];
                }
                for a in 0..pd + bd {
                    g[CAMERA_DOF + a] = k * dbody[(c, a)];
                }
                rows.push((k * e[c], g));
            }
        }
    }

    let supervised: Vec<(usize, Vector3<f64>)> = (0..j_n).filter_map(|j| feature.point3(j).map(|t| (j, t))).collect();
    if !supervised.is_empty() && config.lambda3d > 0.0 {
        let rot = camera.rotation_matrix();
        let jl = left_jacobian(&camera.rotation_vector());
        let k = (2.0 * config.lambda3d / supervised.len() as f64).sqrt();
        let root_block = body_block(j_n);
        for &(j, target) in &supervised {
            let rel = kp[j] - root;
            let pred = rot * rel;
            let dbody = rot * (body_block(j) - &root_block);
            // d(R x)/dr_a = (J_l e_a) x (R x)
            let drot: Vec<Vector3<f64>> = (0..3).map(|a| jl.column(a).into_owned().cross(&pred)).collect();
            for d in 0..3 {
                let mut g = DVector::zeros(cols);
                for a in 0..3 {
                    g[1 + a] = k * drot[a][d];
                }
                for a in 0..pd + bd {
                    g[CAMERA_DOF + a] = k * dbody[(d, a)];
                }
                rows.push((k * (pred[d] - target[d]), g));
            }
        }
    }

    if let Some(g) = gt.filter(|_| config.lambda_smpl > 0.0) {
        let (a, b) = (body.to_vec(), g.to_vec());
        if a.len() != b.len() {
            return Err(Error::Dimension {
                what: "ground-truth parameters",
                expected: a.len(),
                got: b.len(),
            });
        }
        let k = (2.0 * config.lambda_smpl).sqrt();
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            let mut row = DVector::zeros(cols);
            row[CAMERA_DOF + i] = k;
            rows.push((k * (x - y), row));
        }
    }

    let m = rows.len();
    let mut r = DVector::zeros(m);
    let mut jac = DMatrix::zeros(m, cols);
    for (i, (v, g)) in rows.into_iter().enumerate() {
        r[i] = v;
        jac.row_mut(i).copy_from(&g.transpose());
    }
    Ok(Linearization { r, jac })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_model::{keypoints3d, make_mini_template, MiniTemplateConfig};
    use crate::gradcheck::{central_difference, max_relative_error};
    use crate::observation::Joints3dObservation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn template() -> BodyTemplate {
        make_mini_template(&MiniTemplateConfig {
            vertex_target: 400,
            seed: 0,
        })
        .unwrap()
    }

    fn observed(t: &BodyTemplate, body: &BodyParams, cam: &CameraParams) -> ViewFeature {
        let kp = keypoints3d(t, body).unwrap();
        let pts = project(cam, &kp).into_iter().map(|p| [p.x, p.y]).collect();
        ViewFeature::new(0, pts, vec![true; kp.len()])
    }

    fn random_state(rng: &mut ChaCha8Rng, t: &BodyTemplate) -> (BodyParams, CameraParams) {
        let mut b = BodyParams::zeros(t);
        for x in b.pose.iter_mut().flatten() {
            *x = rng.random_range(-0.4..0.4);
        }
        for x in b.shape.iter_mut() {
            *x = rng.random_range(-1.0..1.0);
        }
        let cam = CameraParams {
            scale: rng.random_range(80.0..120.0),
            rotation: [
                rng.random_range(-0.5..0.5),
                rng.random_range(-3.0..3.0),
                rng.random_range(-0.5..0.5),
            ],
            translation: [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)],
        };
        (b, cam)
    }

    #[test]
    fn exact_match_has_zero_loss() {
        let t = template();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (b, cam) = random_state(&mut rng, &t);
        let f = observed(&t, &b, &cam);
        let l = step_loss(&t, &b, &cam, &f, Some(&b), &FitConfig::default()).unwrap();
        assert_eq!(l.total, 0.0);
        assert_eq!(l.lsmpl, 0.0);
    }

    #[test]
    fn uniform_offset_gives_mean_coordinate_error() {
        let t = template();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (b, cam) = random_state(&mut rng, &t);
        let mut f = observed(&t, &b, &cam);
        for p in f.joints2d.iter_mut() {
            p[0] -= 3.0;
            p[1] -= 4.0;
        }
        let cfg = FitConfig {
            lambda3d: 0.0,
            lambda_smpl: 0.0,
            ..Default::default()
        };
        let l = step_loss(&t, &b, &cam, &f, None, &cfg).unwrap();
        assert!((l.l2d - 3.5).abs() < 1e-9);
        assert!((l.total - 3.5).abs() < 1e-9);
    }

    #[test]
    fn hidden_joints_do_not_count_and_no_constraints_is_an_error() {
        let t = template();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (b, cam) = random_state(&mut rng, &t);
        let mut f = observed(&t, &b, &cam);
        f.joints2d[0] = [1e6, 1e6];
        f.visibility[0] = false;
        assert!(step_loss(&t, &b, &cam, &f, None, &FitConfig::default()).unwrap().total < 1e-9);
        f.visibility.iter_mut().for_each(|v| *v = false);
        assert!(matches!(
            step_loss(&t, &b, &cam, &f, None, &FitConfig::default()),
            Err(Error::NoConstraints)
        ));
        assert!(step_loss(&t, &b, &cam, &f, Some(&b), &FitConfig::default()).is_ok());
    }

    #[test]
    fn smoothed_gradient_matches_finite_differences() {
        let t = template();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = FitConfig {
            huber_delta_px: 1e9,
            ..Default::default()
        };
        for _ in 0..5 {
            let (gt, cam_gt) = random_state(&mut rng, &t);
            let (b, cam) = random_state(&mut rng, &t);
            let mut f = observed(&t, &gt, &cam_gt);
            let rot = cam_gt.rotation_matrix();
            let j = joints3d(&t, &gt).unwrap();
            f.joints3d = Some(Joints3dObservation {
                points: t
                    .keypoint_map()
                    .iter()
                    .map(|&k| {
                        let p = rot * (j[k] - j[0]);
                        [p.x, p.y, p.z]
                    })
                    .collect(),
                mask: (0..t.keypoint_count()).map(|i| i % 3 != 0).collect(),
            });
            let lin = linearize(&t, &b, &cam, &f, Some(&gt), &cfg).unwrap();
            let mut x: Vec<f64> = cam.to_vec().to_vec();
            x.extend(b.to_vec());
            let pd = CAMERA_DOF;
            let residuals = |x: &[f64]| {
                let c = CameraParams::from_vec(&x[..pd]);
                let bb = BodyParams::from_slice(&t, &x[pd..]).unwrap();
                linearize(&t, &bb, &c, &f, Some(&gt), &cfg)
                    .unwrap()
                    .r
                    .as_slice()
                    .to_vec()
            };
            let numeric = central_difference(&x, 1e-6, residuals);
            assert!(max_relative_error(&lin.jac, &numeric) < 1e-5);
            // With a huge Huber threshold the smoothed objective is the exact one.
            let l = step_loss(&t, &b, &cam, &f, Some(&gt), &cfg).unwrap();
            let smoothed_2d = {
                let c = FitConfig {
                    lambda3d: 0.0,
                    lambda_smpl: 0.0,
                    ..cfg.clone()
                };
                0.5 * linearize(&t, &b, &cam, &f, None, &c).unwrap().r.norm_squared()
            };
            let kp = keypoints3d(&t, &b).unwrap();
            let sq: f64 = project(&cam, &kp)
                .iter()
                .zip(&f.joints2d)
                .map(|(p, o)| (p.x - o[0]).powi(2) + (p.y - o[1]).powi(2))
                .sum();
            assert!((smoothed_2d - 0.5 * sq / (2 * kp.len()) as f64).abs() < 1e-9 * sq);
            let full = 0.5 * lin.r.norm_squared();
            let rest = cfg.lambda3d * l.l3d + cfg.lambda_smpl * l.lsmpl;
            assert!((full - smoothed_2d - rest).abs() < 1e-9 * full.max(1.0));
        }
    }
}
