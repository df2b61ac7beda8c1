use nalgebra::{DMatrix, Matrix3, Vector3};

use super::{BodyParams, BodyTemplate, Mesh};
use crate::error::Result;
use crate::rotation::{left_jacobian, rodrigues};

/// `x -> rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// Row-major `(R_k - I)` for every non-root joint, in tree order.
pub fn pose_feature(params: &BodyParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.pose.len() * 9);
    for r in &params.pose {
        let m = rodrigues(&Vector3::new(r[0], r[1], r[2])) - Matrix3::identity();
        for i in 0..3 {
            for j in 0..3 {
                out.push(m[(i, j)]);
            }
        }
    }
    out
}

/// Rest mesh of the given shape, `X0 + S beta`.
pub fn shape_mesh(template: &BodyTemplate, shape: &[f64]) -> Result<Mesh> {
    super::template::check_len("shape", template.shape_dim(), shape.len())?;
    let p = template.parts();
    let b_n = p.shape_dim;
    let vertices = (0..p.vertex_count)
        .map(|v| {
            let mut x = template.rest_vertex(v);
            for d in 0..3 {
                let row = &p.shape_basis[(v * 3 + d) * b_n..(v * 3 + d + 1) * b_n];
                x[d] += row.iter().zip(shape).map(|(a, b)| a * b).sum::<f64>();
            }
            x
        })
        .collect();
    Ok(Mesh { vertices })
}

/// `joint_regressor * vertices`.
pub fn regress_joints(template: &BodyTemplate, mesh: &Mesh) -> Result<Vec<Vector3<f64>>> {
    super::template::check_len("mesh vertices", template.vertex_count(), mesh.len())?;
    Ok((0..template.joint_count())
        .map(|k| {
            template
                .regressor_row(k)
                .iter()
                .zip(&mesh.vertices)
                .filter(|(w, _)| **w != 0.0)
                .fold(Vector3::zeros(), |acc, (w, x)| acc + *w * x)
        })
        .collect())
}

struct Chain {
    /// Accumulated joint rotations.
    rotations: Vec<Matrix3<f64>>,
    /// Posed minus rest joint positions; exactly zero at the rest pose.
    offsets: Vec<Vector3<f64>>,
    rest_joints: Vec<Vector3<f64>>,
}

impl Chain {
    fn position(&self, k: usize) -> Vector3<f64> {
        self.rest_joints[k] + self.offsets[k]
    }
}

fn forward_chain(template: &BodyTemplate, params: &BodyParams, rest_joints: &[Vector3<f64>]) -> Chain {
    let k_n = template.joint_count();
    let mut rotations = Vec::with_capacity(k_n);
    let mut offsets = Vec::with_capacity(k_n);
    rotations.push(Matrix3::identity());
    offsets.push(Vector3::zeros());
    for k in 1..k_n {
        let p = template.parent(k).expect("validated tree");
        let local = rodrigues(&params.joint_rotation(k));
        let bent = (rotations[p] - Matrix3::identity()) * (rest_joints[k] - rest_joints[p]);
        offsets.push(offsets[p] + bent);
        rotations.push(rotations[p] * local);
    }
    Chain {
        rotations,
        offsets,
        rest_joints: rest_joints.to_vec(),
    }
}

/// Per-joint rigid transforms acting on rest-space points: rest joint `k`
/// maps to posed joint `k` and its neighbourhood rotates with the joint.
/// The root transform is the identity.
pub fn global_transforms(
    template: &BodyTemplate,
    params: &BodyParams,
    rest_joints: &[Vector3<f64>],
) -> Result<Vec<RigidTransform>> {
    params.check(template)?;
    super::template::check_len("rest joints", template.joint_count(), rest_joints.len())?;
    let chain = forward_chain(template, params, rest_joints);
    Ok(chain
        .rotations
        .iter()
        .zip(&chain.offsets)
        .zip(rest_joints)
        .map(|((r, d), j)| RigidTransform {
            rotation: *r,
            translation: d - (r - Matrix3::identity()) * j,
        })
        .collect())
}

/// Linear blend skinning with shape and pose-corrective blendshapes.
pub fn skin(template: &BodyTemplate, params: &BodyParams) -> Result<Mesh> {
    params.check(template)?;
    let mut rest = shape_mesh(template, &params.shape)?;
    if let Some(pb) = &template.parts().pose_basis {
        let feat = pose_feature(params);
        let pf = feat.len();
        for (v, x) in rest.vertices.iter_mut().enumerate() {
            for d in 0..3 {
                let row = &pb[(v * 3 + d) * pf..(v * 3 + d + 1) * pf];
                x[d] += row.iter().zip(&feat).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    let rest_joints = template.rest_joints_for_shape(&params.shape)?;
    let transforms = global_transforms(template, params, &rest_joints)?;
    blend(template, &rest, &transforms)
}

/// Weighted blend of per-joint transforms applied to a rest-space mesh,
/// accumulated as a displacement so identity transforms reproduce the input
/// bit for bit.
pub fn blend(template: &BodyTemplate, rest: &Mesh, transforms: &[RigidTransform]) -> Result<Mesh> {
    super::template::check_len("mesh vertices", template.vertex_count(), rest.len())?;
    super::template::check_len("transforms", template.joint_count(), transforms.len())?;
    let vertices = rest
        .vertices
        .iter()
        .enumerate()
        .map(|(v, x)| {
            let mut rot = Matrix3::zeros();
            let mut trans = Vector3::zeros();
            for (w, g) in template.skinning_row(v).iter().zip(transforms) {
                if *w != 0.0 {
                    rot += *w * (g.rotation - Matrix3::identity());
                    trans += *w * g.translation;
                }
            }
            x + (rot * x + trans)
        })
        .collect();
    Ok(Mesh { vertices })
}

/// Posed 3D positions of all `K` joints.
pub fn joints3d(template: &BodyTemplate, params: &BodyParams) -> Result<Vec<Vector3<f64>>> {
    params.check(template)?;
    let rest_joints = template.rest_joints_for_shape(&params.shape)?;
    let chain = forward_chain(template, params, &rest_joints);
    Ok((0..template.joint_count()).map(|k| chain.position(k)).collect())
}

/// Posed positions of the evaluation keypoints.
pub fn keypoints3d(template: &BodyTemplate, params: &BodyParams) -> Result<Vec<Vector3<f64>>> {
    let all = joints3d(template, params)?;
    Ok(template.keypoint_map().iter().map(|&k| all[k]).collect())
}

/// Selected posed joints with their derivatives.
#[derive(Debug, Clone)]
pub struct JointJacobian {
    pub joints: Vec<Vector3<f64>>,
    /// `3J x 3(K-1)`, rows `3*j + d`.
    pub d_pose: DMatrix<f64>,
    /// `3J x B`.
    pub d_shape: DMatrix<f64>,
}

/// Analytic Jacobian of `joints3d` restricted to `selection`.
pub fn joints_jacobian(template: &BodyTemplate, params: &BodyParams, selection: &[usize]) -> Result<JointJacobian> {
    params.check(template)?;
    let k_n = template.joint_count();
    let b_n = template.shape_dim();
    let rest_joints = template.rest_joints_for_shape(&params.shape)?;
    let chain = forward_chain(template, params, &rest_joints);

    // dP_k/dbeta = dP_p/dbeta + Q_p (dJ_k - dJ_p)
    let mut d_shape_all: Vec<DMatrix<f64>> = Vec::with_capacity(k_n);
    let rest_coeff = |k: usize| DMatrix::from_fn(3, b_n, |d, b| template.joint_shape_coeff(k, d, b));
    d_shape_all.push(rest_coeff(0));
    for k in 1..k_n {
        let p = template.parent(k).expect("validated tree");
        let q = DMatrix::from_fn(3, 3, |i, j| chain.rotations[p][(i, j)]);
        let rel = rest_coeff(k) - rest_coeff(p);
        let dk = &d_shape_all[p] + q * rel;
        d_shape_all.push(dk);
    }

    // World-frame rotation axes of every pose parameter.
    let mut axes: Vec<Matrix3<f64>> = vec![Matrix3::zeros(); k_n];
    for (a, axis) in axes.iter_mut().enumerate().skip(1) {
        let p = template.parent(a).expect("validated tree");
        *axis = chain.rotations[p] * left_jacobian(&params.joint_rotation(a));
    }

    let n = selection.len();
    let mut d_pose = DMatrix::zeros(3 * n, template.pose_dim());
    let mut d_shape = DMatrix::zeros(3 * n, b_n);
    let mut joints = Vec::with_capacity(n);
    for (row, &k) in selection.iter().enumerate() {
        let pk = chain.position(k);
        joints.push(pk);
        d_shape.view_mut((3 * row, 0), (3, b_n)).copy_from(&d_shape_all[k]);
        let mut cur = template.parent(k);
        while let Some(a) = cur {
            if a == 0 {
                break;
            }
            let lever = pk - chain.position(a);
            for i in 0..3 {
                let w = axes[a].column(i).into_owned();
                let dp = w.cross(&lever);
                for d in 0..3 {
                    d_pose[(3 * row + d, 3 * (a - 1) + i)] = dp[d];
                }
            }
            cur = template.parent(a);
        }
    }
    Ok(JointJacobian {
        joints,
        d_pose,
        d_shape,
    })
}
