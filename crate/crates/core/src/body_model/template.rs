use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-9;

/// Where a bone capsule ends: at a child joint, or at a fixed rest-space
/// offset from its driving joint (leaf bones such as the head or the hands).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoneEnd {
    Joint(usize),
    Tip([f64; 3]),
}

/// A capsule collider attached to `joint`, whose transform moves it rigidly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoneCapsule {
    pub joint: usize,
    pub end: BoneEnd,
    pub radius: f64,
}

/// Template metadata for the six tailor measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSpec {
    /// Fractions of the vertical mesh extent at which the neck, chest, waist
    /// and hip girths are cut.
    pub neck_height: f64,
    pub chest_height: f64,
    pub waist_height: f64,
    pub hip_height: f64,
    /// Bones (indices into `bones`) whose driving joints mark the torso
    /// vertices; only torso triangles take part in girth cuts.
    pub torso_bones: Vec<usize>,
    /// Shoulder, elbow, wrist joints for the left and right arm.
    pub arms: Vec<[usize; 3]>,
    /// Hip, knee, ankle joints for the left and right leg.
    pub legs: Vec<[usize; 3]>,
}

/// Every stored field of a body template. `BodyTemplate::from_parts` validates
/// these and derives the cached quantities.
///
/// Array layouts (all row-major, flat):
/// `rest_vertices[v*3 + d]`, `shape_basis[(v*3 + d)*B + b]`,
/// `pose_basis[(v*3 + d)*P + p]` with `P = 9*(K-1)`,
/// `skinning_weights[v*K + k]`, `joint_regressor[k*V + v]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateParts {
    pub vertex_count: usize,
    pub joint_count: usize,
    pub shape_dim: usize,
    pub rest_vertices: Vec<f64>,
    pub shape_basis: Vec<f64>,
    /// `None` stands for an all-zero pose-corrective basis.
    pub pose_basis: Option<Vec<f64>>,
    pub skinning_weights: Vec<f64>,
    pub joint_regressor: Vec<f64>,
    /// `None` for the root.
    pub parent: Vec<Option<usize>>,
    pub faces: Vec<[u32; 3]>,
    /// Model joint index of each evaluation keypoint.
    pub keypoint_map: Vec<usize>,
    pub keypoint_names: Vec<String>,
    pub bones: Vec<BoneCapsule>,
    pub measurement: MeasurementSpec,
}

/// Validated parametric body template (immutable).
#[derive(Debug, Clone)]
pub struct BodyTemplate {
    parts: TemplateParts,
    /// Regressed rest joints of the mean shape, `K` entries.
    rest_joints: Vec<Vector3<f64>>,
    /// `joint_regressor * shape_basis`, laid out `[(k*3 + d)*B + b]`.
    joint_shape_basis: Vec<f64>,
}

impl PartialEq for BodyTemplate {
    fn eq(&self, other: &Self) -> bool {
        self.parts == other.parts
    }
}

impl BodyTemplate {
    pub fn from_parts(parts: TemplateParts) -> Result<Self> {
        validate(&parts)?;
        let (rest_joints, joint_shape_basis) = derive_joint_quantities(&parts);
        Ok(Self {
            parts,
            rest_joints,
            joint_shape_basis,
        })
    }

    pub fn parts(&self) -> &TemplateParts {
        &self.parts
    }

    pub fn into_parts(self) -> TemplateParts {
        self.parts
    }

    pub fn vertex_count(&self) -> usize {
        self.parts.vertex_count
    }

    pub fn joint_count(&self) -> usize {
        self.parts.joint_count
    }

    pub fn shape_dim(&self) -> usize {
        self.parts.shape_dim
    }

    /// Number of pose parameters, `3*(K-1)`.
    pub fn pose_dim(&self) -> usize {
        3 * (self.parts.joint_count - 1)
    }

    pub fn pose_feature_dim(&self) -> usize {
        9 * (self.parts.joint_count - 1)
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parts.parent[joint]
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.parts.faces
    }

    pub fn keypoint_map(&self) -> &[usize] {
        &self.parts.keypoint_map
    }

    pub fn keypoint_count(&self) -> usize {
        self.parts.keypoint_map.len()
    }

    pub fn bones(&self) -> &[BoneCapsule] {
        &self.parts.bones
    }

    pub fn measurement(&self) -> &MeasurementSpec {
        &self.parts.measurement
    }

    pub fn rest_vertex(&self, v: usize) -> Vector3<f64> {
        let r = &self.parts.rest_vertices[v * 3..v * 3 + 3];
        Vector3::new(r[0], r[1], r[2])
    }

    pub fn skinning_weight(&self, v: usize, k: usize) -> f64 {
        self.parts.skinning_weights[v * self.parts.joint_count + k]
    }

    pub fn skinning_row(&self, v: usize) -> &[f64] {
        let k = self.parts.joint_count;
        &self.parts.skinning_weights[v * k..(v + 1) * k]
    }

    pub fn regressor_row(&self, k: usize) -> &[f64] {
        let v = self.parts.vertex_count;
        &self.parts.joint_regressor[k * v..(k + 1) * v]
    }

    pub fn mean_rest_joints(&self) -> &[Vector3<f64>] {
        &self.rest_joints
    }

    /// `d(rest joint k)/d(shape b)` along coordinate `d`.
    pub(crate) fn joint_shape_coeff(&self, k: usize, d: usize, b: usize) -> f64 {
        self.joint_shape_basis[(k * 3 + d) * self.parts.shape_dim + b]
    }

    /// Rest joints for a given shape, via the cached regressed shape basis.
    pub fn rest_joints_for_shape(&self, shape: &[f64]) -> Result<Vec<Vector3<f64>>> {
        check_len("shape", self.parts.shape_dim, shape.len())?;
        let b_dim = self.parts.shape_dim;
        Ok(self
            .rest_joints
            .iter()
            .enumerate()
            .map(|(k, j0)| {
                let mut j = *j0;
                for d in 0..3 {
                    let row = &self.joint_shape_basis[(k * 3 + d) * b_dim..(k * 3 + d + 1) * b_dim];
                    j[d] += row.iter().zip(shape).map(|(a, b)| a * b).sum::<f64>();
                }
                j
            })
            .collect())
    }

    /// Is `ancestor` a strict ancestor of `joint`?
    pub fn is_ancestor(&self, ancestor: usize, joint: usize) -> bool {
        let mut cur = self.parts.parent[joint];
        while let Some(p) = cur {
            if p == ancestor {
                return true;
            }
            cur = self.parts.parent[p];
        }
        false
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}

fn invariant(field: &'static str, detail: impl Into<String>) -> Error {
    Error::Invariant {
        field,
        detail: detail.into(),
    }
}

fn validate(p: &TemplateParts) -> Result<()> {
    let (v, k, b) = (p.vertex_count, p.joint_count, p.shape_dim);
    if v == 0 {
        return Err(invariant("vertex_count", "must be positive"));
    }
    if k < 2 {
        return Err(invariant("joint_count", "need a root and at least one joint"));
    }
    let sized = |field: &'static str, len: usize, want: usize| {
        if len == want {
            Ok(())
        } else {
            Err(invariant(field, format!("expected {want} entries, found {len}")))
        }
    };
    sized("rest_vertices", p.rest_vertices.len(), v * 3)?;
    sized("shape_basis", p.shape_basis.len(), v * 3 * b)?;
    if let Some(pb) = &p.pose_basis {
        sized("pose_basis", pb.len(), v * 3 * 9 * (k - 1))?;
    }
    sized("skinning_weights", p.skinning_weights.len(), v * k)?;
    sized("joint_regressor", p.joint_regressor.len(), k * v)?;
    sized("parent", p.parent.len(), k)?;

    let finite = |field: &'static str, xs: &[f64]| {
        if xs.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(invariant(field, "non-finite entry"))
        }
    };
    finite("rest_vertices", &p.rest_vertices)?;
    finite("shape_basis", &p.shape_basis)?;
    if let Some(pb) = &p.pose_basis {
        finite("pose_basis", pb)?;
    }

    check_stochastic_rows("skinning_weights", &p.skinning_weights, v, k)?;
    check_stochastic_rows("joint_regressor", &p.joint_regressor, k, v)?;

    if p.parent[0].is_some() {
        return Err(invariant("parent", "joint 0 must be the root"));
    }
    for (i, par) in p.parent.iter().enumerate().skip(1) {
        match par {
            Some(q) if *q < i => {}
            Some(q) => {
                return Err(invariant(
                    "parent",
                    format!("parent[{i}] = {q} is not < {i} (tree must be topologically ordered)"),
                ))
            }
            None => return Err(invariant("parent", format!("joint {i} has no parent"))),
        }
    }

    let mut edges: HashMap<(u32, u32), u8> = HashMap::new();
    for (fi, f) in p.faces.iter().enumerate() {
        if f.iter().any(|&i| i as usize >= v) {
            return Err(invariant("faces", format!("face {fi} references a vertex >= {v}")));
        }
        if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
            return Err(invariant("faces", format!("face {fi} is degenerate")));
        }
        for (a, c) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            let key = (a.min(c), a.max(c));
            let n = edges.entry(key).or_insert(0);
            *n += 1;
            if *n > 2 {
                return Err(invariant(
                    "faces",
                    format!("edge ({}, {}) is shared by more than two faces", key.0, key.1),
                ));
            }
        }
    }

    if p.keypoint_map.iter().any(|&j| j >= k) {
        return Err(invariant("keypoint_map", "joint index out of range"));
    }
    if !p.keypoint_names.is_empty() && p.keypoint_names.len() != p.keypoint_map.len() {
        return Err(invariant("keypoint_names", "length differs from keypoint_map"));
    }
    for (i, bone) in p.bones.iter().enumerate() {
        if bone.joint >= k {
            return Err(invariant("bone_capsules", format!("bone {i} joint out of range")));
        }
        if let BoneEnd::Joint(c) = bone.end {
            if c >= k || p.parent[c] != Some(bone.joint) {
                return Err(invariant(
                    "bone_capsules",
                    format!("bone {i} must end at a child of joint {}", bone.joint),
                ));
            }
        }
        if !(bone.radius.is_finite() && bone.radius > 0.0) {
            return Err(invariant("bone_capsules", format!("bone {i} radius must be positive")));
        }
    }
    let m = &p.measurement;
    for f in [m.neck_height, m.chest_height, m.waist_height, m.hip_height] {
        if !(0.0..=1.0).contains(&f) {
            return Err(invariant("measurement", "cut heights must be fractions in [0, 1]"));
        }
    }
    if m.torso_bones.iter().any(|&i| i >= p.bones.len()) {
        return Err(invariant("measurement", "torso bone index out of range"));
    }
    if m.arms.iter().chain(&m.legs).flatten().any(|&j| j >= k) {
        return Err(invariant("measurement", "limb joint index out of range"));
    }
    Ok(())
}

fn check_stochastic_rows(field: &'static str, data: &[f64], rows: usize, cols: usize) -> Result<()> {
    for r in 0..rows {
        let row = &data[r * cols..(r + 1) * cols];
        if let Some(c) = row.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invariant(
                field,
                format!("row {r} column {c} is negative or non-finite"),
            ));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(invariant(field, format!("row {r} sums to {sum}, expected 1")));
        }
    }
    Ok(())
}

fn derive_joint_quantities(p: &TemplateParts) -> (Vec<Vector3<f64>>, Vec<f64>) {
    let (v_n, k_n, b_n) = (p.vertex_count, p.joint_count, p.shape_dim);
    let mut joints = vec![Vector3::zeros(); k_n];
    let mut jsb = vec![0.0; k_n * 3 * b_n];
    for k in 0..k_n {
        let row = &p.joint_regressor[k * v_n..(k + 1) * v_n];
        for (v, &w) in row.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for d in 0..3 {
                joints[k][d] += w * p.rest_vertices[v * 3 + d];
                let src = &p.shape_basis[(v * 3 + d) * b_n..(v * 3 + d + 1) * b_n];
                let dst = &mut jsb[(k * 3 + d) * b_n..(k * 3 + d + 1) * b_n];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
    }
    (joints, jsb)
}
