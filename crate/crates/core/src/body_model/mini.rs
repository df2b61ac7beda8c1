//! Procedural capsule-limb humanoid used in place of a licensed body asset.
//!
//! Every bone carries an open tube of vertex rings. The first ring of each
//! joint's primary outgoing bone is centred on the joint, so averaging it
//! regresses the joint exactly and any radial-only deformation leaves joints
//! fixed. Shape directions are built from each vertex's axis point and radial
//! offset, which keeps them interpretable and local.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::template::{BoneCapsule, BoneEnd, MeasurementSpec, TemplateParts};
use super::BodyTemplate;
use crate::error::{Error, Result};

pub const JOINT_COUNT: usize = 24;
pub const SHAPE_DIM: usize = 10;

pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hand",
    "right_hand",
];

pub const PARENTS: [Option<usize>; JOINT_COUNT] = [
    None,
    Some(0),
    Some(0),
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(4),
    Some(5),
    Some(6),
    Some(7),
    Some(8),
    Some(9),
    Some(9),
    Some(9),
    Some(12),
    Some(13),
    Some(14),
    Some(16),
    Some(17),
    Some(18),
    Some(19),
    Some(20),
    Some(21),
];

/// Rest joint positions in metres; y is up, the body faces +z, left is +x.
const REST_JOINTS: [[f64; 3]; JOINT_COUNT] = [
    [0.0, 0.93, 0.0],
    [0.09, 0.85, 0.0],
    [-0.09, 0.85, 0.0],
    [0.0, 1.04, 0.0],
    [0.10, 0.48, 0.0],
    [-0.10, 0.48, 0.0],
    [0.0, 1.17, 0.0],
    [0.10, 0.08, 0.0],
    [-0.10, 0.08, 0.0],
    [0.0, 1.30, 0.0],
    [0.11, 0.03, 0.10],
    [-0.11, 0.03, 0.10],
    [0.0, 1.46, 0.0],
    [0.08, 1.40, 0.0],
    [-0.08, 1.40, 0.0],
    [0.0, 1.68, 0.0],
    [0.18, 1.40, 0.0],
    [-0.18, 1.40, 0.0],
    [0.45, 1.40, 0.0],
    [-0.45, 1.40, 0.0],
    [0.70, 1.40, 0.0],
    [-0.70, 1.40, 0.0],
    [0.78, 1.40, 0.0],
    [-0.78, 1.40, 0.0],
];

/// Tube radius of the bone ending at joint `k` (index `k - 1`).
const JOINT_BONE_RADII: [f64; JOINT_COUNT - 1] = [
    0.09, 0.09, 0.13, 0.075, 0.075, 0.13, 0.055, 0.055, 0.14, 0.04, 0.04, 0.13, 0.06, 0.06, 0.06, 0.06, 0.06, 0.05,
    0.05, 0.04, 0.04, 0.035, 0.035,
];

/// Leaf joints with their rest tip offset and tube radius.
const TIPS: [(usize, [f64; 3], f64); 5] = [
    (10, [0.0, 0.0, 0.08], 0.035),
    (11, [0.0, 0.0, 0.08], 0.035),
    (15, [0.0, 0.08, 0.0], 0.09),
    (22, [0.08, 0.0, 0.0], 0.03),
    (23, [-0.08, 0.0, 0.0], 0.03),
];

/// LSP-style evaluation keypoints.
pub const KEYPOINTS: [(&str, usize); 14] = [
    ("right_ankle", 8),
    ("right_knee", 5),
    ("right_hip", 2),
    ("left_hip", 1),
    ("left_knee", 4),
    ("left_ankle", 7),
    ("right_wrist", 21),
    ("right_elbow", 19),
    ("right_shoulder", 17),
    ("left_shoulder", 16),
    ("left_elbow", 18),
    ("left_wrist", 20),
    ("neck", 12),
    ("head", 15),
];

/// Collider radius as a fraction of the visual tube radius.
const COLLIDER_FRACTION: f64 = 0.8;

/// Shape directions, in basis order.
pub const SHAPE_DIRECTIONS: [&str; SHAPE_DIM] = [
    "height",
    "girth",
    "left_arm_length",
    "right_arm_length",
    "left_leg_length",
    "right_leg_length",
    "torso_width",
    "torso_length",
    "neck_length",
    "chest_depth",
];

pub const GIRTH: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiniTemplateConfig {
    /// Approximate vertex count; must be at least `4 * K`.
    pub vertex_target: usize,
    /// Seeds the angular phase of each tube's rings.
    pub seed: u64,
}

impl Default for MiniTemplateConfig {
    fn default() -> Self {
        Self {
            vertex_target: 2000,
            seed: 0,
        }
    }
}

struct Bone {
    joint: usize,
    start: Vector3<f64>,
    end: Vector3<f64>,
    end_joint: Option<usize>,
    radius: f64,
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn bones() -> Vec<Bone> {
    let mut out: Vec<Bone> = (1..JOINT_COUNT)
        .map(|k| {
            let p = PARENTS[k].expect("non-root");
            Bone {
                joint: p,
                start: v3(REST_JOINTS[p]),
                end: v3(REST_JOINTS[k]),
                end_joint: Some(k),
                radius: JOINT_BONE_RADII[k - 1],
            }
        })
        .collect();
    out.extend(TIPS.iter().map(|&(j, off, r)| Bone {
        joint: j,
        start: v3(REST_JOINTS[j]),
        end: v3(REST_JOINTS[j]) + v3(off),
        end_joint: None,
        radius: r,
    }));
    out
}

fn bone_of_child(child: usize) -> usize {
    child - 1
}

fn tip_bone(joint: usize) -> usize {
    JOINT_COUNT - 1 + TIPS.iter().position(|t| t.0 == joint).expect("leaf joint")
}

fn perpendicular_frame(dir: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if dir.y.abs() < 0.9 { Vector3::y() } else { Vector3::z() };
    let e1 = helper.cross(dir).normalize();
    let e2 = dir.cross(&e1).normalize();
    (e1, e2)
}

fn point_segment_distance(x: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let t = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (x - (a + t * ab)).norm()
}

/// One shape direction expressed as a displacement of a vertex given its bone,
/// axis point and radial offset.
type Direction = Box<dyn Fn(usize, &Vector3<f64>, &Vector3<f64>) -> Vector3<f64>>;

/// Stretch of a bone chain about its root joint; bones hanging off the chain
/// translate with the chain joint they attach to.
fn chain_stretch(chain: Vec<usize>, root: usize, coeff: f64, all: &[Bone]) -> Direction {
    let rest: Vec<Vector3<f64>> = REST_JOINTS.iter().map(|j| v3(*j)).collect();
    let chain_joints: Vec<usize> = chain
        .iter()
        .flat_map(|&b| std::iter::once(all[b].joint).chain(all[b].end_joint))
        .collect();
    let drivers: Vec<usize> = all.iter().map(|b| b.joint).collect();
    Box::new(move |b, axis, _radial| {
        if chain.contains(&b) {
            return coeff * (axis - rest[root]);
        }
        let mut cur = Some(drivers[b]);
        while let Some(j) = cur {
            if chain_joints.contains(&j) {
                return coeff * (rest[j] - rest[root]);
            }
            cur = PARENTS[j];
        }
        Vector3::zeros()
    })
}

fn shape_directions(all: &[Bone]) -> Vec<Direction> {
    let trunk: Vec<usize> = [1, 2, 3, 6, 9, 12, 13, 14, 16, 17]
        .iter()
        .map(|&c| bone_of_child(c))
        .collect();
    let spine: Vec<usize> = [3, 6, 9, 12].iter().map(|&c| bone_of_child(c)).collect();
    let limb = |tip_joint: usize, children: &[usize]| {
        let mut v: Vec<usize> = children.iter().map(|&c| bone_of_child(c)).collect();
        v.push(tip_bone(tip_joint));
        v
    };
    let left_arm = limb(22, &[18, 20, 22]);
    let right_arm = limb(23, &[19, 21, 23]);
    let left_leg = limb(10, &[4, 7, 10]);
    let right_leg = limb(11, &[5, 8, 11]);
    let limb_roots: Vec<(Vec<usize>, usize)> = vec![
        (left_arm.clone(), 16),
        (right_arm.clone(), 17),
        (left_leg.clone(), 1),
        (right_leg.clone(), 2),
    ];
    let head_chain = vec![bone_of_child(15), tip_bone(15)];

    let trunk_w = trunk.clone();
    let limbs_w = limb_roots.clone();
    let width: Direction = Box::new(move |b, axis, radial| {
        if trunk_w.contains(&b) {
            return 0.04 * Vector3::new(axis.x + radial.x, 0.0, 0.0);
        }
        for (bones, root) in &limbs_w {
            if bones.contains(&b) {
                return 0.04 * Vector3::new(REST_JOINTS[*root][0], 0.0, 0.0);
            }
        }
        Vector3::zeros()
    });
    let spine_d = spine.clone();
    let depth: Direction = Box::new(move |b, _axis, radial| {
        if spine_d.contains(&b) {
            0.06 * Vector3::new(0.0, 0.0, radial.z)
        } else {
            Vector3::zeros()
        }
    });

    vec![
        Box::new(|_, axis, radial| 0.03 * (axis + radial)),
        Box::new(|_, _, radial| 0.06 * radial),
        chain_stretch(left_arm, 16, 0.04, all),
        chain_stretch(right_arm, 17, 0.04, all),
        chain_stretch(left_leg, 1, 0.04, all),
        chain_stretch(right_leg, 2, 0.04, all),
        width,
        chain_stretch(spine, 0, 0.04, all),
        chain_stretch(head_chain, 12, 0.05, all),
        depth,
    ]
}

/// Builds the procedural humanoid template.
pub fn make_mini_template(config: &MiniTemplateConfig) -> Result<BodyTemplate> {
    if config.vertex_target < 4 * JOINT_COUNT {
        return Err(Error::Config(format!(
            "vertex_target {} is below 4*K = {}: too few vertices to cover every bone",
            config.vertex_target,
            4 * JOINT_COUNT
        )));
    }
    let all = bones();
    let n_bones = all.len();
    let ring_size = (config.vertex_target / (n_bones * 4)).clamp(3, 12);
    let ring_budget = (config.vertex_target / ring_size).max(2 * n_bones);
    let total_len: f64 = all.iter().map(|b| (b.end - b.start).norm()).sum();
    let rings_per_bone: Vec<usize> = all
        .iter()
        .map(|b| {
            let share = (b.end - b.start).norm() / total_len * ring_budget as f64;
            (share.round() as usize).max(2)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    // (bone, axis point, radial offset) per vertex
    let mut anchors: Vec<(usize, Vector3<f64>, Vector3<f64>)> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut first_ring: Vec<usize> = Vec::with_capacity(n_bones);
    for (bi, bone) in all.iter().enumerate() {
        let axis = bone.end - bone.start;
        let (e1, e2) = perpendicular_frame(&axis.normalize());
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let base = vertices.len();
        first_ring.push(base);
        let rings = rings_per_bone[bi];
        for i in 0..rings {
            let u = i as f64 / (rings - 1) as f64;
            let centre = bone.start + u * axis;
            for j in 0..ring_size {
                let phi = phase + std::f64::consts::TAU * j as f64 / ring_size as f64;
                let radial = bone.radius * (phi.cos() * e1 + phi.sin() * e2);
                vertices.push(centre + radial);
                anchors.push((bi, centre, radial));
            }
        }
        for i in 0..rings - 1 {
            for j in 0..ring_size {
                let a = (base + i * ring_size + j) as u32;
                let b = (base + i * ring_size + (j + 1) % ring_size) as u32;
                let c = (base + (i + 1) * ring_size + j) as u32;
                let d = (base + (i + 1) * ring_size + (j + 1) % ring_size) as u32;
                faces.push([a, b, d]);
                faces.push([a, d, c]);
            }
        }
    }
    let v_n = vertices.len();

    let mut weights = vec![0.0; v_n * JOINT_COUNT];
    for (v, x) in vertices.iter().enumerate() {
        let mut d: Vec<(f64, usize)> = all
            .iter()
            .map(|b| (point_segment_distance(x, &b.start, &b.end).max(1e-9), b.joint))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (w0, w1) = (1.0 / d[0].0, 1.0 / d[1].0);
        weights[v * JOINT_COUNT + d[0].1] += w0 / (w0 + w1);
        weights[v * JOINT_COUNT + d[1].1] += w1 / (w0 + w1);
    }

    let mut regressor = vec![0.0; JOINT_COUNT * v_n];
    for k in 0..JOINT_COUNT {
        let primary = all
            .iter()
            .position(|b| b.joint == k)
            .expect("every joint drives a bone");
        let start = first_ring[primary];
        for v in start..start + ring_size {
            regressor[k * v_n + v] = 1.0 / ring_size as f64;
        }
    }

    let dirs = shape_directions(&all);
    let mut shape_basis = vec![0.0; v_n * 3 * SHAPE_DIM];
    for (v, (bone, axis, radial)) in anchors.iter().enumerate() {
        for (b, dir) in dirs.iter().enumerate() {
            let disp = dir(*bone, axis, radial);
            for d in 0..3 {
                shape_basis[(v * 3 + d) * SHAPE_DIM + b] = disp[d];
            }
        }
    }

    let capsules = all
        .iter()
        .map(|b| BoneCapsule {
            joint: b.joint,
            end: match b.end_joint {
                Some(c) => BoneEnd::Joint(c),
                None => {
                    let off = b.end - b.start;
                    BoneEnd::Tip([off.x, off.y, off.z])
                }
            },
            radius: COLLIDER_FRACTION * b.radius,
        })
        .collect();

    let parts = TemplateParts {
        vertex_count: v_n,
        joint_count: JOINT_COUNT,
        shape_dim: SHAPE_DIM,
        rest_vertices: vertices.iter().flat_map(|x| [x.x, x.y, x.z]).collect(),
        shape_basis,
        pose_basis: None,
        skinning_weights: weights,
        joint_regressor: regressor,
        parent: PARENTS.to_vec(),
        faces,
        keypoint_map: KEYPOINTS.iter().map(|k| k.1).collect(),
        keypoint_names: KEYPOINTS.iter().map(|k| k.0.to_string()).collect(),
        bones: capsules,
        measurement: MeasurementSpec {
            neck_height: 0.95,
            chest_height: 0.80,
            waist_height: 0.65,
            hip_height: 0.52,
            torso_bones: [1, 2, 3, 6, 9, 12, 15].iter().map(|&c| bone_of_child(c)).collect(),
            arms: vec![[16, 18, 20], [17, 19, 21]],
            legs: vec![[1, 4, 7], [2, 5, 8]],
        },
    };
    BodyTemplate::from_parts(parts)
}
