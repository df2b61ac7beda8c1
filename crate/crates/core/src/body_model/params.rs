use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::BodyTemplate;
use crate::error::Result;

/// Shared pose and shape parameters. The global rotation is not stored here;
/// each view's camera carries it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    /// Axis-angle rotation of joints `1..K`, `pose[k-1]` for joint `k`.
    pub pose: Vec<[f64; 3]>,
    pub shape: Vec<f64>,
}

impl BodyParams {
    pub fn zeros(template: &BodyTemplate) -> Self {
        Self {
            pose: vec![[0.0; 3]; template.joint_count() - 1],
            shape: vec![0.0; template.shape_dim()],
        }
    }

    pub fn joint_rotation(&self, joint: usize) -> Vector3<f64> {
        let r = self.pose[joint - 1];
        Vector3::new(r[0], r[1], r[2])
    }

    pub fn check(&self, template: &BodyTemplate) -> Result<()> {
        super::template::check_len("pose", template.joint_count() - 1, self.pose.len())?;
        super::template::check_len("shape", template.shape_dim(), self.shape.len())
    }

    /// Concatenated `[pose..., shape...]` parameter vector.
    pub fn to_vec(&self) -> Vec<f64> {
        self.pose
            .iter()
            .flatten()
            .copied()
            .chain(self.shape.iter().copied())
            .collect()
    }

    pub fn from_slice(template: &BodyTemplate, x: &[f64]) -> Result<Self> {
        let pd = template.pose_dim();
        super::template::check_len("body parameter vector", pd + template.shape_dim(), x.len())?;
        Ok(Self {
            pose: x[..pd].chunks(3).map(|c| [c[0], c[1], c[2]]).collect(),
            shape: x[pd..].to_vec(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.pose.iter().flatten().chain(&self.shape).all(|x| x.is_finite())
    }
}

/// Vertex positions; faces live on the template.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vector3<f64>>,
}

impl Mesh {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|v| v * factor).collect(),
        }
    }
}
