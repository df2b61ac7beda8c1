//! Per-view joint observations consumed by the fitter.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optional 3D joint supervision with its own mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joints3dObservation {
    /// Metres.
    pub points: Vec<[f64; 3]>,
    pub mask: Vec<bool>,
}

/// 2D keypoint detections of one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewFeature {
    pub view_id: usize,
    /// View this observation was taken from; padded copies keep the id of the
    /// view they duplicate.
    pub source_id: usize,
    /// Pixels, one entry per template keypoint.
    pub joints2d: Vec<[f64; 2]>,
    pub visibility: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joints3d: Option<Joints3dObservation>,
}

impl ViewFeature {
    pub fn new(view_id: usize, joints2d: Vec<[f64; 2]>, visibility: Vec<bool>) -> Self {
        Self {
            view_id,
            source_id: view_id,
            joints2d,
            visibility,
            joints3d: None,
        }
    }

    pub fn point(&self, j: usize) -> Vector2<f64> {
        Vector2::from(self.joints2d[j])
    }

    pub fn point3(&self, j: usize) -> Option<Vector3<f64>> {
        self.joints3d
            .as_ref()
            .filter(|o| o.mask[j])
            .map(|o| Vector3::from(o.points[j]))
    }

    pub fn visible_count(&self) -> usize {
        self.visibility.iter().filter(|v| **v).count()
    }

    /// Checks sizes against the keypoint count and finiteness of every
    /// entry that is marked visible.
    pub fn validate(&self, keypoints: usize) -> Result<()> {
        let dim = |what, got| {
            if got == keypoints {
                Ok(())
            } else {
                Err(Error::Dimension {
                    what,
                    expected: keypoints,
                    got,
                })
            }
        };
        dim("joints2d", self.joints2d.len())?;
        dim("visibility", self.visibility.len())?;
        for (j, (p, v)) in self.joints2d.iter().zip(&self.visibility).enumerate() {
            if *v && !p.iter().all(|x| x.is_finite()) {
                return Err(Error::Format {
                    format: "observation",
                    detail: format!("view {} joint {j} is visible but not finite", self.view_id),
                });
            }
        }
        if let Some(o) = &self.joints3d {
            dim("joints3d", o.points.len())?;
            dim("joints3d mask", o.mask.len())?;
            for (j, (p, m)) in o.points.iter().zip(&o.mask).enumerate() {
                if *m && !p.iter().all(|x| x.is_finite()) {
                    return Err(Error::Format {
                        format: "observation",
                        detail: format!("view {} 3D joint {j} is supervised but not finite", self.view_id),
                    });
                }
            }
        }
        Ok(())
    }
}
