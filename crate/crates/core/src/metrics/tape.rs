//! Tailor-style body measurements on a rest-pose mesh.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::body_model::{regress_joints, BodyTemplate, Mesh};
use crate::error::{Error, Result};

pub const MEASUREMENT_NAMES: [&str; 6] = ["neck", "arm", "leg", "chest", "waist", "hip"];

/// Six tape measurements, metres (or percentages for relative errors).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Measurements {
    pub neck: f64,
    pub arm: f64,
    pub leg: f64,
    pub chest: f64,
    pub waist: f64,
    pub hip: f64,
}

impl Measurements {
    pub fn to_array(&self) -> [f64; 6] {
        [self.neck, self.arm, self.leg, self.chest, self.waist, self.hip]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            neck: a[0],
            arm: a[1],
            leg: a[2],
            chest: a[3],
            waist: a[4],
            hip: a[5],
        }
    }
}

/// Cut heights as fractions of the torso span; defaults come from the template.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutHeights {
    pub neck: f64,
    pub chest: f64,
    pub waist: f64,
    pub hip: f64,
}

impl CutHeights {
    pub fn from_template(template: &BodyTemplate) -> Self {
        let m = template.measurement();
        Self {
            neck: m.neck_height,
            chest: m.chest_height,
            waist: m.waist_height,
            hip: m.hip_height,
        }
    }
}

/// Template vertices whose dominant skinning joint drives one of the torso
/// bones.
pub fn torso_vertices(template: &BodyTemplate) -> Vec<bool> {
    let drivers: Vec<usize> = template
        .measurement()
        .torso_bones
        .iter()
        .map(|&b| template.bones()[b].joint)
        .collect();
    (0..template.vertex_count())
        .map(|v| {
            let row = template.skinning_row(v);
            let mut best = 0;
            for (k, w) in row.iter().enumerate() {
                if *w > row[best] {
                    best = k;
                }
            }
            drivers.contains(&best)
        })
        .collect()
}

/// Faces whose three vertices all belong to the torso.
pub fn torso_faces(template: &BodyTemplate) -> Vec<[u32; 3]> {
    let torso = torso_vertices(template);
    template
        .faces()
        .iter()
        .filter(|f| f.iter().all(|&v| torso[v as usize]))
        .copied()
        .collect()
}

fn cross(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Perimeter of the convex hull of planar points (monotone chain).
pub fn convex_hull_perimeter(points: &[Vector2<f64>]) -> f64 {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 2 {
        return 0.0;
    }
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vector2<f64>>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    let n = hull.len();
    (0..n).map(|i| (hull[(i + 1) % n] - hull[i]).norm()).sum()
}

/// Intersection points of the plane `y = h` with the given triangles,
/// projected onto `(x, z)`.
fn cross_section(mesh: &Mesh, faces: &[[u32; 3]], h: f64) -> Vec<Vector2<f64>> {
    let mut out = Vec::new();
    for f in faces {
        let p = f.map(|i| mesh.vertices[i as usize]);
        for (a, b) in [(p[0], p[1]), (p[1], p[2]), (p[2], p[0])] {
            let (da, db) = (a.y - h, b.y - h);
            if da == 0.0 {
                out.push(Vector2::new(a.x, a.z));
            }
            if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
                let t = da / (da - db);
                let x = a + t * (b - a);
                out.push(Vector2::new(x.x, x.z));
            }
        }
    }
    out
}

/// Measures a rest-pose mesh. Limb lengths follow the regressed joints; girths
/// are convex-hull perimeters of horizontal cuts through the torso triangles
/// at `heights` of the vertical span between the lowest and highest regressed
/// joints.
pub fn tape_measurements_at(template: &BodyTemplate, mesh: &Mesh, heights: &CutHeights) -> Result<Measurements> {
    if mesh.len() != template.vertex_count() {
        return Err(Error::Dimension {
            what: "mesh vertices",
            expected: template.vertex_count(),
            got: mesh.len(),
        });
    }
    let joints = regress_joints(template, mesh)?;
    let spec = template.measurement();
    let chain_len = |chains: &[[usize; 3]]| -> f64 {
        if chains.is_empty() {
            return 0.0;
        }
        chains
            .iter()
            .map(|c| (joints[c[1]] - joints[c[0]]).norm() + (joints[c[2]] - joints[c[1]]).norm())
            .sum::<f64>()
            / chains.len() as f64
    };
    let faces = torso_faces(template);
    let y_min = joints.iter().map(|j| j.y).fold(f64::INFINITY, f64::min);
    let y_top = joints.iter().map(|j| j.y).fold(f64::NEG_INFINITY, f64::max);
    let girth = |name: &'static str, frac: f64| -> Result<f64> {
        if faces.is_empty() {
            return Err(Error::EmptyCrossSection(name));
        }
        let h = y_min + frac * (y_top - y_min);
        let pts = cross_section(mesh, &faces, h);
        if pts.is_empty() {
            return Err(Error::EmptyCrossSection(name));
        }
        Ok(convex_hull_perimeter(&pts))
    };
    Ok(Measurements {
        neck: girth("neck", heights.neck)?,
        arm: chain_len(&spec.arms),
        leg: chain_len(&spec.legs),
        chest: girth("chest", heights.chest)?,
        waist: girth("waist", heights.waist)?,
        hip: girth("hip", heights.hip)?,
    })
}

/// Measurements at the template's own cut heights.
pub fn tape_measurements(template: &BodyTemplate, mesh: &Mesh) -> Result<Measurements> {
    tape_measurements_at(template, mesh, &CutHeights::from_template(template))
}

/// Per-measurement relative errors in percent, with their mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeErrors {
    pub percent: Measurements,
    pub mean: f64,
}

pub fn relative_errors(pred: &Measurements, gt: &Measurements) -> Result<RelativeErrors> {
    let (p, g) = (pred.to_array(), gt.to_array());
    let mut out = [0.0; 6];
    for i in 0..6 {
        if !(g[i] > 0.0) {
            return Err(Error::Degenerate(format!(
                "ground-truth {} measurement must be positive",
                MEASUREMENT_NAMES[i]
            )));
        }
        out[i] = 100.0 * (p[i] - g[i]).abs() / g[i];
    }
    Ok(RelativeErrors {
        percent: Measurements::from_array(out),
        mean: out.iter().sum::<f64>() / 6.0,
    })
}
