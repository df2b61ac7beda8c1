//! Template container.
//!
//! Binary layout (little endian):
//!
//! ```text
//! "MVBT1"
//! u32 V, u32 K, u32 B, u32 face_count, u32 bone_count, u32 keypoint_count, u8 has_pose_basis
//! f64 rest_vertices[V*3], shape_basis[V*3*B], pose_basis[V*3*9(K-1)] (if present),
//!     skinning_weights[V*K], joint_regressor[K*V]
//! i32 parent[K]              (-1 for the root)
//! u32 faces[face_count*3]
//! u32 keypoint_map[keypoint_count], then per keypoint: u32 byte_len, utf-8 name
//! per bone: u32 joint, u8 end_kind (0 joint, 1 tip), u32 child, f64 tip[3], f64 radius
//! f64 neck, chest, waist, hip cut heights
//! u32 n, u32 torso_bones[n]; u32 n, u32 arms[n*3]; u32 n, u32 legs[n*3]
//! ```
//!
//! The text variant is the JSON form of [`TemplateParts`]. Loading sniffs the
//! magic string, so either file works wherever a template is expected.

use std::fs;
use std::path::Path;

use super::template::{BoneCapsule, BoneEnd, MeasurementSpec, TemplateParts};
use super::BodyTemplate;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"MVBT1";

pub fn load_template(path: impl AsRef<Path>) -> Result<BodyTemplate> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    template_from_bytes(&bytes)
}

/// Writes the binary container, or the text variant when the path ends in `.json`.
pub fn save_template(template: &BodyTemplate, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if path.extension().is_some_and(|e| e == "json") {
        template_to_text(template)?.into_bytes()
    } else {
        template_to_bytes(template)
    };
    crate::fsutil::write_atomic(path, &bytes)
}

pub fn template_from_bytes(bytes: &[u8]) -> Result<BodyTemplate> {
    if bytes.starts_with(MAGIC) {
        decode_binary(bytes)
    } else {
        let parts: TemplateParts = serde_json::from_slice(bytes).map_err(|e| Error::Format {
            format: "template text",
            detail: e.to_string(),
        })?;
        BodyTemplate::from_parts(parts)
    }
}

pub fn template_to_text(template: &BodyTemplate) -> Result<String> {
    serde_json::to_string(template.parts()).map_err(|e| Error::Format {
        format: "template text",
        detail: e.to_string(),
    })
}

pub fn template_to_bytes(template: &BodyTemplate) -> Vec<u8> {
    let p = template.parts();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for n in [
        p.vertex_count,
        p.joint_count,
        p.shape_dim,
        p.faces.len(),
        p.bones.len(),
        p.keypoint_map.len(),
    ] {
        put_u32(&mut out, n);
    }
    out.push(p.pose_basis.is_some() as u8);
    put_f64s(&mut out, &p.rest_vertices);
    put_f64s(&mut out, &p.shape_basis);
    if let Some(pb) = &p.pose_basis {
        put_f64s(&mut out, pb);
    }
    put_f64s(&mut out, &p.skinning_weights);
    put_f64s(&mut out, &p.joint_regressor);
    for par in &p.parent {
        let v: i32 = par.map_or(-1, |x| x as i32);
        out.extend_from_slice(&v.to_le_bytes());
    }
    for f in &p.faces {
        for i in f {
            out.extend_from_slice(&i.to_le_bytes());
        }
    }
    for &k in &p.keypoint_map {
        put_u32(&mut out, k);
    }
    for i in 0..p.keypoint_map.len() {
        let name = p.keypoint_names.get(i).map_or("", String::as_str);
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
    }
    for b in &p.bones {
        put_u32(&mut out, b.joint);
        let (kind, child, tip) = match &b.end {
            BoneEnd::Joint(c) => (0u8, *c, [0.0; 3]),
            BoneEnd::Tip(t) => (1u8, 0, *t),
        };
        out.push(kind);
        put_u32(&mut out, child);
        put_f64s(&mut out, &tip);
        put_f64s(&mut out, &[b.radius]);
    }
    let m = &p.measurement;
    put_f64s(&mut out, &[m.neck_height, m.chest_height, m.waist_height, m.hip_height]);
    put_u32(&mut out, m.torso_bones.len());
    for &b in &m.torso_bones {
        put_u32(&mut out, b);
    }
    for limbs in [&m.arms, &m.legs] {
        put_u32(&mut out, limbs.len());
        for l in limbs {
            for &j in l {
                put_u32(&mut out, j);
            }
        }
    }
    out
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format {
                format: "template binary",
                detail: format!("truncated while reading {what} at byte {}", self.pos),
            }),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn i32(&mut self, what: &str) -> Result<i32> {
        let b = self.take(4, what)?;
        Ok(i32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::Format {
            format: "template binary",
            detail: format!("{what} size overflows"),
        })?;
        let b = self.take(len, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

fn checked_product(dims: &[usize], what: &str) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format {
            format: "template binary",
            detail: format!("{what} dimensions overflow"),
        })
}

fn decode_binary(bytes: &[u8]) -> Result<BodyTemplate> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.take(MAGIC.len(), "magic")?;
    let v = r.u32("vertex count")?;
    let k = r.u32("joint count")?;
    let b = r.u32("shape dimension")?;
    let n_faces = r.u32("face count")?;
    let n_bones = r.u32("bone count")?;
    let n_kp = r.u32("keypoint count")?;
    let has_pose = r.u8("pose basis flag")?;
    if k == 0 {
        return Err(Error::Format {
            format: "template binary",
            detail: "joint count is zero".into(),
        });
    }
    let rest_vertices = r.f64s(checked_product(&[v, 3], "rest_vertices")?, "rest_vertices")?;
    let shape_basis = r.f64s(checked_product(&[v, 3, b], "shape_basis")?, "shape_basis")?;
    let pose_basis = match has_pose {
        0 => None,
        1 => Some(r.f64s(checked_product(&[v, 3, 9, k - 1], "pose_basis")?, "pose_basis")?),
        x => {
            return Err(Error::Format {
                format: "template binary",
                detail: format!("pose basis flag must be 0 or 1, found {x}"),
            })
        }
    };
    let skinning_weights = r.f64s(checked_product(&[v, k], "skinning_weights")?, "skinning_weights")?;
    let joint_regressor = r.f64s(checked_product(&[k, v], "joint_regressor")?, "joint_regressor")?;
    let mut parent = Vec::with_capacity(k);
    for _ in 0..k {
        let p = r.i32("parent")?;
        parent.push(if p < 0 { None } else { Some(p as usize) });
    }
    let mut faces = Vec::with_capacity(n_faces.min(bytes.len() / 12));
    for _ in 0..n_faces {
        faces.push([r.u32("faces")? as u32, r.u32("faces")? as u32, r.u32("faces")? as u32]);
    }
    let mut keypoint_map = Vec::with_capacity(n_kp.min(bytes.len() / 4));
    for _ in 0..n_kp {
        keypoint_map.push(r.u32("keypoint_map")?);
    }
    let mut keypoint_names = Vec::with_capacity(n_kp.min(bytes.len() / 4));
    for _ in 0..n_kp {
        let len = r.u32("keypoint name length")?;
        let raw = r.take(len, "keypoint name")?;
        keypoint_names.push(String::from_utf8(raw.to_vec()).map_err(|_| Error::Format {
            format: "template binary",
            detail: "keypoint name is not utf-8".into(),
        })?);
    }
    if keypoint_names.iter().all(String::is_empty) {
        keypoint_names.clear();
    }
    let mut bones = Vec::with_capacity(n_bones.min(bytes.len() / 45));
    for _ in 0..n_bones {
        let joint = r.u32("bone joint")?;
        let kind = r.u8("bone end kind")?;
        let child = r.u32("bone child")?;
        let tip = r.f64s(3, "bone tip")?;
        let radius = r.f64s(1, "bone radius")?[0];
        let end = match kind {
            0 => BoneEnd::Joint(child),
            1 => BoneEnd::Tip([tip[0], tip[1], tip[2]]),
            x => {
                return Err(Error::Format {
                    format: "template binary",
                    detail: format!("unknown bone end kind {x}"),
                })
            }
        };
        bones.push(BoneCapsule { joint, end, radius });
    }
    let cuts = r.f64s(4, "measurement heights")?;
    let n = r.u32("torso bone count")?;
    let mut torso_bones = Vec::with_capacity(n.min(bytes.len() / 4));
    for _ in 0..n {
        torso_bones.push(r.u32("torso bones")?);
    }
    let mut limbs = [Vec::new(), Vec::new()];
    for l in &mut limbs {
        let n = r.u32("limb count")?;
        for _ in 0..n {
            l.push([r.u32("limb")?, r.u32("limb")?, r.u32("limb")?]);
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Format {
            format: "template binary",
            detail: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    let [arms, legs] = limbs;
    BodyTemplate::from_parts(TemplateParts {
        vertex_count: v,
        joint_count: k,
        shape_dim: b,
        rest_vertices,
        shape_basis,
        pose_basis,
        skinning_weights,
        joint_regressor,
        parent,
        faces,
        keypoint_map,
        keypoint_names,
        bones,
        measurement: MeasurementSpec {
            neck_height: cuts[0],
            chest_height: cuts[1],
            waist_height: cuts[2],
            hip_height: cuts[3],
            torso_bones,
            arms,
            legs,
        },
    })
}
