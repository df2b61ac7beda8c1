//! Wavefront OBJ text geometry: `v x y z` and 1-based `f a b c` lines.
//! Coordinates are written with the shortest round-trip decimal form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::body_model::Mesh;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub fn obj_to_string(mesh: &Mesh, faces: &[[u32; 3]]) -> String {
    let mut out = String::with_capacity(mesh.len() * 48 + faces.len() * 24);
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).expect("string write");
    }
    for f in faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).expect("string write");
    }
    out
}

pub fn write_obj(path: impl AsRef<Path>, mesh: &Mesh, faces: &[[u32; 3]]) -> Result<()> {
    write_atomic(path.as_ref(), obj_to_string(mesh, faces).as_bytes())
}

/// Parses vertices and triangles; other statements are ignored. Face
/// entries may carry `/vt/vn` suffixes.
pub fn parse_obj(text: &str) -> Result<(Mesh, Vec<[u32; 3]>)> {
    let bad = |line: usize, what: &str| Error::Format {
        format: "obj",
        detail: format!("line {}: {what}", line + 1),
    };
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>().map_err(|_| bad(i, "bad coordinate")))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(bad(i, "vertex needs 3 coordinates"));
                }
                vertices.push(Vector3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = it
                    .map(|s| {
                        s.split('/')
                            .next()
                            .and_then(|n| n.parse::<u32>().ok())
                            .filter(|n| *n >= 1)
                            .map(|n| n - 1)
                            .ok_or_else(|| bad(i, "bad face index"))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(bad(i, "only triangles are supported"));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    if let Some(f) = faces.iter().flatten().find(|&&f| f as usize >= vertices.len()) {
        return Err(Error::Format {
            format: "obj",
            detail: format!("face index {} out of range ({} vertices)", f + 1, vertices.len()),
        });
    }
    Ok((Mesh { vertices }, faces))
}

pub fn read_obj(path: impl AsRef<Path>) -> Result<(Mesh, Vec<[u32; 3]>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}
