//! Minimal Wavefront OBJ reader: positions, texture coordinates and faces.
//! Normals, groups and materials are ignored; polygons are fan-triangulated.

use nalgebra::Point3;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjMesh {
    pub positions: Vec<Point3<f64>>,
    pub uvs: Vec<[f64; 2]>,
    pub faces: Vec<[u32; 3]>,
    pub uv_faces: Vec<[u32; 3]>,
}

fn err(source_name: &str, line: usize, message: impl std::fmt::Display) -> Error {
    Error::Parse {
        source_name: source_name.to_string(),
        message: format!("line {line}: {message}"),
    }
}

fn parse_floats<'a>(
    parts: impl Iterator<Item = &'a str>,
    min: usize,
    source_name: &str,
    line: usize,
) -> Result<Vec<f64>> {
    let vals = parts
        .map(|p| {
            p.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(source_name, line, format!("bad number {p:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if vals.len() < min {
        return Err(err(source_name, line, format!("expected {min} numbers")));
    }
    Ok(vals)
}

/// Resolves a 1-based (or negative, relative) OBJ index against `len`.
fn resolve(index: &str, len: usize, source_name: &str, line: usize) -> Result<u32> {
    let i: i64 = index
        .parse()
        .map_err(|_| err(source_name, line, format!("bad index {index:?}")))?;
    let resolved = if i > 0 {
        i - 1
    } else if i < 0 {
        len as i64 + i
    } else {
        -1
    };
    if resolved < 0 || resolved >= len as i64 {
        return Err(err(source_name, line, format!("index {i} out of range")));
    }
    Ok(resolved as u32)
}

pub fn parse_obj(text: &str, source_name: &str) -> Result<ObjMesh> {
    let mut mesh = ObjMesh::default();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut parts = content.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        match tag {
            "v" => {
                let v = parse_floats(parts, 3, source_name, line)?;
                mesh.positions.push(Point3::new(v[0], v[1], v[2]));
            }
            "vt" => {
                let v = parse_floats(parts, 2, source_name, line)?;
                mesh.uvs.push([v[0], v[1]]);
            }
            "f" => {
                let mut corners = Vec::new();
                for corner in parts {
                    let mut refs = corner.split('/');
                    let v = refs.next().unwrap_or("");
                    let vt = refs.next().unwrap_or("");
                    if vt.is_empty() {
                        return Err(err(source_name, line, "face corner lacks a texture coordinate"));
                    }
                    corners.push((
                        resolve(v, mesh.positions.len(), source_name, line)?,
                        resolve(vt, mesh.uvs.len(), source_name, line)?,
                    ));
                }
                if corners.len() < 3 {
                    return Err(err(source_name, line, "face needs at least 3 corners"));
                }
                for k in 1..corners.len() - 1 {
                    mesh.faces.push([corners[0].0, corners[k].0, corners[k + 1].0]);
                    mesh.uv_faces.push([corners[0].1, corners[k].1, corners[k + 1].1]);
                }
            }
            _ => {}
        }
    }
    if mesh.faces.is_empty() {
        return Err(Error::Parse {
            source_name: source_name.to_string(),
            message: "mesh has no faces".into(),
        });
    }
    Ok(mesh)
}
