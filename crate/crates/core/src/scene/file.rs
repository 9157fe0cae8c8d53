//! TOML scene documents.
//!
//! ```toml
//! frames = 2
//!
//! [[camera]]
//! frame = 0
//! eye = [0.0, 0.0, -3.0]
//! target = [0.0, 0.0, 0.0]
//! fov_deg = 60.0
//!
//! [[object]]
//! id = 1
//! mesh = "quad.obj"            # or inline vertices / uvs / faces
//! transforms = [               # optional, one per frame (or one for all)
//!   { translation = [0.0, 0.0, 0.0] },
//!   { translation = [0.1, 0.0, 0.0], rotation_deg = [0.0, 10.0, 0.0] },
//! ]
//! ```
//!
//! Cameras are keyframes; frames between two keyframes interpolate eye,
//! target, up, fov and clip distances linearly. Objects may instead carry
//! `frame_vertices`, one full vertex array per frame.

use std::path::Path;

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::Deserialize;

use super::obj::parse_obj;
use super::{AnimatedScene, CameraPose, MeshObject};
use crate::error::{Error, Result};

/// Upper bound on `frames`; every frame holds its own copy of each mesh.
pub const MAX_FRAMES: usize = 100_000;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    frames: usize,
    #[serde(default)]
    camera: Vec<CameraKey>,
    #[serde(default)]
    object: Vec<ObjectDoc>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraKey {
    frame: usize,
    eye: [f64; 3],
    target: [f64; 3],
    #[serde(default = "default_up")]
    up: [f64; 3],
    #[serde(default = "default_fov")]
    fov_deg: f64,
    #[serde(default = "default_near")]
    near: f64,
    #[serde(default = "default_far")]
    far: f64,
}

fn default_up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}
fn default_fov() -> f64 {
    60.0
}
fn default_near() -> f64 {
    0.1
}
fn default_far() -> f64 {
    100.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectDoc {
    id: u16,
    mesh: Option<String>,
    vertices: Option<Vec<[f64; 3]>>,
    uvs: Option<Vec<[f64; 2]>>,
    faces: Option<Vec<[u32; 3]>>,
    uv_faces: Option<Vec<[u32; 3]>>,
    transforms: Option<Vec<TransformDoc>>,
    frame_vertices: Option<Vec<Vec<[f64; 3]>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformDoc {
    #[serde(default)]
    translation: [f64; 3],
    /// XYZ Euler angles (roll, pitch, yaw) in degrees.
    #[serde(default)]
    rotation_deg: [f64; 3],
}

impl TransformDoc {
    fn isometry(&self) -> Isometry3<f64> {
        let [rx, ry, rz] = self.rotation_deg.map(f64::to_radians);
        Isometry3::from_parts(
            Translation3::from(Vector3::from(self.translation)),
            UnitQuaternion::from_euler_angles(rx, ry, rz),
        )
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [lerp(a[0], b[0], t), lerp(a[1], b[1], t), lerp(a[2], b[2], t)]
}

fn camera_at(keys: &[CameraKey], frame: usize) -> CameraKey {
    let next = keys.iter().position(|k| k.frame >= frame);
    match next {
        None => keys[keys.len() - 1].clone(),
        Some(0) => keys[0].clone(),
        Some(i) => {
            let (a, b) = (&keys[i - 1], &keys[i]);
            let t = (frame - a.frame) as f64 / (b.frame - a.frame) as f64;
            CameraKey {
                frame,
                eye: lerp3(a.eye, b.eye, t),
                target: lerp3(a.target, b.target, t),
                up: lerp3(a.up, b.up, t),
                fov_deg: lerp(a.fov_deg, b.fov_deg, t),
                near: lerp(a.near, b.near, t),
                far: lerp(a.far, b.far, t),
            }
        }
    }
}

fn scene_err(message: String) -> Error {
    Error::Scene(message)
}

fn build_object(doc: ObjectDoc, index: usize, frames: usize, base_dir: &Path) -> Result<MeshObject> {
    let at = |field: &str| format!("object[{index}] (id {}).{field}", doc.id);
    let (rest, uvs, faces, uv_faces) = match &doc.mesh {
        Some(path) => {
            if doc.vertices.is_some() || doc.uvs.is_some() || doc.faces.is_some() {
                return Err(scene_err(format!(
                    "{}: give either a mesh path or inline arrays, not both",
                    at("mesh")
                )));
            }
            let full = base_dir.join(path);
            let text = std::fs::read_to_string(&full).map_err(|e| Error::io(&full, e))?;
            let m = parse_obj(&text, &full.display().to_string())?;
            (m.positions, m.uvs, m.faces, m.uv_faces)
        }
        None => {
            let vertices = doc
                .vertices
                .clone()
                .ok_or_else(|| scene_err(format!("{}: missing", at("vertices"))))?;
            let uvs = doc
                .uvs
                .clone()
                .ok_or_else(|| scene_err(format!("{}: missing", at("uvs"))))?;
            let faces = doc
                .faces
                .clone()
                .ok_or_else(|| scene_err(format!("{}: missing", at("faces"))))?;
            let uv_faces = doc.uv_faces.clone().unwrap_or_else(|| faces.clone());
            (
                vertices.into_iter().map(Point3::from).collect(),
                uvs,
                faces,
                uv_faces,
            )
        }
    };
    let vertices_per_frame = match (&doc.transforms, &doc.frame_vertices) {
        (Some(_), Some(_)) => {
            return Err(scene_err(format!(
                "{}: transforms and frame_vertices are mutually exclusive",
                at("transforms")
            )))
        }
        (Some(ts), None) => {
            let ts: Vec<Isometry3<f64>> = match ts.len() {
                1 => vec![ts[0].isometry(); frames],
                n if n == frames => ts.iter().map(TransformDoc::isometry).collect(),
                n => {
                    return Err(scene_err(format!(
                        "{}: {n} entries for {frames} frames",
                        at("transforms")
                    )))
                }
            };
            ts.iter()
                .map(|t| rest.iter().map(|v| t * v).collect())
                .collect()
        }
        (None, Some(fv)) => {
            if fv.len() != frames {
                return Err(scene_err(format!(
                    "{}: {} entries for {frames} frames",
                    at("frame_vertices"),
                    fv.len()
                )));
            }
            fv.iter()
                .map(|f| f.iter().copied().map(Point3::from).collect())
                .collect()
        }
        (None, None) => vec![rest; frames],
    };
    let obj = MeshObject {
        object_id: doc.id,
        vertices_per_frame,
        uvs,
        faces,
        uv_faces,
    };
    obj.validate(frames)
        .map_err(|e| scene_err(format!("object[{index}]: {e}")))?;
    Ok(obj)
}

/// Parses a scene document; mesh paths resolve against `base_dir`.
pub fn parse_scene_str(text: &str, source_name: &str, base_dir: &Path) -> Result<AnimatedScene> {
    let doc: SceneDoc = toml::from_str(text).map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        message: e.to_string(),
    })?;
    if doc.frames == 0 || doc.frames > MAX_FRAMES {
        return Err(scene_err(format!("frames: must be in 1..={MAX_FRAMES}")));
    }
    if doc.camera.is_empty() {
        return Err(scene_err("camera: at least one camera keyframe is required".into()));
    }
    let mut keys = doc.camera.clone();
    keys.sort_by_key(|k| k.frame);
    if keys.windows(2).any(|w| w[0].frame == w[1].frame) {
        return Err(scene_err("camera: duplicate keyframe index".into()));
    }
    let camera_frames = (0..doc.frames)
        .map(|f| {
            let k = camera_at(&keys, f);
            CameraPose::look_at(
                Point3::from(k.eye),
                Point3::from(k.target),
                Vector3::from(k.up),
                k.fov_deg.to_radians(),
                k.near,
                k.far,
            )
            .map_err(|e| scene_err(format!("camera at frame {f}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let objects = doc
        .object
        .into_iter()
        .enumerate()
        .map(|(i, o)| build_object(o, i, doc.frames, base_dir))
        .collect::<Result<Vec<_>>>()?;
    AnimatedScene::new(objects, camera_frames)
}

/// Reads and parses a scene file.
pub fn load_scene(path: &Path) -> Result<AnimatedScene> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_scene_str(&text, &path.display().to_string(), base)
}
