//! Animated scene description and its rasterization into G-buffers.

mod file;
pub mod obj;
mod raster;

use nalgebra::{Isometry3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub use file::{load_scene, parse_scene_str};
pub use raster::{project_vertex, rasterize_frame, rasterize_sequence, Projection};

/// Camera for one frame.
///
/// Camera space follows the image convention: `+x` right, `+y` down,
/// `+z` forward along the view axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    pub world_to_camera: Isometry3<f64>,
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub near: f64,
    pub far: f64,
}

impl CameraPose {
    /// Camera at the world origin looking down `+z`.
    pub fn identity(fov_y: f64, near: f64, far: f64) -> Self {
        Self {
            world_to_camera: Isometry3::identity(),
            fov_y,
            near,
            far,
        }
    }

    /// Camera at `eye` looking at `target`, with `up` giving the world up
    /// direction (mapped to image-up).
    pub fn look_at(
        eye: Point3<f64>,
        target: Point3<f64>,
        up: Vector3<f64>,
        fov_y: f64,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() == 0.0 {
            return Err(Error::Scene("camera eye and target coincide".into()));
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-12 {
            return Err(Error::Scene("camera up vector is parallel to view direction".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rot = nalgebra::Matrix3::from_rows(&[
            right.transpose(),
            down.transpose(),
            forward.transpose(),
        ]);
        let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rot));
        let translation = Translation3::from(-(rotation * eye.coords));
        Ok(Self {
            world_to_camera: Isometry3::from_parts(translation, rotation),
            fov_y,
            near,
            far,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::Scene(format!(
                "camera needs 0 < near < far, got near={} far={}",
                self.near, self.far
            )));
        }
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(Error::Scene(format!(
                "camera fov must lie in (0, pi), got {}",
                self.fov_y
            )));
        }
        Ok(())
    }
}

/// A triangle mesh with a UV atlas and baked per-frame vertex positions.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshObject {
    /// Non-zero; 0 marks background in G-buffers.
    pub object_id: u16,
    /// `frame_count` arrays of world-space positions, all of the same length.
    pub vertices_per_frame: Vec<Vec<Point3<f64>>>,
    pub uvs: Vec<[f64; 2]>,
    pub faces: Vec<[u32; 3]>,
    pub uv_faces: Vec<[u32; 3]>,
}

impl MeshObject {
    /// Object whose vertices stay at `vertices` in every frame.
    pub fn static_mesh(
        object_id: u16,
        vertices: Vec<Point3<f64>>,
        uvs: Vec<[f64; 2]>,
        faces: Vec<[u32; 3]>,
        uv_faces: Vec<[u32; 3]>,
        frame_count: usize,
    ) -> Self {
        Self {
            object_id,
            vertices_per_frame: vec![vertices; frame_count],
            uvs,
            faces,
            uv_faces,
        }
    }

    /// Object whose rest-pose `vertices` are moved by one rigid transform per frame.
    pub fn rigid(
        object_id: u16,
        vertices: &[Point3<f64>],
        transforms: &[Isometry3<f64>],
        uvs: Vec<[f64; 2]>,
        faces: Vec<[u32; 3]>,
        uv_faces: Vec<[u32; 3]>,
    ) -> Self {
        let vertices_per_frame = transforms
            .iter()
            .map(|t| vertices.iter().map(|v| t * v).collect())
            .collect();
        Self {
            object_id,
            vertices_per_frame,
            uvs,
            faces,
            uv_faces,
        }
    }

    fn validate(&self, frame_count: usize) -> Result<()> {
        let id = self.object_id;
        if id == 0 {
            return Err(Error::Scene("object id 0 is reserved for background".into()));
        }
        if self.faces.is_empty() {
            return Err(Error::Scene(format!("object {id} has no triangles")));
        }
        if self.faces.len() != self.uv_faces.len() {
            return Err(Error::Scene(format!(
                "object {id}: {} faces but {} uv faces",
                self.faces.len(),
                self.uv_faces.len()
            )));
        }
        if self.vertices_per_frame.len() != frame_count {
            return Err(Error::Scene(format!(
                "object {id} defines {} frames of vertices, scene has {frame_count}",
                self.vertices_per_frame.len()
            )));
        }
        let vertex_count = self.vertices_per_frame[0].len();
        for (f, verts) in self.vertices_per_frame.iter().enumerate() {
            if verts.len() != vertex_count {
                return Err(Error::Scene(format!(
                    "object {id}: frame {f} has {} vertices, frame 0 has {vertex_count}",
                    verts.len()
                )));
            }
            if verts.iter().any(|v| !v.coords.iter().all(|c| c.is_finite())) {
                return Err(Error::Scene(format!("object {id}: non-finite vertex in frame {f}")));
            }
        }
        for (i, uv) in self.uvs.iter().enumerate() {
            if !uv.iter().all(|c| (0.0..=1.0).contains(c)) {
                return Err(Error::Scene(format!(
                    "object {id}: uv {i} = {uv:?} outside [0,1]"
                )));
            }
        }
        for (fi, (face, uv_face)) in self.faces.iter().zip(&self.uv_faces).enumerate() {
            if face.iter().any(|&i| i as usize >= vertex_count) {
                return Err(Error::Scene(format!(
                    "object {id}: face {fi} vertex index out of range"
                )));
            }
            if uv_face.iter().any(|&i| i as usize >= self.uvs.len()) {
                return Err(Error::Scene(format!(
                    "object {id}: face {fi} uv index out of range"
                )));
            }
        }
        Ok(())
    }
}

/// Objects plus one camera per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AnimatedScene {
    pub objects: Vec<MeshObject>,
    pub camera_frames: Vec<CameraPose>,
}

impl AnimatedScene {
    /// Builds and validates a scene; the frame count is the number of cameras.
    pub fn new(objects: Vec<MeshObject>, camera_frames: Vec<CameraPose>) -> Result<Self> {
        let scene = Self {
            objects,
            camera_frames,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn frame_count(&self) -> usize {
        self.camera_frames.len()
    }

    pub fn object_ids(&self) -> Vec<u16> {
        self.objects.iter().map(|o| o.object_id).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.frame_count();
        if n == 0 {
            return Err(Error::Scene("scene needs at least one frame".into()));
        }
        for cam in &self.camera_frames {
            cam.validate()?;
        }
        let mut ids = std::collections::BTreeSet::new();
        for obj in &self.objects {
            obj.validate(n)?;
            if !ids.insert(obj.object_id) {
                return Err(Error::Scene(format!("duplicate object id {}", obj.object_id)));
            }
        }
        Ok(())
    }
}
