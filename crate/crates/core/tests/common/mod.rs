#![allow(dead_code)]

use genrender::scene::{AnimatedScene, CameraPose, MeshObject};
use genrender::GBufferFrame;
use nalgebra::{Point3, Vector3};

pub const QUAD_UVS: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

/// Two-triangle quad over `corners` (counter-clockwise), UVs on the unit square.
pub fn quad(id: u16, corners: [Point3<f64>; 4], frames: usize) -> MeshObject {
    let faces = vec![[0, 1, 2], [0, 2, 3]];
    MeshObject::static_mesh(id, corners.to_vec(), QUAD_UVS.to_vec(), faces.clone(), faces, frames)
}

pub fn fronto_quad(id: u16, half: f64, z: f64, frames: usize) -> MeshObject {
    quad(
        id,
        [
            Point3::new(-half, -half, z),
            Point3::new(half, -half, z),
            Point3::new(half, half, z),
            Point3::new(-half, half, z),
        ],
        frames,
    )
}

/// A quad at depth 2 sliding along x by `step` world units per frame.
pub fn translating_quad_scene(frames: usize, step: f64) -> AnimatedScene {
    let corners = [
        Point3::new(-0.5, -0.5, 2.0),
        Point3::new(0.5, -0.5, 2.0),
        Point3::new(0.5, 0.5, 2.0),
        Point3::new(-0.5, 0.5, 2.0),
    ];
    let per_frame: Vec<Vec<Point3<f64>>> = (0..frames)
        .map(|f| {
            let dx = Vector3::new(step * f as f64 - step * (frames as f64 - 1.0) / 2.0, 0.0, 0.0);
            corners.iter().map(|p| p + dx).collect()
        })
        .collect();
    let mut obj = quad(1, corners, frames);
    obj.vertices_per_frame = per_frame;
    AnimatedScene::new(vec![obj], vec![CameraPose::identity(1.2, 0.1, 10.0); frames]).unwrap()
}

pub fn static_quad_scene(frames: usize) -> AnimatedScene {
    AnimatedScene::new(
        vec![fronto_quad(1, 0.6, 2.0, frames)],
        vec![CameraPose::identity(1.0, 0.1, 10.0); frames],
    )
    .unwrap()
}

/// Camera ray through the center of pixel `(px, py)` for an identity pose;
/// its z component is 1 so the hit parameter equals camera-space depth.
pub fn pixel_ray(px: usize, py: usize, width: usize, height: usize, fov_y: f64) -> Vector3<f64> {
    let focal = 0.5 * height as f64 / (0.5 * fov_y).tan();
    Vector3::new(
        (px as f64 + 0.5 - 0.5 * width as f64) / focal,
        (py as f64 + 0.5 - 0.5 * height as f64) / focal,
        1.0,
    )
}

/// Möller–Trumbore intersection from the camera origin. Returns the hit
/// distance and the barycentric weights `(1-u-v, u, v)`.
pub fn ray_triangle(dir: Vector3<f64>, tri: [Point3<f64>; 3]) -> Option<(f64, [f64; 3])> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let s = Point3::origin() - tri[0];
    let u = s.dot(&p) / det;
    let q = s.cross(&e1);
    let v = dir.dot(&q) / det;
    let t = e2.dot(&q) / det;
    Some((t, [1.0 - u - v, u, v]))
}

pub fn coverage(g: &GBufferFrame) -> usize {
    g.object_ids().iter().filter(|&&id| id != 0).count()
}
