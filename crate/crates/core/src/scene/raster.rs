use nalgebra::Point3;
use rayon::prelude::*;

use super::{AnimatedScene, CameraPose};
use crate::error::{Error, Result};
use crate::gbuffer::GBufferFrame;

/// A vertex after perspective projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Continuous pixel coordinates; `(0, 0)` is the top-left corner of the
    /// top-left pixel, whose center sits at `(0.5, 0.5)`.
    pub pixel: [f64; 2],
    /// Camera-space distance along the view axis.
    pub depth: f64,
}

#[inline]
fn focal_length(fov_y: f64, height: usize) -> f64 {
    0.5 * height as f64 / (0.5 * fov_y).tan()
}

#[inline]
fn project_camera_space(p: &Point3<f64>, focal: f64, width: usize, height: usize) -> Projection {
    Projection {
        pixel: [
            0.5 * width as f64 + focal * p.x / p.z,
            0.5 * height as f64 + focal * p.y / p.z,
        ],
        depth: p.z,
    }
}

/// Projects a world-space point. The caller is responsible for rejecting
/// points behind the near plane.
pub fn project_vertex(v: &Point3<f64>, pose: &CameraPose, width: usize, height: usize) -> Projection {
    let cam = pose.world_to_camera * v;
    project_camera_space(&cam, focal_length(pose.fov_y, height), width, height)
}

#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Top-left rule for triangles with positive `edge(v0, v1, v2)` in
/// y-down pixel space.
#[inline]
fn is_top_left(a: [f64; 2], b: [f64; 2]) -> bool {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

#[inline]
fn covers(w: f64, top_left: bool) -> bool {
    w > 0.0 || (w == 0.0 && top_left)
}

struct Vertex {
    pixel: [f64; 2],
    inv_z: f64,
    uv: [f64; 2],
}

/// Depth-tested rasterization of one frame with perspective-correct UVs.
pub fn rasterize_frame(
    scene: &AnimatedScene,
    frame_index: usize,
    width: usize,
    height: usize,
) -> Result<GBufferFrame> {
    if frame_index >= scene.frame_count() {
        return Err(Error::Scene(format!(
            "frame {frame_index} out of range for a {}-frame scene",
            scene.frame_count()
        )));
    }
    let pose = &scene.camera_frames[frame_index];
    let focal = focal_length(pose.fov_y, height);
    let mut gbuf = GBufferFrame::background(width, height);
    let mut zbuf = vec![f64::INFINITY; width * height];

    for obj in &scene.objects {
        let positions = &obj.vertices_per_frame[frame_index];
        let cam: Vec<Point3<f64>> = positions.iter().map(|p| pose.world_to_camera * p).collect();
        for (face, uv_face) in obj.faces.iter().zip(&obj.uv_faces) {
            let c = [cam[face[0] as usize], cam[face[1] as usize], cam[face[2] as usize]];
            // whole-triangle near/far culling, no clipping
            if c.iter().any(|p| p.z < pose.near) || c.iter().all(|p| p.z > pose.far) {
                continue;
            }
            let mut v: [Vertex; 3] = std::array::from_fn(|k| {
                let proj = project_camera_space(&c[k], focal, width, height);
                Vertex {
                    pixel: proj.pixel,
                    inv_z: 1.0 / c[k].z,
                    uv: obj.uvs[uv_face[k] as usize],
                }
            });
            let mut area = edge(v[0].pixel, v[1].pixel, v[2].pixel);
            if area == 0.0 || !area.is_finite() {
                continue;
            }
            if area < 0.0 {
                v.swap(1, 2);
                area = -area;
            }
            let (p0, p1, p2) = (v[0].pixel, v[1].pixel, v[2].pixel);
            let tl = [is_top_left(p1, p2), is_top_left(p2, p0), is_top_left(p0, p1)];

            let min_x = p0[0].min(p1[0]).min(p2[0]);
            let max_x = p0[0].max(p1[0]).max(p2[0]);
            let min_y = p0[1].min(p1[1]).min(p2[1]);
            let max_y = p0[1].max(p1[1]).max(p2[1]);
            // pixel i has center i + 0.5
            let x0 = (min_x - 0.5).ceil().max(0.0);
            let x1 = (max_x - 0.5).floor().min(width as f64 - 1.0);
            let y0 = (min_y - 0.5).ceil().max(0.0);
            let y1 = (max_y - 0.5).floor().min(height as f64 - 1.0);
            if x0 > x1 || y0 > y1 {
                continue;
            }
            let inv_area = 1.0 / area;
            for py in y0 as usize..=y1 as usize {
                for px in x0 as usize..=x1 as usize {
                    let p = [px as f64 + 0.5, py as f64 + 0.5];
                    let w0 = edge(p1, p2, p);
                    let w1 = edge(p2, p0, p);
                    let w2 = edge(p0, p1, p);
                    if !(covers(w0, tl[0]) && covers(w1, tl[1]) && covers(w2, tl[2])) {
                        continue;
                    }
                    let b = [w0 * inv_area, w1 * inv_area, w2 * inv_area];
                    let inv_z = b[0] * v[0].inv_z + b[1] * v[1].inv_z + b[2] * v[2].inv_z;
                    let z = 1.0 / inv_z;
                    let idx = py * width + px;
                    if !(z < zbuf[idx]) || z > pose.far {
                        continue;
                    }
                    let mut uv = [0.0; 2];
                    for (k, out) in uv.iter_mut().enumerate() {
                        let num = b[0] * v[0].uv[k] * v[0].inv_z
                            + b[1] * v[1].uv[k] * v[1].inv_z
                            + b[2] * v[2].uv[k] * v[2].inv_z;
                        *out = (num * z).clamp(0.0, 1.0);
                    }
                    zbuf[idx] = z;
                    gbuf.set_pixel(idx, obj.object_id, [uv[0] as f32, uv[1] as f32], z as f32);
                }
            }
        }
    }
    Ok(gbuf)
}

/// Rasterizes every frame of the scene. Frames are processed in parallel.
pub fn rasterize_sequence(
    scene: &AnimatedScene,
    width: usize,
    height: usize,
) -> Result<Vec<GBufferFrame>> {
    (0..scene.frame_count())
        .into_par_iter()
        .map(|f| rasterize_frame(scene, f, width, height))
        .collect()
}
