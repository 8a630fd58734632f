//! Deterministic z-buffer rasterizer producing colour, depth and instance-id
//! buffers.
//!
//! Vertices are transformed to the camera frame, clipped against the near
//! plane, projected and snapped to 1/256 px. Coverage uses exact integer edge
//! functions evaluated at pixel centres with the top-left fill rule, so
//! triangles sharing an edge never both cover, or both miss, a pixel. Depth
//! and normals are interpolated perspective-correctly. There is no culling,
//! no anti-aliasing and no shadowing. On exactly equal depth the triangle
//! drawn first (lower instance position, then lower triangle index) keeps
//! the pixel.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{CameraModel, Pose, Vec3};
use crate::scene::{Material, SceneInstance};

pub const BACKGROUND_RGB: [u8; 3] = [0, 0, 0];

const SUBPIXEL_BITS: u32 = 8;
const SUBPIXEL: i64 = 1 << SUBPIXEL_BITS;

/// Directional light; `direction` points from the surface towards the light,
/// in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalLight {
    pub direction: Vec3,
    pub intensity: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LightSpec {
    pub lights: Vec<DirectionalLight>,
    pub ambient: [f64; 3],
}

impl Default for LightSpec {
    /// A single white headlight.
    fn default() -> Self {
        Self {
            lights: vec![DirectionalLight { direction: Vec3::new(0.0, 0.0, -1.0), intensity: [0.8; 3] }],
            ambient: [0.2; 3],
        }
    }
}

impl LightSpec {
    pub fn is_valid(&self) -> bool {
        self.ambient.iter().all(|a| *a >= 0.0 && a.is_finite())
            && self.lights.iter().all(|l| {
                libm::fabs(l.direction.norm() - 1.0) <= 1e-9 && l.intensity.iter().all(|i| *i >= 0.0 && i.is_finite())
            })
    }
}

/// Blinn-Phong colour for a surface point, each channel clamped to `[0, 1]`.
///
/// `normal` and `view_dir` are unit vectors pointing away from the surface.
pub fn shade_blinn_phong(mat: &Material, normal: &Vec3, view_dir: &Vec3, lights: &LightSpec) -> [f64; 3] {
    let mut color: [f64; 3] = core::array::from_fn(|c| lights.ambient[c] * mat.ambient[c]);
    for light in &lights.lights {
        let l = light.direction;
        let n_dot_l = normal.dot(&l).max(0.0);
        let h = l + view_dir;
        let h_len = h.norm();
        let n_dot_h = if h_len > 0.0 { normal.dot(&(h / h_len)).max(0.0) } else { 0.0 };
        let spec = libm::pow(n_dot_h, mat.shininess);
        for c in 0..3 {
            color[c] += (mat.diffuse[c] * n_dot_l + mat.specular[c] * spec) * light.intensity[c];
        }
    }
    color.map(|v| v.clamp(0.0, 1.0))
}

/// Rendered colour, depth (camera-frame z in mm, 0 where empty) and
/// instance ids (0 where empty), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffers {
    width: u32,
    height: u32,
    rgb: Vec<u8>,
    depth: Vec<f64>,
    instance_id: Vec<u32>,
}

impl FrameBuffers {
    pub fn background(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        let mut rgb = Vec::with_capacity(n * 3);
        for _ in 0..n {
            rgb.extend_from_slice(&BACKGROUND_RGB);
        }
        Self { width, height, rgb, depth: vec![0.0; n], instance_id: vec![0; n] }
    }

    /// Assembles buffers read from disk; `None` if sizes disagree or a pixel
    /// breaks the depth/id coupling.
    pub fn from_parts(width: u32, height: u32, rgb: Vec<u8>, depth: Vec<f64>, instance_id: Vec<u32>) -> Option<Self> {
        let n = width as usize * height as usize;
        if rgb.len() != 3 * n || depth.len() != n || instance_id.len() != n {
            return None;
        }
        let fb = Self { width, height, rgb, depth, instance_id };
        fb.coupling_violation().is_none().then_some(fb)
    }

    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn rgb(&self) -> &[u8] {
        &self.rgb
    }
    pub fn depth(&self) -> &[f64] {
        &self.depth
    }
    pub fn instance_id(&self) -> &[u32] {
        &self.instance_id
    }

    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn id_at(&self, x: u32, y: u32) -> u32 {
        self.instance_id[self.index(x, y)]
    }

    pub fn depth_at(&self, x: u32, y: u32) -> f64 {
        self.depth[self.index(x, y)]
    }

    pub fn rgb_at(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * self.index(x, y);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// First pixel index where `id ≠ 0` and `depth > 0` disagree.
    pub fn coupling_violation(&self) -> Option<usize> {
        self.instance_id.iter().zip(self.depth.iter()).position(|(id, d)| (*id != 0) != (*d > 0.0))
    }
}

#[derive(Clone, Copy)]
struct ClipVertex {
    p: Vec3,
    n: Vec3,
}

struct Target<'a> {
    cam: &'a CameraModel,
    lights: &'a LightSpec,
    zbuf: Vec<f64>,
    fb: FrameBuffers,
}

/// Renders `scene` seen from a camera at `cam_pose` (camera-to-world).
pub fn render_frame(scene: &[SceneInstance], cam_pose: &Pose, cam: &CameraModel, lights: &LightSpec) -> FrameBuffers {
    let (w, h) = (cam.width(), cam.height());
    let mut target = Target {
        cam,
        lights,
        zbuf: vec![f64::INFINITY; w as usize * h as usize],
        fb: FrameBuffers::background(w, h),
    };
    let mut cam_vertices: Vec<Vec3> = Vec::new();
    let mut cam_normals: Vec<Vec3> = Vec::new();
    for inst in scene {
        let m2c = inst.pose_world.relative_to(cam_pose);
        let r = m2c.rotation();
        cam_vertices.clear();
        cam_vertices.extend(inst.mesh.vertices().iter().map(|v| m2c.transform_point(v)));
        cam_normals.clear();
        cam_normals.extend(inst.mesh.normals().iter().map(|n| r * n));
        for tri in inst.mesh.triangles() {
            let verts = tri.map(|i| ClipVertex { p: cam_vertices[i as usize], n: cam_normals[i as usize] });
            draw_clipped(&mut target, &verts, inst);
        }
    }
    target.fb
}

fn draw_clipped(target: &mut Target<'_>, tri: &[ClipVertex; 3], inst: &SceneInstance) {
    let near = target.cam.near_clip();
    let inside = tri.map(|v| v.p.z >= near);
    match inside.iter().filter(|b| **b).count() {
        0 => {}
        3 => rasterize(target, tri, inst),
        _ => {
            let mut poly: [ClipVertex; 4] = [tri[0]; 4];
            let mut len = 0;
            for i in 0..3 {
                let a = tri[i];
                let b = tri[(i + 1) % 3];
                let (ain, bin) = (inside[i], inside[(i + 1) % 3]);
                if ain {
                    poly[len] = a;
                    len += 1;
                }
                if ain != bin {
                    let t = (near - a.p.z) / (b.p.z - a.p.z);
                    let mut p = a.p + (b.p - a.p) * t;
                    p.z = near;
                    poly[len] = ClipVertex { p, n: a.n + (b.n - a.n) * t };
                    len += 1;
                }
            }
            for k in 1..len - 1 {
                rasterize(target, &[poly[0], poly[k], poly[k + 1]], inst);
            }
        }
    }
}

#[inline]
fn edge(ax: i64, ay: i64, bx: i64, by: i64, px: i64, py: i64) -> i128 {
    (bx - ax) as i128 * (py - ay) as i128 - (by - ay) as i128 * (px - ax) as i128
}

#[inline]
fn is_top_left(ax: i64, ay: i64, bx: i64, by: i64) -> bool {
    let (dx, dy) = (bx - ax, by - ay);
    (dy == 0 && dx > 0) || dy < 0
}

fn snap(v: f64) -> Option<i64> {
    let s = libm::round(v * SUBPIXEL as f64);
    // keep products of differences inside i128 comfortably
    (s.is_finite() && libm::fabs(s) < 4.0e15).then_some(s as i64)
}

fn rasterize(target: &mut Target<'_>, tri: &[ClipVertex; 3], inst: &SceneInstance) {
    let cam = target.cam;
    let mut sx = [0i64; 3];
    let mut sy = [0i64; 3];
    for i in 0..3 {
        let [u, v] = cam.project_unchecked(&tri[i].p);
        match (snap(u), snap(v)) {
            (Some(x), Some(y)) => {
                sx[i] = x;
                sy[i] = y;
            }
            _ => return,
        }
    }
    let mut order = [0usize, 1, 2];
    let mut area = edge(sx[0], sy[0], sx[1], sy[1], sx[2], sy[2]);
    if area == 0 {
        return;
    }
    if area < 0 {
        order = [0, 2, 1];
        area = -area;
    }
    let [i0, i1, i2] = order;
    let (x0, y0, x1, y1, x2, y2) = (sx[i0], sy[i0], sx[i1], sy[i1], sx[i2], sy[i2]);

    let (w, h) = (cam.width() as i64, cam.height() as i64);
    let half = SUBPIXEL / 2;
    let min_x = x0.min(x1).min(x2);
    let max_x = x0.max(x1).max(x2);
    let min_y = y0.min(y1).min(y2);
    let max_y = y0.max(y1).max(y2);
    // pixel px covers centre px*256+128
    let px_lo = libm::ceil((min_x - half) as f64 / SUBPIXEL as f64).max(0.0) as i64;
    let px_hi = (libm::floor((max_x - half) as f64 / SUBPIXEL as f64) as i64).min(w - 1);
    let py_lo = libm::ceil((min_y - half) as f64 / SUBPIXEL as f64).max(0.0) as i64;
    let py_hi = (libm::floor((max_y - half) as f64 / SUBPIXEL as f64) as i64).min(h - 1);
    if px_lo > px_hi || py_lo > py_hi {
        return;
    }

    // edge k is opposite vertex k
    let bias = [
        if is_top_left(x1, y1, x2, y2) { 0 } else { 1 },
        if is_top_left(x2, y2, x0, y0) { 0 } else { 1 },
        if is_top_left(x0, y0, x1, y1) { 0 } else { 1 },
    ];
    // d/dpx of edge(a,b,p) = -(by - ay) * SUBPIXEL
    let dx = [
        -((y2 - y1) as i128) * SUBPIXEL as i128,
        -((y0 - y2) as i128) * SUBPIXEL as i128,
        -((y1 - y0) as i128) * SUBPIXEL as i128,
    ];
    let v = [tri[i0], tri[i1], tri[i2]];
    let inv_z = [1.0 / v[0].p.z, 1.0 / v[1].p.z, 1.0 / v[2].p.z];
    let area_f = area as f64;
    let width = cam.width() as usize;

    for py in py_lo..=py_hi {
        let cy = py * SUBPIXEL + half;
        let cx = px_lo * SUBPIXEL + half;
        let mut e = [edge(x1, y1, x2, y2, cx, cy), edge(x2, y2, x0, y0, cx, cy), edge(x0, y0, x1, y1, cx, cy)];
        for px in px_lo..=px_hi {
            if e[0] >= bias[0] && e[1] >= bias[1] && e[2] >= bias[2] {
                let b = [e[0] as f64 / area_f, e[1] as f64 / area_f, e[2] as f64 / area_f];
                let wz = [b[0] * inv_z[0], b[1] * inv_z[1], b[2] * inv_z[2]];
                let z = 1.0 / (wz[0] + wz[1] + wz[2]);
                let idx = py as usize * width + px as usize;
                if z < target.zbuf[idx] {
                    target.zbuf[idx] = z;
                    let l = [wz[0] * z, wz[1] * z, wz[2] * z];
                    let pos = v[0].p * l[0] + v[1].p * l[1] + v[2].p * l[2];
                    let mut n = v[0].n * l[0] + v[1].n * l[1] + v[2].n * l[2];
                    let n_len = n.norm();
                    n = if n_len > 0.0 { n / n_len } else { -Vec3::z() };
                    let pos_len = pos.norm();
                    let view = if pos_len > 0.0 { -pos / pos_len } else { -Vec3::z() };
                    if n.dot(&view) < 0.0 {
                        n = -n;
                    }
                    let c = shade_blinn_phong(&inst.material, &n, &view, target.lights);
                    let fb = &mut target.fb;
                    fb.depth[idx] = z;
                    fb.instance_id[idx] = inst.instance_id;
                    for ch in 0..3 {
                        fb.rgb[3 * idx + ch] = libm::round(c[ch] * 255.0) as u8;
                    }
                }
            }
            e[0] += dx[0];
            e[1] += dx[1];
            e[2] += dx[2];
        }
    }
}
