//! Triangle meshes and the procedural shapes used to populate scenes.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("triangle {triangle} references vertex {index} but the mesh has {vertex_count} vertices")]
    IndexOutOfRange { triangle: usize, index: u32, vertex_count: usize },
    #[error("expected {expected} normals, got {got}")]
    NormalCount { expected: usize, got: usize },
    #[error("vertex {0} has a zero or non-finite normal")]
    InvalidNormal(usize),
    #[error("vertex {0} is not finite")]
    NonFiniteVertex(usize),
    #[error("invalid parameter: {0}")]
    InvalidParam(&'static str),
}

/// Indexed triangle mesh with one unit normal per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    normals: Vec<Vec3>,
}

impl TriMesh {
    /// Builds a mesh, validating indices. When `normals` is `None` they are
    /// computed as area-weighted averages of the incident face normals;
    /// supplied normals are renormalized.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>, normals: Option<Vec<Vec3>>) -> Result<Self, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFiniteVertex(i));
        }
        for (ti, tri) in triangles.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i as usize >= vertices.len()) {
                return Err(MeshError::IndexOutOfRange { triangle: ti, index, vertex_count: vertices.len() });
            }
        }
        let normals = match normals {
            Some(given) => {
                if given.len() != vertices.len() {
                    return Err(MeshError::NormalCount { expected: vertices.len(), got: given.len() });
                }
                given
                    .into_iter()
                    .enumerate()
                    .map(|(i, n)| {
                        let len = n.norm();
                        if len > 0.0 && len.is_finite() {
                            Ok(n / len)
                        } else {
                            Err(MeshError::InvalidNormal(i))
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
            None => area_weighted_normals(&vertices, &triangles),
        };
        Ok(Self { vertices, triangles, normals })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    /// Axis-aligned bounds as `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }
}

/// Per-vertex normals from summed face cross products (weight = 2·area).
/// Vertices without a non-degenerate incident face get +z.
pub fn area_weighted_normals(vertices: &[Vec3], triangles: &[[u32; 3]]) -> Vec<Vec3> {
    let mut acc = alloc::vec![Vec3::zeros(); vertices.len()];
    for tri in triangles {
        let [a, b, c] = tri.map(|i| vertices[i as usize]);
        let n = (b - a).cross(&(c - a));
        for &i in tri {
            acc[i as usize] += n;
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 && len.is_finite() {
                n / len
            } else {
                Vec3::z()
            }
        })
        .collect()
}

/// Largest distance between any two vertices (exhaustive pair search).
pub fn mesh_diameter(mesh: &TriMesh) -> f64 {
    let v = mesh.vertices();
    let mut best_sq = 0.0f64;
    for (i, a) in v.iter().enumerate() {
        for b in &v[i + 1..] {
            let d = (a - b).norm_squared();
            if d > best_sq {
                best_sq = d;
            }
        }
    }
    libm::sqrt(best_sq)
}

/// Sides of the tube cross-section of a generated needle.
pub const NEEDLE_RING_SIDES: usize = 12;

/// Curved suture needle: a tube of radius `tube_radius` swept along a
/// circular arc of radius `arc_radius`, capped at both ends.
///
/// The arc lies in the model xz-plane, centred on the origin, with its
/// bisector along +z; for `arc_angle = π` the tips sit at `(±arc_radius, 0, 0)`.
/// The mesh is mirror-symmetric about x = 0 and invariant under a half turn
/// about z. Ring vertices are offset by half a step so no vertex lies on the
/// outermost radius, keeping the tip-to-tip extent below `2·(R + r)`.
pub fn generate_needle_mesh(
    arc_radius: f64,
    tube_radius: f64,
    arc_angle: f64,
    segments: usize,
) -> Result<TriMesh, MeshError> {
    if !(arc_radius > 0.0 && arc_radius.is_finite() && tube_radius > 0.0 && tube_radius.is_finite()) {
        return Err(MeshError::InvalidParam("radii must be positive"));
    }
    if !(arc_angle > 0.0 && arc_angle < TAU) {
        return Err(MeshError::InvalidParam("arc angle must be in (0, 2π)"));
    }
    if segments < 8 {
        return Err(MeshError::InvalidParam("at least 8 arc segments are required"));
    }
    let ring = NEEDLE_RING_SIDES;
    let start = (PI - arc_angle) * 0.5;
    let mut vertices = Vec::with_capacity((segments + 1) * ring + 2);
    for i in 0..=segments {
        let theta = start + arc_angle * (i as f64) / (segments as f64);
        let (s, c) = libm::sincos(theta);
        let radial = Vec3::new(c, 0.0, s);
        let center = radial * arc_radius;
        for k in 0..ring {
            let phi = TAU * (k as f64 + 0.5) / (ring as f64);
            let (sp, cp) = libm::sincos(phi);
            vertices.push(center + (radial * cp + Vec3::y() * sp) * tube_radius);
        }
    }
    let mut triangles = Vec::with_capacity(2 * segments * ring + 2 * ring);
    let idx = |station: usize, k: usize| (station * ring + (k % ring)) as u32;
    for i in 0..segments {
        for k in 0..ring {
            let a = idx(i, k);
            let b = idx(i, k + 1);
            let c = idx(i + 1, k);
            let d = idx(i + 1, k + 1);
            triangles.push([a, c, b]);
            triangles.push([b, c, d]);
        }
    }
    let (s0, c0) = libm::sincos(start);
    let (s1, c1) = libm::sincos(start + arc_angle);
    let cap_start = vertices.len() as u32;
    vertices.push(Vec3::new(c0, 0.0, s0) * arc_radius);
    let cap_end = vertices.len() as u32;
    vertices.push(Vec3::new(c1, 0.0, s1) * arc_radius);
    for k in 0..ring {
        triangles.push([cap_start, idx(0, k), idx(0, k + 1)]);
        triangles.push([cap_end, idx(segments, k + 1), idx(segments, k)]);
    }
    TriMesh::new(vertices, triangles, None)
}

/// Flat rectangular grid in the z = 0 plane, centred on the origin, facing +z.
/// Produces `2·nx·ny` triangles.
pub fn generate_plane(size_x: f64, size_y: f64, nx: usize, ny: usize) -> Result<TriMesh, MeshError> {
    if !(size_x > 0.0 && size_y > 0.0 && size_x.is_finite() && size_y.is_finite()) {
        return Err(MeshError::InvalidParam("plane size must be positive"));
    }
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidParam("plane needs at least one cell per side"));
    }
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = size_x * (i as f64 / nx as f64 - 0.5);
            let y = size_y * (j as f64 / ny as f64 - 0.5);
            vertices.push(Vec3::new(x, y, 0.0));
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    let w = nx + 1;
    for j in 0..ny {
        for i in 0..nx {
            let a = (j * w + i) as u32;
            let b = a + 1;
            let c = a + w as u32;
            let d = c + 1;
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    let normals = alloc::vec![Vec3::z(); vertices.len()];
    TriMesh::new(vertices, triangles, Some(normals))
}

/// Closed cylinder along +z from z = 0 to z = `length`.
pub fn generate_cylinder(radius: f64, length: f64, sides: usize) -> Result<TriMesh, MeshError> {
    if !(radius > 0.0 && length > 0.0 && radius.is_finite() && length.is_finite()) {
        return Err(MeshError::InvalidParam("cylinder radius and length must be positive"));
    }
    if sides < 3 {
        return Err(MeshError::InvalidParam("cylinder needs at least 3 sides"));
    }
    let mut vertices = Vec::with_capacity(2 * sides + 2);
    for z in [0.0, length] {
        for k in 0..sides {
            let (s, c) = libm::sincos(TAU * k as f64 / sides as f64);
            vertices.push(Vec3::new(radius * c, radius * s, z));
        }
    }
    let bottom = vertices.len() as u32;
    vertices.push(Vec3::zeros());
    let top = vertices.len() as u32;
    vertices.push(Vec3::new(0.0, 0.0, length));
    let mut triangles = Vec::with_capacity(4 * sides);
    for k in 0..sides {
        let a = k as u32;
        let b = ((k + 1) % sides) as u32;
        let c = a + sides as u32;
        let d = b + sides as u32;
        triangles.push([a, b, d]);
        triangles.push([a, d, c]);
        triangles.push([bottom, b, a]);
        triangles.push([top, c, d]);
    }
    TriMesh::new(vertices, triangles, None)
}
