use alloc::sync::Arc;

use crate::geometry::Pose;
use crate::mesh::TriMesh;

/// Blinn-Phong surface coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub ambient: [f64; 3],
    pub diffuse: [f64; 3],
    pub specular: [f64; 3],
    pub shininess: f64,
}

impl Default for Material {
    fn default() -> Self {
        Self { ambient: [0.6; 3], diffuse: [0.6; 3], specular: [0.2; 3], shininess: 16.0 }
    }
}

impl Material {
    pub fn is_valid(&self) -> bool {
        let in_unit = |c: &[f64; 3]| c.iter().all(|v| (0.0..=1.0).contains(v));
        in_unit(&self.ambient)
            && in_unit(&self.diffuse)
            && in_unit(&self.specular)
            && self.shininess > 0.0
            && self.shininess.is_finite()
    }
}

/// One placed object. `instance_id` is the value written to the id buffer.
#[derive(Debug, Clone)]
pub struct SceneInstance {
    pub instance_id: u32,
    pub obj_id: u32,
    pub mesh: Arc<TriMesh>,
    pub pose_world: Pose,
    pub material: Material,
}
