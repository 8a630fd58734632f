//! Single-frame rendering of a live scene state, shared by the HTTP preview
//! endpoint and the `render` subcommand so both produce identical PNGs.

use serde::Serialize;
use surgpose_core::kinematics::JOINT_COUNT;
use surgpose_core::trajectory::TrajectoryInstance;
use surgpose_core::{ecm_forward_kinematics, GtInfo, Pose};

use crate::config::SceneConfig;
use crate::error::Result;
use crate::pipeline::render_annotated;
use crate::png_io;

pub struct Preview {
    pub png: Vec<u8>,
    pub objects: Vec<GtInfo>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GtSummary {
    pub instance_id: u32,
    pub obj_id: u32,
    pub visib_fract: f64,
    pub px_count_all: u64,
    pub px_count_visib: u64,
    pub bbox_obj: [i32; 4],
    pub bbox_visib: [i32; 4],
}

impl From<&GtInfo> for GtSummary {
    fn from(g: &GtInfo) -> Self {
        Self {
            instance_id: g.instance_id,
            obj_id: g.obj_id,
            visib_fract: g.visib_fract,
            px_count_all: g.px_count_all,
            px_count_visib: g.px_count_visib,
            bbox_obj: surgpose_core::annotate::bbox_array(g.bbox_obj),
            bbox_visib: surgpose_core::annotate::bbox_array(g.bbox_visib),
        }
    }
}

/// Renders the state with the scene's preview lighting. `size` rescales the
/// configured camera to another resolution with the same field of view.
pub fn render_preview(
    scene: &SceneConfig,
    instances: &[(TrajectoryInstance, Pose)],
    joints: &[f64; JOINT_COUNT],
    size: Option<(u32, u32)>,
) -> Result<Preview> {
    let camera = match size {
        Some((w, h)) if (w, h) != (scene.camera.width(), scene.camera.height()) => scene.camera.resized(w, h)?,
        _ => scene.camera,
    };
    let cam_pose = ecm_forward_kinematics(&scene.rig.with_joints(*joints)?)?;
    let frame = render_annotated(scene, instances, &cam_pose, &camera, &scene.preview_lights)?;
    let png = png_io::encode_rgb8(camera.width(), camera.height(), frame.full.rgb())?;
    Ok(Preview { png, objects: frame.objects.into_iter().map(|(g, _)| g).collect() })
}
