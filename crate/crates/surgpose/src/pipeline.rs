//! Dataset generation: trajectory replays under randomized viewpoints,
//! rendered and annotated frame by frame into a BOP directory tree.
//!
//! Output layout under the job's output root:
//!
//! ```text
//! models/models_info.json, models/obj_XXXXXX.ply
//! <split>/<scene_id:06>/scene_camera.json, scene_gt.json, scene_gt_info.json,
//!                       rgb/, depth/, mask/, mask_visib/
//! manifest.json
//! ```
//!
//! `manifest.json` is removed when a run starts and written after every
//! scene is complete, so a tree without it is an interrupted run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use surgpose_core::kinematics::{JOINT_COUNT, JOINT_NAMES};
use surgpose_core::trajectory::TrajectoryInstance;
use surgpose_core::{
    compute_gt_info, ecm_forward_kinematics, frame_filter, mesh_diameter, render_frame, sample_viewpoint, CameraModel,
    DropReason, EcmRig, FrameBuffers, GtInfo, LightSpec, Pose, SceneInstance,
};

use crate::bop::{self, BopSceneRecord, CameraRecord, FrameImages, GtInfoRecord, GtRecord, ModelRecord};
use crate::config::{GenerationJob, RandomizationJson, SceneConfig};
use crate::error::{write_file, Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "surgpose-dataset";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A rendered frame with annotations for every annotated instance, in
/// instance order.
pub struct AnnotatedFrame {
    pub full: FrameBuffers,
    pub objects: Vec<(GtInfo, FrameBuffers)>,
}

/// Places the instances in the camera frame, renders the scene, and renders
/// each annotated instance alone for its projected mask.
///
/// Rendering happens in camera coordinates so the GT pose written to disk is
/// exactly the pose the rasterizer used.
pub fn render_annotated(
    scene: &SceneConfig,
    instances: &[(TrajectoryInstance, Pose)],
    cam_pose: &Pose,
    camera: &CameraModel,
    lights: &LightSpec,
) -> Result<AnnotatedFrame> {
    let placed = instances
        .iter()
        .map(|(inst, world)| {
            let entry = scene
                .mesh(&inst.mesh)
                .ok_or_else(|| Error::Config(format!("instance {} uses unknown mesh {:?}", inst.instance_id, inst.mesh)))?;
            Ok((
                SceneInstance {
                    instance_id: inst.instance_id,
                    obj_id: inst.obj_id,
                    mesh: entry.mesh.clone(),
                    pose_world: world.relative_to(cam_pose),
                    material: entry.material,
                },
                entry.annotate,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let scene_cam: Vec<SceneInstance> = placed.iter().map(|(s, _)| s.clone()).collect();
    let full = render_frame(&scene_cam, &Pose::identity(), camera, lights);
    let mut objects = Vec::new();
    for (inst, annotate) in &placed {
        if !annotate {
            continue;
        }
        let alone = render_frame(std::slice::from_ref(inst), &Pose::identity(), camera, lights);
        let info = compute_gt_info(&full, &alone, inst, &inst.pose_world)?;
        objects.push((info, alone));
    }
    Ok(AnnotatedFrame { full, objects })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCamera {
    pub cam_k: [f64; 9],
    pub width: u32,
    pub height: u32,
    pub near_clip: f64,
    pub depth_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTrajectory {
    pub file: String,
    pub name: String,
    pub source: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestObject {
    pub obj_id: u32,
    pub mesh: String,
    pub diameter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestLight {
    /// Camera frame, pointing towards the light.
    pub direction: [f64; 3],
    pub intensity: f64,
    pub ambient: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub im_id: u32,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFrame {
    pub im_id: u32,
    pub time: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestScene {
    pub scene_id: u32,
    pub replay_index: u32,
    /// Relative to the dataset root.
    pub path: String,
    pub trajectory: String,
    /// Joint offsets as drawn (rad, rad, mm, rad).
    pub joint_offsets: [f64; JOINT_COUNT],
    /// Frames in which each joint had to be clamped into its limits.
    pub clamped_frames: [u32; JOINT_COUNT],
    pub warnings: Vec<String>,
    pub light: ManifestLight,
    pub frames_total: u32,
    pub frames_kept: u32,
    pub frames_dropped: u32,
    pub kept: Vec<FrameRef>,
    pub dropped: Vec<DroppedFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub tool_version: String,
    pub seed: u64,
    pub split: String,
    pub replays: u32,
    pub samples_per_replay: u32,
    pub min_visibility: f64,
    pub camera: ManifestCamera,
    pub ecm_base_pose: crate::config::PoseJson,
    pub ecm_limits: [[f64; 2]; JOINT_COUNT],
    pub randomization: RandomizationJson,
    pub trajectory: ManifestTrajectory,
    pub objects: Vec<ManifestObject>,
    pub scenes: Vec<ManifestScene>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::error::read_to_string(path)?;
        crate::config::parse_json(path, &text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// Frame counters readable while a job runs.
#[derive(Debug, Default)]
pub struct Progress {
    pub frames_done: AtomicU64,
    pub frames_total: AtomicU64,
}

impl Progress {
    pub fn snapshot(&self) -> (u64, u64) {
        (self.frames_done.load(Ordering::SeqCst), self.frames_total.load(Ordering::SeqCst))
    }
}

enum FrameOutcome {
    Kept { im_id: u32, time: f64, gt: Vec<(GtRecord, GtInfoRecord)>, clamped: [bool; JOINT_COUNT] },
    Dropped { im_id: u32, time: f64, reason: DropReason, clamped: [bool; JOINT_COUNT] },
}

/// Rig joints for one frame: trajectory joints plus the replay offsets,
/// clamped into the limits.
pub fn frame_joints(rig: &EcmRig, nominal: &[f64; JOINT_COUNT], offsets: &[f64; JOINT_COUNT]) -> ([f64; JOINT_COUNT], [bool; JOINT_COUNT]) {
    let raw: [f64; JOINT_COUNT] = std::array::from_fn(|i| nominal[i] + offsets[i]);
    let joints = rig.limits.clamp(&raw);
    (joints, std::array::from_fn(|i| joints[i] != raw[i]))
}

/// Camera pose and model-to-camera poses of every instance at `time` for a
/// replay with the given joint offsets.
pub fn frame_state(
    job: &GenerationJob,
    offsets: &[f64; JOINT_COUNT],
    time: f64,
) -> Result<(Pose, Vec<(TrajectoryInstance, Pose)>, [bool; JOINT_COUNT])> {
    let state = job.trajectory.sample(time)?;
    let (joints, clamped) = frame_joints(&job.scene.rig, &state.ecm, offsets);
    let cam_pose = ecm_forward_kinematics(&job.scene.rig.with_joints(joints)?)?;
    let instances = job
        .trajectory
        .instances()
        .iter()
        .map(|i| (i.clone(), state.poses[&i.instance_id]))
        .collect();
    Ok((cam_pose, instances, clamped))
}

fn clear_scene_dir(dir: &Path) -> Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    let looks_like_scene = [bop::SCENE_GT, bop::SCENE_CAMERA, bop::SCENE_GT_INFO, "rgb", "depth", "mask", "mask_visib"]
        .iter()
        .any(|n| dir.join(n).exists());
    let empty = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_none();
    if !(looks_like_scene || empty) {
        return Err(Error::Config(format!("{} exists and is not a scene directory; refusing to overwrite", dir.display())));
    }
    std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn models_for(job: &GenerationJob) -> BTreeMap<u32, (String, ModelRecord)> {
    let mut out = BTreeMap::new();
    for inst in job.trajectory.instances() {
        let entry = &job.scene.meshes[&inst.mesh];
        if !entry.annotate || out.contains_key(&inst.obj_id) {
            continue;
        }
        let record = ModelRecord {
            mesh: (*entry.mesh).clone(),
            diameter: mesh_diameter(&entry.mesh),
            symmetries: entry.symmetries.clone(),
        };
        out.insert(inst.obj_id, (inst.mesh.clone(), record));
    }
    out
}

/// Runs a job on the current rayon pool, logging one line per replay.
pub fn run_generation(job: &GenerationJob) -> Result<Manifest> {
    run_generation_with(job, &Progress::default(), &mut |s| {
        log::info!(
            "scene {:06} (replay {}): {} frames kept, {} dropped",
            s.scene_id, s.replay_index, s.frames_kept, s.frames_dropped
        );
    })
}

pub fn run_generation_with(
    job: &GenerationJob,
    progress: &Progress,
    on_replay: &mut dyn FnMut(&ManifestScene),
) -> Result<Manifest> {
    job.validate().map_err(|(k, m)| Error::Config(format!("{k}: {m}")))?;
    let out = &job.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let manifest_path = out.join(MANIFEST);
    if manifest_path.exists() {
        std::fs::remove_file(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    }

    let times = job.sample_times();
    let per_replay = times.len() as u32;
    progress.frames_total.store(u64::from(per_replay) * u64::from(job.replays), Ordering::SeqCst);
    progress.frames_done.store(0, Ordering::SeqCst);

    let models = models_for(job);
    let records: BTreeMap<u32, ModelRecord> = models.iter().map(|(k, (_, m))| (*k, m.clone())).collect();
    bop::write_models(&out.join("models"), &records)?;

    let camera = &job.scene.camera;
    let camera_record = CameraRecord { cam_k: camera.k_row_major(), depth_scale: job.scene.depth_scale };
    let nominal_rig = job.scene.rig.with_joints(job.trajectory.keyframes()[0].ecm)?;

    let mut scenes = Vec::with_capacity(job.replays as usize);
    for replay in 0..job.replays {
        let scene_id = job.scene_id_base + replay;
        let rel = format!("{}/{scene_id:06}", job.split);
        let dir: PathBuf = out.join(&rel);
        clear_scene_dir(&dir)?;
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

        let sample = sample_viewpoint(&nominal_rig, &job.randomization, u64::from(replay))?;
        let offsets = sample.offsets;
        let lights = sample.light.clone();

        let outcomes = times
            .par_iter()
            .enumerate()
            .map(|(k, &time)| {
                let outcome = render_and_write(job, &dir, k as u32, time, &offsets, &lights, &camera_record);
                progress.frames_done.fetch_add(1, Ordering::SeqCst);
                outcome
            })
            .collect::<Result<Vec<_>>>()?;

        let mut record = BopSceneRecord::default();
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        let mut clamped_frames = [0u32; JOINT_COUNT];
        for o in outcomes {
            let clamped = match o {
                FrameOutcome::Kept { im_id, time, gt, clamped } => {
                    record.camera.insert(im_id, camera_record);
                    record.gt.insert(im_id, gt.iter().map(|g| g.0).collect());
                    record.gt_info.insert(im_id, gt.iter().map(|g| g.1).collect());
                    kept.push(FrameRef { im_id, time });
                    clamped
                }
                FrameOutcome::Dropped { im_id, time, reason, clamped } => {
                    dropped.push(DroppedFrame { im_id, time, reason: reason.as_str().to_string() });
                    clamped
                }
            };
            for (c, f) in clamped_frames.iter_mut().zip(clamped) {
                *c += u32::from(f);
            }
        }
        bop::write_scene_index(&dir, &record)?;

        let warnings = clamped_frames
            .iter()
            .zip(JOINT_NAMES)
            .filter(|(n, _)| **n > 0)
            .map(|(n, name)| format!("{name} clamped to its joint limit in {n} of {per_replay} frames"))
            .collect::<Vec<_>>();
        for w in &warnings {
            log::warn!("scene {scene_id:06}: {w}");
        }
        let entry = ManifestScene {
            scene_id,
            replay_index: replay,
            path: rel,
            trajectory: job.trajectory.name.clone(),
            joint_offsets: offsets,
            clamped_frames,
            warnings,
            light: ManifestLight {
                direction: sample.light_direction.into(),
                intensity: sample.light_intensity,
                ambient: sample.light.ambient,
            },
            frames_total: per_replay,
            frames_kept: kept.len() as u32,
            frames_dropped: dropped.len() as u32,
            kept,
            dropped,
        };
        on_replay(&entry);
        scenes.push(entry);
    }

    let manifest = Manifest {
        format: MANIFEST_FORMAT.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        seed: job.randomization.seed,
        split: job.split.clone(),
        replays: job.replays,
        samples_per_replay: per_replay,
        min_visibility: job.min_visibility,
        camera: ManifestCamera {
            cam_k: camera.k_row_major(),
            width: camera.width(),
            height: camera.height(),
            near_clip: camera.near_clip(),
            depth_scale: job.scene.depth_scale,
        },
        ecm_base_pose: crate::config::PoseJson::from_pose(&job.scene.rig.base_pose),
        ecm_limits: job.scene.rig.limits.0,
        randomization: RandomizationJson {
            offset_bounds: job.randomization.offset_bounds,
            light_cone_deg: job.randomization.light_cone_deg,
            intensity_range: job.randomization.intensity_range,
            ambient: job.randomization.ambient,
        },
        trajectory: ManifestTrajectory {
            file: job.trajectory_file.clone(),
            name: job.trajectory.name.clone(),
            source: job.trajectory.source.clone(),
            start: job.trajectory.start_time(),
            end: job.trajectory.end_time(),
        },
        objects: models
            .iter()
            .map(|(obj_id, (mesh, m))| ManifestObject { obj_id: *obj_id, mesh: mesh.clone(), diameter: m.diameter })
            .collect(),
        scenes,
    };
    write_file(&manifest_path, manifest.to_json().as_bytes())?;
    Ok(manifest)
}

fn render_and_write(
    job: &GenerationJob,
    dir: &Path,
    im_id: u32,
    time: f64,
    offsets: &[f64; JOINT_COUNT],
    lights: &LightSpec,
    camera_record: &CameraRecord,
) -> Result<FrameOutcome> {
    let (cam_pose, instances, clamped) = frame_state(job, offsets, time)?;
    let frame = render_annotated(&job.scene, &instances, &cam_pose, &job.scene.camera, lights)?;
    for (info, _) in &frame.objects {
        if let Err(reason) = frame_filter(info, job.min_visibility) {
            return Ok(FrameOutcome::Dropped { im_id, time, reason, clamped });
        }
    }
    let masks: Vec<(u32, &FrameBuffers)> = frame.objects.iter().map(|(i, fb)| (i.instance_id, fb)).collect();
    let images = FrameImages::from_render(&frame.full, &masks, camera_record.depth_scale)?;
    bop::write_frame_images(dir, im_id, &images)?;
    let gt = frame
        .objects
        .iter()
        .map(|(info, _)| (GtRecord::from_pose(&info.pose_cam, info.obj_id), GtInfoRecord::from(info)))
        .collect();
    Ok(FrameOutcome::Kept { im_id, time, gt, clamped })
}
