//! JSON documents: scene configuration, trajectory files and generation jobs.
//!
//! Joint values are always in native units: radians for yaw, pitch and roll,
//! millimetres for insertion. Relative file paths resolve against the
//! directory of the document that names them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use surgpose_core::geometry::{is_rotation, nearest_rotation, orthonormality_error};
use surgpose_core::kinematics::JOINT_COUNT;
use surgpose_core::mesh::{generate_cylinder, generate_plane};
use surgpose_core::trajectory::{check_keyframe, validate_instances, TrajectoryInstance};
use surgpose_core::{
    generate_needle_mesh, CameraModel, DirectionalLight, EcmRig, JointLimits, Keyframe, LightSpec, Mat3, Material,
    Pose, SymmetrySet, Trajectory, TriMesh, Vec3, ViewpointRandomization,
};

use crate::error::{read_to_string, write_file, Error, Result};
use crate::mesh_io::load_mesh;

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_DEPTH_SCALE: f64 = 0.1;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 10.0;

/// Rotations within this distance of orthonormal are snapped to the nearest
/// rotation when read from hand-written documents.
const LENIENT_ROTATION_TOL: f64 = 1e-6;

pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        // serde_json appends " at line L column C"; keep the message short
        let msg = msg.split(" at line ").next().unwrap_or(&msg).to_string();
        Error::parse(path, e.line(), msg)
    })
}

pub(crate) fn pose_lenient(r: &[f64; 9], t: &[f64; 3]) -> std::result::Result<Pose, String> {
    let m = Mat3::from_row_slice(r);
    let t = Vec3::from(*t);
    if is_rotation(&m, 1e-9) {
        return Pose::new(m, t).map_err(|e| e.to_string());
    }
    if orthonormality_error(&m) <= LENIENT_ROTATION_TOL && m.determinant() > 0.0 {
        return Pose::new(nearest_rotation(&m), t).map_err(|e| e.to_string());
    }
    Err(format!("not a rotation (orthonormality error {:.3e}, det {:.6})", orthonormality_error(&m), m.determinant()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
}

impl PoseJson {
    pub fn from_pose(p: &Pose) -> Self {
        Self { r: p.rotation_row_major(), t: p.translation_array() }
    }

    pub fn to_pose(&self) -> std::result::Result<Pose, String> {
        pose_lenient(&self.r, &self.t)
    }
}

impl Default for PoseJson {
    fn default() -> Self {
        Self::from_pose(&Pose::identity())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraJson {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_near_clip")]
    pub near_clip: f64,
}

fn default_near_clip() -> f64 {
    CameraModel::DEFAULT_NEAR_CLIP
}

impl CameraJson {
    pub fn from_camera(c: &CameraModel) -> Self {
        Self { fx: c.fx(), fy: c.fy(), cx: c.cx(), cy: c.cy(), width: c.width(), height: c.height(), near_clip: c.near_clip() }
    }

    pub fn to_camera(&self) -> std::result::Result<CameraModel, String> {
        CameraModel::with_near_clip(self.fx, self.fy, self.cx, self.cy, self.width, self.height, self.near_clip)
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EcmJson {
    #[serde(default)]
    pub base_pose: PoseJson,
    /// `[lo, hi]` per joint.
    #[serde(default = "default_limits")]
    pub limits: [[f64; 2]; JOINT_COUNT],
    /// Joint values the service starts from.
    #[serde(default)]
    pub joints: [f64; JOINT_COUNT],
}

fn default_limits() -> [[f64; 2]; JOINT_COUNT] {
    JointLimits::default().0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSource {
    File(PathBuf),
    Needle { arc_radius: f64, tube_radius: f64, arc_angle: f64, segments: usize },
    Plane { size_x: f64, size_y: f64, nx: usize, ny: usize },
    Cylinder { radius: f64, length: f64, sides: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialJson {
    pub ambient: [f64; 3],
    pub diffuse: [f64; 3],
    pub specular: [f64; 3],
    pub shininess: f64,
}

impl Default for MaterialJson {
    fn default() -> Self {
        let m = Material::default();
        Self { ambient: m.ambient, diffuse: m.diffuse, specular: m.specular, shininess: m.shininess }
    }
}

impl From<MaterialJson> for Material {
    fn from(m: MaterialJson) -> Self {
        Material { ambient: m.ambient, diffuse: m.diffuse, specular: m.specular, shininess: m.shininess }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshJson {
    pub name: String,
    pub source: MeshSource,
    #[serde(default)]
    pub material: MaterialJson,
    /// Annotated meshes get GT entries and masks; others only occlude.
    #[serde(default = "yes")]
    pub annotate: bool,
    /// Symmetry transforms besides the identity.
    #[serde(default)]
    pub symmetries: Vec<PoseJson>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizationJson {
    /// Half-widths of the uniform joint offsets (rad, rad, mm, rad).
    #[serde(default = "default_offsets")]
    pub offset_bounds: [f64; JOINT_COUNT],
    #[serde(default = "default_cone")]
    pub light_cone_deg: f64,
    #[serde(default = "default_intensity")]
    pub intensity_range: [f64; 2],
    #[serde(default = "default_ambient")]
    pub ambient: [f64; 3],
}

fn default_offsets() -> [f64; JOINT_COUNT] {
    ViewpointRandomization::default().offset_bounds
}
fn default_cone() -> f64 {
    ViewpointRandomization::default().light_cone_deg
}
fn default_intensity() -> [f64; 2] {
    ViewpointRandomization::default().intensity_range
}
fn default_ambient() -> [f64; 3] {
    ViewpointRandomization::default().ambient
}

impl Default for RandomizationJson {
    fn default() -> Self {
        let r = ViewpointRandomization::default();
        Self {
            offset_bounds: r.offset_bounds,
            light_cone_deg: r.light_cone_deg,
            intensity_range: r.intensity_range,
            ambient: r.ambient,
        }
    }
}

impl RandomizationJson {
    pub fn with_seed(&self, seed: u64) -> ViewpointRandomization {
        ViewpointRandomization {
            offset_bounds: self.offset_bounds,
            light_cone_deg: self.light_cone_deg,
            intensity_range: self.intensity_range,
            ambient: self.ambient,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceJson {
    pub instance_id: u32,
    pub obj_id: u32,
    pub mesh: String,
    #[serde(default)]
    pub pose: PoseJson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightJson {
    pub direction: [f64; 3],
    pub intensity: [f64; 3],
}

/// Fixed lighting for previews; generation samples its own per replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightingJson {
    pub lights: Vec<LightJson>,
    pub ambient: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfigJson {
    pub version: u32,
    pub camera: CameraJson,
    #[serde(default = "default_ecm")]
    pub ecm: EcmJson,
    pub meshes: Vec<MeshJson>,
    #[serde(default)]
    pub randomization: RandomizationJson,
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
    #[serde(default)]
    pub preview_lighting: Option<LightingJson>,
    /// Initial placement used by the service.
    #[serde(default)]
    pub instances: Vec<InstanceJson>,
}

fn default_ecm() -> EcmJson {
    EcmJson { base_pose: PoseJson::default(), limits: default_limits(), joints: [0.0; JOINT_COUNT] }
}

fn default_depth_scale() -> f64 {
    DEFAULT_DEPTH_SCALE
}

#[derive(Debug, Clone)]
pub struct MeshEntry {
    pub name: String,
    pub mesh: Arc<TriMesh>,
    pub material: Material,
    pub annotate: bool,
    pub symmetries: SymmetrySet,
}

/// A loaded and validated scene configuration.
#[derive(Debug, Clone)]
pub struct SceneConfig {
    pub camera: CameraModel,
    pub rig: EcmRig,
    pub meshes: BTreeMap<String, MeshEntry>,
    pub randomization: RandomizationJson,
    pub depth_scale: f64,
    pub preview_lights: LightSpec,
    pub instances: Vec<(TrajectoryInstance, Pose)>,
}

impl SceneConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let doc: SceneConfigJson = parse_json(path, &text)?;
        Self::from_json(path, &doc)
    }

    /// `path` locates the document for relative mesh paths and messages.
    pub fn from_json(path: &Path, doc: &SceneConfigJson) -> Result<Self> {
        let schema = |key: &str, msg: String| Error::schema(path, key, msg);
        if doc.version != FORMAT_VERSION {
            return Err(schema("version", format!("unsupported version {}, expected {FORMAT_VERSION}", doc.version)));
        }
        let camera = doc.camera.to_camera().map_err(|m| schema("camera", m))?;
        let base_pose = doc.ecm.base_pose.to_pose().map_err(|m| schema("ecm.base_pose", m))?;
        let limits = JointLimits(doc.ecm.limits);
        limits.validate().map_err(|e| schema("ecm.limits", e.to_string()))?;
        let rig = EcmRig::new(base_pose, doc.ecm.joints, limits).map_err(|e| schema("ecm.joints", e.to_string()))?;
        if !(doc.depth_scale > 0.0 && doc.depth_scale.is_finite()) {
            return Err(schema("depth_scale", "must be positive".into()));
        }
        doc.randomization.with_seed(0).validate().map_err(|m| schema("randomization", m.into()))?;

        let base_dir = path.parent().unwrap_or(Path::new("."));
        let mut meshes = BTreeMap::new();
        for (i, m) in doc.meshes.iter().enumerate() {
            let key = format!("meshes[{i}]");
            let mesh = match &m.source {
                MeshSource::File(p) => load_mesh(&base_dir.join(p))?,
                MeshSource::Needle { arc_radius, tube_radius, arc_angle, segments } => {
                    generate_needle_mesh(*arc_radius, *tube_radius, *arc_angle, *segments)
                        .map_err(|e| schema(&format!("{key}.source"), e.to_string()))?
                }
                MeshSource::Plane { size_x, size_y, nx, ny } => {
                    generate_plane(*size_x, *size_y, *nx, *ny).map_err(|e| schema(&format!("{key}.source"), e.to_string()))?
                }
                MeshSource::Cylinder { radius, length, sides } => {
                    generate_cylinder(*radius, *length, *sides).map_err(|e| schema(&format!("{key}.source"), e.to_string()))?
                }
            };
            let material = Material::from(m.material);
            if !material.is_valid() {
                return Err(schema(&format!("{key}.material"), "channels must be in [0, 1] and shininess > 0".into()));
            }
            let symmetries = m
                .symmetries
                .iter()
                .enumerate()
                .map(|(k, s)| s.to_pose().map_err(|msg| schema(&format!("{key}.symmetries[{k}]"), msg)))
                .collect::<Result<Vec<_>>>()?;
            let entry = MeshEntry {
                name: m.name.clone(),
                mesh: Arc::new(mesh),
                material,
                annotate: m.annotate,
                symmetries: SymmetrySet::new(symmetries),
            };
            if meshes.insert(m.name.clone(), entry).is_some() {
                return Err(schema(&format!("{key}.name"), format!("duplicate mesh name {:?}", m.name)));
            }
        }

        let preview_lights = match &doc.preview_lighting {
            None => LightSpec::default(),
            Some(l) => {
                let spec = LightSpec {
                    lights: l
                        .lights
                        .iter()
                        .map(|d| DirectionalLight { direction: Vec3::from(d.direction).normalize(), intensity: d.intensity })
                        .collect(),
                    ambient: l.ambient,
                };
                if !spec.is_valid() {
                    return Err(schema("preview_lighting", "directions must be non-zero, intensities non-negative".into()));
                }
                spec
            }
        };

        let mut instances = Vec::new();
        for (i, inst) in doc.instances.iter().enumerate() {
            let key = format!("instances[{i}]");
            if !meshes.contains_key(&inst.mesh) {
                return Err(schema(&format!("{key}.mesh"), format!("unknown mesh {:?}", inst.mesh)));
            }
            let pose = inst.pose.to_pose().map_err(|m| schema(&format!("{key}.pose"), m))?;
            instances.push((TrajectoryInstance { instance_id: inst.instance_id, obj_id: inst.obj_id, mesh: inst.mesh.clone() }, pose));
        }
        let plain: Vec<_> = instances.iter().map(|(i, _)| i.clone()).collect();
        validate_instances(&plain).map_err(|e| schema("instances", e.to_string()))?;
        check_obj_ids(&plain).map_err(|m| schema("instances", m))?;

        Ok(Self {
            camera,
            rig,
            meshes,
            randomization: doc.randomization,
            depth_scale: doc.depth_scale,
            preview_lights,
            instances,
        })
    }

    pub fn mesh(&self, name: &str) -> Option<&MeshEntry> {
        self.meshes.get(name)
    }

    /// Checks that every instance names a known mesh with a consistent obj_id.
    pub fn check_instances(&self, instances: &[TrajectoryInstance]) -> std::result::Result<(), String> {
        for inst in instances {
            if !self.meshes.contains_key(&inst.mesh) {
                return Err(format!("instance {} uses unknown mesh {:?}", inst.instance_id, inst.mesh));
            }
            if inst.obj_id == 0 {
                return Err(format!("instance {} has obj_id 0", inst.instance_id));
            }
        }
        check_obj_ids(instances)
    }
}

/// One obj_id must always mean one mesh.
pub fn check_obj_ids(instances: &[TrajectoryInstance]) -> std::result::Result<(), String> {
    let mut seen: BTreeMap<u32, &str> = BTreeMap::new();
    for inst in instances {
        if let Some(prev) = seen.insert(inst.obj_id, &inst.mesh) {
            if prev != inst.mesh {
                return Err(format!("obj_id {} is used for meshes {prev:?} and {:?}", inst.obj_id, inst.mesh));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryInstanceJson {
    pub instance_id: u32,
    pub obj_id: u32,
    pub mesh: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeJson {
    pub t: f64,
    /// Instance id → 9 row-major rotation values then 3 translation values.
    pub poses: BTreeMap<u32, Vec<f64>>,
    pub ecm: [f64; JOINT_COUNT],
}

/// Trajectory file contents. May hold fewer than two keyframes while being
/// authored; [`TrajectoryDoc::to_trajectory`] enforces the full invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryDoc {
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub source: String,
    pub instances: Vec<TrajectoryInstanceJson>,
    pub keyframes: Vec<KeyframeJson>,
}

impl TrajectoryDoc {
    pub fn empty(name: &str, instances: &[TrajectoryInstance]) -> Self {
        Self {
            version: FORMAT_VERSION,
            name: name.to_string(),
            source: "studio".to_string(),
            instances: instances
                .iter()
                .map(|i| TrajectoryInstanceJson { instance_id: i.instance_id, obj_id: i.obj_id, mesh: i.mesh.clone() })
                .collect(),
            keyframes: Vec::new(),
        }
    }

    pub fn from_trajectory(t: &Trajectory) -> Self {
        let mut doc = Self::empty(&t.name, t.instances());
        doc.source = t.source.clone();
        doc.keyframes = t.keyframes().iter().map(keyframe_json).collect();
        doc
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        parse_json(path, &text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        text.push('\n');
        write_file(path, text.as_bytes())
    }

    pub fn core_instances(&self) -> Vec<TrajectoryInstance> {
        self.instances
            .iter()
            .map(|i| TrajectoryInstance { instance_id: i.instance_id, obj_id: i.obj_id, mesh: i.mesh.clone() })
            .collect()
    }

    /// Converts keyframe `index`, reporting problems with their key path.
    pub fn keyframe(&self, index: usize) -> std::result::Result<Keyframe, (String, String)> {
        let kf = &self.keyframes[index];
        let mut poses = BTreeMap::new();
        for (id, values) in &kf.poses {
            let key = format!("keyframes[{index}].poses.{id}");
            let arr: [f64; 12] = values
                .as_slice()
                .try_into()
                .map_err(|_| (key.clone(), format!("expected 12 numbers, got {}", values.len())))?;
            let r: [f64; 9] = arr[..9].try_into().expect("9 values");
            let t: [f64; 3] = arr[9..].try_into().expect("3 values");
            poses.insert(*id, pose_lenient(&r, &t).map_err(|m| (key, m))?);
        }
        Ok(Keyframe { time: kf.t, poses, ecm: kf.ecm })
    }

    /// Checks everything except the minimum keyframe count.
    pub fn check_partial(&self) -> std::result::Result<Vec<Keyframe>, (String, String)> {
        if self.version != FORMAT_VERSION {
            return Err(("version".into(), format!("unsupported version {}", self.version)));
        }
        let instances = self.core_instances();
        validate_instances(&instances).map_err(|e| ("instances".to_string(), e.to_string()))?;
        check_obj_ids(&instances).map_err(|m| ("instances".to_string(), m))?;
        let mut out: Vec<Keyframe> = Vec::with_capacity(self.keyframes.len());
        for i in 0..self.keyframes.len() {
            let kf = self.keyframe(i)?;
            check_keyframe(&instances, i, &kf, out.last().map(|p| p.time))
                .map_err(|e| (format!("keyframes[{i}]"), e.to_string()))?;
            out.push(kf);
        }
        Ok(out)
    }

    pub fn to_trajectory(&self) -> std::result::Result<Trajectory, (String, String)> {
        let keyframes = self.check_partial()?;
        Trajectory::new(self.name.clone(), self.source.clone(), self.core_instances(), keyframes)
            .map_err(|e| ("keyframes".to_string(), e.to_string()))
    }
}

pub fn keyframe_json(kf: &Keyframe) -> KeyframeJson {
    KeyframeJson {
        t: kf.time,
        poses: kf
            .poses
            .iter()
            .map(|(id, p)| (*id, p.rotation_row_major().iter().chain(p.translation_array().iter()).copied().collect()))
            .collect(),
        ecm: kf.ecm,
    }
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    TrajectoryDoc::load(path)?.to_trajectory().map_err(|(k, m)| Error::schema(path, k, m))
}

/// How instants are chosen along the trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    Count(usize),
    RateHz(f64),
}

impl Sampling {
    pub fn times(&self, t: &Trajectory) -> Vec<f64> {
        match *self {
            Sampling::Count(n) => t.sample_times_count(n),
            Sampling::RateHz(hz) => t.sample_times_rate(hz),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobJson {
    pub scene: PathBuf,
    pub trajectory: PathBuf,
    pub replays: u32,
    #[serde(default)]
    pub samples_per_replay: Option<usize>,
    #[serde(default)]
    pub sample_rate_hz: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the scene's randomization bounds.
    #[serde(default)]
    pub randomization: Option<RandomizationJson>,
    #[serde(default)]
    pub min_visibility: f64,
    #[serde(default)]
    pub scene_id_base: u32,
    #[serde(default = "default_split")]
    pub split: String,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_split() -> String {
    "train".to_string()
}

/// A fully resolved generation job.
#[derive(Debug, Clone)]
pub struct GenerationJob {
    pub scene: SceneConfig,
    pub trajectory: Trajectory,
    /// File name recorded in the manifest.
    pub trajectory_file: String,
    pub replays: u32,
    pub sampling: Sampling,
    pub randomization: ViewpointRandomization,
    pub min_visibility: f64,
    pub scene_id_base: u32,
    pub split: String,
    pub out: PathBuf,
}

impl GenerationJob {
    /// Loads a job file. `out` and `seed` override the file's values.
    pub fn load(path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<Self> {
        let text = read_to_string(path)?;
        let doc: JobJson = parse_json(path, &text)?;
        let base_dir = path.parent().unwrap_or(Path::new("."));
        let scene = SceneConfig::load(&base_dir.join(&doc.scene))?;
        let trajectory_path = base_dir.join(&doc.trajectory);
        let trajectory = load_trajectory(&trajectory_path)?;
        let out = match (out, &doc.out) {
            (Some(o), _) => o,
            (None, Some(o)) => base_dir.join(o),
            (None, None) => return Err(Error::schema(path, "out", "no output directory given (set \"out\" or pass --out)")),
        };
        let sampling = match (doc.samples_per_replay, doc.sample_rate_hz) {
            (Some(_), Some(_)) => {
                return Err(Error::schema(path, "samples_per_replay", "give samples_per_replay or sample_rate_hz, not both"))
            }
            (Some(n), None) => Sampling::Count(n),
            (None, Some(hz)) => Sampling::RateHz(hz),
            (None, None) => Sampling::RateHz(DEFAULT_SAMPLE_RATE_HZ),
        };
        let randomization = doc.randomization.unwrap_or(scene.randomization).with_seed(seed.unwrap_or(doc.seed));
        let job = GenerationJob {
            scene,
            trajectory,
            trajectory_file: doc
                .trajectory
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
            replays: doc.replays,
            sampling,
            randomization,
            min_visibility: doc.min_visibility,
            scene_id_base: doc.scene_id_base,
            split: doc.split,
            out,
        };
        job.validate().map_err(|(k, m)| Error::schema(path, k, m))?;
        Ok(job)
    }

    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        if self.replays == 0 {
            return Err(("replays".into(), "must be at least 1".into()));
        }
        match self.sampling {
            Sampling::Count(0) => return Err(("samples_per_replay".into(), "must be at least 1".into())),
            Sampling::RateHz(hz) if !(hz > 0.0 && hz.is_finite()) => {
                return Err(("sample_rate_hz".into(), "must be positive".into()))
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.min_visibility) {
            return Err(("min_visibility".into(), "must be in [0, 1]".into()));
        }
        if self.split.is_empty() || self.split.contains(['/', '\\']) || self.split.starts_with('.') {
            return Err(("split".into(), format!("invalid split name {:?}", self.split)));
        }
        self.randomization.validate().map_err(|m| ("randomization".to_string(), m.to_string()))?;
        if (self.scene_id_base as u64) + (self.replays as u64) > 1_000_000 {
            return Err(("scene_id_base".into(), "scene ids must stay below 1000000".into()));
        }
        self.scene.check_instances(self.trajectory.instances()).map_err(|m| ("trajectory.instances".to_string(), m))?;
        if !self.trajectory.instances().iter().any(|i| self.scene.meshes[&i.mesh].annotate) {
            return Err(("trajectory.instances".into(), "no instance uses an annotated mesh".into()));
        }
        for (k, kf) in self.trajectory.keyframes().iter().enumerate() {
            self.scene
                .rig
                .limits
                .check(&kf.ecm)
                .map_err(|e| (format!("trajectory.keyframes[{k}].ecm"), e.to_string()))?;
        }
        Ok(())
    }

    pub fn sample_times(&self) -> Vec<f64> {
        self.sampling.times(&self.trajectory)
    }
}
