#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use surgpose::core::geometry::{rot_x, rot_z};
use surgpose::core::{Pose, Vec3};

#[derive(Debug, Clone)]
pub struct FixtureOpts {
    pub width: u32,
    pub height: u32,
    pub replays: u32,
    pub samples: usize,
    pub seed: u64,
    /// Moving tool that crosses in front of the needle.
    pub occluder: bool,
    /// Finer meshes, tens of thousands of triangles.
    pub heavy: bool,
    pub min_visibility: f64,
    /// Half-turn about the needle's bisector as a configured symmetry.
    pub needle_symmetry: bool,
}

impl Default for FixtureOpts {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            replays: 1,
            samples: 5,
            seed: 7,
            occluder: false,
            heavy: false,
            min_visibility: 0.0,
            needle_symmetry: false,
        }
    }
}

pub struct Fixture {
    pub dir: PathBuf,
    pub scene: PathBuf,
    pub trajectory: PathBuf,
    pub job: PathBuf,
    pub out: PathBuf,
}

pub fn pose_json(p: &Pose) -> Value {
    json!({ "R": p.rotation_row_major(), "t": p.translation_array() })
}

fn pose_flat(p: &Pose) -> Vec<f64> {
    p.rotation_row_major().iter().chain(p.translation_array().iter()).copied().collect()
}

pub fn needle_pose(k: usize) -> Pose {
    match k {
        0 => Pose::new(rot_x(-1.3), Vec3::new(-6.0, 2.0, 100.0)).unwrap(),
        _ => Pose::new(rot_x(-1.3) * rot_z(0.6), Vec3::new(6.0, -2.0, 95.0)).unwrap(),
    }
}

pub fn tool_pose(k: usize) -> Pose {
    let r = surgpose::core::geometry::rot_y(std::f64::consts::FRAC_PI_2);
    let y = if k == 0 { -12.0 } else { 12.0 };
    Pose::new(r, Vec3::new(-30.0, y, 80.0)).unwrap()
}

pub fn pad_pose() -> Pose {
    Pose::from_translation(Vec3::new(0.0, 0.0, 130.0))
}

pub fn scene_json(opts: &FixtureOpts) -> Value {
    let s = opts.width as f64 / 640.0;
    let (segments, (nx, ny), sides) = if opts.heavy { (512, (120, 90), 64) } else { (48, (8, 6), 16) };
    let symmetries = if opts.needle_symmetry {
        vec![pose_json(&Pose::new(surgpose::core::geometry::rot_z(std::f64::consts::PI), Vec3::zeros()).unwrap())]
    } else {
        vec![]
    };
    let mut instances = vec![json!({ "instance_id": 1, "obj_id": 1, "mesh": "needle", "pose": pose_json(&needle_pose(0)) })];
    if opts.occluder {
        instances.push(json!({ "instance_id": 2, "obj_id": 2, "mesh": "tool", "pose": pose_json(&tool_pose(0)) }));
    }
    instances.push(json!({ "instance_id": 3, "obj_id": 3, "mesh": "pad", "pose": pose_json(&pad_pose()) }));
    json!({
        "version": 1,
        "camera": { "fx": 600.0 * s, "fy": 600.0 * s, "cx": 320.0 * s, "cy": 240.0 * s, "width": opts.width, "height": opts.height },
        "ecm": { "joints": [0.0, 0.0, 20.0, 0.0] },
        "meshes": [
            { "name": "needle", "source": { "needle": { "arc_radius": 9.325, "tube_radius": 0.2, "arc_angle": std::f64::consts::PI, "segments": segments } },
              "material": { "ambient": [0.7, 0.7, 0.75], "diffuse": [0.7, 0.7, 0.75], "specular": [0.9, 0.9, 0.9], "shininess": 40.0 },
              "symmetries": symmetries },
            { "name": "tool", "source": { "cylinder": { "radius": 2.0, "length": 60.0, "sides": sides } }, "annotate": false },
            { "name": "pad", "source": { "plane": { "size_x": 160.0, "size_y": 120.0, "nx": nx, "ny": ny } }, "annotate": false,
              "material": { "ambient": [0.8, 0.4, 0.4], "diffuse": [0.8, 0.4, 0.4], "specular": [0.1, 0.1, 0.1], "shininess": 8.0 } }
        ],
        "instances": instances
    })
}

pub fn trajectory_json(opts: &FixtureOpts) -> Value {
    let mut instances = vec![json!({ "instance_id": 1, "obj_id": 1, "mesh": "needle" })];
    if opts.occluder {
        instances.push(json!({ "instance_id": 2, "obj_id": 2, "mesh": "tool" }));
    }
    instances.push(json!({ "instance_id": 3, "obj_id": 3, "mesh": "pad" }));
    let keyframe = |k: usize, t: f64, ecm: [f64; 4]| {
        let mut poses = serde_json::Map::new();
        poses.insert("1".into(), json!(pose_flat(&needle_pose(k))));
        if opts.occluder {
            poses.insert("2".into(), json!(pose_flat(&tool_pose(k))));
        }
        poses.insert("3".into(), json!(pose_flat(&pad_pose())));
        json!({ "t": t, "poses": poses, "ecm": ecm })
    };
    json!({
        "version": 1,
        "name": "fixture",
        "source": "test",
        "instances": instances,
        "keyframes": [keyframe(0, 0.0, [0.0, 0.0, 20.0, 0.0]), keyframe(1, 2.0, [0.05, -0.03, 25.0, 0.1])]
    })
}

pub fn write_json(path: &Path, v: &Value) {
    std::fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

impl Fixture {
    pub fn new(dir: &Path, opts: &FixtureOpts) -> Self {
        let scene = dir.join("scene.json");
        let trajectory = dir.join("trajectory.json");
        let job = dir.join("job.json");
        write_json(&scene, &scene_json(opts));
        write_json(&trajectory, &trajectory_json(opts));
        write_json(
            &job,
            &json!({
                "scene": "scene.json",
                "trajectory": "trajectory.json",
                "replays": opts.replays,
                "samples_per_replay": opts.samples,
                "seed": opts.seed,
                "min_visibility": opts.min_visibility,
                "out": "out"
            }),
        );
        Fixture { dir: dir.to_path_buf(), scene, trajectory, job, out: dir.join("out") }
    }

    pub fn load_job(&self) -> surgpose::config::GenerationJob {
        surgpose::config::GenerationJob::load(&self.job, None, None).unwrap()
    }
}

/// SHA-256 of every file below `root`, keyed by relative path.
pub fn tree_hashes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, Sha256::digest(std::fs::read(&p).unwrap()).to_vec());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// One digest over the whole tree.
pub fn tree_digest(root: &Path) -> String {
    let mut h = Sha256::new();
    for (path, digest) in tree_hashes(root) {
        h.update(path.as_bytes());
        h.update([0]);
        h.update(&digest);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Pose of GT frame `k` in the hand-built evaluation scenes.
pub fn eval_pose(k: u32) -> Pose {
    let w = Vec3::new(0.2 * k as f64, 0.5 - 0.1 * k as f64, 0.3);
    Pose::new(surgpose::core::geometry::exp_so3(&w), Vec3::new(k as f64, -2.0, 90.0 + k as f64)).unwrap()
}

/// A one-scene dataset (scene 0, obj 1 = procedural needle) with one GT
/// entry per frame and the given visibility fractions. Images are omitted.
pub fn write_eval_dataset(root: &Path, visib: &[f64], symmetric: bool) {
    use surgpose::bop::{BopSceneRecord, CameraRecord, GtInfoRecord, GtRecord, ModelRecord};
    let mut record = BopSceneRecord::default();
    for (k, v) in visib.iter().enumerate() {
        let k = k as u32;
        record.camera.insert(k, CameraRecord { cam_k: [600.0, 0.0, 320.0, 0.0, 600.0, 240.0, 0.0, 0.0, 1.0], depth_scale: 0.1 });
        record.gt.insert(k, vec![GtRecord::from_pose(&eval_pose(k), 1)]);
        let all = 1000u64;
        let visible = (v * all as f64).round() as u64;
        record.gt_info.insert(
            k,
            vec![GtInfoRecord {
                bbox_obj: [10, 10, 40, 40],
                bbox_visib: if visible > 0 { [10, 10, 40, 40] } else { [-1, -1, -1, -1] },
                px_count_all: all,
                px_count_visib: visible,
                visib_fract: visible as f64 / all as f64,
            }],
        );
    }
    surgpose::bop::write_scene(&root.join("test/000000"), &record, &BTreeMap::new()).unwrap();
    let mesh = surgpose::core::generate_needle_mesh(9.325, 0.2, std::f64::consts::PI, 32).unwrap();
    let symmetries = if symmetric {
        vec![Pose::new(rot_z(std::f64::consts::PI), Vec3::zeros()).unwrap()]
    } else {
        vec![]
    };
    let model = ModelRecord {
        diameter: surgpose::core::mesh_diameter(&mesh),
        mesh,
        symmetries: surgpose::core::SymmetrySet::new(symmetries),
    };
    surgpose::bop::write_models(&root.join("models"), &BTreeMap::from([(1, model)])).unwrap();
}
