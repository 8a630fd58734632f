//! Dataset consistency checks.
//!
//! Every finding is collected into a [`ValidationReport`]; nothing here
//! aborts on the first problem. Besides the JSON invariants the checks
//! re-render each annotated object from `models/` with the stored pose and
//! intrinsics and compare the result with the stored masks and depth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use surgpose_core::{render_frame, BBox, CameraModel, LightSpec, Material, Pose, SceneInstance};

use crate::bop::{self, BopSceneRecord, ModelRecord};
use crate::pipeline::{Manifest, MANIFEST};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub scenes: usize,
    pub frames: usize,
    pub violations: Vec<Violation>,
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn add(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { location: location.into(), message: message.into() });
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} scenes, {} frames, {} violations", self.scenes, self.frames, self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

/// Validates a dataset root, a split directory or a single scene directory.
pub fn validate_dataset(root: &Path) -> ValidationReport {
    let mut report = ValidationReport::default();
    let scene_dirs = match bop::find_scene_dirs(root) {
        Ok(d) => d,
        Err(e) => {
            report.add(root.display().to_string(), e.to_string());
            return report;
        }
    };
    if scene_dirs.is_empty() {
        report.add(root.display().to_string(), "no scene directories found");
        return report;
    }

    let dataset_root = find_dataset_root(root);
    let manifest = dataset_root.as_ref().and_then(|r| {
        let p = r.join(MANIFEST);
        if !p.exists() {
            return None;
        }
        match Manifest::load(&p) {
            Ok(m) => Some(m),
            Err(e) => {
                report.add(p.display().to_string(), e.to_string());
                None
            }
        }
    });
    let models = dataset_root.as_ref().map(|r| r.join("models")).filter(|m| m.join(bop::MODELS_INFO).exists()).and_then(|m| {
        match bop::read_models(&m) {
            Ok(models) => Some(models),
            Err(e) => {
                report.add(m.display().to_string(), e.to_string());
                None
            }
        }
    });
    if models.is_none() {
        report.notes.push("no models directory; mask and depth re-rendering skipped".into());
    }
    if dataset_root.is_some() && manifest.is_none() && !dataset_root.as_ref().unwrap().join(MANIFEST).exists() {
        report.notes.push("no manifest.json; manifest checks skipped".into());
    }
    let near_clip = manifest.as_ref().map_or(CameraModel::DEFAULT_NEAR_CLIP, |m| m.camera.near_clip);

    let mut seen_scenes = BTreeMap::new();
    for dir in &scene_dirs {
        report.scenes += 1;
        let im_ids = validate_scene(dir, models.as_ref(), near_clip, manifest.as_ref(), &mut report);
        if let Some(id) = bop::scene_id_from_dir(dir) {
            seen_scenes.insert(id, (dir.clone(), im_ids));
        }
    }

    if let (Some(m), Some(root)) = (&manifest, &dataset_root) {
        check_manifest(m, root, &seen_scenes, &mut report);
    }
    report
}

fn find_dataset_root(start: &Path) -> Option<PathBuf> {
    let mut cur = Some(start);
    for _ in 0..3 {
        let dir = cur?;
        if dir.join(MANIFEST).exists() || dir.join("models").join(bop::MODELS_INFO).exists() {
            return Some(dir.to_path_buf());
        }
        cur = dir.parent();
    }
    None
}

fn check_manifest(m: &Manifest, root: &Path, on_disk: &BTreeMap<u32, (PathBuf, Option<BTreeSet<u32>>)>, report: &mut ValidationReport) {
    let loc = root.join(MANIFEST).display().to_string();
    let mut ids = BTreeSet::new();
    for s in &m.scenes {
        if !ids.insert(s.scene_id) {
            report.add(&loc, format!("scene_id {} listed twice", s.scene_id));
        }
        if s.frames_kept + s.frames_dropped != s.frames_total {
            report.add(&loc, format!("scene {}: kept {} + dropped {} != total {}", s.scene_id, s.frames_kept, s.frames_dropped, s.frames_total));
        }
        if s.frames_total != m.samples_per_replay {
            report.add(&loc, format!("scene {}: {} frames but {} samples per replay", s.scene_id, s.frames_total, m.samples_per_replay));
        }
        if s.kept.len() as u32 != s.frames_kept || s.dropped.len() as u32 != s.frames_dropped {
            report.add(&loc, format!("scene {}: frame lists do not match the counts", s.scene_id));
        }
        let Some((dir, im_ids)) = on_disk.get(&s.scene_id) else {
            report.add(&loc, format!("scene {} missing on disk", s.scene_id));
            continue;
        };
        if root.join(&s.path) != *dir {
            report.add(&loc, format!("scene {} expected at {}, found at {}", s.scene_id, s.path, dir.display()));
        }
        if let Some(im_ids) = im_ids {
            let listed: BTreeSet<u32> = s.kept.iter().map(|f| f.im_id).collect();
            if &listed != im_ids {
                report.add(&loc, format!("scene {}: kept frames {:?} do not match frames on disk {:?}", s.scene_id, listed, im_ids));
            }
        }
    }
    for id in on_disk.keys() {
        if !ids.contains(id) {
            report.add(&loc, format!("scene {id} on disk but not in the manifest"));
        }
    }
}

fn load_record(dir: &Path, report: &mut ValidationReport) -> Option<BopSceneRecord> {
    let mut record = BopSceneRecord::default();
    let mut ok = true;
    let mut load = |name: &str| -> Option<serde_json::Value> {
        let p = dir.join(name);
        let text = match std::fs::read_to_string(&p) {
            Ok(t) => t,
            Err(e) => {
                report.add(p.display().to_string(), e.to_string());
                return None;
            }
        };
        match crate::config::parse_json::<serde_json::Value>(&p, &text) {
            Ok(v) => Some(v),
            Err(e) => {
                report.add(p.display().to_string(), e.to_string());
                None
            }
        }
    };
    let cam = load(bop::SCENE_CAMERA);
    let gt = load(bop::SCENE_GT);
    let info = load(bop::SCENE_GT_INFO);
    macro_rules! parse {
        ($v:expr, $f:path, $name:expr, $field:ident) => {
            if let Some(v) = &$v {
                let p = dir.join($name);
                match $f(&p, v) {
                    Ok(x) => record.$field = x,
                    Err(e) => {
                        report.add(p.display().to_string(), e.to_string());
                        ok = false;
                    }
                }
            } else {
                ok = false;
            }
        };
    }
    parse!(cam, bop::parse_scene_camera, bop::SCENE_CAMERA, camera);
    parse!(gt, bop::parse_scene_gt, bop::SCENE_GT, gt);
    parse!(info, bop::parse_scene_gt_info, bop::SCENE_GT_INFO, gt_info);
    ok.then_some(record)
}

/// Returns the scene's im_ids when its indices parsed.
fn validate_scene(
    dir: &Path,
    models: Option<&BTreeMap<u32, ModelRecord>>,
    near_clip: f64,
    manifest: Option<&Manifest>,
    report: &mut ValidationReport,
) -> Option<BTreeSet<u32>> {
    let d = dir.display().to_string();
    let record = load_record(dir, report)?;
    let all_ids = record.im_ids();
    for id in &all_ids {
        for (name, present) in [
            ("scene_camera", record.camera.contains_key(id)),
            ("scene_gt", record.gt.contains_key(id)),
            ("scene_gt_info", record.gt_info.contains_key(id)),
        ] {
            if !present {
                report.add(format!("{d} im_id {id}"), format!("im_id missing in {name}"));
            }
        }
    }

    for id in &all_ids {
        report.frames += 1;
        let loc = format!("{d} im_id {id}");
        let gt = record.gt.get(id).cloned().unwrap_or_default();
        let info = record.gt_info.get(id).cloned().unwrap_or_default();
        if gt.len() != info.len() {
            report.add(&loc, format!("scene_gt has {} entries, scene_gt_info has {}", gt.len(), info.len()));
        }
        for (k, i) in info.iter().enumerate() {
            for p in i.problems() {
                report.add(format!("{loc} gt {k}"), p);
            }
        }
        if let (Some(m), Some(cam)) = (manifest, record.camera.get(id)) {
            if cam.cam_k != m.camera.cam_k {
                report.add(&loc, "cam_K differs from the manifest camera");
            }
            if cam.depth_scale != m.camera.depth_scale {
                report.add(&loc, "depth_scale differs from the manifest");
            }
        }
        check_images(dir, *id, &record, models, near_clip, report);
    }
    Some(all_ids.into_iter().collect())
}

fn bbox_of(mask: &[u8], width: u32) -> Option<BBox> {
    let w = width as usize;
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    let mut any = false;
    for (i, _) in mask.iter().enumerate().filter(|(_, v)| **v != 0) {
        any = true;
        let (x, y) = (i % w, i / w);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    any.then(|| BBox { x: x0 as i32, y: y0 as i32, w: (x1 - x0 + 1) as i32, h: (y1 - y0 + 1) as i32 })
}

fn check_images(
    dir: &Path,
    im_id: u32,
    record: &BopSceneRecord,
    models: Option<&BTreeMap<u32, ModelRecord>>,
    near_clip: f64,
    report: &mut ValidationReport,
) {
    let loc = format!("{} im_id {im_id}", dir.display());
    let (rgb_path, depth_path) = (bop::rgb_path(dir, im_id), bop::depth_path(dir, im_id));
    let rgb = match crate::png_io::read_u8(&rgb_path, 3) {
        Ok(x) => Some(x),
        Err(e) => {
            report.add(&loc, format!("rgb: {e}"));
            None
        }
    };
    let depth = match crate::png_io::read_gray16(&depth_path) {
        Ok(x) => Some(x),
        Err(e) => {
            report.add(&loc, format!("depth: {e}"));
            None
        }
    };
    let (Some((w, h, _)), Some((dw, dh, depth))) = (rgb, depth) else { return };
    if (w, h) != (dw, dh) {
        report.add(&loc, format!("rgb is {w}x{h} but depth is {dw}x{dh}"));
        return;
    }
    let gt = record.gt.get(&im_id).cloned().unwrap_or_default();
    let info = record.gt_info.get(&im_id).cloned().unwrap_or_default();
    let cam = record.camera.get(&im_id);

    for (k, g) in gt.iter().enumerate() {
        let gloc = format!("{loc} gt {k}");
        let mask = crate::png_io::read_u8(&bop::mask_path(dir, im_id, k), 1);
        let visib = crate::png_io::read_u8(&bop::mask_visib_path(dir, im_id, k), 1);
        let (mask, visib) = match (mask, visib) {
            (Ok(m), Ok(v)) => (m.2, v.2),
            (m, v) => {
                for e in [m.err(), v.err()].into_iter().flatten() {
                    report.add(&gloc, format!("mask: {e}"));
                }
                continue;
            }
        };
        if mask.len() != depth.len() || visib.len() != depth.len() {
            report.add(&gloc, "mask resolution differs from the rgb image");
            continue;
        }
        if mask.iter().chain(&visib).any(|v| *v != 0 && *v != 255) {
            report.add(&gloc, "mask values other than 0 and 255");
        }
        if visib.iter().zip(&mask).any(|(v, m)| *v != 0 && *m == 0) {
            report.add(&gloc, "mask_visib pixel outside mask");
        }
        if let Some(i) = visib.iter().zip(&depth).position(|(v, d)| *v != 0 && *d == 0) {
            report.add(&gloc, format!("visible pixel {i} has zero depth"));
        }
        if let Some(i) = info.get(k) {
            let all = mask.iter().filter(|v| **v != 0).count() as u64;
            let vis = visib.iter().filter(|v| **v != 0).count() as u64;
            if all != i.px_count_all {
                report.add(&gloc, format!("px_count_all {} but mask has {all} pixels", i.px_count_all));
            }
            if vis != i.px_count_visib {
                report.add(&gloc, format!("px_count_visib {} but mask_visib has {vis} pixels", i.px_count_visib));
            }
            if surgpose_core::annotate::bbox_array(bbox_of(&mask, w)) != i.bbox_obj {
                report.add(&gloc, format!("bbox_obj {:?} does not match the mask", i.bbox_obj));
            }
            if surgpose_core::annotate::bbox_array(bbox_of(&visib, w)) != i.bbox_visib {
                report.add(&gloc, format!("bbox_visib {:?} does not match mask_visib", i.bbox_visib));
            }
        }
        let (Some(models), Some(cam)) = (models, cam) else { continue };
        let Some(model) = models.get(&g.obj_id) else {
            report.add(&gloc, format!("obj_id {} has no model", g.obj_id));
            continue;
        };
        let Ok(pose) = g.pose() else {
            report.add(&gloc, "cam_R_m2c is not a rotation");
            continue;
        };
        rerender_check(&gloc, cam, w, h, near_clip, model, &pose, &mask, &visib, &depth, report);
    }
}

#[allow(clippy::too_many_arguments)]
fn rerender_check(
    loc: &str,
    cam: &bop::CameraRecord,
    width: u32,
    height: u32,
    near_clip: f64,
    model: &ModelRecord,
    pose: &Pose,
    mask: &[u8],
    visib: &[u8],
    depth: &[u16],
    report: &mut ValidationReport,
) {
    let k = cam.cam_k;
    if k[1] != 0.0 || k[3] != 0.0 || k[6] != 0.0 || k[7] != 0.0 || k[8] != 1.0 {
        report.add(loc, format!("cam_K {k:?} is not a pinhole matrix"));
        return;
    }
    let camera = match CameraModel::with_near_clip(k[0], k[4], k[2], k[5], width, height, near_clip) {
        Ok(c) => c,
        Err(e) => {
            report.add(loc, format!("cam_K: {e}"));
            return;
        }
    };
    let inst = SceneInstance {
        instance_id: 1,
        obj_id: 1,
        mesh: Arc::new(model.mesh.clone()),
        pose_world: *pose,
        material: Material::default(),
    };
    let lights = LightSpec { lights: Vec::new(), ambient: [0.0; 3] };
    let fb = render_frame(std::slice::from_ref(&inst), &Pose::identity(), &camera, &lights);
    let differing = fb.instance_id().iter().zip(mask).filter(|(id, m)| (**id == 1) != (**m != 0)).count();
    if differing > 0 {
        report.add(loc, format!("mask differs from the model rendered at the GT pose in {differing} pixels"));
        return;
    }
    let quantized = match bop::quantize_depth(fb.depth(), cam.depth_scale) {
        Ok(q) => q,
        Err(e) => {
            report.add(loc, e.to_string());
            return;
        }
    };
    let bad = visib.iter().zip(depth).zip(&quantized).filter(|((v, d), q)| **v != 0 && **d != **q).count();
    if bad > 0 {
        report.add(loc, format!("depth disagrees with the model at the GT pose in {bad} visible pixels"));
    }
}
