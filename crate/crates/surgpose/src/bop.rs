//! BOP scene directories and BOP results CSV files.
//!
//! A scene directory holds `scene_camera.json`, `scene_gt.json`,
//! `scene_gt_info.json` and the `rgb/`, `depth/`, `mask/` and `mask_visib/`
//! image folders. JSON keys are image ids in ascending order; reals are
//! written with 17 significant digits so they read back bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::Value;
use surgpose_core::geometry::{nearest_rotation, orthonormality_error};
use surgpose_core::{BBox, FrameBuffers, GtInfo, Mat3, Pose, Vec3};

use crate::error::{read_to_string, write_file, Error, Result};
use crate::numfmt::fmt_g17;
use crate::png_io;

pub const SCENE_CAMERA: &str = "scene_camera.json";
pub const SCENE_GT: &str = "scene_gt.json";
pub const SCENE_GT_INFO: &str = "scene_gt_info.json";

/// Rotation tolerance for GT read from disk.
pub const GT_ROTATION_TOL: f64 = 1e-6;
/// Rotation tolerance for estimator output.
pub const ESTIMATE_ROTATION_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRecord {
    pub cam_k: [f64; 9],
    pub depth_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtRecord {
    pub cam_r_m2c: [f64; 9],
    pub cam_t_m2c: [f64; 3],
    pub obj_id: u32,
}

impl GtRecord {
    pub fn from_pose(pose: &Pose, obj_id: u32) -> Self {
        Self { cam_r_m2c: pose.rotation_row_major(), cam_t_m2c: pose.translation_array(), obj_id }
    }

    pub fn pose(&self) -> Result<Pose, String> {
        Pose::with_tolerance(Mat3::from_row_slice(&self.cam_r_m2c), Vec3::from(self.cam_t_m2c), GT_ROTATION_TOL)
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtInfoRecord {
    pub bbox_obj: [i32; 4],
    pub bbox_visib: [i32; 4],
    pub px_count_all: u64,
    pub px_count_visib: u64,
    pub visib_fract: f64,
}

impl From<&GtInfo> for GtInfoRecord {
    fn from(g: &GtInfo) -> Self {
        Self {
            bbox_obj: surgpose_core::annotate::bbox_array(g.bbox_obj),
            bbox_visib: surgpose_core::annotate::bbox_array(g.bbox_visib),
            px_count_all: g.px_count_all,
            px_count_visib: g.px_count_visib,
            visib_fract: g.visib_fract,
        }
    }
}

impl GtInfoRecord {
    /// Range and consistency checks; one message per problem.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.visib_fract) {
            out.push(format!("visib_fract {} out of range [0, 1]", self.visib_fract));
        }
        if self.px_count_visib > self.px_count_all {
            out.push(format!("px_count_visib {} exceeds px_count_all {}", self.px_count_visib, self.px_count_all));
        }
        let expected = surgpose_core::annotate::visibility_fraction(self.px_count_visib, self.px_count_all);
        if (self.visib_fract - expected).abs() > 1e-12 {
            out.push(format!("visib_fract {} does not equal px_count_visib/px_count_all = {expected}", self.visib_fract));
        }
        let boxes = [("bbox_obj", self.bbox_obj, self.px_count_all), ("bbox_visib", self.bbox_visib, self.px_count_visib)];
        for (name, b, count) in boxes {
            let parsed = BBox::from_array(b);
            match parsed {
                None if b != BBox::EMPTY => out.push(format!("{name} {b:?} is malformed")),
                None if count > 0 => out.push(format!("{name} is empty but the pixel count is {count}")),
                Some(_) if count == 0 => out.push(format!("{name} {b:?} is set but the pixel count is 0")),
                Some(bb) if (bb.w as u64) * (bb.h as u64) < count => {
                    out.push(format!("{name} {b:?} cannot hold {count} pixels"))
                }
                _ => {}
            }
        }
        if let (Some(o), Some(v)) = (BBox::from_array(self.bbox_obj), BBox::from_array(self.bbox_visib)) {
            if !o.contains(&v) {
                out.push("bbox_visib not inside bbox_obj".to_string());
            }
        }
        out
    }
}

/// The three JSON indices of one scene.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BopSceneRecord {
    pub camera: BTreeMap<u32, CameraRecord>,
    pub gt: BTreeMap<u32, Vec<GtRecord>>,
    pub gt_info: BTreeMap<u32, Vec<GtInfoRecord>>,
}

impl BopSceneRecord {
    pub fn im_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> =
            self.camera.keys().chain(self.gt.keys()).chain(self.gt_info.keys()).copied().collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Image content of one frame as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameImages {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
    /// Depth in units of `depth_scale` mm.
    pub depth: Vec<u16>,
    /// Per GT entry: projected mask and visible mask, 0 or 255.
    pub masks: Vec<(Vec<u8>, Vec<u8>)>,
}

pub fn rgb_path(dir: &Path, im_id: u32) -> PathBuf {
    dir.join("rgb").join(format!("{im_id:06}.png"))
}

pub fn depth_path(dir: &Path, im_id: u32) -> PathBuf {
    dir.join("depth").join(format!("{im_id:06}.png"))
}

pub fn mask_path(dir: &Path, im_id: u32, gt_index: usize) -> PathBuf {
    dir.join("mask").join(format!("{im_id:06}_{gt_index:06}.png"))
}

pub fn mask_visib_path(dir: &Path, im_id: u32, gt_index: usize) -> PathBuf {
    dir.join("mask_visib").join(format!("{im_id:06}_{gt_index:06}.png"))
}

/// Depth in mm to stored units; fails when a value does not fit 16 bits.
pub fn quantize_depth(depth_mm: &[f64], depth_scale: f64) -> Result<Vec<u16>> {
    depth_mm
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let q = d / depth_scale;
            if !(q <= 65535.0) {
                return Err(Error::DepthOverflow { depth_mm: *d, depth_scale, pixel: i });
            }
            Ok(q.round().max(0.0) as u16)
        })
        .collect()
}

/// Binary mask (0/255) of pixels carrying `instance_id`.
pub fn instance_mask(fb: &FrameBuffers, instance_id: u32) -> Vec<u8> {
    fb.instance_id().iter().map(|v| if *v == instance_id { 255 } else { 0 }).collect()
}

impl FrameImages {
    /// Images for a rendered frame. `objects` lists, per GT entry, the
    /// instance id and the object-only render used for the projected mask.
    pub fn from_render(full: &FrameBuffers, objects: &[(u32, &FrameBuffers)], depth_scale: f64) -> Result<Self> {
        Ok(Self {
            width: full.width(),
            height: full.height(),
            rgb: full.rgb().to_vec(),
            depth: quantize_depth(full.depth(), depth_scale)?,
            masks: objects.iter().map(|(id, alone)| (instance_mask(alone, *id), instance_mask(full, *id))).collect(),
        })
    }
}

pub fn write_frame_images(dir: &Path, im_id: u32, frame: &FrameImages) -> Result<()> {
    let (w, h) = (frame.width, frame.height);
    png_io::write_rgb8(&rgb_path(dir, im_id), w, h, &frame.rgb)?;
    png_io::write_gray16(&depth_path(dir, im_id), w, h, &frame.depth)?;
    for (k, (all, visib)) in frame.masks.iter().enumerate() {
        png_io::write_gray8(&mask_path(dir, im_id, k), w, h, all)?;
        png_io::write_gray8(&mask_visib_path(dir, im_id, k), w, h, visib)?;
    }
    Ok(())
}

fn json_reals(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| fmt_g17(*v)).collect();
    format!("[{}]", parts.join(", "))
}

fn json_ints(values: &[i32]) -> String {
    let parts: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

fn json_object<T>(map: &BTreeMap<u32, T>, mut entry: impl FnMut(&T) -> String) -> String {
    let mut s = String::from("{");
    for (i, (k, v)) in map.iter().enumerate() {
        s.push_str(if i == 0 { "\n" } else { ",\n" });
        let _ = write!(s, "  \"{k}\": {}", entry(v));
    }
    s.push_str(if map.is_empty() { "}\n" } else { "\n}\n" });
    s
}

fn json_list<T>(items: &[T], entry: impl Fn(&T) -> String) -> String {
    let parts: Vec<String> = items.iter().map(|i| format!("\n    {}", entry(i))).collect();
    if parts.is_empty() {
        "[]".to_string()
    } else {
        format!("[{}\n  ]", parts.join(","))
    }
}

pub fn scene_camera_json(record: &BopSceneRecord) -> String {
    json_object(&record.camera, |c| {
        format!("{{\"cam_K\": {}, \"depth_scale\": {}}}", json_reals(&c.cam_k), fmt_g17(c.depth_scale))
    })
}

pub fn scene_gt_json(record: &BopSceneRecord) -> String {
    json_object(&record.gt, |list| {
        json_list(list, |g| {
            format!(
                "{{\"cam_R_m2c\": {}, \"cam_t_m2c\": {}, \"obj_id\": {}}}",
                json_reals(&g.cam_r_m2c),
                json_reals(&g.cam_t_m2c),
                g.obj_id
            )
        })
    })
}

pub fn scene_gt_info_json(record: &BopSceneRecord) -> String {
    json_object(&record.gt_info, |list| {
        json_list(list, |g| {
            format!(
                "{{\"bbox_obj\": {}, \"bbox_visib\": {}, \"px_count_all\": {}, \"px_count_visib\": {}, \"visib_fract\": {}}}",
                json_ints(&g.bbox_obj),
                json_ints(&g.bbox_visib),
                g.px_count_all,
                g.px_count_visib,
                fmt_g17(g.visib_fract)
            )
        })
    })
}

/// Writes the three JSON indices.
pub fn write_scene_index(dir: &Path, record: &BopSceneRecord) -> Result<()> {
    write_file(&dir.join(SCENE_CAMERA), scene_camera_json(record).as_bytes())?;
    write_file(&dir.join(SCENE_GT), scene_gt_json(record).as_bytes())?;
    write_file(&dir.join(SCENE_GT_INFO), scene_gt_info_json(record).as_bytes())
}

/// Writes a whole scene: images for every frame, then the indices.
pub fn write_scene(dir: &Path, record: &BopSceneRecord, frames: &BTreeMap<u32, FrameImages>) -> Result<()> {
    for (im_id, frame) in frames {
        write_frame_images(dir, *im_id, frame)?;
    }
    write_scene_index(dir, record)
}

struct JsonCtx<'a> {
    path: &'a Path,
}

impl JsonCtx<'_> {
    fn err(&self, key: &str, msg: impl Into<String>) -> Error {
        Error::schema(self.path, key, msg)
    }

    fn object<'v>(&self, v: &'v Value, key: &str) -> Result<&'v serde_json::Map<String, Value>> {
        v.as_object().ok_or_else(|| self.err(key, "expected an object"))
    }

    fn field<'v>(&self, obj: &'v serde_json::Map<String, Value>, key: &str, name: &str) -> Result<&'v Value> {
        obj.get(name).ok_or_else(|| self.err(key, format!("missing field {name:?}")))
    }

    fn real(&self, v: &Value, key: &str) -> Result<f64> {
        v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| self.err(key, "expected a finite number"))
    }

    fn reals<const N: usize>(&self, v: &Value, key: &str) -> Result<[f64; N]> {
        let arr = v.as_array().ok_or_else(|| self.err(key, format!("expected an array of {N} numbers")))?;
        if arr.len() != N {
            return Err(self.err(key, format!("expected {N} numbers, got {}", arr.len())));
        }
        let mut out = [0.0; N];
        for (i, (o, x)) in out.iter_mut().zip(arr).enumerate() {
            *o = self.real(x, &format!("{key}[{i}]"))?;
        }
        Ok(out)
    }

    fn uint(&self, v: &Value, key: &str) -> Result<u64> {
        v.as_u64().ok_or_else(|| self.err(key, "expected a non-negative integer"))
    }

    fn ints4(&self, v: &Value, key: &str) -> Result<[i32; 4]> {
        let arr = v.as_array().filter(|a| a.len() == 4).ok_or_else(|| self.err(key, "expected 4 integers"))?;
        let mut out = [0; 4];
        for (i, (o, x)) in out.iter_mut().zip(arr).enumerate() {
            *o = x
                .as_i64()
                .and_then(|n| i32::try_from(n).ok())
                .ok_or_else(|| self.err(&format!("{key}[{i}]"), "expected an integer"))?;
        }
        Ok(out)
    }

    fn by_im_id<'v>(&self, root: &'v Value) -> Result<BTreeMap<u32, &'v Value>> {
        let obj = self.object(root, "$")?;
        let mut out = BTreeMap::new();
        for (k, v) in obj {
            let id: u32 = k.parse().map_err(|_| self.err(k, "key is not an image id"))?;
            out.insert(id, v);
        }
        Ok(out)
    }

    fn list<'v>(&self, v: &'v Value, key: &str) -> Result<&'v Vec<Value>> {
        v.as_array().ok_or_else(|| self.err(key, "expected a list"))
    }
}

fn load_json(path: &Path) -> Result<Value> {
    let text = read_to_string(path)?;
    crate::config::parse_json(path, &text)
}

pub fn parse_scene_camera(path: &Path, root: &Value) -> Result<BTreeMap<u32, CameraRecord>> {
    let cx = JsonCtx { path };
    let mut out = BTreeMap::new();
    for (id, v) in cx.by_im_id(root)? {
        let key = id.to_string();
        let obj = cx.object(v, &key)?;
        let cam_k = cx.reals::<9>(cx.field(obj, &key, "cam_K")?, &format!("{key}.cam_K"))?;
        let dkey = format!("{key}.depth_scale");
        let depth_scale = cx.real(cx.field(obj, &key, "depth_scale")?, &dkey)?;
        if depth_scale <= 0.0 {
            return Err(cx.err(&dkey, "must be positive"));
        }
        out.insert(id, CameraRecord { cam_k, depth_scale });
    }
    Ok(out)
}

pub fn parse_scene_gt(path: &Path, root: &Value) -> Result<BTreeMap<u32, Vec<GtRecord>>> {
    let cx = JsonCtx { path };
    let mut out = BTreeMap::new();
    for (id, v) in cx.by_im_id(root)? {
        let mut list = Vec::new();
        for (i, item) in cx.list(v, &id.to_string())?.iter().enumerate() {
            let key = format!("{id}[{i}]");
            let obj = cx.object(item, &key)?;
            let rec = GtRecord {
                cam_r_m2c: cx.reals::<9>(cx.field(obj, &key, "cam_R_m2c")?, &format!("{key}.cam_R_m2c"))?,
                cam_t_m2c: cx.reals::<3>(cx.field(obj, &key, "cam_t_m2c")?, &format!("{key}.cam_t_m2c"))?,
                obj_id: u32::try_from(cx.uint(cx.field(obj, &key, "obj_id")?, &format!("{key}.obj_id"))?)
                    .map_err(|_| cx.err(&format!("{key}.obj_id"), "too large"))?,
            };
            rec.pose().map_err(|m| cx.err(&format!("{key}.cam_R_m2c"), m))?;
            list.push(rec);
        }
        out.insert(id, list);
    }
    Ok(out)
}

pub fn parse_scene_gt_info(path: &Path, root: &Value) -> Result<BTreeMap<u32, Vec<GtInfoRecord>>> {
    let cx = JsonCtx { path };
    let mut out = BTreeMap::new();
    for (id, v) in cx.by_im_id(root)? {
        let mut list = Vec::new();
        for (i, item) in cx.list(v, &id.to_string())?.iter().enumerate() {
            let key = format!("{id}[{i}]");
            let obj = cx.object(item, &key)?;
            let sub = |name: &str| format!("{key}.{name}");
            list.push(GtInfoRecord {
                bbox_obj: cx.ints4(cx.field(obj, &key, "bbox_obj")?, &sub("bbox_obj"))?,
                bbox_visib: cx.ints4(cx.field(obj, &key, "bbox_visib")?, &sub("bbox_visib"))?,
                px_count_all: cx.uint(cx.field(obj, &key, "px_count_all")?, &sub("px_count_all"))?,
                px_count_visib: cx.uint(cx.field(obj, &key, "px_count_visib")?, &sub("px_count_visib"))?,
                visib_fract: cx.real(cx.field(obj, &key, "visib_fract")?, &sub("visib_fract"))?,
            });
        }
        out.insert(id, list);
    }
    Ok(out)
}

/// A scene read from disk; images are decoded on request.
#[derive(Debug, Clone)]
pub struct BopScene {
    pub dir: PathBuf,
    pub record: BopSceneRecord,
    pub warnings: Vec<String>,
}

pub fn read_scene(dir: &Path) -> Result<BopScene> {
    let camera_path = dir.join(SCENE_CAMERA);
    let gt_path = dir.join(SCENE_GT);
    let info_path = dir.join(SCENE_GT_INFO);
    let record = BopSceneRecord {
        camera: parse_scene_camera(&camera_path, &load_json(&camera_path)?)?,
        gt: parse_scene_gt(&gt_path, &load_json(&gt_path)?)?,
        gt_info: parse_scene_gt_info(&info_path, &load_json(&info_path)?)?,
    };
    for id in record.im_ids() {
        if !record.camera.contains_key(&id) {
            return Err(Error::schema(&camera_path, id.to_string(), "im_id missing in scene_camera"));
        }
        let gt = record.gt.get(&id).ok_or_else(|| Error::schema(&gt_path, id.to_string(), "im_id missing in scene_gt"))?;
        let info = record
            .gt_info
            .get(&id)
            .ok_or_else(|| Error::schema(&info_path, id.to_string(), "im_id missing in scene_gt_info"))?;
        if gt.len() != info.len() {
            return Err(Error::schema(
                &info_path,
                id.to_string(),
                format!("{} entries but scene_gt has {}", info.len(), gt.len()),
            ));
        }
    }
    let mut warnings = Vec::new();
    for (id, list) in &record.gt {
        for k in 0..list.len() {
            for p in [mask_path(dir, *id, k), mask_visib_path(dir, *id, k)] {
                if !p.exists() {
                    warnings.push(format!("missing mask {}", p.display()));
                }
            }
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(BopScene { dir: dir.to_path_buf(), record, warnings })
}

impl BopScene {
    pub fn load_rgb(&self, im_id: u32) -> Result<(u32, u32, Vec<u8>)> {
        png_io::read_u8(&rgb_path(&self.dir, im_id), 3)
    }

    pub fn load_depth(&self, im_id: u32) -> Result<(u32, u32, Vec<u16>)> {
        png_io::read_gray16(&depth_path(&self.dir, im_id))
    }

    pub fn load_mask(&self, im_id: u32, gt_index: usize) -> Result<(u32, u32, Vec<u8>)> {
        png_io::read_u8(&mask_path(&self.dir, im_id, gt_index), 1)
    }

    pub fn load_mask_visib(&self, im_id: u32, gt_index: usize) -> Result<(u32, u32, Vec<u8>)> {
        png_io::read_u8(&mask_visib_path(&self.dir, im_id, gt_index), 1)
    }

    pub fn load_frame(&self, im_id: u32) -> Result<FrameImages> {
        let (width, height, rgb) = self.load_rgb(im_id)?;
        let (_, _, depth) = self.load_depth(im_id)?;
        let count = self.record.gt.get(&im_id).map_or(0, Vec::len);
        let masks = (0..count)
            .map(|k| Ok((self.load_mask(im_id, k)?.2, self.load_mask_visib(im_id, k)?.2)))
            .collect::<Result<Vec<_>>>()?;
        Ok(FrameImages { width, height, rgb, depth, masks })
    }
}

pub const RESULTS_HEADER: &str = "scene_id,im_id,obj_id,score,R,t,time";

/// One row of a BOP results file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    pub scene_id: u32,
    pub im_id: u32,
    pub obj_id: u32,
    pub score: f64,
    /// Nearest rotation to `r_raw`.
    pub pose: Pose,
    /// Rotation as it appeared in the file.
    pub r_raw: [f64; 9],
    pub time: f64,
}

impl PoseEstimate {
    pub fn new(scene_id: u32, im_id: u32, obj_id: u32, score: f64, pose: Pose, time: f64) -> Self {
        Self { scene_id, im_id, obj_id, score, pose, r_raw: pose.rotation_row_major(), time }
    }

    /// Whether loading had to re-orthonormalize the rotation.
    pub fn was_reprojected(&self) -> bool {
        self.r_raw != self.pose.rotation_row_major()
    }
}

fn numbers<const N: usize>(path: &Path, line: usize, name: &str, field: &str) -> Result<[f64; N]> {
    let parts: Vec<&str> = field.split_whitespace().collect();
    if parts.len() != N {
        return Err(Error::parse(path, line, format!("{name} needs {N} numbers, got {}", parts.len())));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::parse(path, line, format!("{name}: invalid number {p:?}")))?;
    }
    Ok(out)
}

pub fn parse_results(path: &Path, text: &str) -> Result<Vec<PoseEstimate>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        Some((_, h)) if h.trim() == RESULTS_HEADER => {}
        _ => return Err(Error::parse(path, 1, format!("expected header {RESULTS_HEADER:?}"))),
    }
    let mut out = Vec::new();
    for (line, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(Error::parse(path, line, format!("expected 7 fields, got {}", f.len())));
        }
        let id = |i: usize, name: &str| -> Result<u32> {
            f[i].parse().map_err(|_| Error::parse(path, line, format!("{name}: invalid integer {:?}", f[i])))
        };
        let real = |i: usize, name: &str| -> Result<f64> {
            f[i].parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, line, format!("{name}: invalid number {:?}", f[i])))
        };
        let r_raw = numbers::<9>(path, line, "R", f[4])?;
        let t = numbers::<3>(path, line, "t", f[5])?;
        let m = Mat3::from_row_slice(&r_raw);
        let err = orthonormality_error(&m);
        if !(err <= ESTIMATE_ROTATION_TOL && m.determinant() > 0.0) {
            return Err(Error::parse(path, line, format!("R is not a rotation (orthonormality error {err:.3e})")));
        }
        let r = if err == 0.0 { m } else { nearest_rotation(&m) };
        let pose = Pose::new(r, Vec3::from(t)).map_err(|e| Error::parse(path, line, e.to_string()))?;
        out.push(PoseEstimate {
            scene_id: id(0, "scene_id")?,
            im_id: id(1, "im_id")?,
            obj_id: id(2, "obj_id")?,
            score: real(3, "score")?,
            pose,
            r_raw,
            time: real(6, "time")?,
        });
    }
    Ok(out)
}

pub fn read_results(path: &Path) -> Result<Vec<PoseEstimate>> {
    parse_results(path, &read_to_string(path)?)
}

fn spaced(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Rows use the shortest exact decimal form; the raw rotation is written so
/// that a read-write cycle reproduces the input values.
pub fn results_string(estimates: &[PoseEstimate]) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for e in estimates {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            e.scene_id,
            e.im_id,
            e.obj_id,
            e.score,
            spaced(&e.r_raw),
            spaced(&e.pose.translation_array()),
            e.time
        );
    }
    s
}

pub fn write_results(path: &Path, estimates: &[PoseEstimate]) -> Result<()> {
    write_file(path, results_string(estimates).as_bytes())
}

/// Parses a six-digit scene directory name.
pub fn scene_id_from_dir(dir: &Path) -> Option<u32> {
    let name = dir.file_name()?.to_str()?;
    (name.len() == 6 && name.bytes().all(|b| b.is_ascii_digit())).then(|| name.parse().ok()).flatten()
}

/// Scene directories under a dataset root, a split directory, or the scene
/// directory itself, sorted by path.
pub fn find_scene_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(SCENE_GT).exists() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut stack = vec![(root.to_path_buf(), 0)];
    while let Some((dir, depth)) = stack.pop() {
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let p = entry.path();
            if !p.is_dir() {
                continue;
            }
            if p.join(SCENE_GT).exists() || p.join(SCENE_CAMERA).exists() || p.join(SCENE_GT_INFO).exists() {
                out.push(p);
            } else if depth < 1 {
                stack.push((p, depth + 1));
            }
        }
    }
    out.sort();
    Ok(out)
}

pub const MODELS_INFO: &str = "models_info.json";

pub fn model_path(models_dir: &Path, obj_id: u32) -> PathBuf {
    models_dir.join(format!("obj_{obj_id:06}.ply"))
}

/// An object model as stored in a dataset's `models/` directory.
#[derive(Debug, Clone)]
pub struct ModelRecord {
    pub mesh: surgpose_core::TriMesh,
    pub diameter: f64,
    pub symmetries: surgpose_core::SymmetrySet,
}

fn pose_4x4(p: &Pose) -> [f64; 16] {
    let r = p.rotation_row_major();
    let t = p.translation_array();
    [r[0], r[1], r[2], t[0], r[3], r[4], r[5], t[1], r[6], r[7], r[8], t[2], 0.0, 0.0, 0.0, 1.0]
}

/// Writes `obj_XXXXXX.ply` files and `models_info.json`. Discrete
/// symmetries are listed without the identity, as 4×4 row-major matrices.
pub fn write_models(models_dir: &Path, models: &BTreeMap<u32, ModelRecord>) -> Result<()> {
    for (obj_id, m) in models {
        crate::mesh_io::save_mesh(&model_path(models_dir, *obj_id), &m.mesh)?;
    }
    let text = json_object(models, |m| {
        let (lo, hi) = m.mesh.bounds();
        let size = hi - lo;
        let syms: Vec<String> = m
            .symmetries
            .transforms()
            .iter()
            .filter(|s| **s != Pose::identity())
            .map(|s| json_reals(&pose_4x4(s)))
            .collect();
        format!(
            "{{\"diameter\": {}, \"min_x\": {}, \"min_y\": {}, \"min_z\": {}, \"size_x\": {}, \"size_y\": {}, \"size_z\": {}, \"symmetries_discrete\": [{}]}}",
            fmt_g17(m.diameter),
            fmt_g17(lo.x),
            fmt_g17(lo.y),
            fmt_g17(lo.z),
            fmt_g17(size.x),
            fmt_g17(size.y),
            fmt_g17(size.z),
            syms.join(", ")
        )
    });
    write_file(&models_dir.join(MODELS_INFO), text.as_bytes())
}

pub fn read_models(models_dir: &Path) -> Result<BTreeMap<u32, ModelRecord>> {
    let info_path = models_dir.join(MODELS_INFO);
    let root = load_json(&info_path)?;
    let cx = JsonCtx { path: &info_path };
    let mut out = BTreeMap::new();
    for (obj_id, v) in cx.by_im_id(&root)? {
        let key = obj_id.to_string();
        let obj = cx.object(v, &key)?;
        let diameter = cx.real(cx.field(obj, &key, "diameter")?, &format!("{key}.diameter"))?;
        let mut symmetries = Vec::new();
        if let Some(list) = obj.get("symmetries_discrete") {
            for (i, s) in cx.list(list, &format!("{key}.symmetries_discrete"))?.iter().enumerate() {
                let skey = format!("{key}.symmetries_discrete[{i}]");
                let m = cx.reals::<16>(s, &skey)?;
                let pose = crate::config::pose_lenient(
                    &[m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]],
                    &[m[3], m[7], m[11]],
                )
                .map_err(|msg| cx.err(&skey, msg))?;
                symmetries.push(pose);
            }
        }
        let mesh = crate::mesh_io::load_mesh(&model_path(models_dir, obj_id))?;
        out.insert(obj_id, ModelRecord { mesh, diameter, symmetries: surgpose_core::SymmetrySet::new(symmetries) });
    }
    Ok(out)
}
