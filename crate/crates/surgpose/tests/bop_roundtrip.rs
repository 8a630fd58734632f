mod common;

use std::collections::BTreeMap;
use std::path::Path;

use common::{Fixture, FixtureOpts};
use serde_json::Value;
use surgpose::bop::{self, BopSceneRecord, CameraRecord, FrameImages, GtInfoRecord, GtRecord};
use surgpose::core::geometry::exp_so3;
use surgpose::core::{Pose, Vec3};
use surgpose::pipeline::run_generation;
use surgpose::validate::validate_dataset;

fn copy_tree(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let p = e.unwrap().path();
        let dest = to.join(p.file_name().unwrap());
        if p.is_dir() {
            copy_tree(&p, &dest);
        } else {
            std::fs::copy(&p, &dest).unwrap();
        }
    }
}

fn awkward_pose(k: u32) -> Pose {
    let w = Vec3::new(0.1 + k as f64 / 3.0, -1.0 / 7.0, 2.0f64.sqrt() * k as f64);
    Pose::new(exp_so3(&w), Vec3::new(1.0 / 3.0, -1e-7 * k as f64, 123.456789012345 + k as f64)).unwrap()
}

#[test]
fn scene_written_then_read_is_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("000004");
    let (w, h) = (6u32, 4u32);
    let mut record = BopSceneRecord::default();
    let mut frames = BTreeMap::new();
    for im_id in [0u32, 3, 17] {
        let k = [600.0 + 1.0 / 3.0, 0.0, 319.5, 0.0, 601.25, 239.5, 0.0, 0.0, 1.0];
        record.camera.insert(im_id, CameraRecord { cam_k: k, depth_scale: 0.1 });
        let gts = vec![GtRecord::from_pose(&awkward_pose(im_id), 1), GtRecord::from_pose(&awkward_pose(im_id + 1), 4)];
        record.gt.insert(im_id, gts);
        let mask: Vec<u8> = (0..w * h).map(|i| if i % 4 == 1 { 255 } else { 0 }).collect();
        let visib: Vec<u8> = (0..w * h).map(|i| if i % 8 == 1 { 255 } else { 0 }).collect();
        let info = GtInfoRecord {
            bbox_obj: [1, 0, 5, 4],
            bbox_visib: [1, 0, 5, 4],
            px_count_all: 6,
            px_count_visib: 3,
            visib_fract: 0.5,
        };
        record.gt_info.insert(im_id, vec![info, info]);
        frames.insert(
            im_id,
            FrameImages {
                width: w,
                height: h,
                rgb: (0..w * h * 3).map(|i| (i * 7 + im_id) as u8).collect(),
                depth: (0..w * h).map(|i| (i * 4099 + im_id) as u16).collect(),
                masks: vec![(mask.clone(), visib.clone()), (visib, mask)],
            },
        );
    }
    bop::write_scene(&dir, &record, &frames).unwrap();
    let back = bop::read_scene(&dir).unwrap();
    assert!(back.warnings.is_empty());
    assert_eq!(back.record, record);
    for (im_id, gts) in &record.gt {
        for (a, b) in gts.iter().zip(&back.record.gt[im_id]) {
            let (pa, pb) = (a.pose().unwrap(), b.pose().unwrap());
            assert!((pa.rotation() - pb.rotation()).amax() <= 1e-12);
            assert!((pa.translation() - pb.translation()).amax() <= 1e-12);
        }
        assert_eq!(back.load_frame(*im_id).unwrap(), frames[im_id]);
    }
    bop::write_scene_index(&dir, &back.record).unwrap();
    assert_eq!(std::fs::read_to_string(dir.join(bop::SCENE_GT)).unwrap(), bop::scene_gt_json(&record));
}

fn edit_json(path: &Path, f: impl FnOnce(&mut Value)) {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    f(&mut v);
    std::fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

fn first_entry<'a>(v: &'a mut Value, field: &str) -> &'a mut Value {
    let frame = v.as_object_mut().unwrap().values_mut().next().unwrap();
    match frame {
        Value::Array(list) => &mut list[0][field],
        obj => &mut obj[field],
    }
}

type Corruption = (&'static str, Box<dyn Fn(&Path)>);

fn corruptions() -> Vec<Corruption> {
    let gt = |field: &'static str, f: fn(&mut Value)| -> Box<dyn Fn(&Path)> {
        Box::new(move |scene: &Path| edit_json(&scene.join(bop::SCENE_GT), |v| f(first_entry(v, field))))
    };
    let info = |field: &'static str, f: fn(&mut Value)| -> Box<dyn Fn(&Path)> {
        Box::new(move |scene: &Path| edit_json(&scene.join(bop::SCENE_GT_INFO), |v| f(first_entry(v, field))))
    };
    let cam = |field: &'static str, f: fn(&mut Value)| -> Box<dyn Fn(&Path)> {
        Box::new(move |scene: &Path| edit_json(&scene.join(bop::SCENE_CAMERA), |v| f(first_entry(v, field))))
    };
    let bump = |v: &mut Value| *v = Value::from(v.as_f64().unwrap() + 1.0);
    vec![
        ("cam_R_m2c", gt("cam_R_m2c", |v| {
            // a different valid rotation: swap the first two rows and negate the third
            let r: Vec<f64> = v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
            *v = serde_json::json!([r[3], r[4], r[5], r[0], r[1], r[2], -r[6], -r[7], -r[8]]);
        })),
        ("cam_t_m2c", gt("cam_t_m2c", |v| v[0] = Value::from(v[0].as_f64().unwrap() + 2.0))),
        ("obj_id", gt("obj_id", |v| *v = Value::from(5))),
        ("cam_K", cam("cam_K", |v| v[0] = Value::from(v[0].as_f64().unwrap() * 1.01))),
        ("depth_scale", cam("depth_scale", |v| *v = Value::from(1.0))),
        ("visib_fract", info("visib_fract", |v| *v = Value::from(1.5))),
        ("px_count_all", info("px_count_all", bump)),
        ("px_count_visib", info("px_count_visib", |v| *v = Value::from(v.as_u64().unwrap() - 1))),
        ("bbox_obj", info("bbox_obj", |v| v[2] = Value::from(v[2].as_i64().unwrap() + 1))),
        ("bbox_visib", info("bbox_visib", |v| v[0] = Value::from(v[0].as_i64().unwrap() + 1))),
        ("scene_gt entry", Box::new(|scene: &Path| {
            edit_json(&scene.join(bop::SCENE_GT), |v| {
                let key = v.as_object().unwrap().keys().next().unwrap().clone();
                v.as_object_mut().unwrap().remove(&key);
            })
        })),
        ("mask pixel", Box::new(|scene: &Path| {
            let p = bop::mask_path(scene, 0, 0);
            let (w, h, mut m) = surgpose::png_io::read_u8(&p, 1).unwrap();
            let i = m.iter().position(|v| *v == 0).unwrap();
            m[i] = 255;
            surgpose::png_io::write_gray8(&p, w, h, &m).unwrap();
        })),
        ("depth pixel", Box::new(|scene: &Path| {
            let p = bop::depth_path(scene, 0);
            let visib = surgpose::png_io::read_u8(&bop::mask_visib_path(scene, 0, 0), 1).unwrap().2;
            let (w, h, mut d) = surgpose::png_io::read_gray16(&p).unwrap();
            let i = visib.iter().position(|v| *v == 255).unwrap();
            d[i] += 3;
            surgpose::png_io::write_gray16(&p, w, h, &d).unwrap();
        })),
        ("rgb file", Box::new(|scene: &Path| std::fs::remove_file(bop::rgb_path(scene, 0)).unwrap())),
    ]
}

#[test]
fn every_single_field_corruption_is_detected() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = Fixture::new(tmp.path(), &FixtureOpts { samples: 3, ..Default::default() });
    run_generation(&fx.load_job()).unwrap();
    let clean = validate_dataset(&fx.out);
    assert!(clean.is_clean(), "{clean}");
    assert_eq!(clean.frames, 3);

    for (name, corrupt) in corruptions() {
        let copy = tmp.path().join(format!("copy_{}", name.replace(' ', "_")));
        copy_tree(&fx.out, &copy);
        corrupt(&copy.join("train/000000"));
        let report = validate_dataset(&copy);
        assert!(!report.violations.is_empty(), "corrupting {name} went unnoticed");
    }
}

#[test]
fn named_violations_for_hand_edits() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = Fixture::new(tmp.path(), &FixtureOpts { samples: 2, ..Default::default() });
    run_generation(&fx.load_job()).unwrap();
    let scene = fx.out.join("train/000000");

    edit_json(&scene.join(bop::SCENE_GT), |v| {
        v.as_object_mut().unwrap().remove("1");
    });
    assert!(validate_dataset(&fx.out).contains("im_id missing in scene_gt"));

    run_generation(&fx.load_job()).unwrap();
    edit_json(&scene.join(bop::SCENE_GT_INFO), |v| v["0"][0]["visib_fract"] = Value::from(1.5));
    let report = validate_dataset(&fx.out);
    assert!(report.contains("visib_fract 1.5 out of range"), "{report}");
}
