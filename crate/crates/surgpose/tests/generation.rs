mod common;

use common::{tree_digest, tree_hashes, Fixture, FixtureOpts};
use surgpose::bop;
use surgpose::config::PoseJson;
use surgpose::core::{ecm_forward_kinematics, Pose};
use surgpose::pipeline::{frame_joints, run_generation, Manifest, MANIFEST};
use surgpose::validate::validate_dataset;

#[test]
fn unoccluded_replay_keeps_every_frame_fully_visible() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = Fixture::new(tmp.path(), &FixtureOpts::default());
    let manifest = run_generation(&fx.load_job()).unwrap();
    assert_eq!(manifest.scenes.len(), 1);
    let s = &manifest.scenes[0];
    assert_eq!((s.frames_total, s.frames_kept, s.frames_dropped), (5, 5, 0));
    let scene = bop::read_scene(&fx.out.join("train/000000")).unwrap();
    assert_eq!(scene.record.im_ids(), vec![0, 1, 2, 3, 4]);
    for infos in scene.record.gt_info.values() {
        assert_eq!(infos.len(), 1);
        assert_eq!(infos[0].visib_fract, 1.0);
        assert!(infos[0].px_count_all > 100);
    }
    assert!(fx.out.join(MANIFEST).exists());
    assert_eq!(Manifest::load(&fx.out.join(MANIFEST)).unwrap(), manifest);
    let report = validate_dataset(&fx.out);
    assert!(report.is_clean(), "{report}");
}

#[test]
fn equal_job_and_seed_give_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let opts = FixtureOpts { replays: 2, samples: 4, occluder: true, ..Default::default() };
    let fx = Fixture::new(tmp.path(), &opts);
    run_generation(&fx.load_job()).unwrap();
    let first = tree_hashes(&fx.out);
    run_generation(&fx.load_job()).unwrap();
    assert_eq!(tree_hashes(&fx.out), first);

    let other = tempfile::tempdir().unwrap();
    let fx2 = Fixture::new(other.path(), &opts);
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_generation(&fx2.load_job())).unwrap();
    assert_eq!(tree_digest(&fx2.out), tree_digest(&fx.out));

    let seeded = tempfile::tempdir().unwrap();
    let fx3 = Fixture::new(seeded.path(), &FixtureOpts { seed: 8, ..opts });
    run_generation(&fx3.load_job()).unwrap();
    assert_ne!(tree_digest(&fx3.out), tree_digest(&fx.out));
}

#[test]
fn replays_get_distinct_offsets_and_account_for_every_frame() {
    let tmp = tempfile::tempdir().unwrap();
    let opts = FixtureOpts { replays: 3, samples: 6, occluder: true, min_visibility: 0.95, ..Default::default() };
    let fx = Fixture::new(tmp.path(), &opts);
    let manifest = run_generation(&fx.load_job()).unwrap();
    let ids: Vec<u32> = manifest.scenes.iter().map(|s| s.scene_id).collect();
    assert_eq!(ids, vec![0, 1, 2]);
    for (i, a) in manifest.scenes.iter().enumerate() {
        for b in &manifest.scenes[i + 1..] {
            assert!(a.joint_offsets.iter().zip(&b.joint_offsets).all(|(x, y)| x != y));
        }
    }
    let total: u32 = manifest.scenes.iter().map(|s| s.frames_kept + s.frames_dropped).sum();
    assert_eq!(total, 3 * 6);
    let dropped: Vec<_> = manifest.scenes.iter().flat_map(|s| &s.dropped).collect();
    assert!(!dropped.is_empty(), "the tool should hide part of the needle in some frame");
    assert!(dropped.iter().all(|d| d.reason == "below visibility threshold" || d.reason == "not present"));
    for s in &manifest.scenes {
        let dir = fx.out.join(&s.path);
        for d in &s.dropped {
            assert!(!bop::rgb_path(&dir, d.im_id).exists());
        }
        let on_disk = bop::read_scene(&dir).unwrap().record.im_ids();
        assert_eq!(on_disk, s.kept.iter().map(|k| k.im_id).collect::<Vec<_>>());
    }
    let report = validate_dataset(&fx.out);
    assert!(report.is_clean(), "{report}");
}

#[test]
fn stored_pose_matches_rig_and_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = Fixture::new(tmp.path(), &FixtureOpts { samples: 3, ..Default::default() });
    let job = fx.load_job();
    let manifest = run_generation(&job).unwrap();
    let scene = &manifest.scenes[0];
    let rig = job.scene.rig.with_joints(job.trajectory.keyframes()[0].ecm).unwrap();
    let record = bop::read_scene(&fx.out.join(&scene.path)).unwrap().record;
    let base = PoseJson::to_pose(&manifest.ecm_base_pose).unwrap();
    assert_eq!(base, job.scene.rig.base_pose);
    for frame in &scene.kept {
        let state = job.trajectory.sample(frame.time).unwrap();
        let (joints, _) = frame_joints(&rig, &state.ecm, &scene.joint_offsets);
        let cam = ecm_forward_kinematics(&rig.with_joints(joints).unwrap()).unwrap();
        let expected: Pose = state.poses[&1].relative_to(&cam);
        let stored = record.gt[&frame.im_id][0].pose().unwrap();
        assert_eq!(stored.rotation_row_major(), expected.rotation_row_major());
        assert_eq!(stored.translation_array(), expected.translation_array());
    }
}

#[test]
fn occluder_never_raises_visibility() {
    let clear = tempfile::tempdir().unwrap();
    let occluded = tempfile::tempdir().unwrap();
    let base = FixtureOpts { samples: 8, ..Default::default() };
    let a = Fixture::new(clear.path(), &base);
    let b = Fixture::new(occluded.path(), &FixtureOpts { occluder: true, ..base });
    run_generation(&a.load_job()).unwrap();
    run_generation(&b.load_job()).unwrap();
    let ra = bop::read_scene(&a.out.join("train/000000")).unwrap().record;
    let rb = bop::read_scene(&b.out.join("train/000000")).unwrap().record;
    let mut strictly_lower = 0;
    for (im_id, info) in &rb.gt_info {
        let without = &ra.gt_info[im_id][0];
        assert!(info[0].visib_fract <= without.visib_fract);
        assert_eq!(info[0].px_count_all, without.px_count_all);
        strictly_lower += usize::from(info[0].visib_fract < without.visib_fract);
    }
    assert!(strictly_lower > 0);
}

#[test]
fn invalid_jobs_are_rejected_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = Fixture::new(tmp.path(), &FixtureOpts { replays: 0, ..Default::default() });
    let err = surgpose::config::GenerationJob::load(&fx.job, None, None).unwrap_err();
    assert!(err.to_string().contains("replays"), "{err}");
    assert!(!fx.out.exists());
}
