use std::sync::Arc;

use surgpose_core::geometry::{rot_x, rot_y, rot_z};
use surgpose_core::mesh::{generate_cylinder, generate_plane};
use surgpose_core::{
    generate_needle_mesh, render_frame, CameraModel, FrameBuffers, LightSpec, Material, Pose, SceneInstance, TriMesh,
    Vec3,
};

fn camera() -> CameraModel {
    CameraModel::new(500.0, 500.0, 160.0, 120.0, 320, 240).unwrap()
}

fn instance(id: u32, mesh: TriMesh, pose: Pose) -> SceneInstance {
    SceneInstance { instance_id: id, obj_id: id, mesh: Arc::new(mesh), pose_world: pose, material: Material::default() }
}

fn scene() -> Vec<SceneInstance> {
    let needle = generate_needle_mesh(9.325, 0.2, std::f64::consts::PI, 48).unwrap();
    let tool = generate_cylinder(2.5, 40.0, 16).unwrap();
    let pad = generate_plane(120.0, 90.0, 6, 4).unwrap();
    vec![
        instance(1, needle, Pose::new(rot_x(-0.5) * rot_z(0.25), Vec3::new(2.0, -1.5, 80.0)).unwrap()),
        instance(2, tool, Pose::new(rot_y(1.25), Vec3::new(-4.0, 1.0, 70.0)).unwrap()),
        instance(3, pad, Pose::new(rot_x(0.125), Vec3::new(0.0, 0.0, 96.0)).unwrap()),
    ]
}

fn count(fb: &FrameBuffers, id: u32) -> usize {
    fb.instance_id().iter().filter(|v| **v == id).count()
}

#[test]
fn renders_are_deterministic() {
    let s = scene();
    let a = render_frame(&s, &Pose::identity(), &camera(), &LightSpec::default());
    let b = render_frame(&s, &Pose::identity(), &camera(), &LightSpec::default());
    assert_eq!(a, b);
    assert!(count(&a, 1) > 0 && count(&a, 2) > 0 && count(&a, 3) > 0);
    assert_eq!(a.coupling_violation(), None);
}

#[test]
fn rigid_motion_of_scene_and_camera_leaves_buffers_unchanged() {
    let s = scene();
    let cam_pose = Pose::new(rot_z(0.0625), Vec3::new(0.5, -0.25, 2.0)).unwrap();
    let reference = render_frame(&s, &cam_pose, &camera(), &LightSpec::default());
    let offset = Vec3::new(64.0, -32.0, 128.0);
    let moved: Vec<SceneInstance> = s
        .iter()
        .map(|i| SceneInstance {
            pose_world: Pose::new(*i.pose_world.rotation(), i.pose_world.translation() + offset).unwrap(),
            ..i.clone()
        })
        .collect();
    let moved_cam = Pose::new(*cam_pose.rotation(), cam_pose.translation() + offset).unwrap();
    assert_eq!(render_frame(&moved, &moved_cam, &camera(), &LightSpec::default()), reference);
}

#[test]
fn occluded_render_agrees_with_solo_depth_where_object_wins() {
    let s = scene();
    let cam = camera();
    let full = render_frame(&s, &Pose::identity(), &cam, &LightSpec::default());
    for inst in &s {
        let alone = render_frame(std::slice::from_ref(inst), &Pose::identity(), &cam, &LightSpec::default());
        let mut checked = 0;
        for (i, id) in full.instance_id().iter().enumerate() {
            if *id == inst.instance_id {
                assert_eq!(alone.instance_id()[i], inst.instance_id);
                assert_eq!(full.depth()[i], alone.depth()[i], "pixel {i}");
                checked += 1;
            }
        }
        assert!(checked > 0);
        assert!(count(&alone, inst.instance_id) >= checked);
    }
}

#[test]
fn quad_split_into_triangles_has_no_gaps_or_overlaps() {
    let corners = vec![
        Vec3::new(-13.3, -9.1, 0.0),
        Vec3::new(17.7, -8.2, 0.0),
        Vec3::new(15.1, 11.9, 0.0),
        Vec3::new(-11.6, 10.4, 0.0),
    ];
    let pose = Pose::new(rot_x(0.3) * rot_y(-0.2), Vec3::new(1.0, 2.0, 60.0)).unwrap();
    let quad = TriMesh::new(corners.clone(), vec![[0, 1, 2], [0, 2, 3]], None).unwrap();
    let first = TriMesh::new(corners.clone(), vec![[0, 1, 2]], None).unwrap();
    let second = TriMesh::new(corners, vec![[0, 2, 3]], None).unwrap();
    let cam = camera();
    let render = |m: TriMesh| render_frame(&[instance(7, m, pose)], &Pose::identity(), &cam, &LightSpec::default());
    let (q, a, b) = (render(quad), render(first), render(second));
    assert!(count(&q, 7) > 1000);
    assert_eq!(count(&a, 7) + count(&b, 7), count(&q, 7));
    for i in 0..q.instance_id().len() {
        let covered = (a.instance_id()[i] == 7) as u8 + (b.instance_id()[i] == 7) as u8;
        assert_eq!(covered, (q.instance_id()[i] == 7) as u8, "pixel {i}");
    }
}

#[test]
fn adding_an_occluder_never_raises_visibility() {
    let s = scene();
    let cam = camera();
    let visible = |scene: &[SceneInstance], id: u32| {
        count(&render_frame(scene, &Pose::identity(), &cam, &LightSpec::default()), id)
    };
    let occluder = instance(9, generate_plane(20.0, 20.0, 1, 1).unwrap(), Pose::from_translation(Vec3::new(4.0, 0.0, 60.0)));
    let mut nested = s.clone();
    nested.push(occluder);
    for id in 1..=3 {
        assert!(visible(&nested, id) <= visible(&s, id));
    }
}
