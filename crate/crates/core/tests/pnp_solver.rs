use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use surgpose_core::geometry::exp_so3;
use surgpose_core::metrics::{e_re, e_te};
use surgpose_core::pnp::{residual, residual_jacobian, retract, PnpError};
use surgpose_core::{reprojection_rmse, solve_pnp, CameraModel, Correspondence, Pose, Vec3};

fn camera() -> CameraModel {
    CameraModel::new(800.0, 810.0, 320.0, 240.0, 640, 480).unwrap()
}

fn random_vec(rng: &mut StdRng, r: f64) -> Vec3 {
    Vec3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r))
}

fn random_pose(rng: &mut StdRng) -> Pose {
    let t = Vec3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(80.0..300.0));
    Pose::new(exp_so3(&random_vec(rng, 3.0)), t).unwrap()
}

fn project_all(pose: &Pose, points: &[Vec3], cam: &CameraModel) -> Vec<Correspondence> {
    points
        .iter()
        .map(|x| Correspondence { model_point: *x, image_point: cam.project(&pose.transform_point(x)).unwrap() })
        .collect()
}

#[test]
fn recovers_the_generating_pose_without_noise() {
    let mut rng = StdRng::seed_from_u64(11);
    let cam = camera();
    for _ in 0..50 {
        let pose = random_pose(&mut rng);
        let points: Vec<Vec3> = (0..8).map(|_| random_vec(&mut rng, 25.0)).collect();
        let sol = solve_pnp(&project_all(&pose, &points, &cam), &cam).unwrap();
        assert!(e_te(pose.translation(), sol.pose.translation()) < 1e-3);
        assert!(e_re(pose.rotation(), sol.pose.rotation()) < 1e-3);
        assert!(sol.rmse < 1e-6);
    }
}

#[test]
fn refinement_reaches_the_noise_level() {
    let cam = camera();
    let noise = Normal::new(0.0, 0.5).unwrap();
    for seed in 0..100 {
        let mut rng = StdRng::seed_from_u64(seed);
        let pose = random_pose(&mut rng);
        let points: Vec<Vec3> = (0..20).map(|_| random_vec(&mut rng, 25.0)).collect();
        let mut corrs = project_all(&pose, &points, &cam);
        for c in &mut corrs {
            c.image_point[0] += noise.sample(&mut rng);
            c.image_point[1] += noise.sample(&mut rng);
        }
        let sol = solve_pnp(&corrs, &cam).unwrap();
        assert!(sol.rmse <= sol.initial_rmse, "seed {seed}");
        assert!((0.25..=1.0).contains(&sol.rmse), "seed {seed}: rmse {}", sol.rmse);
        assert!(sol.rmse_history.windows(2).all(|w| w[1] <= w[0]), "seed {seed}");
        assert!((sol.rmse - reprojection_rmse(&sol.pose, &corrs, &cam).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn coplanar_points_are_degenerate() {
    let cam = camera();
    let pose = Pose::from_translation(Vec3::new(0.0, 0.0, 150.0));
    let points: Vec<Vec3> = [(-10.0, -5.0), (12.0, -7.0), (9.0, 11.0), (-8.0, 6.0), (1.0, 2.0), (4.0, -13.0)]
        .iter()
        .map(|(x, y)| Vec3::new(*x, *y, 0.0))
        .collect();
    assert!(matches!(solve_pnp(&project_all(&pose, &points, &cam), &cam), Err(PnpError::DegenerateConfiguration(_))));
}

#[test]
fn jacobian_matches_central_differences() {
    let mut rng = StdRng::seed_from_u64(5);
    let cam = camera();
    for _ in 0..50 {
        let pose = random_pose(&mut rng);
        let c = Correspondence { model_point: random_vec(&mut rng, 25.0), image_point: [300.0, 200.0] };
        let jac = residual_jacobian(&pose, &c, &cam);
        let h = 1e-6;
        for k in 0..6 {
            let mut d = [0.0; 6];
            d[k] = h;
            let plus = residual(&retract(&pose, &d), &c, &cam);
            d[k] = -h;
            let minus = residual(&retract(&pose, &d), &c, &cam);
            for row in 0..2 {
                let numeric = (plus[row] - minus[row]) / (2.0 * h);
                let scale = jac[row][k].abs().max(numeric.abs()).max(1.0);
                assert!((jac[row][k] - numeric).abs() / scale < 1e-5, "row {row} col {k}: {} vs {numeric}", jac[row][k]);
            }
        }
    }
}

#[test]
fn rotating_the_model_frame_is_a_gauge_change() {
    let mut rng = StdRng::seed_from_u64(21);
    let cam = camera();
    for _ in 0..20 {
        let pose = random_pose(&mut rng);
        let q = Pose::new(exp_so3(&random_vec(&mut rng, 3.0)), Vec3::zeros()).unwrap();
        let points: Vec<Vec3> = (0..10).map(|_| random_vec(&mut rng, 25.0)).collect();
        let corrs = project_all(&pose, &points, &cam);
        let rotated: Vec<Correspondence> = corrs
            .iter()
            .map(|c| Correspondence { model_point: q.transform_point(&c.model_point), image_point: c.image_point })
            .collect();
        let gauge = pose.compose(&q.inverse());
        for (a, b) in project_all(&gauge, &rotated.iter().map(|c| c.model_point).collect::<Vec<_>>(), &cam)
            .iter()
            .zip(&corrs)
        {
            assert!((a.image_point[0] - b.image_point[0]).abs() < 1e-9);
            assert!((a.image_point[1] - b.image_point[1]).abs() < 1e-9);
        }
        let offset = Pose::from_translation(Vec3::new(0.3, -0.2, 1.0));
        let r1 = reprojection_rmse(&offset.compose(&pose), &corrs, &cam).unwrap();
        let r2 = reprojection_rmse(&offset.compose(&gauge), &rotated, &cam).unwrap();
        assert!((r1 - r2).abs() < 1e-9);
    }
}

#[test]
fn rmse_hand_fixture() {
    let cam = camera();
    let p = Vec3::new(0.0, 0.0, 100.0);
    let c = Correspondence { model_point: p, image_point: [323.0, 240.0] };
    assert!((reprojection_rmse(&Pose::identity(), &[c], &cam).unwrap() - 3.0).abs() < 1e-12);
    let moved = Pose::from_translation(Vec3::new(0.0, 0.0, 5.0));
    let exact = Correspondence { model_point: Vec3::new(4.0, 2.0, 100.0), image_point: cam.project(&Vec3::new(4.0, 2.0, 100.0)).unwrap() };
    assert!(reprojection_rmse(&Pose::identity(), &[exact], &cam).unwrap() < 1e-9);
    assert!(reprojection_rmse(&moved, &[exact], &cam).unwrap() > 0.0);
}

#[test]
fn nearly_planar_needle_points_are_solved() {
    let needle = surgpose_core::generate_needle_mesh(9.325, 0.2, std::f64::consts::PI, 48).unwrap();
    let cam = camera();
    let mut rng = StdRng::seed_from_u64(77);
    let noise = Normal::new(0.0, 0.5).unwrap();
    for _ in 0..40 {
        let pose = random_pose(&mut rng);
        let points: Vec<Vec3> = (0..12).map(|_| needle.vertices()[rng.random_range(0..needle.vertices().len())]).collect();
        let corrs: Vec<Correspondence> = project_all(&pose, &points, &cam)
            .into_iter()
            .map(|c| Correspondence {
                image_point: [c.image_point[0] + noise.sample(&mut rng), c.image_point[1] + noise.sample(&mut rng)],
                ..c
            })
            .collect();
        let sol = solve_pnp(&corrs, &cam).unwrap();
        assert!(sol.rmse < 1.5, "rmse {}", sol.rmse);
        assert!(points.iter().all(|x| sol.pose.transform_point(x).z > 0.0));
    }
}
