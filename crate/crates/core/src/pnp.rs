//! Pose from 2D-3D correspondences: normalized DLT for the initial estimate,
//! then Levenberg-Marquardt on the pixel reprojection error. Nearly planar
//! models also get a start from a plane-fit homography; the better
//! refinement wins.
//!
//! Refinement perturbs the rotation on the left by a rotation vector,
//! `R ← exp(δω)·R`, and the translation additively, `t ← t + δt`; the
//! Jacobian columns are ordered `(δω, δt)`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix3x4, Matrix6, Vector6};
use thiserror::Error;

use crate::geometry::{exp_so3, nearest_rotation, skew, CameraModel, Mat3, Pose, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PnpError {
    #[error("at least 6 correspondences are required, got {0}")]
    TooFewCorrespondences(usize),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("refinement diverged: {0}")]
    Diverged(&'static str),
    #[error("correspondence {index} lies at depth {z} mm, in front of the near clip")]
    BehindCamera { index: usize, z: f64 },
    #[error("correspondence {0} is not finite")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub model_point: Vec3,
    pub image_point: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpOptions {
    pub max_iterations: usize,
    pub lambda_init: f64,
    pub lambda_factor: f64,
    /// Stop once an accepted step improves the RMSE by less than this (px).
    pub min_improvement: f64,
    /// Smallest-to-largest singular value ratio of the centred model points
    /// below which the points count as coplanar.
    pub coplanarity_ratio: f64,
}

impl Default for PnpOptions {
    fn default() -> Self {
        Self { max_iterations: 100, lambda_init: 1e-3, lambda_factor: 10.0, min_improvement: 1e-10, coplanarity_ratio: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpSolution {
    pub pose: Pose,
    pub rmse: f64,
    /// RMSE of the DLT estimate.
    pub initial_rmse: f64,
    pub iterations: usize,
    /// RMSE after the DLT and after every accepted step.
    pub rmse_history: Vec<f64>,
}

/// Pixel residual `project(P·X) − uv`. Does not check the near clip.
pub fn residual(pose: &Pose, c: &Correspondence, cam: &CameraModel) -> [f64; 2] {
    let p = pose.transform_point(&c.model_point);
    let [u, v] = cam.project_unchecked(&p);
    [u - c.image_point[0], v - c.image_point[1]]
}

/// 2×6 Jacobian of [`residual`] with respect to `(δω, δt)`.
pub fn residual_jacobian(pose: &Pose, c: &Correspondence, cam: &CameraModel) -> [[f64; 6]; 2] {
    let rx = pose.rotation() * c.model_point;
    let p = rx + pose.translation();
    let (iz, (fx, fy)) = (1.0 / p.z, (cam.fx(), cam.fy()));
    let d_proj = [[fx * iz, 0.0, -fx * p.x * iz * iz], [0.0, fy * iz, -fy * p.y * iz * iz]];
    // dp/dδω = −[R·X]×, dp/dδt = I
    let d_rot = -skew(&rx);
    let mut jac = [[0.0; 6]; 2];
    for row in 0..2 {
        for col in 0..3 {
            jac[row][col] = (0..3).map(|k| d_proj[row][k] * d_rot[(k, col)]).sum();
            jac[row][3 + col] = d_proj[row][col];
        }
    }
    jac
}

/// Applies a `(δω, δt)` increment.
pub fn retract(pose: &Pose, delta: &[f64; 6]) -> Pose {
    let w = Vec3::new(delta[0], delta[1], delta[2]);
    let r = exp_so3(&w) * pose.rotation();
    let t = pose.translation() + Vec3::new(delta[3], delta[4], delta[5]);
    Pose::from_parts_unchecked(nearest_rotation(&r), t)
}

/// Root mean squared per-point reprojection distance (px).
pub fn reprojection_rmse(pose: &Pose, corrs: &[Correspondence], cam: &CameraModel) -> Result<f64, PnpError> {
    if corrs.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (index, c) in corrs.iter().enumerate() {
        let z = pose.transform_point(&c.model_point).z;
        if !(z >= cam.near_clip()) {
            return Err(PnpError::BehindCamera { index, z });
        }
        let [du, dv] = residual(pose, c, cam);
        sum += du * du + dv * dv;
    }
    Ok(libm::sqrt(sum / corrs.len() as f64))
}

/// Validates the input; returns the smallest-to-largest singular value ratio
/// of the centred model points.
fn check_input(corrs: &[Correspondence], opts: &PnpOptions) -> Result<f64, PnpError> {
    if corrs.len() < 6 {
        return Err(PnpError::TooFewCorrespondences(corrs.len()));
    }
    if let Some(i) = corrs
        .iter()
        .position(|c| !(c.model_point.iter().all(|v| v.is_finite()) && c.image_point.iter().all(|v| v.is_finite())))
    {
        return Err(PnpError::NonFinite(i));
    }
    let n = corrs.len() as f64;
    let centroid = corrs.iter().fold(Vec3::zeros(), |acc, c| acc + c.model_point) / n;
    let mut scatter = Mat3::zeros();
    for c in corrs {
        let d = c.model_point - centroid;
        scatter += d * d.transpose();
    }
    // singular values of the centred point matrix are sqrt of the scatter eigenvalues
    let eig = scatter.symmetric_eigenvalues();
    let max = eig.max().max(0.0);
    let min = eig.min().max(0.0);
    let ratio = if max > 0.0 { libm::sqrt(min / max) } else { 0.0 };
    if ratio < opts.coplanarity_ratio {
        return Err(PnpError::DegenerateConfiguration("model points are coplanar or collinear"));
    }
    Ok(ratio)
}

/// Linear estimate from the null vector of the DLT system, projected onto
/// the nearest rotation.
pub fn dlt(corrs: &[Correspondence], cam: &CameraModel) -> Result<Pose, PnpError> {
    check_input(corrs, &PnpOptions::default())?;
    dlt_unchecked(corrs, cam)
}

fn dlt_unchecked(corrs: &[Correspondence], cam: &CameraModel) -> Result<Pose, PnpError> {
    let n = corrs.len();
    let nf = n as f64;
    let img: Vec<[f64; 2]> = corrs
        .iter()
        .map(|c| [(c.image_point[0] - cam.cx()) / cam.fx(), (c.image_point[1] - cam.cy()) / cam.fy()])
        .collect();

    // similarity normalization of both point sets
    let c3 = corrs.iter().fold(Vec3::zeros(), |acc, c| acc + c.model_point) / nf;
    let d3 = corrs.iter().map(|c| (c.model_point - c3).norm()).sum::<f64>() / nf;
    let s3 = if d3 > 0.0 { libm::sqrt(3.0) / d3 } else { 1.0 };
    let c2 = img.iter().fold([0.0, 0.0], |acc, p| [acc[0] + p[0] / nf, acc[1] + p[1] / nf]);
    let d2 = img.iter().map(|p| libm::hypot(p[0] - c2[0], p[1] - c2[1])).sum::<f64>() / nf;
    let s2 = if d2 > 0.0 { libm::sqrt(2.0) / d2 } else { 1.0 };

    let mut a = DMatrix::<f64>::zeros(2 * n, 12);
    for (i, c) in corrs.iter().enumerate() {
        let x = (c.model_point - c3) * s3;
        let xh = [x.x, x.y, x.z, 1.0];
        let u = (img[i][0] - c2[0]) * s2;
        let v = (img[i][1] - c2[1]) * s2;
        for k in 0..4 {
            a[(2 * i, k)] = xh[k];
            a[(2 * i, 8 + k)] = -u * xh[k];
            a[(2 * i + 1, 4 + k)] = xh[k];
            a[(2 * i + 1, 8 + k)] = -v * xh[k];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(PnpError::DegenerateConfiguration("DLT decomposition failed"))?;
    let (min_idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let h = v_t.row(min_idx);
    let p_norm = Matrix3x4::from_fn(|r, c| h[4 * r + c]);

    // undo normalization: P = T2⁻¹ · P' · T3
    let t2_inv = Mat3::new(1.0 / s2, 0.0, c2[0], 0.0, 1.0 / s2, c2[1], 0.0, 0.0, 1.0);
    let mut t3 = nalgebra::Matrix4::<f64>::identity() * s3;
    t3[(3, 3)] = 1.0;
    for k in 0..3 {
        t3[(k, 3)] = -s3 * c3[k];
    }
    let mut p = t2_inv * p_norm * t3;
    // the null vector's sign is arbitrary; pick the one with the points in
    // front. det(M) is unreliable for nearly planar models.
    let in_front = corrs
        .iter()
        .filter(|c| {
            let x = c.model_point;
            p[(2, 0)] * x.x + p[(2, 1)] * x.y + p[(2, 2)] * x.z + p[(2, 3)] > 0.0
        })
        .count();
    if 2 * in_front < n {
        p = -p;
    }
    let m: Mat3 = p.fixed_view::<3, 3>(0, 0).into_owned();
    let sv = m.singular_values();
    let scale = (sv[0] + sv[1] + sv[2]) / 3.0;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(PnpError::DegenerateConfiguration("DLT solution has zero scale"));
    }
    let rotation = nearest_rotation(&(m / scale));
    let translation = Vec3::new(p[(0, 3)], p[(1, 3)], p[(2, 3)]) / scale;
    Ok(Pose::from_parts_unchecked(rotation, translation))
}

fn cost(pose: &Pose, corrs: &[Correspondence], cam: &CameraModel) -> Option<f64> {
    let mut sum = 0.0;
    for c in corrs {
        if !(pose.transform_point(&c.model_point).z >= cam.near_clip()) {
            return None;
        }
        let [du, dv] = residual(pose, c, cam);
        sum += du * du + dv * dv;
    }
    sum.is_finite().then_some(sum)
}

fn rmse_of(cost: f64, n: usize) -> f64 {
    libm::sqrt(cost / n as f64)
}

pub fn solve_pnp(corrs: &[Correspondence], cam: &CameraModel) -> Result<PnpSolution, PnpError> {
    solve_pnp_with(corrs, cam, &PnpOptions::default())
}

/// Below this thickness ratio a plane-fit homography start is tried as well.
const THIN_RATIO: f64 = 0.1;

/// Pose from the homography between the model points' best-fit plane and
/// the image, for nearly planar models where the 3D DLT is ill-conditioned.
fn planar_init(corrs: &[Correspondence], cam: &CameraModel) -> Option<Pose> {
    let n = corrs.len();
    let nf = n as f64;
    let c3 = corrs.iter().fold(Vec3::zeros(), |acc, c| acc + c.model_point) / nf;
    let mut scatter = Mat3::zeros();
    for c in corrs {
        let d = c.model_point - c3;
        scatter += d * d.transpose();
    }
    let eig = scatter.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let e1: Vec3 = eig.eigenvectors.column(order[0]).into_owned();
    let e2: Vec3 = eig.eigenvectors.column(order[1]).into_owned();
    // rows map model offsets into the plane frame
    let basis = Mat3::from_rows(&[e1.transpose(), e2.transpose(), e1.cross(&e2).transpose()]);

    let plane: Vec<[f64; 2]> = corrs
        .iter()
        .map(|c| {
            let q = basis * (c.model_point - c3);
            [q.x, q.y]
        })
        .collect();
    let img: Vec<[f64; 2]> = corrs
        .iter()
        .map(|c| [(c.image_point[0] - cam.cx()) / cam.fx(), (c.image_point[1] - cam.cy()) / cam.fy()])
        .collect();
    let norm = |pts: &[[f64; 2]]| {
        let c = pts.iter().fold([0.0, 0.0], |acc, p| [acc[0] + p[0] / nf, acc[1] + p[1] / nf]);
        let d = pts.iter().map(|p| libm::hypot(p[0] - c[0], p[1] - c[1])).sum::<f64>() / nf;
        (c, if d > 0.0 { libm::sqrt(2.0) / d } else { 1.0 })
    };
    let (cp, sp) = norm(&plane);
    let (ci, si) = norm(&img);
    let mut a = DMatrix::<f64>::zeros(2 * n, 9);
    for i in 0..n {
        let x = [(plane[i][0] - cp[0]) * sp, (plane[i][1] - cp[1]) * sp, 1.0];
        let u = (img[i][0] - ci[0]) * si;
        let v = (img[i][1] - ci[1]) * si;
        for k in 0..3 {
            a[(2 * i, k)] = x[k];
            a[(2 * i, 6 + k)] = -u * x[k];
            a[(2 * i + 1, 3 + k)] = x[k];
            a[(2 * i + 1, 6 + k)] = -v * x[k];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (min_idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let h = v_t.row(min_idx);
    let hn = Mat3::from_fn(|r, c| h[3 * r + c]);
    let ti_inv = Mat3::new(1.0 / si, 0.0, ci[0], 0.0, 1.0 / si, ci[1], 0.0, 0.0, 1.0);
    let tp = Mat3::new(sp, 0.0, -sp * cp[0], 0.0, sp, -sp * cp[1], 0.0, 0.0, 1.0);
    let mut hm = ti_inv * hn * tp;
    let in_front = plane.iter().filter(|p| hm[(2, 0)] * p[0] + hm[(2, 1)] * p[1] + hm[(2, 2)] > 0.0).count();
    if 2 * in_front < n {
        hm = -hm;
    }
    let (h1, h2, h3): (Vec3, Vec3, Vec3) = (hm.column(0).into_owned(), hm.column(1).into_owned(), hm.column(2).into_owned());
    let scale = 2.0 / (h1.norm() + h2.norm());
    if !(scale.is_finite() && scale > 0.0) {
        return None;
    }
    let (r1, r2) = (h1 * scale, h2 * scale);
    let r = nearest_rotation(&Mat3::from_columns(&[r1, r2, r1.cross(&r2)]));
    let rotation = r * basis;
    let translation = h3 * scale - rotation * c3;
    rotation.iter().chain(translation.iter()).all(|v| v.is_finite()).then(|| Pose::from_parts_unchecked(rotation, translation))
}

pub fn solve_pnp_with(corrs: &[Correspondence], cam: &CameraModel, opts: &PnpOptions) -> Result<PnpSolution, PnpError> {
    let ratio = check_input(corrs, opts)?;
    let from_dlt = dlt_unchecked(corrs, cam).and_then(|init| refine(init, corrs, cam, opts));
    if ratio >= THIN_RATIO {
        return from_dlt;
    }
    let from_plane = planar_init(corrs, cam)
        .ok_or(PnpError::DegenerateConfiguration("plane homography failed"))
        .and_then(|init| refine(init, corrs, cam, opts));
    match (from_dlt, from_plane) {
        (Ok(a), Ok(b)) => Ok(if b.rmse < a.rmse { b } else { a }),
        (Ok(a), Err(_)) => Ok(a),
        (Err(_), Ok(b)) => Ok(b),
        (Err(e), Err(_)) => Err(e),
    }
}

fn refine(init: Pose, corrs: &[Correspondence], cam: &CameraModel, opts: &PnpOptions) -> Result<PnpSolution, PnpError> {
    let n = corrs.len();
    let in_front = corrs.iter().filter(|c| init.transform_point(&c.model_point).z >= cam.near_clip()).count();
    if in_front * 10 < n * 9 {
        return Err(PnpError::DegenerateConfiguration("initial estimate places the points behind the camera"));
    }
    // points between the camera and the near clip are allowed at the start;
    // the cost then counts only once all are in front
    let mut pose = init;
    let mut current = match cost(&pose, corrs, cam) {
        Some(c) => c,
        None => {
            let mut sum = 0.0;
            for c in corrs {
                let [du, dv] = residual(&pose, c, cam);
                sum += du * du + dv * dv;
            }
            if !sum.is_finite() {
                return Err(PnpError::Diverged("non-finite initial residual"));
            }
            sum
        }
    };
    let initial_rmse = rmse_of(current, n);
    let mut history = alloc::vec![initial_rmse];
    let mut lambda = opts.lambda_init;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        for c in corrs {
            let j = residual_jacobian(&pose, c, cam);
            let r = residual(&pose, c, cam);
            for row in 0..2 {
                let jr = Vector6::from_row_slice(&j[row]);
                h += jr * jr.transpose();
                g += jr * r[row];
            }
        }
        if !h.iter().all(|v| v.is_finite()) {
            return Err(PnpError::Diverged("non-finite normal equations"));
        }
        let diag_floor = 1e-12 * h.diagonal().max().max(1e-300);
        let mut damped = h;
        for k in 0..6 {
            damped[(k, k)] += lambda * h[(k, k)].max(diag_floor);
        }
        let step = damped.cholesky().map(|ch| ch.solve(&(-g)));
        let accepted = step.and_then(|delta| {
            let delta: [f64; 6] = core::array::from_fn(|k| delta[k]);
            let trial = retract(&pose, &delta);
            cost(&trial, corrs, cam).filter(|c| *c < current).map(|c| (trial, c))
        });
        match accepted {
            Some((trial, new_cost)) => {
                let improvement = rmse_of(current, n) - rmse_of(new_cost, n);
                pose = trial;
                current = new_cost;
                history.push(rmse_of(current, n));
                lambda = (lambda / opts.lambda_factor).max(1e-15);
                if improvement < opts.min_improvement {
                    break;
                }
            }
            None => {
                lambda *= opts.lambda_factor;
                if lambda > 1e16 {
                    break;
                }
            }
        }
    }
    let rmse = reprojection_rmse(&pose, corrs, cam).map_err(|_| PnpError::Diverged("points left in front of the near clip"))?;
    if !rmse.is_finite() || rmse > initial_rmse {
        return Err(PnpError::Diverged("refinement did not reduce the reprojection error"));
    }
    let in_front = corrs.iter().filter(|c| pose.transform_point(&c.model_point).z > 0.0).count();
    if in_front * 10 < n * 9 {
        return Err(PnpError::Diverged("refined pose fails the cheirality check"));
    }
    Ok(PnpSolution { pose, rmse, initial_rmse, iterations, rmse_history: history })
}
