//! Rigid poses, rotations and the pinhole camera.

use core::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance on `RᵀR = I` and `det R = 1` for a matrix to count as a rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("matrix is not a rotation (orthonormality error {orthonormality:.3e}, det {det})")]
    NotARotation { orthonormality: f64, det: f64 },
    #[error("point at depth {z} mm is in front of the near clip plane at {near_clip} mm")]
    BehindCamera { z: f64, near_clip: f64 },
    #[error("interpolation parameter {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
    #[error("axis must be a non-zero finite vector")]
    InvalidAxis,
}

pub fn rot_x(angle: f64) -> Mat3 {
    let (s, c) = libm::sincos(angle);
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Mat3 {
    let (s, c) = libm::sincos(angle);
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = libm::sincos(angle);
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub(crate) fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Largest elementwise deviation of `RᵀR` from the identity.
pub fn orthonormality_error(r: &Mat3) -> f64 {
    (r.transpose() * r - Mat3::identity()).amax()
}

pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    r.iter().all(|v| v.is_finite())
        && orthonormality_error(r) <= tol
        && libm::fabs(r.determinant() - 1.0) <= tol
}

/// Closest rotation in the Frobenius sense (`U·diag(1,1,±1)·Vᵀ`).
pub fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Mat3::identity(),
    };
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        // flip the column paired with the smallest singular value
        let (min_idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        u.column_mut(min_idx).neg_mut();
        r = u * v_t;
    }
    r
}

/// Rotation about a unit axis (Rodrigues).
pub fn rotation_from(axis: &Vec3, angle: f64) -> Result<Mat3, GeometryError> {
    let n = axis.norm();
    if !n.is_finite() || n == 0.0 {
        return Err(GeometryError::InvalidAxis);
    }
    let a = axis / n;
    let (s, c) = libm::sincos(angle);
    let k = skew(&a);
    Ok(Mat3::identity() * c + k * s + (a * a.transpose()) * (1.0 - c))
}

/// Rotation matrix of a rotation vector (axis scaled by angle).
pub fn exp_so3(w: &Vec3) -> Mat3 {
    let theta = w.norm();
    if theta < 1e-12 {
        return Mat3::identity() + skew(w);
    }
    let k = skew(&(w / theta));
    let (s, c) = libm::sincos(theta);
    Mat3::identity() + k * s + k * k * (1.0 - c)
}

/// Rotation angle in radians, `arccos((tr R − 1)/2)` with the argument clamped.
pub fn rotation_angle(r: &Mat3) -> f64 {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    libm::acos(cos)
}

/// Axis-angle form of a rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle {
    axis: Vec3,
    angle: f64,
}

impl AxisAngle {
    pub fn new(axis: Vec3, angle: f64) -> Result<Self, GeometryError> {
        let n = axis.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(GeometryError::InvalidAxis);
        }
        if !(0.0..=PI).contains(&angle) {
            return Err(GeometryError::OutOfRange(angle));
        }
        Ok(Self { axis: axis / n, angle })
    }

    pub fn from_rotation(r: &Mat3) -> Self {
        let angle = rotation_angle(r);
        if angle == 0.0 {
            return Self { axis: Vec3::z(), angle };
        }
        let w = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
        let sin = libm::sin(angle);
        let axis = if sin > 1e-4 {
            w / (2.0 * sin)
        } else {
            // near π the skew part vanishes; read the axis off (R + Rᵀ)/2 − cos·I = (1 − cos)·aaᵀ
            let b = (r + r.transpose()) * 0.5 - Mat3::identity() * libm::cos(angle);
            let (col, _) = (0..3).fold((0, f64::NEG_INFINITY), |acc, i| {
                if b[(i, i)] > acc.1 {
                    (i, b[(i, i)])
                } else {
                    acc
                }
            });
            let mut a = b.column(col).into_owned();
            if a.dot(&w) < 0.0 {
                a = -a;
            }
            a
        };
        let n = axis.norm();
        let axis = if n > 0.0 && n.is_finite() { axis / n } else { Vec3::z() };
        Self { axis, angle }
    }

    pub fn axis(&self) -> Vec3 {
        self.axis
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn to_rotation(&self) -> Mat3 {
        // axis is unit by construction
        rotation_from(&self.axis, self.angle).unwrap_or_else(|_| Mat3::identity())
    }

    pub fn to_rotation_vector(&self) -> Vec3 {
        self.axis * self.angle
    }
}

pub fn axis_angle(r: &Mat3) -> AxisAngle {
    AxisAngle::from_rotation(r)
}

/// Rigid transform `x ↦ R·x + t`, translation in millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Mat3,
    translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, GeometryError> {
        Self::with_tolerance(rotation, translation, ROTATION_TOLERANCE)
    }

    /// Like [`Pose::new`] but with a caller-chosen rotation tolerance.
    pub fn with_tolerance(rotation: Mat3, translation: Vec3, tol: f64) -> Result<Self, GeometryError> {
        if !is_rotation(&rotation, tol) || !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NotARotation {
                orthonormality: orthonormality_error(&rotation),
                det: rotation.determinant(),
            });
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self { rotation: Mat3::identity(), translation: t }
    }

    pub fn from_rotation(r: Mat3) -> Result<Self, GeometryError> {
        Self::new(r, Vec3::zeros())
    }

    pub(crate) fn from_parts_unchecked(rotation: Mat3, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    /// Row-major rotation and translation, e.g. from a JSON document.
    pub fn from_row_major(r: &[f64; 9], t: &[f64; 3]) -> Result<Self, GeometryError> {
        Self::new(Mat3::from_row_slice(r), Vec3::new(t[0], t[1], t[2]))
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]]
    }

    pub fn translation_array(&self) -> [f64; 3] {
        [self.translation.x, self.translation.y, self.translation.z]
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self · other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut rotation = self.rotation * other.rotation;
        if orthonormality_error(&rotation) > ROTATION_TOLERANCE {
            rotation = nearest_rotation(&rotation);
        }
        Pose { rotation, translation: self.rotation * other.translation + self.translation }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `frame⁻¹ · self`, i.e. this pose expressed in `frame`.
    ///
    /// Translations are differenced before rotating, so a common offset
    /// added to both poses cancels without rounding when it is exactly
    /// representable.
    pub fn relative_to(&self, frame: &Pose) -> Pose {
        let rt = frame.rotation.transpose();
        let mut rotation = rt * self.rotation;
        if orthonormality_error(&rotation) > ROTATION_TOLERANCE {
            rotation = nearest_rotation(&rotation);
        }
        Pose { rotation, translation: rt * (self.translation - frame.translation) }
    }
}

impl core::ops::Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn invert(p: &Pose) -> Pose {
    p.inverse()
}

/// Interpolates between two poses: translation linearly, rotation along the
/// shortest geodesic at constant angular speed.
pub fn interpolate_pose(a: &Pose, b: &Pose, s: f64) -> Result<Pose, GeometryError> {
    if !(0.0..=1.0).contains(&s) {
        return Err(GeometryError::OutOfRange(s));
    }
    if s == 0.0 {
        return Ok(*a);
    }
    if s == 1.0 {
        return Ok(*b);
    }
    let delta = AxisAngle::from_rotation(&(a.rotation.transpose() * b.rotation));
    let step = exp_so3(&(delta.to_rotation_vector() * s));
    let mut rotation = a.rotation * step;
    if orthonormality_error(&rotation) > ROTATION_TOLERANCE {
        rotation = nearest_rotation(&rotation);
    }
    let translation = a.translation + (b.translation - a.translation) * s;
    Ok(Pose { rotation, translation })
}

/// Pinhole intrinsics without distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    near_clip: f64,
}

impl CameraModel {
    pub const DEFAULT_NEAR_CLIP: f64 = 1.0;

    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        Self::with_near_clip(fx, fy, cx, cy, width, height, Self::DEFAULT_NEAR_CLIP)
    }

    pub fn with_near_clip(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        near_clip: f64,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fx.is_finite() && fy > 0.0 && fy.is_finite()) {
            return Err(GeometryError::InvalidCamera("focal lengths must be positive"));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(GeometryError::InvalidCamera("principal point must be finite"));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidCamera("resolution must be non-zero"));
        }
        if !(near_clip > 0.0 && near_clip.is_finite()) {
            return Err(GeometryError::InvalidCamera("near clip must be positive"));
        }
        Ok(Self { fx, fy, cx, cy, width, height, near_clip })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn near_clip(&self) -> f64 {
        self.near_clip
    }

    /// `K` as 9 row-major values.
    pub fn k_row_major(&self) -> [f64; 9] {
        [self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0]
    }

    /// Same field of view at another resolution.
    pub fn resized(&self, width: u32, height: u32) -> Result<Self, GeometryError> {
        let sx = f64::from(width) / f64::from(self.width);
        let sy = f64::from(height) / f64::from(self.height);
        Self::with_near_clip(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, width, height, self.near_clip)
    }

    pub fn project(&self, p: &Vec3) -> Result<[f64; 2], GeometryError> {
        if !(p.z >= self.near_clip) {
            return Err(GeometryError::BehindCamera { z: p.z, near_clip: self.near_clip });
        }
        Ok(self.project_unchecked(p))
    }

    #[inline]
    pub(crate) fn project_unchecked(&self, p: &Vec3) -> [f64; 2] {
        [self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy]
    }
}

pub fn project(cam: &CameraModel, point_cam: &Vec3) -> Result<[f64; 2], GeometryError> {
    cam.project(point_cam)
}
