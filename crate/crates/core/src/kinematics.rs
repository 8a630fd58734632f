//! Endoscope camera manipulator modelled as a remote-centre-of-motion chain.
//!
//! Joint order is yaw (rad), pitch (rad), insertion (mm), roll (rad). The chain
//! is `base · Ry(yaw) · Rx(pitch) · Trans(0, 0, insertion) · Rz(roll)`, so the
//! remote centre sits at the base origin and the optical axis is camera +z.

use thiserror::Error;

use crate::geometry::{rot_x, rot_y, rot_z, Pose, Vec3};

pub const JOINT_COUNT: usize = 4;
pub const JOINT_NAMES: [&str; JOINT_COUNT] = ["yaw", "pitch", "insertion", "roll"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("joint {joint} value {value} outside limits [{lo}, {hi}]")]
    JointLimit { joint: usize, value: f64, lo: f64, hi: f64 },
    #[error("invalid joint limits for joint {0}")]
    InvalidLimits(usize),
}

/// Inclusive `[lo, hi]` per joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits(pub [[f64; 2]; JOINT_COUNT]);

impl Default for JointLimits {
    fn default() -> Self {
        use core::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};
        Self([[-FRAC_PI_2, FRAC_PI_2], [-FRAC_PI_3, FRAC_PI_3], [0.0, 250.0], [-PI, PI]])
    }
}

impl JointLimits {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        for (i, [lo, hi]) in self.0.iter().enumerate() {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(KinematicsError::InvalidLimits(i));
            }
        }
        if self.0[2][0] < 0.0 {
            return Err(KinematicsError::InvalidLimits(2));
        }
        Ok(())
    }

    pub fn check(&self, joints: &[f64; JOINT_COUNT]) -> Result<(), KinematicsError> {
        for (i, (&q, [lo, hi])) in joints.iter().zip(self.0.iter()).enumerate() {
            if !(q >= *lo && q <= *hi) {
                return Err(KinematicsError::JointLimit { joint: i, value: q, lo: *lo, hi: *hi });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, joints: &[f64; JOINT_COUNT]) -> [f64; JOINT_COUNT] {
        core::array::from_fn(|i| joints[i].clamp(self.0[i][0], self.0[i][1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcmRig {
    pub base_pose: Pose,
    pub joints: [f64; JOINT_COUNT],
    pub limits: JointLimits,
}

impl EcmRig {
    pub fn new(base_pose: Pose, joints: [f64; JOINT_COUNT], limits: JointLimits) -> Result<Self, KinematicsError> {
        limits.validate()?;
        limits.check(&joints)?;
        Ok(Self { base_pose, joints, limits })
    }

    pub fn with_joints(&self, joints: [f64; JOINT_COUNT]) -> Result<Self, KinematicsError> {
        Self::new(self.base_pose, joints, self.limits)
    }

    pub fn camera_pose(&self) -> Result<Pose, KinematicsError> {
        ecm_forward_kinematics(self)
    }
}

/// Camera pose in the world for the rig's current joints.
pub fn ecm_forward_kinematics(rig: &EcmRig) -> Result<Pose, KinematicsError> {
    rig.limits.check(&rig.joints)?;
    Ok(chain(&rig.base_pose, &rig.joints))
}

fn chain(base: &Pose, q: &[f64; JOINT_COUNT]) -> Pose {
    let r_pivot = rot_y(q[0]) * rot_x(q[1]);
    let local = Pose::from_parts_unchecked(r_pivot * rot_z(q[3]), r_pivot * Vec3::new(0.0, 0.0, q[2]));
    base.compose(&local)
}
