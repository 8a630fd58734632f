//! Per-replay viewpoint and lighting randomization.
//!
//! Draws come from ChaCha8 (`rand_chacha`), seeded with the job seed through
//! `SeedableRng::seed_from_u64` and switched to stream `replay_index`, so a
//! replay's sample depends only on `(seed, replay_index)` and is identical on
//! every platform. Draw order: four joint offsets, cone polar, cone azimuth,
//! intensity. Unit floats take the top 53 bits of one `next_u64`.

use alloc::vec;
use core::f64::consts::TAU;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::geometry::Vec3;
use crate::kinematics::{EcmRig, KinematicsError, JOINT_COUNT};
use crate::render::{DirectionalLight, LightSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewpointRandomization {
    /// Half-width of the uniform offset per joint (rad, rad, mm, rad).
    pub offset_bounds: [f64; JOINT_COUNT],
    /// Half-angle (degrees) of the cone around the camera's backward axis
    /// from which the light direction is drawn.
    pub light_cone_deg: f64,
    pub intensity_range: [f64; 2],
    pub ambient: [f64; 3],
    pub seed: u64,
}

impl Default for ViewpointRandomization {
    fn default() -> Self {
        Self {
            offset_bounds: [5f64.to_radians(), 5f64.to_radians(), 10.0, 10f64.to_radians()],
            light_cone_deg: 30.0,
            intensity_range: [0.6, 1.0],
            ambient: [0.2; 3],
            seed: 0,
        }
    }
}

impl ViewpointRandomization {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !self.offset_bounds.iter().all(|b| *b >= 0.0 && b.is_finite()) {
            return Err("offset bounds must be finite and non-negative");
        }
        if !(0.0..=180.0).contains(&self.light_cone_deg) {
            return Err("light cone half-angle must be in [0, 180] degrees");
        }
        let [lo, hi] = self.intensity_range;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err("intensity range must satisfy 0 <= lo <= hi");
        }
        if !self.ambient.iter().all(|a| *a >= 0.0 && a.is_finite()) {
            return Err("ambient must be non-negative");
        }
        Ok(())
    }
}

/// Result of randomizing one replay.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewpointSample {
    /// Rig with offset joints, clamped into limits.
    pub rig: EcmRig,
    /// Offsets as drawn, before clamping.
    pub offsets: [f64; JOINT_COUNT],
    /// Joints whose offset value had to be clamped.
    pub clamped: [bool; JOINT_COUNT],
    pub light: LightSpec,
    /// Light direction in the camera frame, also stored in `light`.
    pub light_direction: Vec3,
    pub light_intensity: f64,
}

impl ViewpointSample {
    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|c| *c)
    }
}

fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Randomizes the rig joints and the light for one replay.
///
/// Offsets that would leave the joint limits are clamped and reported in
/// [`ViewpointSample::clamped`] rather than rejected.
pub fn sample_viewpoint(
    rig: &EcmRig,
    rand: &ViewpointRandomization,
    replay_index: u64,
) -> Result<ViewpointSample, KinematicsError> {
    rig.limits.check(&rig.joints)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rand.seed);
    rng.set_stream(replay_index);

    let mut offsets = [0.0; JOINT_COUNT];
    for (o, b) in offsets.iter_mut().zip(rand.offset_bounds.iter()) {
        let u = unit_f64(&mut rng);
        *o = if *b > 0.0 { (2.0 * u - 1.0) * b } else { 0.0 };
    }
    let raw: [f64; JOINT_COUNT] = core::array::from_fn(|i| rig.joints[i] + offsets[i]);
    let joints = rig.limits.clamp(&raw);
    let clamped = core::array::from_fn(|i| joints[i] != raw[i]);

    let cos_max = libm::cos(rand.light_cone_deg.to_radians());
    let cos_theta = 1.0 - unit_f64(&mut rng) * (1.0 - cos_max);
    let sin_theta = libm::sqrt((1.0 - cos_theta * cos_theta).max(0.0));
    let (sp, cp) = libm::sincos(TAU * unit_f64(&mut rng));
    let direction = Vec3::new(sin_theta * cp, sin_theta * sp, -cos_theta);
    let [lo, hi] = rand.intensity_range;
    let intensity = lo + (hi - lo) * unit_f64(&mut rng);

    let light = LightSpec {
        lights: vec![DirectionalLight { direction, intensity: [intensity; 3] }],
        ambient: rand.ambient,
    };
    Ok(ViewpointSample {
        rig: EcmRig { joints, ..*rig },
        offsets,
        clamped,
        light,
        light_direction: direction,
        light_intensity: intensity,
    })
}
