//! Keyframed scene motion and its continuous-time sampling.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{interpolate_pose, Pose};
use crate::kinematics::JOINT_COUNT;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("a trajectory needs at least 2 keyframes, got {0}")]
    TooFewKeyframes(usize),
    #[error("keyframe {index} at t={time} does not come after t={previous}")]
    NonIncreasingTime { index: usize, time: f64, previous: f64 },
    #[error("keyframe {index} does not list the same instances as the trajectory")]
    InstanceMismatch { index: usize },
    #[error("instance id {0} is duplicated or zero")]
    BadInstanceId(u32),
    #[error("time {time} outside [{first}, {last}]")]
    OutOfRange { time: f64, first: f64, last: f64 },
    #[error("keyframe {0} has a non-finite value")]
    NonFinite(usize),
}

/// An object that appears in every keyframe. `mesh` names an entry in the
/// scene configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectoryInstance {
    pub instance_id: u32,
    pub obj_id: u32,
    pub mesh: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub time: f64,
    pub poses: BTreeMap<u32, Pose>,
    pub ecm: [f64; JOINT_COUNT],
}

/// Interpolated state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    pub poses: BTreeMap<u32, Pose>,
    pub ecm: [f64; JOINT_COUNT],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub name: String,
    pub source: String,
    instances: Vec<TrajectoryInstance>,
    keyframes: Vec<Keyframe>,
}

impl Trajectory {
    pub fn new(
        name: String,
        source: String,
        instances: Vec<TrajectoryInstance>,
        keyframes: Vec<Keyframe>,
    ) -> Result<Self, TrajectoryError> {
        validate_instances(&instances)?;
        if keyframes.len() < 2 {
            return Err(TrajectoryError::TooFewKeyframes(keyframes.len()));
        }
        for (i, kf) in keyframes.iter().enumerate() {
            check_keyframe(&instances, i, kf, i.checked_sub(1).map(|p| keyframes[p].time))?;
        }
        Ok(Self { name, source, instances, keyframes })
    }

    pub fn instances(&self) -> &[TrajectoryInstance] {
        &self.instances
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn start_time(&self) -> f64 {
        self.keyframes[0].time
    }

    pub fn end_time(&self) -> f64 {
        self.keyframes[self.keyframes.len() - 1].time
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    /// Scene state at `time`; exact keyframe times return that keyframe.
    pub fn sample(&self, time: f64) -> Result<SceneState, TrajectoryError> {
        let (first, last) = (self.start_time(), self.end_time());
        if !(time >= first && time <= last) {
            return Err(TrajectoryError::OutOfRange { time, first, last });
        }
        // index of the first keyframe with kf.time > time
        let upper = self.keyframes.partition_point(|kf| kf.time <= time);
        let prev = &self.keyframes[upper - 1];
        if prev.time == time || upper == self.keyframes.len() {
            return Ok(SceneState { poses: prev.poses.clone(), ecm: prev.ecm });
        }
        let next = &self.keyframes[upper];
        let s = ((time - prev.time) / (next.time - prev.time)).clamp(0.0, 1.0);
        let poses = prev
            .poses
            .iter()
            .map(|(id, a)| {
                // same keys in every keyframe, checked at construction
                let b = &next.poses[id];
                (*id, interpolate_pose(a, b, s).unwrap_or(*a))
            })
            .collect();
        let ecm = core::array::from_fn(|j| prev.ecm[j] + (next.ecm[j] - prev.ecm[j]) * s);
        Ok(SceneState { poses, ecm })
    }

    /// `count` instants spread evenly over the trajectory, endpoints included.
    pub fn sample_times_count(&self, count: usize) -> Vec<f64> {
        match count {
            0 => Vec::new(),
            1 => alloc::vec![self.start_time()],
            n => {
                let (a, b) = (self.start_time(), self.end_time());
                (0..n)
                    .map(|k| if k == n - 1 { b } else { a + (b - a) * (k as f64) / ((n - 1) as f64) })
                    .collect()
            }
        }
    }

    /// Instants `start + k/rate` that do not pass the last keyframe.
    pub fn sample_times_rate(&self, rate_hz: f64) -> Vec<f64> {
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Vec::new();
        }
        let (a, b) = (self.start_time(), self.end_time());
        let mut out = Vec::new();
        let mut k = 0u64;
        loop {
            let t = a + (k as f64) / rate_hz;
            if t > b + 1e-9 * (1.0 + libm::fabs(b)) {
                break;
            }
            out.push(t.min(b));
            k += 1;
        }
        out
    }
}

pub fn trajectory_sample(t: &Trajectory, time: f64) -> Result<SceneState, TrajectoryError> {
    t.sample(time)
}

pub fn validate_instances(instances: &[TrajectoryInstance]) -> Result<(), TrajectoryError> {
    let mut seen = alloc::collections::BTreeSet::new();
    for inst in instances {
        if inst.instance_id == 0 || !seen.insert(inst.instance_id) {
            return Err(TrajectoryError::BadInstanceId(inst.instance_id));
        }
    }
    Ok(())
}

/// Checks one keyframe against the instance set and the previous timestamp.
pub fn check_keyframe(
    instances: &[TrajectoryInstance],
    index: usize,
    kf: &Keyframe,
    previous_time: Option<f64>,
) -> Result<(), TrajectoryError> {
    if !kf.time.is_finite() || !kf.ecm.iter().all(|q| q.is_finite()) {
        return Err(TrajectoryError::NonFinite(index));
    }
    if let Some(previous) = previous_time {
        if !(kf.time > previous) {
            return Err(TrajectoryError::NonIncreasingTime { index, time: kf.time, previous });
        }
    }
    if kf.poses.len() != instances.len() || !instances.iter().all(|i| kf.poses.contains_key(&i.instance_id)) {
        return Err(TrajectoryError::InstanceMismatch { index });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rot_z, Vec3};
    use alloc::string::ToString;

    fn traj() -> Trajectory {
        let inst = alloc::vec![TrajectoryInstance { instance_id: 1, obj_id: 1, mesh: "needle".to_string() }];
        let kf = |time: f64, x: f64, angle: f64, q3: f64| Keyframe {
            time,
            poses: [(1, Pose::new(rot_z(angle), Vec3::new(x, 0.0, 0.0)).unwrap())].into_iter().collect(),
            ecm: [0.0, 0.0, q3, 0.0],
        };
        Trajectory::new(
            "t".to_string(),
            "test".to_string(),
            inst,
            alloc::vec![kf(0.0, 0.0, 0.0, 10.0), kf(1.0, 10.0, 0.5, 20.0), kf(3.0, 4.0, 1.0, 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn keyframe_times_are_exact() {
        let t = traj();
        for kf in t.keyframes() {
            let s = t.sample(kf.time).unwrap();
            assert_eq!(s.poses, kf.poses);
            assert_eq!(s.ecm, kf.ecm);
        }
    }

    #[test]
    fn midpoint_translation_and_joints() {
        let s = traj().sample(0.5).unwrap();
        assert!((s.poses[&1].translation() - Vec3::new(5.0, 0.0, 0.0)).amax() < 1e-12);
        assert_eq!(s.ecm[2], 15.0);
    }

    #[test]
    fn out_of_range() {
        let t = traj();
        assert!(matches!(t.sample(-0.1), Err(TrajectoryError::OutOfRange { .. })));
        assert!(t.sample(3.0001).is_err());
    }

    #[test]
    fn continuity_across_keyframes() {
        let t = traj();
        let at = t.sample(1.0).unwrap();
        for eps in [1e-12, 1e-13] {
            for side in [t.sample(1.0 - eps).unwrap(), t.sample(1.0 + eps).unwrap()] {
                assert!((side.poses[&1].rotation() - at.poses[&1].rotation()).amax() < 1e-9);
                assert!((side.poses[&1].translation() - at.poses[&1].translation()).amax() < 1e-9);
                assert!((side.ecm[2] - at.ecm[2]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn invariants_enforced() {
        let t = traj();
        let mut kfs = t.keyframes().to_vec();
        kfs[1].time = 0.0;
        assert!(matches!(
            Trajectory::new("x".into(), "y".into(), t.instances().to_vec(), kfs),
            Err(TrajectoryError::NonIncreasingTime { index: 1, .. })
        ));
        let mut kfs = t.keyframes().to_vec();
        kfs[2].poses.clear();
        assert!(matches!(
            Trajectory::new("x".into(), "y".into(), t.instances().to_vec(), kfs),
            Err(TrajectoryError::InstanceMismatch { index: 2 })
        ));
        assert!(matches!(
            Trajectory::new("x".into(), "y".into(), t.instances().to_vec(), t.keyframes()[..1].to_vec()),
            Err(TrajectoryError::TooFewKeyframes(1))
        ));
    }

    #[test]
    fn sample_times() {
        let t = traj();
        assert_eq!(t.sample_times_count(4), alloc::vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(t.sample_times_count(1), alloc::vec![0.0]);
        let r = t.sample_times_rate(10.0);
        assert_eq!(r.len(), 31);
        assert_eq!(*r.last().unwrap(), 3.0);
    }
}
