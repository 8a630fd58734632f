//! Per-object ground truth derived from rendered buffers.
//!
//! The visible mask is the set of pixels an instance wins in the full render;
//! the projected mask is the set it covers when rendered alone with the same
//! camera and pose. Visibility fraction is their pixel-count ratio.

use core::fmt;

use thiserror::Error;

use crate::geometry::Pose;
use crate::render::FrameBuffers;
use crate::scene::SceneInstance;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotateError {
    #[error("buffer resolutions differ: {0}x{1} vs {2}x{3}")]
    ResolutionMismatch(u32, u32, u32, u32),
}

/// Tight pixel box `(x, y, w, h)`; `w = max_x − min_x + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
}

impl BBox {
    /// BOP writes empty masks as `[-1, -1, -1, -1]`.
    pub const EMPTY: [i32; 4] = [-1, -1, -1, -1];

    pub fn to_array(self) -> [i32; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn from_array(a: [i32; 4]) -> Option<Self> {
        (a[2] > 0 && a[3] > 0).then_some(Self { x: a[0], y: a[1], w: a[2], h: a[3] })
    }

    pub fn contains(&self, other: &BBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.x + other.w <= self.x + self.w
            && other.y + other.h <= self.y + self.h
    }
}

pub fn bbox_array(b: Option<BBox>) -> [i32; 4] {
    b.map_or(BBox::EMPTY, BBox::to_array)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtInfo {
    pub instance_id: u32,
    pub obj_id: u32,
    /// Model-to-camera transform.
    pub pose_cam: Pose,
    pub bbox_obj: Option<BBox>,
    pub bbox_visib: Option<BBox>,
    pub px_count_all: u64,
    pub px_count_visib: u64,
    pub visib_fract: f64,
}

impl GtInfo {
    /// Checks the count, fraction and box-containment invariants.
    pub fn check(&self) -> Result<(), &'static str> {
        if self.px_count_visib > self.px_count_all {
            return Err("px_count_visib exceeds px_count_all");
        }
        if !(0.0..=1.0).contains(&self.visib_fract) {
            return Err("visib_fract outside [0, 1]");
        }
        let expected = visibility_fraction(self.px_count_visib, self.px_count_all);
        if libm::fabs(self.visib_fract - expected) > 1e-12 {
            return Err("visib_fract does not match pixel counts");
        }
        match (self.bbox_obj, self.bbox_visib) {
            (Some(o), Some(v)) if !o.contains(&v) => Err("bbox_visib not inside bbox_obj"),
            (None, Some(_)) => Err("bbox_visib present without bbox_obj"),
            _ => Ok(()),
        }
    }
}

/// `visible / projected`, or 0 when nothing projects.
pub fn visibility_fraction(px_count_visib: u64, px_count_all: u64) -> f64 {
    if px_count_all == 0 {
        0.0
    } else {
        px_count_visib as f64 / px_count_all as f64
    }
}

#[derive(Default)]
struct MaskStats {
    count: u64,
    min_x: u32,
    min_y: u32,
    max_x: u32,
    max_y: u32,
}

impl MaskStats {
    fn add(&mut self, x: u32, y: u32) {
        if self.count == 0 {
            (self.min_x, self.max_x, self.min_y, self.max_y) = (x, x, y, y);
        } else {
            self.min_x = self.min_x.min(x);
            self.max_x = self.max_x.max(x);
            self.min_y = self.min_y.min(y);
            self.max_y = self.max_y.max(y);
        }
        self.count += 1;
    }

    fn bbox(&self) -> Option<BBox> {
        (self.count > 0).then(|| BBox {
            x: self.min_x as i32,
            y: self.min_y as i32,
            w: (self.max_x - self.min_x + 1) as i32,
            h: (self.max_y - self.min_y + 1) as i32,
        })
    }
}

fn mask_stats(fb: &FrameBuffers, id: u32) -> MaskStats {
    let mut stats = MaskStats::default();
    let w = fb.width() as usize;
    for (i, _) in fb.instance_id().iter().enumerate().filter(|(_, v)| **v == id) {
        stats.add((i % w) as u32, (i / w) as u32);
    }
    stats
}

pub fn compute_gt_info(
    full: &FrameBuffers,
    object_only: &FrameBuffers,
    instance: &SceneInstance,
    pose_cam: &Pose,
) -> Result<GtInfo, AnnotateError> {
    if full.width() != object_only.width() || full.height() != object_only.height() {
        return Err(AnnotateError::ResolutionMismatch(
            full.width(),
            full.height(),
            object_only.width(),
            object_only.height(),
        ));
    }
    let all = mask_stats(object_only, instance.instance_id);
    let visib = mask_stats(full, instance.instance_id);
    Ok(GtInfo {
        instance_id: instance.instance_id,
        obj_id: instance.obj_id,
        pose_cam: *pose_cam,
        bbox_obj: all.bbox(),
        bbox_visib: visib.bbox(),
        px_count_all: all.count,
        px_count_visib: visib.count,
        visib_fract: visibility_fraction(visib.count, all.count),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    NotPresent,
    BelowVisibility,
}

impl DropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::NotPresent => "not present",
            DropReason::BelowVisibility => "below visibility threshold",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Keeps a frame when the object has visible pixels and its visibility
/// fraction reaches `min_visibility`.
pub fn frame_filter(info: &GtInfo, min_visibility: f64) -> Result<(), DropReason> {
    if info.px_count_visib == 0 {
        Err(DropReason::NotPresent)
    } else if info.visib_fract < min_visibility {
        Err(DropReason::BelowVisibility)
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info(visib: u64, all: u64) -> GtInfo {
        GtInfo {
            instance_id: 1,
            obj_id: 1,
            pose_cam: Pose::identity(),
            bbox_obj: None,
            bbox_visib: None,
            px_count_all: all,
            px_count_visib: visib,
            visib_fract: visibility_fraction(visib, all),
        }
    }

    #[test]
    fn filter_examples() {
        assert_eq!(frame_filter(&info(0, 10), 0.0), Err(DropReason::NotPresent));
        assert_eq!(frame_filter(&info(5, 10), 0.0), Ok(()));
        assert_eq!(frame_filter(&info(29, 100), 0.30), Err(DropReason::BelowVisibility));
        assert_eq!(frame_filter(&info(30, 100), 0.30), Ok(()));
        assert_eq!(DropReason::BelowVisibility.as_str(), "below visibility threshold");
    }

    #[test]
    fn fraction_of_empty_projection_is_zero() {
        assert_eq!(visibility_fraction(0, 0), 0.0);
        assert!(info(0, 0).check().is_ok());
    }

    #[test]
    fn bbox_containment() {
        let outer = BBox { x: 2, y: 3, w: 10, h: 5 };
        assert!(outer.contains(&BBox { x: 2, y: 3, w: 10, h: 5 }));
        assert!(!outer.contains(&BBox { x: 1, y: 3, w: 2, h: 2 }));
        assert_eq!(BBox::from_array(BBox::EMPTY), None);
    }

    #[test]
    fn check_catches_bad_fraction() {
        let mut i = info(5, 10);
        i.visib_fract = 1.5;
        assert!(i.check().is_err());
    }
}
