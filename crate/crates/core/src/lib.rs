//! Core algorithms for generating and evaluating synthetic 6D-pose datasets.
//!
//! Everything here is pure computation over in-memory values: rigid poses and
//! pinhole projection, triangle meshes, the endoscope-camera kinematic chain,
//! keyframed trajectories, a deterministic z-buffer rasterizer, ground-truth
//! annotation (masks, boxes, visibility fraction), pose error metrics and a
//! DLT + Levenberg-Marquardt PnP solver.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the dataset
//! writer, the CLI and the HTTP service live in the `surgpose` crate.
//!
//! Units: lengths in millimetres, angles in radians unless a name says
//! otherwise, pixels for image coordinates. Camera frame is x right, y down,
//! z forward.

#![no_std]
// NaN must fail range checks, so negated comparisons are intentional
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod annotate;
pub mod geometry;
pub mod kinematics;
pub mod mesh;
pub mod metrics;
pub mod pnp;
pub mod random;
pub mod render;
pub mod scene;
pub mod trajectory;

pub use annotate::{compute_gt_info, frame_filter, BBox, DropReason, GtInfo};
pub use geometry::{AxisAngle, CameraModel, GeometryError, Mat3, Pose, Vec3};
pub use kinematics::{ecm_forward_kinematics, EcmRig, JointLimits, KinematicsError};
pub use mesh::{generate_needle_mesh, mesh_diameter, MeshError, TriMesh};
pub use metrics::{e_mssd, e_re, e_te, MetricRecord, SummaryStats, SymmetrySet};
pub use pnp::{reprojection_rmse, solve_pnp, Correspondence, PnpError, PnpSolution};
pub use random::{sample_viewpoint, ViewpointRandomization, ViewpointSample};
pub use render::{render_frame, shade_blinn_phong, DirectionalLight, FrameBuffers, LightSpec};
pub use scene::{Material, SceneInstance};
pub use trajectory::{Keyframe, SceneState, Trajectory, TrajectoryError};
