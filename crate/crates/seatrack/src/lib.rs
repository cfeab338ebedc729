//! Multi-drone GNSS tracking for surface marine robots.
//!
//! A swarm of camera drones observes robots swimming at the water surface.
//! Each drone detects the robots in its video feed, projects every pixel
//! detection into a GNSS coordinate using its own pose and camera intrinsics,
//! and tracks the robots frame to frame. Estimates from all drones are then
//! reconciled into one stable position per robot:
//!
//! 1. [`projection`] turns a bounding box plus drone pose into a geographic
//!    position estimate, exposing every geometric intermediate.
//! 2. [`tracker`] runs a per-drone two-stage multi-object tracker whose
//!    matching score blends image IOU with geographic proximity.
//! 3. [`alignment`] maps track IDs across drones onto a reference drone so a
//!    physical robot carries a single global ID everywhere.
//! 4. [`fusion`] merges per-drone estimates with confidence weights and
//!    filters them with a constant-velocity EKF.
//! 5. [`evaluation`] scores estimated trajectories against ground truth with
//!    translation-only ICP and counts tracking ID switches.
//! 6. [`simulator`] synthesizes whole scenarios (robot courses, drone flight
//!    paths, noisy detections) and doubles as the ground-truth oracle.
//!
//! [`pipeline`] wires stages 1-4 together per frame, and [`runner`] executes
//! full scenarios from a JSON config, writing CSV logs and JSON reports. The
//! `seatrack` binary is a thin CLI over [`runner`].
//!
//! Start with the `examples/` directory: each example is a runnable tour of
//! one capability (`cargo run --example run_pipeline`).

pub mod alignment;
pub mod assignment;
pub mod evaluation;
pub mod fusion;
pub mod geodesy;
pub mod pipeline;
pub mod projection;
pub mod runner;
pub mod simulator;
pub mod tracker;

pub use geodesy::{EnuPoint, GeoPoint, GeodesyParams};
pub use projection::{BBox, CameraIntrinsics, Detection, DronePose, DroneObservation};
