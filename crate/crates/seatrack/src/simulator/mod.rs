//! Scenario synthesis: ground-truth robot trajectories, drone flight paths
//! that keep the robots in view, and per-frame detection feeds generated by
//! inverse projection with configurable noise. The simulator stands in for
//! the field data and the neural detector, and doubles as the ground-truth
//! oracle for every end-to-end test.
//!
//! All randomness flows from one seeded generator per scenario, split into
//! per-robot and per-drone streams in a fixed derivation order, so identical
//! configurations produce bit-identical frame streams.

use crate::evaluation::GeoTrajectory;
use crate::geodesy::{EnuPoint, GeoPoint, GeodesyError, GeodesyParams};
use crate::projection::{
    geo_to_pixel, BBox, CameraIntrinsics, Detection, DroneObservation, DronePose, ProjectionError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),
    #[error("n_drones must be 1, 2, or 3 (got {0})")]
    BadDroneCount(u32),
    #[error("n_robots must be at least 1")]
    NoRobots,
    #[error("{0} must lie in [0, 1]")]
    BadProbability(&'static str),
    #[error("confidence_range must satisfy 0 <= low <= high <= 1")]
    BadConfidenceRange,
    #[error("timestamp_jitter_s must not exceed 0.02")]
    JitterTooLarge,
    #[error("course too short for the hard-turns pattern")]
    CourseTooShort,
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("trajectory assembly failed: {0}")]
    Trajectory(String),
}

/// The five experiment categories. The suffix is the drone count used in the
/// corresponding field trial; the prefix names the motion pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Category {
    Linear3,
    Linear2,
    Linear1,
    NonLinear3,
    HardTurns3,
}

impl Category {
    pub fn motion(self) -> MotionKind {
        match self {
            Category::Linear3 | Category::Linear2 | Category::Linear1 => MotionKind::Linear,
            Category::NonLinear3 => MotionKind::NonLinear,
            Category::HardTurns3 => MotionKind::HardTurns,
        }
    }

    pub fn default_drone_count(self) -> u32 {
        match self {
            Category::Linear3 | Category::NonLinear3 | Category::HardTurns3 => 3,
            Category::Linear2 => 2,
            Category::Linear1 => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionKind {
    Linear,
    NonLinear,
    HardTurns,
}

/// Detection and sensing noise. Everything defaults to zero; the noiseless
/// simulator is the oracle configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct NoiseModel {
    /// Gaussian jitter on each detection center, pixels.
    pub pixel_sigma_px: f64,
    /// Detection confidences are drawn uniformly from this range.
    pub confidence_range: (f64, f64),
    /// Probability a detection is dropped entirely.
    pub dropout_prob: f64,
    /// Whole-image shake amplitude during a turbulence gust, pixels.
    pub shake_sigma_px: f64,
    /// Per-frame probability that a gust begins.
    pub gust_prob: f64,
    /// Noise on the drone's reported GNSS position, meters per axis.
    pub gnss_drone_sigma_m: f64,
    /// Noise on the drone's reported altitude, meters.
    pub altitude_sigma_m: f64,
    /// Noise on the drone's reported heading, degrees.
    pub heading_sigma_deg: f64,
    /// Uniform delay added to detection timestamps, seconds (at most 0.02).
    pub timestamp_jitter_s: f64,
}

impl NoiseModel {
    pub fn zero() -> Self {
        Self {
            confidence_range: (1.0, 1.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (v, name) in [
            (self.pixel_sigma_px, "pixel_sigma_px"),
            (self.shake_sigma_px, "shake_sigma_px"),
            (self.gnss_drone_sigma_m, "gnss_drone_sigma_m"),
            (self.altitude_sigma_m, "altitude_sigma_m"),
            (self.heading_sigma_deg, "heading_sigma_deg"),
            (self.timestamp_jitter_s, "timestamp_jitter_s"),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(SimError::NonPositive(name));
            }
        }
        for (p, name) in [(self.dropout_prob, "dropout_prob"), (self.gust_prob, "gust_prob")] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::BadProbability(name));
            }
        }
        let (lo, hi) = self.confidence_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(SimError::BadConfidenceRange);
        }
        if self.timestamp_jitter_s > 0.02 {
            return Err(SimError::JitterTooLarge);
        }
        Ok(())
    }
}

fn default_camera() -> CameraIntrinsics {
    // 640x640 image with a 60-degree horizontal field of view. The angular
    // model divides the pixel offset by the full image dimension, so the
    // half-width angle satisfies tan(30 deg) = (1/2) * sensor/focal.
    let ratio = 2.0 * (30.0_f64).to_radians().tan();
    CameraIntrinsics::new(640, 640, 1.0, ratio, ratio).expect("static intrinsics")
}

fn default_origin() -> GeoPoint {
    GeoPoint::new(45.0, -73.9).expect("static origin")
}

/// Full description of one simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub category: Category,
    pub n_robots: u32,
    pub n_drones: u32,
    pub course_length_m: f64,
    pub robot_speed_mps: f64,
    pub frame_rate_hz: f64,
    pub truth_rate_hz: f64,
    pub noise: NoiseModel,
    pub seed: u64,
    /// Lateral spacing between robots in formation, meters.
    pub robot_spacing_m: f64,
    /// Geographic anchor of the scenario's local frame.
    pub origin: GeoPoint,
    pub drone_altitude_min_m: f64,
    pub drone_altitude_max_m: f64,
    pub camera_tilt_deg: f64,
    pub camera: CameraIntrinsics,
    pub robot_length_m: f64,
    pub robot_width_m: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            category: Category::Linear3,
            n_robots: 2,
            n_drones: 3,
            course_length_m: 600.0,
            robot_speed_mps: 1.5,
            frame_rate_hz: 10.0,
            truth_rate_hz: 1.0,
            noise: NoiseModel::zero(),
            seed: 0,
            robot_spacing_m: 20.0,
            origin: default_origin(),
            drone_altitude_min_m: 40.0,
            drone_altitude_max_m: 100.0,
            camera_tilt_deg: 30.0,
            camera: default_camera(),
            robot_length_m: 1.5,
            robot_width_m: 1.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_robots == 0 {
            return Err(SimError::NoRobots);
        }
        if !(1..=3).contains(&self.n_drones) {
            return Err(SimError::BadDroneCount(self.n_drones));
        }
        for (v, name) in [
            (self.course_length_m, "course_length_m"),
            (self.robot_speed_mps, "robot_speed_mps"),
            (self.frame_rate_hz, "frame_rate_hz"),
            (self.truth_rate_hz, "truth_rate_hz"),
            (self.robot_spacing_m, "robot_spacing_m"),
            (self.drone_altitude_min_m, "drone_altitude_min_m"),
            (self.drone_altitude_max_m, "drone_altitude_max_m"),
            (self.robot_length_m, "robot_length_m"),
            (self.robot_width_m, "robot_width_m"),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::NonPositive(name));
            }
        }
        if !(0.0..90.0).contains(&self.camera_tilt_deg) {
            return Err(SimError::NonPositive("camera_tilt_deg"));
        }
        if self.drone_altitude_max_m < self.drone_altitude_min_m {
            return Err(SimError::NonPositive("drone altitude range"));
        }
        self.noise.validate()
    }
}

/// Everything the pipeline consumes for one tick, plus the ground truth the
/// evaluator needs.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBundle {
    pub tick: u64,
    pub timestamp_s: f64,
    pub observations: Vec<DroneObservation>,
    /// True robot positions this tick, by robot ID.
    pub truth: Vec<(u64, GeoPoint)>,
    /// Per drone, per detection: the robot that produced it.
    pub truth_labels: Vec<Vec<u64>>,
}

/// Dense planar polyline with arc-length lookup; constant-speed motion along
/// it is a linear interpolation.
#[derive(Debug, Clone)]
struct PlanarPath {
    points: Vec<(f64, f64)>,
    cumulative: Vec<f64>,
    total_len: f64,
}

impl PlanarPath {
    fn new(points: Vec<(f64, f64)>) -> Self {
        let mut cumulative = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in points.windows(2) {
            let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            acc += dx.hypot(dy);
            cumulative.push(acc);
        }
        Self {
            points,
            cumulative,
            total_len: acc,
        }
    }

    fn at_arc(&self, s: f64) -> (f64, f64) {
        let s = s.clamp(0.0, self.total_len);
        let idx = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&s).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        if idx + 1 >= self.points.len() {
            return *self.points.last().unwrap();
        }
        let seg = self.cumulative[idx + 1] - self.cumulative[idx];
        let f = if seg > 0.0 { (s - self.cumulative[idx]) / seg } else { 0.0 };
        let (a, b) = (self.points[idx], self.points[idx + 1]);
        (a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1))
    }
}

fn compass_dir(heading_rad: f64) -> (f64, f64) {
    (heading_rad.sin(), heading_rad.cos())
}

fn wrap_pi(a: f64) -> f64 {
    let mut x = a % (2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    } else if x < -PI {
        x += 2.0 * PI;
    }
    x
}

/// Integrates a heading profile over arc length into a dense polyline.
fn integrate_heading(length: f64, step: f64, heading_at: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    let n = (length / step).ceil() as usize;
    let mut pts = Vec::with_capacity(n + 1);
    let (mut e, mut n_coord) = (0.0, 0.0);
    pts.push((e, n_coord));
    let mut s = 0.0;
    for _ in 0..n {
        let ds = step.min(length - s);
        if ds <= 0.0 {
            break;
        }
        let (de, dn) = compass_dir(heading_at(s + ds / 2.0));
        e += de * ds;
        n_coord += dn * ds;
        pts.push((e, n_coord));
        s += ds;
    }
    pts
}

fn linear_path(length: f64, rng: &mut ChaCha8Rng) -> PlanarPath {
    let heading0 = rng.random_range(0.0..(2.0 * PI));
    // Slow drift: a couple of degrees over wavelengths longer than the
    // course, keeping the trajectory "mostly straight".
    let drift_amp = rng.random_range(1.0f64..2.5).to_radians();
    let wavelength = rng.random_range(2.0..3.0) * length;
    let phase = rng.random_range(0.0..(2.0 * PI));
    PlanarPath::new(integrate_heading(length, 0.25, |s| {
        heading0 + drift_amp * (2.0 * PI * s / wavelength + phase).sin()
    }))
}

/// Catmull-Rom spline through waypoints scattered around a base heading.
fn nonlinear_path(length: f64, rng: &mut ChaCha8Rng) -> PlanarPath {
    let heading0 = rng.random_range(0.0..(2.0 * PI));
    let dir = compass_dir(heading0);
    let perp = (-dir.1, dir.0);
    let spacing = 40.0;
    // Generate more forward distance than requested; the path is trimmed to
    // `length` by arc-length truncation below.
    let n_waypoints = ((length / spacing).ceil() as usize) + 3;
    let mut waypoints = Vec::with_capacity(n_waypoints);
    for k in 0..n_waypoints {
        let forward = spacing * k as f64;
        let lateral: f64 = {
            let raw: f64 = Normal::new(0.0, 15.0).unwrap().sample(rng);
            raw.clamp(-25.0, 25.0)
        };
        waypoints.push((
            dir.0 * forward + perp.0 * lateral,
            dir.1 * forward + perp.1 * lateral,
        ));
    }

    let mut pts = Vec::new();
    let wp = &waypoints;
    let get = |i: isize| -> (f64, f64) {
        let i = i.clamp(0, wp.len() as isize - 1) as usize;
        wp[i]
    };
    for seg in 0..wp.len() - 1 {
        let p0 = get(seg as isize - 1);
        let p1 = get(seg as isize);
        let p2 = get(seg as isize + 1);
        let p3 = get(seg as isize + 2);
        let steps = 100;
        for i in 0..steps {
            let t = i as f64 / steps as f64;
            let t2 = t * t;
            let t3 = t2 * t;
            let x = 0.5
                * ((2.0 * p1.0)
                    + (-p0.0 + p2.0) * t
                    + (2.0 * p0.0 - 5.0 * p1.0 + 4.0 * p2.0 - p3.0) * t2
                    + (-p0.0 + 3.0 * p1.0 - 3.0 * p2.0 + p3.0) * t3);
            let y = 0.5
                * ((2.0 * p1.1)
                    + (-p0.1 + p2.1) * t
                    + (2.0 * p0.1 - 5.0 * p1.1 + 4.0 * p2.1 - p3.1) * t2
                    + (-p0.1 + 3.0 * p1.1 - 3.0 * p2.1 + p3.1) * t3);
            pts.push((x, y));
        }
    }
    pts.push(*wp.last().unwrap());

    // Trim to the requested arc length.
    let full = PlanarPath::new(pts);
    let mut trimmed = Vec::new();
    let mut s = 0.0;
    while s < length.min(full.total_len) {
        trimmed.push(full.at_arc(s));
        s += 0.25;
    }
    trimmed.push(full.at_arc(length.min(full.total_len)));
    PlanarPath::new(trimmed)
}

/// Boustrophedon course: straight legs joined by 180-degree turns of small
/// radius, the hardest motion pattern for a constant-velocity filter.
fn hard_turns_path(length: f64, rng: &mut ChaCha8Rng) -> Result<PlanarPath, SimError> {
    let radius = 3.0;
    let heading0 = rng.random_range(0.0..(2.0 * PI));
    let u = compass_dir(heading0);
    let v = (-u.1, u.0); // left of travel
    let n_turns = ((length / 120.0).round() as usize).max(3);
    let arc_total = n_turns as f64 * PI * radius;
    if length <= arc_total + 10.0 * (n_turns as f64 + 1.0) {
        return Err(SimError::CourseTooShort);
    }
    let seg_len = (length - arc_total) / (n_turns as f64 + 1.0);

    let mut pts: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    let mut pos = (0.0, 0.0);
    let mut forward = 1.0; // +1 along u, -1 against it
    let step = 0.25;
    for leg in 0..=n_turns {
        // Straight leg.
        let n_steps = (seg_len / step).ceil() as usize;
        for i in 1..=n_steps {
            let s = (i as f64 * step).min(seg_len);
            pts.push((
                pos.0 + u.0 * s * forward,
                pos.1 + u.1 * s * forward,
            ));
        }
        pos = (pos.0 + u.0 * seg_len * forward, pos.1 + u.1 * seg_len * forward);
        if leg == n_turns {
            break;
        }
        // Semicircle displacing the course by 2r to the left of the
        // original heading, reversing the direction of travel.
        let center = (pos.0 + v.0 * radius, pos.1 + v.1 * radius);
        let arc_steps = 64;
        for i in 1..=arc_steps {
            let theta = PI * i as f64 / arc_steps as f64;
            let radial = (
                -v.0 * theta.cos() + u.0 * theta.sin() * forward,
                -v.1 * theta.cos() + u.1 * theta.sin() * forward,
            );
            pts.push((center.0 + radial.0 * radius, center.1 + radial.1 * radius));
        }
        pos = (center.0 + v.0 * radius, center.1 + v.1 * radius);
        forward = -forward;
    }
    Ok(PlanarPath::new(pts))
}

/// Evenly spread altitudes: one drone flies the midpoint, more drones fan
/// out between the configured bounds.
fn altitude_spread(n: u32, min: f64, max: f64) -> Vec<f64> {
    if n == 1 {
        return vec![(min + max) / 2.0];
    }
    (0..n)
        .map(|i| min + (max - min) * f64::from(i) / f64::from(n - 1))
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct DroneTickState {
    enu: EnuPoint,
    altitude_m: f64,
    heading_deg: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct GustState {
    remaining: u32,
    offset_px: (f64, f64),
}

/// Stateful scenario generator. Frames must be rendered in tick order.
pub struct Simulator {
    config: ScenarioConfig,
    geodesy: GeodesyParams,
    shape: PlanarPath,
    robot_offsets: Vec<(f64, f64)>,
    drone_states: Vec<Vec<DroneTickState>>,
    drone_rngs: Vec<ChaCha8Rng>,
    gusts: Vec<GustState>,
    total_ticks: u64,
}

impl Simulator {
    pub fn new(config: &ScenarioConfig) -> Result<Self, SimError> {
        config.validate()?;
        let geodesy = GeodesyParams::default();
        let mut master = ChaCha8Rng::seed_from_u64(config.seed);

        // Fixed derivation order: course shape first, then one stream per
        // drone.
        let mut shape_rng = ChaCha8Rng::seed_from_u64(master.random());
        let shape = match config.category.motion() {
            MotionKind::Linear => linear_path(config.course_length_m, &mut shape_rng),
            MotionKind::NonLinear => nonlinear_path(config.course_length_m, &mut shape_rng),
            MotionKind::HardTurns => hard_turns_path(config.course_length_m, &mut shape_rng)?,
        };
        let drone_rngs: Vec<ChaCha8Rng> = (0..config.n_drones)
            .map(|_| ChaCha8Rng::seed_from_u64(master.random()))
            .collect();

        // Robots hold a fixed lateral formation perpendicular to the initial
        // course direction so their separation never collapses.
        let (p0, p1) = (shape.at_arc(0.0), shape.at_arc(1.0));
        let (dx, dy) = (p1.0 - p0.0, p1.1 - p0.1);
        let norm = dx.hypot(dy).max(1e-9);
        let perp = (-dy / norm, dx / norm);
        let robot_offsets: Vec<(f64, f64)> = (0..config.n_robots)
            .map(|r| {
                let lane = f64::from(r) - f64::from(config.n_robots - 1) / 2.0;
                (perp.0 * lane * config.robot_spacing_m, perp.1 * lane * config.robot_spacing_m)
            })
            .collect();

        let duration_s = shape.total_len / config.robot_speed_mps;
        let total_ticks = (duration_s * config.frame_rate_hz).floor() as u64 + 1;

        let mut sim = Self {
            config: config.clone(),
            geodesy,
            shape,
            robot_offsets,
            drone_states: Vec::new(),
            drone_rngs,
            gusts: vec![GustState::default(); config.n_drones as usize],
            total_ticks,
        };
        sim.drone_states = sim.plan_drone_paths();
        Ok(sim)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn total_ticks(&self) -> u64 {
        self.total_ticks
    }

    pub fn duration_s(&self) -> f64 {
        self.shape.total_len / self.config.robot_speed_mps
    }

    fn robot_enu_at(&self, robot: usize, t: f64) -> EnuPoint {
        let s = (self.config.robot_speed_mps * t).clamp(0.0, self.shape.total_len);
        let (e, n) = self.shape.at_arc(s);
        let off = self.robot_offsets[robot];
        EnuPoint::new(e + off.0, n + off.1)
    }

    fn robot_geo_at(&self, robot: usize, t: f64) -> Result<GeoPoint, GeodesyError> {
        self.geodesy
            .from_enu(&self.robot_enu_at(robot, t), &self.config.origin)
    }

    /// Plans every drone's pose for every tick: each drone trails the robot
    /// formation centroid, with a small lateral offset for view diversity
    /// and a low-pass filtered heading.
    ///
    /// The trailing standoff is the larger of the boresight distance implied
    /// by the camera tilt and the distance needed for the horizontal field
    /// of view to cover the whole robot formation, so every robot stays in
    /// frame in the noiseless case.
    fn plan_drone_paths(&self) -> Vec<Vec<DroneTickState>> {
        let n_drones = self.config.n_drones as usize;
        let altitudes = altitude_spread(
            self.config.n_drones,
            self.config.drone_altitude_min_m,
            self.config.drone_altitude_max_m,
        );
        let tilt = self.config.camera_tilt_deg.to_radians();
        let dt = 1.0 / self.config.frame_rate_hz;

        let cam = &self.config.camera;
        let tan_half_fov_x = 0.5 * cam.sensor_width_mm / cam.focal_length_mm;
        let formation_half =
            f64::from(self.config.n_robots - 1) / 2.0 * self.config.robot_spacing_m;

        let centroid = |t: f64| -> (f64, f64) {
            let s = (self.config.robot_speed_mps * t).clamp(0.0, self.shape.total_len);
            self.shape.at_arc(s)
        };

        let mut states = vec![Vec::with_capacity(self.total_ticks as usize); n_drones];
        let mut smoothed: Vec<f64> = Vec::new();
        for tick in 0..self.total_ticks {
            let t = tick as f64 * dt;
            let c = centroid(t);
            let ahead = centroid(t + dt);
            let (ve, vn) = (ahead.0 - c.0, ahead.1 - c.1);
            let target = if ve.hypot(vn) > 1e-9 {
                ve.atan2(vn)
            } else if let Some(&prev) = smoothed.first() {
                prev
            } else {
                0.0
            };
            if smoothed.is_empty() {
                smoothed = vec![target; n_drones];
            }
            for (j, state) in states.iter_mut().enumerate() {
                let gain = (dt * 2.0).min(1.0);
                smoothed[j] += wrap_pi(target - smoothed[j]) * gain;
                let heading = smoothed[j];
                let dir = compass_dir(heading);
                let perp = (-dir.1, dir.0);
                let side = (f64::from(j as u32) - f64::from(self.config.n_drones - 1) / 2.0) * 12.0;
                let required_slant = (formation_half + side.abs() + 10.0) / tan_half_fov_x;
                let altitude = altitudes[j];
                let coverage_standoff =
                    (required_slant * required_slant - altitude * altitude).max(0.0).sqrt();
                let standoff = (altitude * tilt.tan()).max(coverage_standoff);
                state.push(DroneTickState {
                    enu: EnuPoint::new(
                        c.0 - dir.0 * standoff + perp.0 * side,
                        c.1 - dir.1 * standoff + perp.1 * side,
                    ),
                    altitude_m: altitudes[j],
                    heading_deg: normalize_heading(heading.to_degrees()),
                });
            }
        }
        states
    }

    /// The drone's true pose at a tick.
    pub fn drone_pose(&self, drone: usize, tick: u64) -> Result<DronePose, SimError> {
        let s = &self.drone_states[drone][tick as usize];
        let position = self.geodesy.from_enu(&s.enu, &self.config.origin)?;
        Ok(DronePose::new(position, s.altitude_m, s.heading_deg, self.config.camera_tilt_deg)?)
    }

    /// Ground-truth trajectory of one robot, sampled at the truth rate.
    pub fn robot_trajectory(&self, robot: usize) -> Result<GeoTrajectory, SimError> {
        let duration = self.duration_s();
        let mut samples = Vec::new();
        let mut k = 0u64;
        loop {
            let t = k as f64 / self.config.truth_rate_hz;
            if t > duration {
                break;
            }
            samples.push((t, self.robot_geo_at(robot, t)?));
            k += 1;
        }
        GeoTrajectory::new(samples, self.config.truth_rate_hz)
            .map_err(|e| SimError::Trajectory(e.to_string()))
    }

    /// Renders a frame: per drone, per visible robot, an inverse-projected
    /// pixel detection with noise, plus the noisy reported pose. Turbulence
    /// gusts shake every detection of a drone identically and persist for a
    /// few frames once triggered.
    pub fn render_frame(&mut self, tick: u64) -> Result<FrameBundle, SimError> {
        let t = tick as f64 / self.config.frame_rate_hz;
        let noise = self.config.noise;
        let cam = self.config.camera;

        let truth: Vec<(u64, GeoPoint)> = (0..self.config.n_robots as usize)
            .map(|r| Ok((r as u64, self.robot_geo_at(r, t)?)))
            .collect::<Result<_, GeodesyError>>()?;
        let robot_enus: Vec<EnuPoint> = (0..self.config.n_robots as usize)
            .map(|r| self.robot_enu_at(r, t))
            .collect();

        let mut observations = Vec::with_capacity(self.config.n_drones as usize);
        let mut truth_labels = Vec::with_capacity(self.config.n_drones as usize);

        for j in 0..self.config.n_drones as usize {
            let true_pose = self.drone_pose(j, tick)?;
            let state = self.drone_states[j][tick as usize];
            let rng = &mut self.drone_rngs[j];

            // Gust lifecycle: a fresh gust draws one whole-image offset and
            // holds it for a few frames.
            let gust = &mut self.gusts[j];
            if gust.remaining > 0 {
                gust.remaining -= 1;
            } else if noise.gust_prob > 0.0 && rng.random::<f64>() < noise.gust_prob {
                let shake = Normal::new(0.0, noise.shake_sigma_px).unwrap();
                gust.remaining = rng.random_range(3..=6);
                gust.offset_px = (shake.sample(rng), shake.sample(rng));
            } else {
                gust.offset_px = (0.0, 0.0);
            }
            let gusting = gust.remaining > 0;

            let jitter = Normal::new(0.0, noise.pixel_sigma_px).unwrap();
            let mut detections = Vec::new();
            let mut labels = Vec::new();
            for (robot_id, robot_geo) in &truth {
                let Some((x, y)) = geo_to_pixel(robot_geo, &true_pose, &cam, &self.geodesy)
                else {
                    continue;
                };
                if noise.dropout_prob > 0.0 && rng.random::<f64>() < noise.dropout_prob {
                    continue;
                }
                let mut px = x + jitter.sample(rng);
                let mut py = y + jitter.sample(rng);
                if gusting {
                    px += gust.offset_px.0;
                    py += gust.offset_px.1;
                }
                if px < 0.0 || px > cam.width() || py < 0.0 || py > cam.height() {
                    continue;
                }
                // Approximate pixel footprint of the robot at its range.
                let robot_enu = robot_enus[*robot_id as usize];
                let de = robot_enu.east_m - state.enu.east_m;
                let dn = robot_enu.north_m - state.enu.north_m;
                let slant = (de * de + dn * dn + state.altitude_m * state.altitude_m).sqrt();
                let scale_x = slant * cam.sensor_width_mm / (cam.focal_length_mm * cam.width());
                let scale_y = slant * cam.sensor_height_mm / (cam.focal_length_mm * cam.height());
                let bw = (self.config.robot_length_m / scale_x).max(2.0);
                let bh = (self.config.robot_width_m / scale_y).max(2.0);

                let (c_lo, c_hi) = noise.confidence_range;
                let confidence = if c_hi > c_lo { rng.random_range(c_lo..c_hi) } else { c_lo };
                let timestamp_s = if noise.timestamp_jitter_s > 0.0 {
                    t + rng.random_range(0.0..noise.timestamp_jitter_s)
                } else {
                    t
                };
                detections.push(Detection {
                    bbox: BBox::new(px, py, bw, bh),
                    confidence,
                    frame_index: tick,
                    timestamp_s,
                });
                labels.push(*robot_id);
            }

            // Reported pose: the true pose perturbed by the drone's own
            // sensing noise.
            let gnss = Normal::new(0.0, noise.gnss_drone_sigma_m).unwrap();
            let reported_enu = EnuPoint::new(
                state.enu.east_m + gnss.sample(rng),
                state.enu.north_m + gnss.sample(rng),
            );
            let alt_noise = Normal::new(0.0, noise.altitude_sigma_m).unwrap().sample(rng);
            let heading_noise = Normal::new(0.0, noise.heading_sigma_deg).unwrap().sample(rng);
            let reported_pose = DronePose::new(
                self.geodesy.from_enu(&reported_enu, &self.config.origin)?,
                (state.altitude_m + alt_noise).max(1.0),
                normalize_heading(state.heading_deg + heading_noise),
                self.config.camera_tilt_deg,
            )?;

            observations.push(DroneObservation {
                drone_id: j as u32,
                pose: reported_pose,
                camera: cam,
                detections,
            });
            truth_labels.push(labels);
        }

        Ok(FrameBundle {
            tick,
            timestamp_s: t,
            observations,
            truth,
            truth_labels,
        })
    }
}

fn normalize_heading(deg: f64) -> f64 {
    let mut h = deg % 360.0;
    if h < 0.0 {
        h += 360.0;
    }
    if h >= 360.0 {
        h = 0.0;
    }
    h
}

/// Builds just the ground-truth trajectory of one robot for a configuration;
/// convenience wrapper over the full simulator.
pub fn generate_robot_trajectory(
    config: &ScenarioConfig,
    robot: usize,
) -> Result<GeoTrajectory, SimError> {
    Simulator::new(config)?.robot_trajectory(robot)
}
