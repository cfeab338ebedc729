//! Pixel-to-GNSS projection: converts one bounding-box detection plus the
//! observing drone's pose and camera intrinsics into a geographic position
//! estimate, exposing every geometric intermediate for inspection.
//!
//! The chain runs: pixel offset from image center, angular displacement
//! through the lens, forward ground distance from altitude and tilt, lateral
//! distance, bearing offset, surface range, north/east offsets in the drone's
//! compass frame, and finally an angular shift applied to the drone's own
//! GNSS fix. [`geo_to_pixel`] is the exact inverse and serves as the
//! detection oracle for the simulator.

use crate::geodesy::{EnuPoint, GeoPoint, GeodesyError, GeodesyParams};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    /// The sight line points at or above the horizontal and never reaches the
    /// water surface.
    #[error("sight line at {angle_deg:.3} degrees from vertical never reaches the surface")]
    AboveHorizon { angle_deg: f64 },
    /// The sight line lands behind the drone's nadir point; the forward-range
    /// model does not cover it.
    #[error("sight line at {angle_deg:.3} degrees from vertical falls behind the nadir point")]
    BehindNadir { angle_deg: f64 },
    /// Zero forward distance with a nonzero lateral component leaves the
    /// bearing offset undefined.
    #[error("zero forward distance with nonzero lateral offset")]
    DegenerateGeometry,
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),
    #[error("{0} is out of range")]
    OutOfRange(&'static str),
}

/// Pinhole camera description: image size in pixels, focal length and sensor
/// dimensions in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub image_width_px: u32,
    pub image_height_px: u32,
    pub focal_length_mm: f64,
    pub sensor_width_mm: f64,
    pub sensor_height_mm: f64,
}

impl CameraIntrinsics {
    pub fn new(
        image_width_px: u32,
        image_height_px: u32,
        focal_length_mm: f64,
        sensor_width_mm: f64,
        sensor_height_mm: f64,
    ) -> Result<Self, ProjectionError> {
        if image_width_px == 0 || image_height_px == 0 {
            return Err(ProjectionError::NonPositive("image dimensions"));
        }
        for (value, name) in [
            (focal_length_mm, "focal_length_mm"),
            (sensor_width_mm, "sensor_width_mm"),
            (sensor_height_mm, "sensor_height_mm"),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ProjectionError::NonPositive(name));
            }
        }
        Ok(Self {
            image_width_px,
            image_height_px,
            focal_length_mm,
            sensor_width_mm,
            sensor_height_mm,
        })
    }

    pub fn width(&self) -> f64 {
        f64::from(self.image_width_px)
    }

    pub fn height(&self) -> f64 {
        f64::from(self.image_height_px)
    }
}

/// Drone pose at one frame: GNSS fix, altitude above the water surface,
/// compass heading, and the effective camera tilt from vertical (gimbal tilt
/// and pitch combined). Yaw and roll are assumed zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DronePose {
    pub position: GeoPoint,
    pub altitude_m: f64,
    /// Degrees clockwise from true north, in `[0, 360)`.
    pub heading_deg: f64,
    /// Degrees from vertical, in `[0, 90)`.
    pub tilt_deg: f64,
}

impl DronePose {
    pub fn new(
        position: GeoPoint,
        altitude_m: f64,
        heading_deg: f64,
        tilt_deg: f64,
    ) -> Result<Self, ProjectionError> {
        if !(altitude_m.is_finite() && altitude_m > 0.0) {
            return Err(ProjectionError::NonPositive("altitude_m"));
        }
        if !(0.0..360.0).contains(&heading_deg) {
            return Err(ProjectionError::OutOfRange("heading_deg"));
        }
        if !(0.0..90.0).contains(&tilt_deg) {
            return Err(ProjectionError::OutOfRange("tilt_deg"));
        }
        Ok(Self {
            position,
            altitude_m,
            heading_deg,
            tilt_deg,
        })
    }
}

/// Axis-aligned bounding box described by its center and size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub center_x_px: f64,
    pub center_y_px: f64,
    pub width_px: f64,
    pub height_px: f64,
}

impl BBox {
    pub fn new(center_x_px: f64, center_y_px: f64, width_px: f64, height_px: f64) -> Self {
        Self {
            center_x_px,
            center_y_px,
            width_px,
            height_px,
        }
    }

    pub fn area(&self) -> f64 {
        self.width_px * self.height_px
    }
}

/// One detection from one drone at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    /// Detector confidence in `[0, 1]`.
    pub confidence: f64,
    pub frame_index: u64,
    pub timestamp_s: f64,
}

/// Everything one drone reports for one frame: its (noisy) pose, its camera,
/// and the detections it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroneObservation {
    pub drone_id: u32,
    pub pose: DronePose,
    pub camera: CameraIntrinsics,
    pub detections: Vec<Detection>,
}

/// Every intermediate of the projection chain, kept for testing and
/// diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionTrace {
    /// Pixel displacement from the image center, x then y.
    pub dx_px: f64,
    pub dy_px: f64,
    /// Angular displacement through the lens, radians.
    pub theta_x_rad: f64,
    pub theta_y_rad: f64,
    /// Ground distance from the drone's nadir point along the camera's
    /// forward azimuth.
    pub forward_m: f64,
    /// Lateral ground distance perpendicular to the forward azimuth.
    pub lateral_m: f64,
    /// Bearing offset of the object relative to the camera azimuth, radians.
    pub bearing_offset_rad: f64,
    /// Radial surface distance from nadir to the object.
    pub surface_range_m: f64,
    /// Offsets in the global compass frame.
    pub north_m: f64,
    pub east_m: f64,
    /// The resulting GNSS estimate.
    pub estimate: GeoPoint,
}

/// Pixel displacement of a box center from the image center.
pub fn pixel_offsets(bbox: &BBox, cam: &CameraIntrinsics) -> (f64, f64) {
    (
        bbox.center_x_px - cam.width() / 2.0,
        bbox.center_y_px - cam.height() / 2.0,
    )
}

/// Angular displacement through the lens for a pixel offset. Both angles lie
/// in `(-pi/2, pi/2)`.
pub fn angular_displacement(dx_px: f64, dy_px: f64, cam: &CameraIntrinsics) -> (f64, f64) {
    let theta_x = ((dx_px / cam.width()) * (cam.sensor_width_mm / cam.focal_length_mm)).atan();
    let theta_y = ((dy_px / cam.height()) * (cam.sensor_height_mm / cam.focal_length_mm)).atan();
    (theta_x, theta_y)
}

/// Runs the full projection chain for one detection.
///
/// The depression angle (tilt plus vertical pixel angle) must stay within
/// `[0, pi/2)`: at or past horizontal the ray never meets the surface, and
/// negative depression would land behind the nadir point.
pub fn project_detection(
    det: &Detection,
    pose: &DronePose,
    cam: &CameraIntrinsics,
    geodesy: &GeodesyParams,
) -> Result<ProjectionTrace, ProjectionError> {
    let (dx_px, dy_px) = pixel_offsets(&det.bbox, cam);
    let (theta_x_rad, theta_y_rad) = angular_displacement(dx_px, dy_px, cam);

    let depression = pose.tilt_deg.to_radians() + theta_y_rad;
    if depression >= FRAC_PI_2 {
        return Err(ProjectionError::AboveHorizon {
            angle_deg: depression.to_degrees(),
        });
    }
    if depression < 0.0 {
        return Err(ProjectionError::BehindNadir {
            angle_deg: depression.to_degrees(),
        });
    }

    let forward_m = pose.altitude_m * depression.tan();
    let slant = (pose.altitude_m * pose.altitude_m + forward_m * forward_m).sqrt();
    let lateral_m = slant * theta_x_rad.tan();
    if forward_m == 0.0 && lateral_m != 0.0 {
        return Err(ProjectionError::DegenerateGeometry);
    }

    // atan2 rather than atan(lateral/forward): total at forward == 0 and
    // quadrant-correct for large offsets.
    let bearing_offset_rad = lateral_m.atan2(forward_m);
    let surface_range_m = (forward_m * forward_m + lateral_m * lateral_m).sqrt();

    let azimuth = pose.heading_deg.to_radians() + bearing_offset_rad;
    let north_m = surface_range_m * azimuth.cos();
    let east_m = surface_range_m * azimuth.sin();

    let estimate = geodesy.from_enu(&EnuPoint::new(east_m, north_m), &pose.position)?;

    Ok(ProjectionTrace {
        dx_px,
        dy_px,
        theta_x_rad,
        theta_y_rad,
        forward_m,
        lateral_m,
        bearing_offset_rad,
        surface_range_m,
        north_m,
        east_m,
        estimate,
    })
}

/// Exact inverse of [`project_detection`]: the pixel at which `target` would
/// appear for the given pose and camera, or `None` when the target is not in
/// view (outside the image, behind the nadir point, or beyond the small-area
/// projection limit).
pub fn geo_to_pixel(
    target: &GeoPoint,
    pose: &DronePose,
    cam: &CameraIntrinsics,
    geodesy: &GeodesyParams,
) -> Option<(f64, f64)> {
    let enu = geodesy.to_enu(target, &pose.position).ok()?;
    let surface_range = enu.norm();
    let azimuth = enu.east_m.atan2(enu.north_m);
    let bearing_offset = wrap_angle(azimuth - pose.heading_deg.to_radians());

    let forward = surface_range * bearing_offset.cos();
    let lateral = surface_range * bearing_offset.sin();
    if forward < 0.0 || (forward == 0.0 && lateral != 0.0) {
        return None;
    }

    let depression = (forward / pose.altitude_m).atan();
    let theta_y = depression - pose.tilt_deg.to_radians();
    let slant = (pose.altitude_m * pose.altitude_m + forward * forward).sqrt();
    // tan(atan(lateral / slant)) collapses back to the ratio.
    let dx = (lateral / slant) * cam.width() * (cam.focal_length_mm / cam.sensor_width_mm);
    let dy = theta_y.tan() * cam.height() * (cam.focal_length_mm / cam.sensor_height_mm);

    let x = dx + cam.width() / 2.0;
    let y = dy + cam.height() / 2.0;
    if x < 0.0 || x > cam.width() || y < 0.0 || y > cam.height() {
        return None;
    }
    Some((x, y))
}

/// Wraps an angle to `(-pi, pi]`.
fn wrap_angle(angle: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut a = angle % two_pi;
    if a <= -std::f64::consts::PI {
        a += two_pi;
    } else if a > std::f64::consts::PI {
        a -= two_pi;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_camera() -> CameraIntrinsics {
        // f == Sx == Sy, so theta = atan(offset / dimension).
        CameraIntrinsics::new(640, 640, 1.0, 1.0, 1.0).unwrap()
    }

    fn detection_at(x: f64, y: f64) -> Detection {
        Detection {
            bbox: BBox::new(x, y, 20.0, 12.0),
            confidence: 0.9,
            frame_index: 0,
            timestamp_s: 0.0,
        }
    }

    #[test]
    fn pixel_offsets_centered_and_shifted() {
        let cam = unit_camera();
        assert_eq!(pixel_offsets(&BBox::new(320.0, 320.0, 4.0, 4.0), &cam), (0.0, 0.0));
        assert_eq!(pixel_offsets(&BBox::new(480.0, 320.0, 4.0, 4.0), &cam), (160.0, 0.0));
        let (a, b) = pixel_offsets(&BBox::new(200.0, 100.0, 4.0, 4.0), &cam);
        let (c, d) = pixel_offsets(&BBox::new(440.0, 540.0, 4.0, 4.0), &cam);
        assert_eq!((a, b), (-c, -d));
    }

    #[test]
    fn angular_displacement_reference_points() {
        let cam = unit_camera();
        assert_eq!(angular_displacement(0.0, 0.0, &cam), (0.0, 0.0));
        // Offset equal to the full image width with f == Sx gives atan(1).
        let (tx, _) = angular_displacement(640.0, 0.0, &cam);
        assert!((tx - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        // Odd function.
        let (tp, _) = angular_displacement(123.0, 0.0, &cam);
        let (tn, _) = angular_displacement(-123.0, 0.0, &cam);
        assert_eq!(tp, -tn);
    }

    #[test]
    fn centered_detection_maps_straight_ahead() {
        let g = GeodesyParams::default();
        let cam = unit_camera();
        let pose = DronePose::new(GeoPoint::new(45.0, -73.9).unwrap(), 100.0, 0.0, 45.0).unwrap();
        let trace = project_detection(&detection_at(320.0, 320.0), &pose, &cam, &g).unwrap();
        assert!((trace.forward_m - 100.0).abs() < 1e-9);
        assert_eq!(trace.lateral_m, 0.0);
        assert_eq!(trace.bearing_offset_rad, 0.0);
        assert!((trace.surface_range_m - 100.0).abs() < 1e-9);
        assert!((trace.north_m - 100.0).abs() < 1e-9);
        assert!(trace.east_m.abs() < 1e-9);
    }

    #[test]
    fn heading_rotates_offsets_east() {
        let g = GeodesyParams::default();
        let cam = unit_camera();
        let pose = DronePose::new(GeoPoint::new(45.0, -73.9).unwrap(), 100.0, 90.0, 45.0).unwrap();
        let trace = project_detection(&detection_at(320.0, 320.0), &pose, &cam, &g).unwrap();
        assert!(trace.north_m.abs() < 1e-9);
        assert!((trace.east_m - trace.surface_range_m).abs() < 1e-9);
    }

    /// Frozen values from an independent straight-line evaluation of the
    /// chain (A = 120 m, tilt 30 degrees, heading 25 degrees, 640x640 image
    /// with f = Sx = Sy, box center at (480, 400), drone at 45N 73.9W).
    #[test]
    fn matches_frozen_scalar_oracle() {
        let g = GeodesyParams::default();
        let cam = unit_camera();
        let pose = DronePose::new(GeoPoint::new(45.0, -73.9).unwrap(), 120.0, 25.0, 30.0).unwrap();
        let trace = project_detection(&detection_at(480.0, 400.0), &pose, &cam, &g).unwrap();

        let rel = |got: f64, want: f64| (got - want).abs() <= 1e-9 * want.abs().max(1.0);
        assert_eq!(trace.dx_px, 160.0);
        assert_eq!(trace.dy_px, 80.0);
        assert!(rel(trace.theta_x_rad, 0.24497866312686414));
        assert!(rel(trace.theta_y_rad, 0.12435499454676144));
        assert!(rel(trace.forward_m, 90.83767695831017));
        assert!(rel(trace.lateral_m, 37.62602453354452));
        assert!(rel(trace.bearing_offset_rad, 0.3926974538810709));
        assert!(rel(trace.surface_range_m, 98.32192673753505));
        assert!(rel(trace.north_m, 66.42544889905669));
        assert!(rel(trace.east_m, 72.49042016666768));
        assert!(rel(trace.estimate.lat_deg, 45.00059737841378));
        assert!(rel(trace.estimate.lon_deg, -73.89907804305075));
    }

    #[test]
    fn horizon_and_nadir_errors() {
        let g = GeodesyParams::default();
        let cam = unit_camera();
        // Tilt 80 degrees plus a large downward-in-image angle crosses 90.
        let pose = DronePose::new(GeoPoint::new(45.0, -73.9).unwrap(), 100.0, 0.0, 80.0).unwrap();
        let err = project_detection(&detection_at(320.0, 620.0), &pose, &cam, &g).unwrap_err();
        assert!(matches!(err, ProjectionError::AboveHorizon { .. }));

        // Tilt 5 degrees with a strong upward pixel angle drops below nadir.
        let pose = DronePose::new(GeoPoint::new(45.0, -73.9).unwrap(), 100.0, 0.0, 5.0).unwrap();
        let err = project_detection(&detection_at(320.0, 20.0), &pose, &cam, &g).unwrap_err();
        assert!(matches!(err, ProjectionError::BehindNadir { .. }));
    }

    #[test]
    fn nadir_with_lateral_offset_is_degenerate() {
        let g = GeodesyParams::default();
        let cam = unit_camera();
        // Tilt zero, vertically centered pixel, lateral offset nonzero:
        // forward distance is exactly zero while lateral is not.
        let pose = DronePose::new(GeoPoint::new(45.0, -73.9).unwrap(), 100.0, 0.0, 0.0).unwrap();
        let err = project_detection(&detection_at(400.0, 320.0), &pose, &cam, &g).unwrap_err();
        assert_eq!(err, ProjectionError::DegenerateGeometry);
        // Dead-center nadir view is fine and lands on the drone position.
        let trace = project_detection(&detection_at(320.0, 320.0), &pose, &cam, &g).unwrap();
        assert_eq!(trace.surface_range_m, 0.0);
        assert_eq!(trace.estimate, pose.position);
    }

    #[test]
    fn bearing_sign_follows_pixel_sign_and_range_dominates_forward() {
        let g = GeodesyParams::default();
        let cam = unit_camera();
        let pose = DronePose::new(GeoPoint::new(45.0, -73.9).unwrap(), 80.0, 10.0, 35.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x = rng.random_range(1.0..639.0);
            let y = rng.random_range(200.0..639.0);
            let trace = project_detection(&detection_at(x, y), &pose, &cam, &g).unwrap();
            if trace.dx_px != 0.0 {
                assert_eq!(
                    trace.bearing_offset_rad.signum(),
                    trace.dx_px.signum(),
                    "bearing sign must follow pixel sign"
                );
            }
            assert!(trace.surface_range_m >= trace.forward_m);
            let hyp = (trace.forward_m * trace.forward_m
                + trace.lateral_m * trace.lateral_m)
                .sqrt();
            assert!((trace.surface_range_m - hyp).abs() <= 1e-9 * hyp.max(1.0));
        }
    }

    #[test]
    fn forward_distance_increases_with_pixel_angle() {
        let g = GeodesyParams::default();
        let cam = unit_camera();
        let pose = DronePose::new(GeoPoint::new(45.0, -73.9).unwrap(), 100.0, 0.0, 40.0).unwrap();
        let mut last = -1.0;
        for y in (320..640).step_by(20) {
            let trace =
                project_detection(&detection_at(320.0, y as f64), &pose, &cam, &g).unwrap();
            assert!(trace.forward_m > last);
            last = trace.forward_m;
        }
    }

    #[test]
    fn heading_equivariance() {
        let g = GeodesyParams::default();
        let cam = unit_camera();
        let at = GeoPoint::new(45.0, -73.9).unwrap();
        let base = DronePose::new(at, 90.0, 40.0, 30.0).unwrap();
        let turned = DronePose::new(at, 90.0, 100.0, 30.0).unwrap();
        let det = detection_at(450.0, 500.0);
        let a = project_detection(&det, &base, &cam, &g).unwrap();
        let b = project_detection(&det, &turned, &cam, &g).unwrap();
        assert!((a.surface_range_m - b.surface_range_m).abs() < 1e-9);
        let delta = (60.0f64).to_radians();
        let rot_north = a.north_m * delta.cos() - a.east_m * delta.sin();
        let rot_east = a.north_m * delta.sin() + a.east_m * delta.cos();
        assert!((b.north_m - rot_north).abs() < 1e-9);
        assert!((b.east_m - rot_east).abs() < 1e-9);
    }

    #[test]
    fn boresight_target_maps_to_image_center() {
        let g = GeodesyParams::default();
        let cam = unit_camera();
        let pose = DronePose::new(GeoPoint::new(45.0, -73.9).unwrap(), 100.0, 30.0, 45.0).unwrap();
        let trace = project_detection(&detection_at(320.0, 320.0), &pose, &cam, &g).unwrap();
        let (x, y) = geo_to_pixel(&trace.estimate, &pose, &cam, &g).unwrap();
        assert!((x - 320.0).abs() < 1e-9);
        assert!((y - 320.0).abs() < 1e-9);
    }

    #[test]
    fn target_behind_shallow_camera_is_out_of_view() {
        let g = GeodesyParams::default();
        let cam = unit_camera();
        let pose = DronePose::new(GeoPoint::new(45.0, -73.9).unwrap(), 60.0, 0.0, 10.0).unwrap();
        // 50 m due south of the drone while it faces north.
        let behind = g
            .from_enu(&EnuPoint::new(0.0, -50.0), &pose.position)
            .unwrap();
        assert_eq!(geo_to_pixel(&behind, &pose, &cam, &g), None);
    }

    #[test]
    fn round_trip_random_in_view_targets() {
        let g = GeodesyParams::default();
        let cam = unit_camera();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut checked = 0;
        while checked < 1000 {
            let lat = rng.random_range(-60.0..60.0);
            let lon = rng.random_range(-120.0..120.0);
            let pose = DronePose::new(
                GeoPoint::new(lat, lon).unwrap(),
                rng.random_range(30.0..150.0),
                rng.random_range(0.0..360.0),
                rng.random_range(5.0..60.0),
            )
            .unwrap();
            let det = detection_at(rng.random_range(1.0..639.0), rng.random_range(1.0..639.0));
            let Ok(trace) = project_detection(&det, &pose, &cam, &g) else {
                continue;
            };
            let Some((x, y)) = geo_to_pixel(&trace.estimate, &pose, &cam, &g) else {
                continue;
            };
            let back = project_detection(&detection_at(x, y), &pose, &cam, &g).unwrap();
            let err = g.haversine_distance(&trace.estimate, &back.estimate);
            assert!(err < 1e-6, "round-trip ground error {err} m");
            checked += 1;
        }
    }
}
