//! Coordinate conversions shared by every stage of the pipeline: haversine
//! distance, a local East–North equirectangular projection, and the
//! linear-offset-to-angular-shift conversion used when a drone turns a metric
//! displacement into latitude/longitude.
//!
//! All lengths are meters. Degrees appear only in [`GeoPoint`] and at public
//! interfaces; trigonometry happens in radians.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// One international foot in meters. Imperial conversion factors stay at the
/// interface layer; nothing inside the pipeline computes in feet.
pub const METERS_PER_FOOT: f64 = 0.3048;

/// Mean spherical earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error, PartialEq)]
pub enum GeodesyError {
    #[error("latitude {0} outside [-90, 90] degrees")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} outside [-180, 180] degrees")]
    LongitudeOutOfRange(f64),
    #[error("coordinate must be finite")]
    NotFinite,
    #[error("separation of {0} degrees exceeds the 1-degree small-area limit")]
    SeparationTooLarge(f64),
    #[error("offset of {0} m exceeds the one-degree projection limit")]
    OffsetTooLarge(f64),
    #[error("latitude {0} is too close to a pole for an East-North frame")]
    NearPole(f64),
    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),
}

/// A WGS-84 latitude/longitude pair in degrees. The universal position
/// currency of the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lon_deg: f64) -> Result<Self, GeodesyError> {
        if !lat_deg.is_finite() || !lon_deg.is_finite() {
            return Err(GeodesyError::NotFinite);
        }
        if !(-90.0..=90.0).contains(&lat_deg) {
            return Err(GeodesyError::LatitudeOutOfRange(lat_deg));
        }
        if !(-180.0..=180.0).contains(&lon_deg) {
            return Err(GeodesyError::LongitudeOutOfRange(lon_deg));
        }
        Ok(Self { lat_deg, lon_deg })
    }
}

/// Offset in a local tangent frame: meters east and north of some origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnuPoint {
    pub east_m: f64,
    pub north_m: f64,
}

impl EnuPoint {
    pub fn new(east_m: f64, north_m: f64) -> Self {
        Self { east_m, north_m }
    }

    pub fn norm(&self) -> f64 {
        self.east_m.hypot(self.north_m)
    }
}

/// Spherical-earth conversion constants.
///
/// `meters_per_degree_lat` is fixed at `earth_radius * pi / 180`; the
/// longitude factor shrinks with `cos(latitude)` per the equirectangular
/// model, so it is a method rather than a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesyParams {
    pub earth_radius_m: f64,
    pub meters_per_degree_lat: f64,
}

impl Default for GeodesyParams {
    fn default() -> Self {
        Self {
            earth_radius_m: EARTH_RADIUS_M,
            meters_per_degree_lat: EARTH_RADIUS_M * PI / 180.0,
        }
    }
}

impl GeodesyParams {
    pub fn new(earth_radius_m: f64) -> Result<Self, GeodesyError> {
        if !(earth_radius_m.is_finite() && earth_radius_m > 0.0) {
            return Err(GeodesyError::NonPositive("earth_radius_m"));
        }
        Ok(Self {
            earth_radius_m,
            meters_per_degree_lat: earth_radius_m * PI / 180.0,
        })
    }

    /// Meters spanned by one degree of longitude at the given latitude.
    pub fn meters_per_degree_lon(&self, lat_deg: f64) -> f64 {
        self.meters_per_degree_lat * lat_deg.to_radians().cos()
    }

    /// Great-circle distance in meters between two points.
    ///
    /// Symmetric, non-negative, and exactly zero for identical points.
    pub fn haversine_distance(&self, a: &GeoPoint, b: &GeoPoint) -> f64 {
        let lat_a = a.lat_deg.to_radians();
        let lat_b = b.lat_deg.to_radians();
        let dlat = (b.lat_deg - a.lat_deg).to_radians();
        let dlon = (b.lon_deg - a.lon_deg).to_radians();

        let s_lat = (dlat * 0.5).sin();
        let s_lon = (dlon * 0.5).sin();
        let h = s_lat * s_lat + lat_a.cos() * lat_b.cos() * s_lon * s_lon;
        let central = 2.0 * h.sqrt().atan2((1.0 - h).sqrt());
        self.earth_radius_m * central
    }

    /// Projects `p` into the East–North frame tangent at `origin` using the
    /// equirectangular model. Valid only for small separations; anything a
    /// degree or more away is rejected.
    pub fn to_enu(&self, p: &GeoPoint, origin: &GeoPoint) -> Result<EnuPoint, GeodesyError> {
        let dlat = p.lat_deg - origin.lat_deg;
        let dlon = p.lon_deg - origin.lon_deg;
        let sep = dlat.abs().max(dlon.abs());
        if sep >= 1.0 {
            return Err(GeodesyError::SeparationTooLarge(sep));
        }
        if origin.lat_deg.abs() > 89.0 {
            return Err(GeodesyError::NearPole(origin.lat_deg));
        }
        Ok(EnuPoint::new(
            dlon * self.meters_per_degree_lon(origin.lat_deg),
            dlat * self.meters_per_degree_lat,
        ))
    }

    /// Inverse of [`to_enu`](Self::to_enu): converts metric offsets back into
    /// angular shifts about `origin`.
    ///
    /// Offsets up to one degree of arc are accepted; beyond that the
    /// equirectangular model is no longer trustworthy.
    pub fn from_enu(&self, e: &EnuPoint, origin: &GeoPoint) -> Result<GeoPoint, GeodesyError> {
        if !e.east_m.is_finite() || !e.north_m.is_finite() {
            return Err(GeodesyError::NotFinite);
        }
        let magnitude = e.east_m.abs().max(e.north_m.abs());
        if magnitude > self.meters_per_degree_lat {
            return Err(GeodesyError::OffsetTooLarge(magnitude));
        }
        if origin.lat_deg.abs() > 89.0 {
            return Err(GeodesyError::NearPole(origin.lat_deg));
        }
        GeoPoint::new(
            origin.lat_deg + e.north_m / self.meters_per_degree_lat,
            origin.lon_deg + e.east_m / self.meters_per_degree_lon(origin.lat_deg),
        )
    }

    /// Arithmetic mean of a point set, the conventional origin for an
    /// equirectangular frame over that set.
    pub fn mean_point(points: &[GeoPoint]) -> Option<GeoPoint> {
        if points.is_empty() {
            return None;
        }
        let n = points.len() as f64;
        let lat = points.iter().map(|p| p.lat_deg).sum::<f64>() / n;
        let lon = points.iter().map(|p| p.lon_deg).sum::<f64>() / n;
        GeoPoint::new(lat, lon).ok()
    }
}

pub fn feet_to_meters(feet: f64) -> f64 {
    feet * METERS_PER_FOOT
}

pub fn meters_to_feet(meters: f64) -> f64 {
    meters / METERS_PER_FOOT
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> GeodesyParams {
        GeodesyParams::default()
    }

    #[test]
    fn geo_point_rejects_bad_coordinates() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(-90.5, 0.0).is_err());
        assert!(GeoPoint::new(0.0, 181.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        assert!(GeoPoint::new(45.0, -73.9).is_ok());
    }

    #[test]
    fn haversine_identical_points_is_exactly_zero() {
        let p = GeoPoint::new(12.34, 56.78).unwrap();
        assert_eq!(params().haversine_distance(&p, &p), 0.0);
    }

    #[test]
    fn haversine_one_degree_equatorial_arc() {
        let g = params();
        let a = GeoPoint::new(0.0, 0.0).unwrap();
        let b = GeoPoint::new(0.0, 1.0).unwrap();
        let expected = EARTH_RADIUS_M * PI / 180.0; // 111.19 km
        let d = g.haversine_distance(&a, &b);
        assert!((d - expected).abs() < 1e-6, "got {d}, want {expected}");
    }

    /// Independent oracle: spherical law of cosines. A different derivation of
    /// great-circle distance that shares no code with the haversine path.
    fn law_of_cosines_distance(g: &GeodesyParams, a: &GeoPoint, b: &GeoPoint) -> f64 {
        let la = a.lat_deg.to_radians();
        let lb = b.lat_deg.to_radians();
        let dlon = (b.lon_deg - a.lon_deg).to_radians();
        let cosine = la.sin() * lb.sin() + la.cos() * lb.cos() * dlon.cos();
        g.earth_radius_m * cosine.clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn haversine_agrees_with_law_of_cosines_oracle() {
        let g = params();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut checked = 0;
        while checked < 100 {
            let lat = rng.random_range(-60.0..60.0);
            let lon = rng.random_range(-179.0..179.0);
            let a = GeoPoint::new(lat, lon).unwrap();
            // Log-uniform separations from tens of meters to tens of km.
            let dist = 10f64.powf(rng.random_range(1.2..4.7));
            let bearing: f64 = rng.random_range(0.0..(2.0 * PI));
            let dlat = dist * bearing.cos() / g.meters_per_degree_lat;
            let dlon = dist * bearing.sin() / g.meters_per_degree_lon(lat);
            let b = GeoPoint::new(lat + dlat, lon + dlon).unwrap();
            let d = g.haversine_distance(&a, &b);
            if d <= 10.0 {
                continue;
            }
            let oracle = law_of_cosines_distance(&g, &a, &b);
            assert!(
                (d - oracle).abs() < 1e-3,
                "haversine {d} vs law-of-cosines {oracle} at {a:?} -> {b:?}"
            );
            checked += 1;
        }
    }

    #[test]
    fn to_enu_identity_at_origin() {
        let g = params();
        let o = GeoPoint::new(40.0, -70.0).unwrap();
        let e = g.to_enu(&o, &o).unwrap();
        assert_eq!(e, EnuPoint::new(0.0, 0.0));
    }

    #[test]
    fn to_enu_rejects_wide_separation() {
        let g = params();
        let o = GeoPoint::new(40.0, -70.0).unwrap();
        let p = GeoPoint::new(41.5, -70.0).unwrap();
        assert_eq!(
            g.to_enu(&p, &o),
            Err(GeodesyError::SeparationTooLarge(1.5))
        );
    }

    #[test]
    fn from_enu_zero_offset_is_identity() {
        let g = params();
        let o = GeoPoint::new(45.0, -73.9).unwrap();
        let p = g.from_enu(&EnuPoint::new(0.0, 0.0), &o).unwrap();
        assert_eq!(p, o);
    }

    #[test]
    fn from_enu_one_degree_of_northing() {
        let g = params();
        let o = GeoPoint::new(10.0, 20.0).unwrap();
        let p = g
            .from_enu(&EnuPoint::new(0.0, g.meters_per_degree_lat), &o)
            .unwrap();
        assert!((p.lat_deg - 11.0).abs() < 1e-12);
        assert!((p.lon_deg - 20.0).abs() < 1e-12);
    }

    #[test]
    fn from_enu_rejects_huge_offsets() {
        let g = params();
        let o = GeoPoint::new(45.0, -73.9).unwrap();
        assert!(matches!(
            g.from_enu(&EnuPoint::new(150_000.0, 0.0), &o),
            Err(GeodesyError::OffsetTooLarge(_))
        ));
    }

    #[test]
    fn enu_distance_matches_haversine_for_short_baselines() {
        let g = params();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let origin = GeoPoint::new(45.0, -73.9).unwrap();
        for _ in 0..200 {
            let east = rng.random_range(-1000.0..1000.0);
            let north = rng.random_range(-1000.0..1000.0);
            let p = g.from_enu(&EnuPoint::new(east, north), &origin).unwrap();
            let enu = g.to_enu(&p, &origin).unwrap();
            let planar = enu.norm();
            let sphere = g.haversine_distance(&origin, &p);
            if sphere < 1.0 {
                continue;
            }
            assert!(
                (planar - sphere).abs() / sphere < 1e-3,
                "planar {planar} vs haversine {sphere}"
            );
        }
    }

    #[test]
    fn lon_factor_equals_lat_factor_at_equator() {
        let g = params();
        assert_eq!(g.meters_per_degree_lon(0.0), g.meters_per_degree_lat);
        let lat = 37.0f64;
        let expected = g.meters_per_degree_lat * lat.to_radians().cos();
        assert!((g.meters_per_degree_lon(lat) - expected).abs() < 1e-9);
    }

    #[test]
    fn foot_conversion_round_trips() {
        assert!((feet_to_meters(1.0) - 0.3048).abs() < 1e-15);
        assert!((meters_to_feet(feet_to_meters(123.4)) - 123.4).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn haversine_is_symmetric(
            lat_a in -80.0f64..80.0, lon_a in -179.0f64..179.0,
            lat_b in -80.0f64..80.0, lon_b in -179.0f64..179.0,
        ) {
            let g = params();
            let a = GeoPoint::new(lat_a, lon_a).unwrap();
            let b = GeoPoint::new(lat_b, lon_b).unwrap();
            let ab = g.haversine_distance(&a, &b);
            let ba = g.haversine_distance(&b, &a);
            prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
            prop_assert!(ab >= 0.0);
        }

        #[test]
        fn enu_round_trip_within_a_kilometer(
            lat in -80.0f64..80.0,
            lon in -179.0f64..179.0,
            east in -1000.0f64..1000.0,
            north in -1000.0f64..1000.0,
        ) {
            let g = params();
            let origin = GeoPoint::new(lat, lon).unwrap();
            let p = g.from_enu(&EnuPoint::new(east, north), &origin).unwrap();
            let enu = g.to_enu(&p, &origin).unwrap();
            let back = g.from_enu(&enu, &origin).unwrap();
            prop_assert!((back.lat_deg - p.lat_deg).abs() < 1e-9);
            prop_assert!((back.lon_deg - p.lon_deg).abs() < 1e-9);
        }
    }
}
