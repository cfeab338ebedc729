//! Confidence-weighted aggregation of per-drone position estimates and the
//! extended Kalman filter that turns them into a stable track per robot.
//!
//! Several drones may report the same robot in one tick. Their estimates are
//! first collapsed into a single measurement by a confidence-weighted
//! average, computed in a local East-North frame about the group centroid so
//! latitudes and longitudes are never averaged directly. The measurement then
//! feeds a 2-D constant-velocity filter anchored at the robot's first fix.
//! With position-only measurements the constant-velocity model makes the
//! filter linear; the structure (state propagation plus gain-weighted
//! innovation) is the standard EKF loop and swapping in a nonlinear motion
//! model only changes the two model hooks.

use crate::geodesy::{EnuPoint, GeoPoint, GeodesyError, GeodesyParams};
use nalgebra::{Matrix2, Matrix4, SMatrix, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("all confidences are zero; nothing to fuse")]
    AllZeroConfidence,
    #[error("no estimates provided")]
    NoEstimates,
    #[error("singular innovation covariance")]
    SingularInnovation,
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),
}

/// Filter constants: tick length, white-acceleration process noise, and
/// position measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EkfParams {
    pub time_step_s: f64,
    pub accel_variance: f64,
    pub measurement_variance: f64,
}

impl Default for EkfParams {
    fn default() -> Self {
        Self {
            time_step_s: 0.1,
            accel_variance: 1.0,
            measurement_variance: 3.0,
        }
    }
}

impl EkfParams {
    pub fn validate(&self) -> Result<(), FusionError> {
        if !(self.time_step_s > 0.0) {
            return Err(FusionError::NonPositive("time_step_s"));
        }
        if self.accel_variance < 0.0 {
            return Err(FusionError::NonPositive("accel_variance"));
        }
        if !(self.measurement_variance > 0.0) {
            return Err(FusionError::NonPositive("measurement_variance"));
        }
        Ok(())
    }
}

const INITIAL_POSITION_VARIANCE: f64 = 25.0;
const INITIAL_VELOCITY_VARIANCE: f64 = 4.0;

/// Filter state: East-North position and velocity in a local frame anchored
/// at the robot's first measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    /// `[east_m, north_m, v_east_mps, v_north_mps]` relative to `anchor`.
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    pub anchor: GeoPoint,
}

impl EkfState {
    /// Starts a filter at a first measurement with zero velocity and a loose
    /// prior.
    pub fn from_measurement(z: &GeoPoint) -> Self {
        let mut covariance = Matrix4::zeros();
        covariance[(0, 0)] = INITIAL_POSITION_VARIANCE;
        covariance[(1, 1)] = INITIAL_POSITION_VARIANCE;
        covariance[(2, 2)] = INITIAL_VELOCITY_VARIANCE;
        covariance[(3, 3)] = INITIAL_VELOCITY_VARIANCE;
        Self {
            mean: Vector4::zeros(),
            covariance,
            anchor: *z,
        }
    }

    /// Propagates position by velocity and inflates the covariance with
    /// white-acceleration process noise.
    pub fn predict(&self, p: &EkfParams) -> Self {
        let dt = p.time_step_s;
        let mut f = Matrix4::identity();
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;

        let dt2 = dt * dt;
        let mut q = Matrix4::zeros();
        // Per-axis [dt^4/4, dt^3/2; dt^3/2, dt^2] blocks, scaled by the
        // acceleration variance.
        for axis in 0..2 {
            q[(axis, axis)] = dt2 * dt2 / 4.0;
            q[(axis, axis + 2)] = dt2 * dt / 2.0;
            q[(axis + 2, axis)] = dt2 * dt / 2.0;
            q[(axis + 2, axis + 2)] = dt2;
        }
        q *= p.accel_variance;

        let mean = f * self.mean;
        let covariance = symmetrized(f * self.covariance * f.transpose() + q);
        Self {
            mean,
            covariance,
            anchor: self.anchor,
        }
    }

    /// Standard gain-weighted innovation update with isotropic position
    /// measurement noise.
    pub fn update(
        &self,
        z: &GeoPoint,
        p: &EkfParams,
        geodesy: &GeodesyParams,
    ) -> Result<Self, FusionError> {
        let enu = geodesy.to_enu(z, &self.anchor)?;
        let measurement = Vector2::new(enu.east_m, enu.north_m);

        let obs = SMatrix::<f64, 2, 4>::identity();
        let noise = Matrix2::identity() * p.measurement_variance;
        let innovation = measurement - obs * self.mean;
        let innovation_cov = obs * self.covariance * obs.transpose() + noise;
        let inv = innovation_cov
            .try_inverse()
            .ok_or(FusionError::SingularInnovation)?;
        let gain = self.covariance * obs.transpose() * inv;

        let mean = self.mean + gain * innovation;
        let covariance = symmetrized((Matrix4::identity() - gain * obs) * self.covariance);
        Ok(Self {
            mean,
            covariance,
            anchor: self.anchor,
        })
    }

    /// The filtered position as a geographic point.
    pub fn position(&self, geodesy: &GeodesyParams) -> Result<GeoPoint, GeodesyError> {
        geodesy.from_enu(&EnuPoint::new(self.mean[0], self.mean[1]), &self.anchor)
    }
}

fn symmetrized(m: Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

/// Collapses per-drone estimates into one measurement by confidence-weighted
/// averaging in a local frame about the group centroid.
pub fn confidence_weighted_fuse(
    estimates: &[(GeoPoint, f64)],
    geodesy: &GeodesyParams,
) -> Result<GeoPoint, FusionError> {
    if estimates.is_empty() {
        return Err(FusionError::NoEstimates);
    }
    let total: f64 = estimates.iter().map(|(_, c)| c).sum();
    if total <= 0.0 {
        return Err(FusionError::AllZeroConfidence);
    }
    let points: Vec<GeoPoint> = estimates.iter().map(|(p, _)| *p).collect();
    let centroid = GeodesyParams::mean_point(&points).ok_or(FusionError::NoEstimates)?;
    let mut east = 0.0;
    let mut north = 0.0;
    for (point, confidence) in estimates {
        let enu = geodesy.to_enu(point, &centroid)?;
        east += confidence * enu.east_m;
        north += confidence * enu.north_m;
    }
    Ok(geodesy.from_enu(&EnuPoint::new(east / total, north / total), &centroid)?)
}

/// One drone's contribution to a robot's measurement this tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroneEstimate {
    pub drone_id: u32,
    pub position: GeoPoint,
    pub confidence: f64,
}

/// Fused output for one robot at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedEstimate {
    pub global_id: u64,
    pub tick: u64,
    /// Confidence-weighted average of this tick's estimates; `None` when the
    /// filter only coasted.
    pub raw_fused: Option<GeoPoint>,
    pub filtered: GeoPoint,
    pub total_confidence: f64,
    pub contributing_drones: Vec<u32>,
}

/// Ticks a filter may coast without measurements before its output is
/// suppressed as stale.
const COAST_LIMIT_TICKS: u32 = 50;

#[derive(Debug, Clone)]
struct FilterEntry {
    state: EkfState,
    coasted: u32,
}

/// Per-robot filter bank driving the whole fusion stage.
#[derive(Debug)]
pub struct FusionEngine {
    params: EkfParams,
    geodesy: GeodesyParams,
    filters: BTreeMap<u64, FilterEntry>,
}

impl FusionEngine {
    pub fn new(params: EkfParams, geodesy: GeodesyParams) -> Result<Self, FusionError> {
        params.validate()?;
        Ok(Self {
            params,
            geodesy,
            filters: BTreeMap::new(),
        })
    }

    /// Fuses one tick of grouped estimates.
    ///
    /// Robots with estimates get a weighted fuse, predict, and update; known
    /// robots without estimates coast on prediction alone, and disappear from
    /// the output once they have coasted too long. A group whose confidences
    /// sum to zero is treated as absent rather than failing the whole tick.
    pub fn fuse_tick(
        &mut self,
        tick: u64,
        groups: &BTreeMap<u64, Vec<DroneEstimate>>,
    ) -> Vec<FusedEstimate> {
        let mut out = Vec::new();

        for (&global_id, contributions) in groups {
            let estimates: Vec<(GeoPoint, f64)> = contributions
                .iter()
                .map(|e| (e.position, e.confidence))
                .collect();
            let Ok(raw) = confidence_weighted_fuse(&estimates, &self.geodesy) else {
                continue;
            };
            let total_confidence: f64 = contributions.iter().map(|e| e.confidence).sum();
            let mut drones: Vec<u32> = contributions.iter().map(|e| e.drone_id).collect();
            drones.sort_unstable();
            drones.dedup();

            let entry = self
                .filters
                .entry(global_id)
                .or_insert_with(|| FilterEntry {
                    state: EkfState::from_measurement(&raw),
                    coasted: 0,
                });
            entry.coasted = 0;
            let predicted = entry.state.predict(&self.params);
            entry.state = match predicted.update(&raw, &self.params, &self.geodesy) {
                Ok(updated) => updated,
                // A measurement outside the local frame is unusable; coast.
                Err(_) => predicted,
            };
            if let Ok(filtered) = entry.state.position(&self.geodesy) {
                out.push(FusedEstimate {
                    global_id,
                    tick,
                    raw_fused: Some(raw),
                    filtered,
                    total_confidence,
                    contributing_drones: drones,
                });
            }
        }

        // Known robots that saw nothing this tick coast forward.
        for (&global_id, entry) in &mut self.filters {
            if groups.contains_key(&global_id) {
                continue;
            }
            entry.state = entry.state.predict(&self.params);
            entry.coasted += 1;
            if entry.coasted > COAST_LIMIT_TICKS {
                continue;
            }
            if let Ok(filtered) = entry.state.position(&self.geodesy) {
                out.push(FusedEstimate {
                    global_id,
                    tick,
                    raw_fused: None,
                    filtered,
                    total_confidence: 0.0,
                    contributing_drones: Vec::new(),
                });
            }
        }

        out.sort_unstable_by_key(|e| e.global_id);
        out
    }
}
