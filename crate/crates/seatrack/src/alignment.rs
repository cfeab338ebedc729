//! Cross-drone track-ID alignment.
//!
//! One drone is designated the reference; its track IDs define the global
//! identity space. For every other drone, each detection is matched to the
//! nearest reference track by geographic distance under a gate, solved as a
//! linear assignment so the correspondence is globally optimal rather than
//! greedy. Matched detections adopt the reference ID; unmatched detections
//! confident enough to be real robots receive fresh IDs; the rest stay
//! unassigned until a later pass.

use crate::assignment::linear_assignment;
use crate::geodesy::{GeoPoint, GeodesyParams};
use crate::tracker::IdAllocator;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AlignmentError {
    #[error("max_match_distance_m must be strictly positive")]
    NonPositiveGate,
    #[error("new_track_confidence must lie in [0, 1]")]
    ConfidenceOutOfRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentParams {
    /// Maximum geographic distance for adopting a reference ID, meters.
    pub max_match_distance_m: f64,
    /// Confidence an unmatched detection must exceed to earn a fresh ID.
    pub new_track_confidence: f64,
}

impl Default for AlignmentParams {
    fn default() -> Self {
        Self {
            max_match_distance_m: 30.0,
            new_track_confidence: 0.6,
        }
    }
}

impl AlignmentParams {
    pub fn validate(&self) -> Result<(), AlignmentError> {
        if !(self.max_match_distance_m > 0.0) {
            return Err(AlignmentError::NonPositiveGate);
        }
        if !(0.0..=1.0).contains(&self.new_track_confidence) {
            return Err(AlignmentError::ConfidenceOutOfRange);
        }
        Ok(())
    }
}

/// A reference-drone track as the alignment sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceTrack {
    pub global_id: u64,
    pub position: GeoPoint,
}

/// One non-reference drone's detections for the current tick.
#[derive(Debug, Clone, PartialEq)]
pub struct DroneDetections {
    pub drone_id: u32,
    /// Projected geographic position and confidence per detection.
    pub detections: Vec<(GeoPoint, f64)>,
}

/// Result of one alignment pass.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMapping {
    /// Per drone: local detection index to global track ID.
    pub by_drone: BTreeMap<u32, BTreeMap<usize, u64>>,
    /// Global IDs issued fresh during this pass.
    pub new_ids: BTreeSet<u64>,
}

/// Matches one drone's detections to the reference tracks; the low-level step
/// of [`align_ids`]. Returns `(detection index, reference global ID)` pairs.
pub fn match_to_reference(
    reference: &[ReferenceTrack],
    detections: &[(GeoPoint, f64)],
    params: &AlignmentParams,
    geodesy: &GeodesyParams,
) -> Vec<(usize, u64)> {
    if reference.is_empty() || detections.is_empty() {
        return Vec::new();
    }
    let costs: Vec<Vec<f64>> = detections
        .iter()
        .map(|(geo, _)| {
            reference
                .iter()
                .map(|t| geodesy.haversine_distance(&t.position, geo))
                .collect()
        })
        .collect();
    linear_assignment(&costs, params.max_match_distance_m)
        .pairs
        .into_iter()
        .map(|(det_idx, ref_idx)| (det_idx, reference[ref_idx].global_id))
        .collect()
}

/// Aligns every drone's detections against the reference tracks.
///
/// Matched detections map to the nearest-by-assignment reference ID within
/// the gate; unmatched detections with confidence above the threshold are
/// issued fresh IDs from the shared allocator; anything else receives no ID
/// this round.
pub fn align_ids(
    reference: &[ReferenceTrack],
    drones: &[DroneDetections],
    params: &AlignmentParams,
    geodesy: &GeodesyParams,
    ids: &IdAllocator,
) -> IdMapping {
    let mut mapping = IdMapping::default();
    for drone in drones {
        let mut per_drone = BTreeMap::new();
        for (det_idx, global_id) in
            match_to_reference(reference, &drone.detections, params, geodesy)
        {
            per_drone.insert(det_idx, global_id);
        }
        for (det_idx, (_, confidence)) in drone.detections.iter().enumerate() {
            if per_drone.contains_key(&det_idx) {
                continue;
            }
            if *confidence > params.new_track_confidence {
                let id = ids.next_id();
                per_drone.insert(det_idx, id);
                mapping.new_ids.insert(id);
            }
        }
        mapping.by_drone.insert(drone.drone_id, per_drone);
    }
    mapping
}
