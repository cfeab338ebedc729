//! Per-drone two-stage multi-object tracker.
//!
//! High-confidence detections are matched to predicted tracks first by
//! maximizing a hybrid score that blends bounding-box IOU with geographic
//! proximity; leftover tracks then get a second chance against low-confidence
//! detections on IOU alone. The geographic term uses each track's *filtered*
//! position (the cross-drone fused EKF output fed back by the pipeline), so a
//! track that lost its box to camera shake can still be recognized by where
//! the robot actually is.
//!
//! Track IDs come from an allocator shared by every drone's tracker, the one
//! piece of cross-tracker state. Distinct trackers may step concurrently.

mod bbox_filter;

pub use bbox_filter::BboxFilter;

use crate::assignment::linear_assignment;
use crate::geodesy::{GeoPoint, GeodesyParams};
use crate::projection::{BBox, Detection};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("{detections} detections but {positions} projected positions")]
    LengthMismatch { detections: usize, positions: usize },
    #[error("invalid matching weights: {0}")]
    InvalidWeights(String),
}

/// Monotone track-ID source shared across all trackers of a pipeline. Never
/// reuses an issued ID.
#[derive(Debug, Default)]
pub struct IdAllocator(AtomicU64);

impl IdAllocator {
    pub fn new() -> Arc<Self> {
        Arc::new(Self(AtomicU64::new(0)))
    }

    pub fn next_id(&self) -> u64 {
        self.0.fetch_add(1, Ordering::Relaxed) + 1
    }
}

/// Track lifecycle. Tentative tracks confirm to Active after two consecutive
/// hits; Active tracks drop to Lost on a miss and recover on a match; Lost
/// tracks are Removed once they outlive the track buffer. A Tentative track
/// that misses is Removed immediately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackState {
    Tentative,
    Active,
    Lost,
    Removed,
}

/// One tracked object on one drone.
#[derive(Debug, Clone)]
pub struct Track {
    pub global_id: u64,
    pub drone_id: u32,
    pub state: TrackState,
    pub last_confidence: f64,
    /// Filtered geographic position fed back from the fusion stage; used by
    /// the hybrid matching score.
    pub filtered_geo: GeoPoint,
    pub frames_since_seen: u32,
    consecutive_hits: u32,
    filter: BboxFilter,
}

impl Track {
    /// The box the filter predicts for the current frame.
    pub fn predicted_bbox(&self) -> BBox {
        self.filter.bbox()
    }
}

/// Matching parameters. `iou_weight + geo_weight` must equal one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchWeights {
    pub iou_weight: f64,
    pub geo_weight: f64,
    /// Geographic distance at which the proximity score reaches zero.
    pub geo_gate_m: f64,
    /// Detections at or above this confidence enter the first association.
    pub high_confidence: f64,
    /// Floor for the second association; detections below it are discarded.
    pub low_confidence: f64,
    /// Frames a Lost track survives before removal.
    pub track_buffer_frames: u32,
    /// Minimum hybrid score for an assignment to stick.
    pub min_match_score: f64,
}

impl Default for MatchWeights {
    fn default() -> Self {
        Self {
            iou_weight: 0.7,
            geo_weight: 0.3,
            geo_gate_m: 10.0,
            high_confidence: 0.5,
            low_confidence: 0.1,
            track_buffer_frames: 30,
            min_match_score: 0.2,
        }
    }
}

impl MatchWeights {
    pub fn validate(&self) -> Result<(), TrackerError> {
        if self.iou_weight < 0.0 || self.geo_weight < 0.0 {
            return Err(TrackerError::InvalidWeights("weights must be non-negative".into()));
        }
        if (self.iou_weight + self.geo_weight - 1.0).abs() > 1e-9 {
            return Err(TrackerError::InvalidWeights(format!(
                "iou_weight + geo_weight must equal 1, got {}",
                self.iou_weight + self.geo_weight
            )));
        }
        if !(self.high_confidence > self.low_confidence && self.low_confidence > 0.0) {
            return Err(TrackerError::InvalidWeights(
                "need high_confidence > low_confidence > 0".into(),
            ));
        }
        if !(self.geo_gate_m > 0.0) {
            return Err(TrackerError::InvalidWeights("geo_gate_m must be positive".into()));
        }
        Ok(())
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ax0 = a.center_x_px - a.width_px / 2.0;
    let ax1 = a.center_x_px + a.width_px / 2.0;
    let ay0 = a.center_y_px - a.height_px / 2.0;
    let ay1 = a.center_y_px + a.height_px / 2.0;
    let bx0 = b.center_x_px - b.width_px / 2.0;
    let bx1 = b.center_x_px + b.width_px / 2.0;
    let by0 = b.center_y_px - b.height_px / 2.0;
    let by1 = b.center_y_px + b.height_px / 2.0;

    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Hybrid matching score: weighted IOU between the track's predicted box and
/// the detection, plus a clamped geographic similarity between the track's
/// filtered position and the detection's projected position.
pub fn hybrid_score(
    track: &Track,
    det: &Detection,
    det_geo: &GeoPoint,
    weights: &MatchWeights,
    geodesy: &GeodesyParams,
) -> f64 {
    let overlap = iou(&track.predicted_bbox(), &det.bbox);
    let dist = geodesy.haversine_distance(&track.filtered_geo, det_geo);
    let proximity = (1.0 - dist / weights.geo_gate_m).max(0.0);
    weights.iou_weight * overlap + weights.geo_weight * proximity
}

/// Where one detection ended up after a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionMatch {
    pub detection_index: usize,
    pub global_id: u64,
    /// True when the owning track is Active (confirmed) after this step.
    pub confirmed: bool,
    /// True when the detection spawned a fresh track this frame.
    pub spawned: bool,
}

#[derive(Debug, Clone, Default)]
pub struct StepOutcome {
    pub matches: Vec<DetectionMatch>,
}

/// One drone's tracker.
#[derive(Debug)]
pub struct Tracker {
    pub drone_id: u32,
    weights: MatchWeights,
    geodesy: GeodesyParams,
    ids: Arc<IdAllocator>,
    tracks: Vec<Track>,
    seen_first_frame: bool,
}

impl Tracker {
    pub fn new(
        drone_id: u32,
        weights: MatchWeights,
        geodesy: GeodesyParams,
        ids: Arc<IdAllocator>,
    ) -> Result<Self, TrackerError> {
        weights.validate()?;
        Ok(Self {
            drone_id,
            weights,
            geodesy,
            ids,
            tracks: Vec::new(),
            seen_first_frame: false,
        })
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn live_ids(&self) -> BTreeSet<u64> {
        self.tracks.iter().map(|t| t.global_id).collect()
    }

    /// Feeds the fused, filtered position for a global ID back into the
    /// matching loop.
    pub fn set_filtered_geo(&mut self, global_id: u64, geo: GeoPoint) {
        for t in &mut self.tracks {
            if t.global_id == global_id {
                t.filtered_geo = geo;
            }
        }
    }

    /// Renames a track to an externally aligned global ID. If another live
    /// track already holds `to`, the two swap IDs so per-drone uniqueness is
    /// preserved.
    pub fn rename_track(&mut self, from: u64, to: u64) {
        if from == to {
            return;
        }
        for t in &mut self.tracks {
            if t.global_id == from {
                t.global_id = to;
            } else if t.global_id == to {
                t.global_id = from;
            }
        }
    }

    /// Advances the tracker by one frame. `detections` and `positions` are
    /// index-aligned: `positions[i]` is the projected geographic estimate of
    /// `detections[i]`.
    pub fn step(
        &mut self,
        detections: &[Detection],
        positions: &[GeoPoint],
    ) -> Result<StepOutcome, TrackerError> {
        if detections.len() != positions.len() {
            return Err(TrackerError::LengthMismatch {
                detections: detections.len(),
                positions: positions.len(),
            });
        }

        for t in &mut self.tracks {
            t.filter.predict();
        }

        let mut high = Vec::new();
        let mut low = Vec::new();
        for (i, det) in detections.iter().enumerate() {
            if det.confidence >= self.weights.high_confidence {
                high.push(i);
            } else if det.confidence >= self.weights.low_confidence {
                low.push(i);
            }
        }

        let mut outcome = StepOutcome::default();
        let mut track_hit = vec![false; self.tracks.len()];

        // Stage 1: hybrid score against high-confidence detections,
        // maximized via min-cost assignment on (1 - score).
        let live: Vec<usize> = (0..self.tracks.len()).collect();
        let gate = 1.0 - self.weights.min_match_score;
        if !live.is_empty() && !high.is_empty() {
            let costs: Vec<Vec<f64>> = live
                .iter()
                .map(|&ti| {
                    high.iter()
                        .map(|&di| {
                            1.0 - hybrid_score(
                                &self.tracks[ti],
                                &detections[di],
                                &positions[di],
                                &self.weights,
                                &self.geodesy,
                            )
                        })
                        .collect()
                })
                .collect();
            if std::env::var("SEATRACK_DEBUG_SCORES").is_ok() {
                for (r, &ti) in live.iter().enumerate() {
                    for (c, &di) in high.iter().enumerate() {
                        eprintln!(
                            "drone{} frame{} track id{} ({:?}) x det{}: score {:.3}",
                            self.drone_id,
                            detections[di].frame_index,
                            self.tracks[ti].global_id,
                            self.tracks[ti].state,
                            di,
                            1.0 - costs[r][c]
                        );
                    }
                }
            }
            for (r, c) in linear_assignment(&costs, gate).pairs {
                let (ti, di) = (live[r], high[c]);
                self.register_hit(ti, &detections[di], &positions[di]);
                track_hit[ti] = true;
                outcome.matches.push(DetectionMatch {
                    detection_index: di,
                    global_id: self.tracks[ti].global_id,
                    confirmed: self.tracks[ti].state == TrackState::Active,
                    spawned: false,
                });
            }
        }

        // Stage 2: leftover tracks against low-confidence detections, IOU
        // only.
        let leftover: Vec<usize> = (0..self.tracks.len()).filter(|&ti| !track_hit[ti]).collect();
        if !leftover.is_empty() && !low.is_empty() {
            let costs: Vec<Vec<f64>> = leftover
                .iter()
                .map(|&ti| {
                    let predicted = self.tracks[ti].predicted_bbox();
                    low.iter()
                        .map(|&di| 1.0 - iou(&predicted, &detections[di].bbox))
                        .collect()
                })
                .collect();
            for (r, c) in linear_assignment(&costs, gate).pairs {
                let (ti, di) = (leftover[r], low[c]);
                self.register_hit(ti, &detections[di], &positions[di]);
                track_hit[ti] = true;
                outcome.matches.push(DetectionMatch {
                    detection_index: di,
                    global_id: self.tracks[ti].global_id,
                    confirmed: self.tracks[ti].state == TrackState::Active,
                    spawned: false,
                });
            }
        }

        // Misses.
        for (ti, hit) in track_hit.iter().enumerate() {
            if !hit {
                self.register_miss(ti);
            }
        }

        // Unmatched high-confidence detections start fresh tracks. On the
        // very first frame of a feed they activate immediately, the cited
        // tracker's convention; afterwards they must confirm.
        let spawn_state = if self.seen_first_frame {
            TrackState::Tentative
        } else {
            TrackState::Active
        };
        let matched: BTreeSet<usize> =
            outcome.matches.iter().map(|m| m.detection_index).collect();
        for &di in &high {
            if matched.contains(&di) {
                continue;
            }
            let det = &detections[di];
            let id = self.ids.next_id();
            self.tracks.push(Track {
                global_id: id,
                drone_id: self.drone_id,
                state: spawn_state,
                last_confidence: det.confidence,
                filtered_geo: positions[di],
                frames_since_seen: 0,
                consecutive_hits: 1,
                filter: BboxFilter::new(&det.bbox),
            });
            outcome.matches.push(DetectionMatch {
                detection_index: di,
                global_id: id,
                confirmed: spawn_state == TrackState::Active,
                spawned: true,
            });
        }

        self.seen_first_frame = true;
        self.tracks.retain(|t| t.state != TrackState::Removed);
        outcome.matches.sort_unstable_by_key(|m| m.detection_index);
        Ok(outcome)
    }

    fn register_hit(&mut self, ti: usize, det: &Detection, geo: &GeoPoint) {
        let t = &mut self.tracks[ti];
        t.filter.update(&det.bbox);
        t.last_confidence = det.confidence;
        t.frames_since_seen = 0;
        t.consecutive_hits += 1;
        match t.state {
            TrackState::Tentative => {
                // Unconfirmed tracks keep tracking the raw projection until
                // the fusion stage starts feeding them.
                t.filtered_geo = *geo;
                if t.consecutive_hits >= 2 {
                    t.state = TrackState::Active;
                }
            }
            TrackState::Lost => t.state = TrackState::Active,
            TrackState::Active | TrackState::Removed => {}
        }
    }

    fn register_miss(&mut self, ti: usize) {
        let t = &mut self.tracks[ti];
        t.frames_since_seen += 1;
        t.consecutive_hits = 0;
        match t.state {
            TrackState::Active => t.state = TrackState::Lost,
            TrackState::Tentative => t.state = TrackState::Removed,
            TrackState::Lost => {
                if t.frames_since_seen > self.weights.track_buffer_frames {
                    t.state = TrackState::Removed;
                }
            }
            TrackState::Removed => {}
        }
    }
}
