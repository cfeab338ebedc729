//! Per-tick orchestration of the estimation pipeline: project detections,
//! step each drone's tracker, re-align IDs against the reference drone when
//! needed, fuse per-robot estimates, and feed the filtered positions back
//! into the trackers for the next frame's hybrid matching.
//!
//! Alignment runs whenever a drone carries a track ID the reference drone
//! does not know: that covers initial track creation and re-synchronization
//! after dropouts. Renames happen while tracks are still tentative, so a
//! properly aligned robot never shows an ID switch in the confirmed output.

use crate::alignment::{match_to_reference, AlignmentParams, ReferenceTrack};
use crate::fusion::{DroneEstimate, EkfParams, FusedEstimate, FusionEngine, FusionError};
use crate::geodesy::{GeoPoint, GeodesyParams};
use crate::projection::{project_detection, Detection};
use crate::simulator::FrameBundle;
use crate::tracker::{IdAllocator, MatchWeights, Tracker, TrackerError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("frame carries {got} observations, pipeline was built for {expected} drones")]
    DroneCountMismatch { expected: usize, got: usize },
}

/// Parameters for every pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineParams {
    pub tracker: MatchWeights,
    pub alignment: AlignmentParams,
    pub ekf: EkfParams,
    /// Reference drone ID for cross-drone alignment; the lowest drone ID
    /// when unset.
    pub reference_drone: Option<u32>,
}

/// One confirmed per-drone estimate row, as written to `estimates.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRow {
    pub tick: u64,
    pub drone_id: u32,
    pub global_id: u64,
    pub position: GeoPoint,
    pub confidence: f64,
}

/// Everything one processed tick produces.
#[derive(Debug, Clone, Default)]
pub struct TickRecords {
    pub estimates: Vec<EstimateRow>,
    pub fused: Vec<FusedEstimate>,
    /// Per drone: `(truth robot, assigned global id)` for confirmed matches,
    /// available only when the frame carried truth labels.
    pub assignments: Vec<Vec<(u64, u64)>>,
}

pub struct Pipeline {
    params: PipelineParams,
    geodesy: GeodesyParams,
    trackers: Vec<Tracker>,
    fusion: FusionEngine,
    reference_index: usize,
    /// Votes for mapping each global ID to the truth robot it tracked.
    robot_votes: BTreeMap<u64, BTreeMap<u64, u64>>,
}

impl Pipeline {
    pub fn new(
        drone_ids: &[u32],
        params: PipelineParams,
        geodesy: GeodesyParams,
    ) -> Result<Self, PipelineError> {
        let ids = IdAllocator::new();
        let trackers = drone_ids
            .iter()
            .map(|&id| Tracker::new(id, params.tracker, geodesy, Arc::clone(&ids)))
            .collect::<Result<Vec<_>, _>>()?;
        let reference_index = match params.reference_drone {
            Some(wanted) => drone_ids.iter().position(|&d| d == wanted).unwrap_or(0),
            None => drone_ids
                .iter()
                .enumerate()
                .min_by_key(|(_, &d)| d)
                .map_or(0, |(i, _)| i),
        };
        Ok(Self {
            params,
            geodesy,
            trackers,
            fusion: FusionEngine::new(params.ekf, geodesy)?,
            reference_index,
            robot_votes: BTreeMap::new(),
        })
    }

    /// The per-drone trackers, in construction order.
    pub fn trackers(&self) -> &[Tracker] {
        &self.trackers
    }

    /// Majority mapping from global track IDs to the truth robots they
    /// followed, accumulated over all processed frames.
    pub fn global_id_robot_map(&self) -> BTreeMap<u64, u64> {
        self.robot_votes
            .iter()
            .filter_map(|(&gid, votes)| {
                votes
                    .iter()
                    .max_by_key(|&(robot, count)| (*count, std::cmp::Reverse(*robot)))
                    .map(|(&robot, _)| (gid, robot))
            })
            .collect()
    }

    pub fn process_frame(&mut self, frame: &FrameBundle) -> Result<TickRecords, PipelineError> {
        if frame.observations.len() != self.trackers.len() {
            return Err(PipelineError::DroneCountMismatch {
                expected: self.trackers.len(),
                got: frame.observations.len(),
            });
        }

        // Stage 1: projection. Detections whose geometry fails to project
        // are dropped, keeping detections and positions index-aligned.
        struct DroneFrame {
            detections: Vec<Detection>,
            positions: Vec<GeoPoint>,
            labels: Vec<Option<u64>>,
        }
        let mut projected = Vec::with_capacity(frame.observations.len());
        for (j, obs) in frame.observations.iter().enumerate() {
            let mut df = DroneFrame {
                detections: Vec::new(),
                positions: Vec::new(),
                labels: Vec::new(),
            };
            for (k, det) in obs.detections.iter().enumerate() {
                let Ok(trace) = project_detection(det, &obs.pose, &obs.camera, &self.geodesy)
                else {
                    continue;
                };
                df.detections.push(*det);
                df.positions.push(trace.estimate);
                df.labels
                    .push(frame.truth_labels.get(j).and_then(|l| l.get(k)).copied());
            }
            projected.push(df);
        }

        // Stage 2: per-drone tracking.
        let mut matches_per_drone = Vec::with_capacity(self.trackers.len());
        for (tracker, df) in self.trackers.iter_mut().zip(&projected) {
            let outcome = tracker.step(&df.detections, &df.positions)?;
            matches_per_drone.push(outcome.matches);
        }

        // Stage 3: ID alignment against the reference drone, for any drone
        // carrying an ID the reference does not know. Only the out-of-sync
        // detections are offered, and only against reference tracks this
        // drone has not already settled on, so an aligned track can never be
        // disturbed by a later pass. When the two sides of a match disagree,
        // the elder identity (the smaller ID, issued earlier) wins: if the
        // reference re-initialized a track the rest of the fleet already
        // knows, the reference adopts the established ID instead of forcing
        // fleet-wide churn.
        for j in 0..self.trackers.len() {
            if j == self.reference_index {
                continue;
            }
            let reference_ids = self.trackers[self.reference_index].live_ids();
            if reference_ids.is_empty() {
                break;
            }
            let settled: std::collections::BTreeSet<u64> = self.trackers[j]
                .live_ids()
                .intersection(&reference_ids)
                .copied()
                .collect();
            let out_of_sync = self.trackers[j].live_ids().len() != settled.len();
            if !out_of_sync {
                continue;
            }
            let reference: Vec<ReferenceTrack> = self.trackers[self.reference_index]
                .tracks()
                .iter()
                .filter(|t| !settled.contains(&t.global_id))
                .map(|t| ReferenceTrack {
                    global_id: t.global_id,
                    position: t.filtered_geo,
                })
                .collect();
            // Detections owned by an unaligned track (or by none).
            let mut candidates: Vec<usize> = Vec::new();
            let mut candidate_geo: Vec<(GeoPoint, f64)> = Vec::new();
            for (det_idx, det) in projected[j].detections.iter().enumerate() {
                let owner = matches_per_drone[j]
                    .iter()
                    .find(|m| m.detection_index == det_idx);
                if owner.is_none_or(|m| !reference_ids.contains(&m.global_id)) {
                    candidates.push(det_idx);
                    candidate_geo.push((projected[j].positions[det_idx], det.confidence));
                }
            }
            let aligned = match_to_reference(
                &reference,
                &candidate_geo,
                &self.params.alignment,
                &self.geodesy,
            );
            for (candidate_idx, ref_gid) in aligned {
                let det_idx = candidates[candidate_idx];
                let Some(m) = matches_per_drone[j]
                    .iter()
                    .find(|m| m.detection_index == det_idx)
                    .copied()
                else {
                    continue;
                };
                if m.global_id == ref_gid {
                    continue;
                }
                let (renamed_tracker, from, to) = if m.global_id < ref_gid {
                    (self.reference_index, ref_gid, m.global_id)
                } else {
                    (j, m.global_id, ref_gid)
                };
                self.trackers[renamed_tracker].rename_track(from, to);
                for entry in &mut matches_per_drone[renamed_tracker] {
                    if entry.global_id == from {
                        entry.global_id = to;
                    } else if entry.global_id == to {
                        entry.global_id = from;
                    }
                }
            }
        }

        // Stage 4: fusion of confirmed estimates, grouped by global ID.
        let mut groups: BTreeMap<u64, Vec<DroneEstimate>> = BTreeMap::new();
        let mut records = TickRecords {
            assignments: vec![Vec::new(); self.trackers.len()],
            ..TickRecords::default()
        };
        for (j, matches) in matches_per_drone.iter().enumerate() {
            let drone_id = self.trackers[j].drone_id;
            for m in matches {
                if !m.confirmed {
                    continue;
                }
                let geo = projected[j].positions[m.detection_index];
                let confidence = projected[j].detections[m.detection_index].confidence;
                groups.entry(m.global_id).or_default().push(DroneEstimate {
                    drone_id,
                    position: geo,
                    confidence,
                });
                records.estimates.push(EstimateRow {
                    tick: frame.tick,
                    drone_id,
                    global_id: m.global_id,
                    position: geo,
                    confidence,
                });
                if let Some(robot) = projected[j].labels[m.detection_index] {
                    records.assignments[j].push((robot, m.global_id));
                    *self
                        .robot_votes
                        .entry(m.global_id)
                        .or_default()
                        .entry(robot)
                        .or_insert(0) += 1;
                }
            }
        }

        records.fused = self.fusion.fuse_tick(frame.tick, &groups);

        // Stage 5: feed filtered positions back for the next frame.
        for fe in &records.fused {
            for tracker in &mut self.trackers {
                tracker.set_filtered_geo(fe.global_id, fe.filtered);
            }
        }

        records.estimates.sort_by_key(|r| (r.drone_id, r.global_id));
        Ok(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{NoiseModel, ScenarioConfig, Simulator};
    use std::collections::BTreeSet;

    fn run_scenario_ticks(cfg: &ScenarioConfig, params: PipelineParams, ticks: u64) -> (Vec<TickRecords>, Pipeline, Simulator) {
        let mut sim = Simulator::new(cfg).unwrap();
        let drone_ids: Vec<u32> = (0..cfg.n_drones).collect();
        let mut pipeline = Pipeline::new(&drone_ids, params, GeodesyParams::default()).unwrap();
        let n = ticks.min(sim.total_ticks());
        let mut all = Vec::new();
        for tick in 0..n {
            let frame = sim.render_frame(tick).unwrap();
            all.push(pipeline.process_frame(&frame).unwrap());
        }
        (all, pipeline, sim)
    }

    #[test]
    fn noiseless_run_settles_on_one_id_per_robot() {
        let cfg = ScenarioConfig {
            seed: 7,
            ..ScenarioConfig::default()
        };
        let (records, pipeline, _) = run_scenario_ticks(&cfg, PipelineParams::default(), 300);

        // After convergence every tick fuses exactly two IDs, one per robot.
        let late = &records[50..];
        let mut ids = BTreeSet::new();
        for rec in late {
            let measured: Vec<_> = rec.fused.iter().filter(|f| f.raw_fused.is_some()).collect();
            assert_eq!(measured.len(), 2, "expected two fused robots per tick");
            for f in measured {
                ids.insert(f.global_id);
            }
        }
        assert_eq!(ids.len(), 2, "global ids churned: {ids:?}");

        // The majority map covers both robots.
        let map = pipeline.global_id_robot_map();
        let robots: BTreeSet<u64> = map.values().copied().collect();
        assert_eq!(robots, BTreeSet::from([0, 1]));
    }

    #[test]
    fn noiseless_fused_error_is_tiny() {
        let cfg = ScenarioConfig {
            seed: 11,
            ..ScenarioConfig::default()
        };
        let (records, pipeline, mut sim) = run_scenario_ticks(&cfg, PipelineParams::default(), 400);
        let g = GeodesyParams::default();
        let map = pipeline.global_id_robot_map();
        let mut worst: f64 = 0.0;
        for rec in &records[100..] {
            for f in &rec.fused {
                if f.raw_fused.is_none() {
                    continue;
                }
                let robot = map[&f.global_id];
                let frame = sim.render_frame(f.tick).unwrap();
                let truth = frame.truth[robot as usize].1;
                worst = worst.max(g.haversine_distance(&f.filtered, &truth));
            }
        }
        assert!(worst < 0.05, "worst noiseless fused error {worst} m");
    }

    #[test]
    fn all_drones_agree_on_ids_after_alignment() {
        let cfg = ScenarioConfig {
            seed: 3,
            ..ScenarioConfig::default()
        };
        let (records, _, _) = run_scenario_ticks(&cfg, PipelineParams::default(), 100);
        for rec in &records[10..] {
            // Group per-drone confirmed IDs by robot via the assignments log.
            let mut per_robot: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
            for drone in &rec.assignments {
                for &(robot, gid) in drone {
                    per_robot.entry(robot).or_default().insert(gid);
                }
            }
            for (robot, gids) in per_robot {
                assert_eq!(gids.len(), 1, "robot {robot} has ids {gids:?}");
            }
        }
    }

    #[test]
    fn zero_switches_for_separated_targets_without_noise() {
        let cfg = ScenarioConfig {
            seed: 19,
            robot_spacing_m: 25.0, // more than twice the 10 m geo gate
            noise: NoiseModel::zero(),
            ..ScenarioConfig::default()
        };
        let (records, _, sim) = run_scenario_ticks(&cfg, PipelineParams::default(), 1000);
        let per_drone: Vec<Vec<Vec<(u64, u64)>>> = (0..cfg.n_drones as usize)
            .map(|j| records.iter().map(|r| r.assignments[j].clone()).collect())
            .collect();
        let g = GeodesyParams::default();
        let travel: f64 = (0..cfg.n_robots as usize)
            .map(|r| sim.robot_trajectory(r).unwrap().path_length_m(&g))
            .sum();
        for frames in per_drone {
            let report = crate::evaluation::count_id_switches(&frames, travel);
            assert_eq!(report.switches, 0);
        }
    }

    #[test]
    fn drone_count_mismatch_is_detected() {
        let cfg = ScenarioConfig {
            seed: 1,
            ..ScenarioConfig::default()
        };
        let mut sim = Simulator::new(&cfg).unwrap();
        let mut pipeline =
            Pipeline::new(&[0, 1], PipelineParams::default(), GeodesyParams::default()).unwrap();
        let frame = sim.render_frame(0).unwrap();
        assert!(matches!(
            pipeline.process_frame(&frame),
            Err(PipelineError::DroneCountMismatch { expected: 2, got: 3 })
        ));
    }
}
