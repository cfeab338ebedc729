//! Trajectory evaluation: translation-only ICP alignment between estimated
//! and ground-truth GNSS polylines, per-point error statistics, and tracking
//! ID-switch counting.
//!
//! Estimated and true trajectories are sampled at different rates and carry a
//! systematic inter-receiver offset, so errors are computed after aligning
//! the estimated line to the truth with a translation-only ICP in a shared
//! East-North frame about the joint mean location. Timestamps are never used
//! for correspondence; they ride along for diagnostics only.

mod kdtree;

pub use kdtree::KdTree2;

use crate::geodesy::{EnuPoint, GeoPoint, GeodesyError, GeodesyParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("trajectory timestamps must be strictly increasing")]
    NonMonotonicTimestamps,
    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
}

/// A timestamped GNSS polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoTrajectory {
    samples: Vec<(f64, GeoPoint)>,
    pub sample_rate_hz: f64,
}

impl GeoTrajectory {
    pub fn new(samples: Vec<(f64, GeoPoint)>, sample_rate_hz: f64) -> Result<Self, EvalError> {
        if !(sample_rate_hz > 0.0) {
            return Err(EvalError::NonPositive("sample_rate_hz"));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(EvalError::NonMonotonicTimestamps);
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[(f64, GeoPoint)] {
        &self.samples
    }

    pub fn points(&self) -> impl Iterator<Item = &GeoPoint> {
        self.samples.iter().map(|(_, p)| p)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Polyline length in meters.
    pub fn path_length_m(&self, geodesy: &GeodesyParams) -> f64 {
        self.samples
            .windows(2)
            .map(|w| geodesy.haversine_distance(&w[0].1, &w[1].1))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iterations: u32,
    pub convergence_epsilon_m: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            convergence_epsilon_m: 1e-6,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.max_iterations < 1 {
            return Err(EvalError::NonPositive("max_iterations"));
        }
        if !(self.convergence_epsilon_m > 0.0) {
            return Err(EvalError::NonPositive("convergence_epsilon_m"));
        }
        Ok(())
    }
}

/// Error statistics for an estimated trajectory against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mean_error_m: f64,
    pub std_error_m: f64,
    /// One entry per estimated point, in trajectory order.
    pub per_point_errors: Vec<f64>,
    /// Cumulative translation applied by ICP before scoring.
    pub applied_translation: EnuPoint,
    pub iterations_used: u32,
}

/// Outcome of the ICP alignment step.
#[derive(Debug, Clone, PartialEq)]
pub struct IcpTranslation {
    pub aligned: GeoTrajectory,
    pub translation: EnuPoint,
    pub iterations: u32,
}

/// Index of the point nearest to `query`, ties to the lowest index.
pub fn nearest_neighbor_index(query: &EnuPoint, points: &[EnuPoint]) -> Result<usize, EvalError> {
    let tree = KdTree2::build(points).ok_or(EvalError::EmptyInput("points"))?;
    Ok(tree.nearest(query).0)
}

/// Shared East-North frame about the joint mean of both trajectories.
fn joint_frame(
    estimated: &GeoTrajectory,
    truth: &GeoTrajectory,
    geodesy: &GeodesyParams,
) -> Result<(GeoPoint, Vec<EnuPoint>, Vec<EnuPoint>), EvalError> {
    if estimated.is_empty() {
        return Err(EvalError::EmptyInput("estimated trajectory"));
    }
    if truth.is_empty() {
        return Err(EvalError::EmptyInput("truth trajectory"));
    }
    let all: Vec<GeoPoint> = estimated.points().chain(truth.points()).copied().collect();
    let origin = GeodesyParams::mean_point(&all).ok_or(EvalError::EmptyInput("points"))?;
    let est: Vec<EnuPoint> = estimated
        .points()
        .map(|p| geodesy.to_enu(p, &origin))
        .collect::<Result<_, _>>()?;
    let tru: Vec<EnuPoint> = truth
        .points()
        .map(|p| geodesy.to_enu(p, &origin))
        .collect::<Result<_, _>>()?;
    Ok((origin, est, tru))
}

/// Translation-only ICP: repeatedly matches every estimated point to its
/// nearest truth point and shifts the estimated set by the centroid
/// difference of the matched pairs, until the shift is negligible or the
/// iteration budget runs out.
///
/// A straight-line trajectory only constrains the cross-track component of
/// the translation; the along-track component is unobservable by
/// construction. Curved trajectories recover both.
pub fn icp_translate(
    estimated: &GeoTrajectory,
    truth: &GeoTrajectory,
    params: &IcpParams,
    geodesy: &GeodesyParams,
) -> Result<IcpTranslation, EvalError> {
    params.validate()?;
    let (origin, mut est, tru) = joint_frame(estimated, truth, geodesy)?;
    let tree = KdTree2::build(&tru).ok_or(EvalError::EmptyInput("truth trajectory"))?;

    let mut total_east = 0.0;
    let mut total_north = 0.0;
    let mut iterations = 0;
    for _ in 0..params.max_iterations {
        iterations += 1;
        let mut matched_east = 0.0;
        let mut matched_north = 0.0;
        for p in &est {
            let (idx, _) = tree.nearest(p);
            matched_east += tru[idx].east_m - p.east_m;
            matched_north += tru[idx].north_m - p.north_m;
        }
        let n = est.len() as f64;
        let shift_east = matched_east / n;
        let shift_north = matched_north / n;
        for p in &mut est {
            p.east_m += shift_east;
            p.north_m += shift_north;
        }
        total_east += shift_east;
        total_north += shift_north;
        if shift_east.hypot(shift_north) < params.convergence_epsilon_m {
            break;
        }
    }

    let aligned_samples: Vec<(f64, GeoPoint)> = estimated
        .samples()
        .iter()
        .zip(&est)
        .map(|((t, _), p)| Ok((*t, geodesy.from_enu(p, &origin)?)))
        .collect::<Result<_, EvalError>>()?;
    Ok(IcpTranslation {
        aligned: GeoTrajectory::new(aligned_samples, estimated.sample_rate_hz)?,
        translation: EnuPoint::new(total_east, total_north),
        iterations,
    })
}

/// Scores an (already aligned) estimated trajectory against truth: each
/// estimated point's error is the distance to its nearest truth point in the
/// shared East-North frame.
pub fn compute_errors(
    aligned: &GeoTrajectory,
    truth: &GeoTrajectory,
    geodesy: &GeodesyParams,
) -> Result<ErrorReport, EvalError> {
    let (_, est, tru) = joint_frame(aligned, truth, geodesy)?;
    let tree = KdTree2::build(&tru).ok_or(EvalError::EmptyInput("truth trajectory"))?;
    let per_point_errors: Vec<f64> = est
        .iter()
        .map(|p| tree.nearest(p).1.sqrt())
        .collect();
    let n = per_point_errors.len() as f64;
    let mean = per_point_errors.iter().sum::<f64>() / n;
    let var = per_point_errors
        .iter()
        .map(|e| (e - mean) * (e - mean))
        .sum::<f64>()
        / n;
    Ok(ErrorReport {
        mean_error_m: mean,
        std_error_m: var.sqrt(),
        per_point_errors,
        applied_translation: EnuPoint::default(),
        iterations_used: 0,
    })
}

/// ICP alignment followed by error computation; the standard evaluation path.
pub fn evaluate_trajectories(
    estimated: &GeoTrajectory,
    truth: &GeoTrajectory,
    params: &IcpParams,
    geodesy: &GeodesyParams,
) -> Result<ErrorReport, EvalError> {
    let icp = icp_translate(estimated, truth, params, geodesy)?;
    let mut report = compute_errors(&icp.aligned, truth, geodesy)?;
    report.applied_translation = icp.translation;
    report.iterations_used = icp.iterations;
    Ok(report)
}

/// ID-switch statistics for one drone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdSwitchReport {
    pub switches: u32,
    /// Switches normalized per 500 m of total ground-truth robot travel.
    pub per_500m: f64,
}

/// Counts ID switches from frame-aligned assignment logs.
///
/// `frames[k]` lists `(truth robot, assigned global ID)` pairs for frame `k`.
/// A switch is counted whenever a robot's assigned ID differs from the last
/// ID it carried; frames where a robot is unassigned do not reset its last
/// ID. The count is normalized by `total_travel_m / 500`.
pub fn count_id_switches(frames: &[Vec<(u64, u64)>], total_travel_m: f64) -> IdSwitchReport {
    let mut last: std::collections::BTreeMap<u64, u64> = std::collections::BTreeMap::new();
    let mut switches = 0;
    for frame in frames {
        for &(robot, global_id) in frame {
            if let Some(prev) = last.insert(robot, global_id) {
                if prev != global_id {
                    switches += 1;
                }
            }
        }
    }
    let per_500m = if total_travel_m > 0.0 {
        f64::from(switches) / (total_travel_m / 500.0)
    } else {
        f64::from(switches)
    };
    IdSwitchReport { switches, per_500m }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn geodesy() -> GeodesyParams {
        GeodesyParams::default()
    }

    fn origin() -> GeoPoint {
        GeoPoint::new(45.0, -73.9).unwrap()
    }

    fn traj_from_enu(points: &[(f64, f64)], rate: f64) -> GeoTrajectory {
        let g = geodesy();
        let samples = points
            .iter()
            .enumerate()
            .map(|(i, &(e, n))| {
                (
                    i as f64 / rate,
                    g.from_enu(&EnuPoint::new(e, n), &origin()).unwrap(),
                )
            })
            .collect();
        GeoTrajectory::new(samples, rate).unwrap()
    }

    /// Quarter-circle arc of the given radius, sampled at `rate` Hz for a
    /// robot moving at 1 m/s, optionally shifted.
    fn arc(radius: f64, rate: f64, shift: (f64, f64)) -> GeoTrajectory {
        let arc_len = radius * PI / 2.0;
        let n = (arc_len * rate) as usize;
        let pts: Vec<(f64, f64)> = (0..=n)
            .map(|i| {
                let s = i as f64 / rate; // meters along the arc at 1 m/s
                let phi = s / radius;
                (
                    radius * phi.cos() - radius + shift.0,
                    radius * phi.sin() + shift.1,
                )
            })
            .collect();
        traj_from_enu(&pts, rate)
    }

    #[test]
    fn trajectory_rejects_non_monotonic_timestamps() {
        let g = geodesy();
        let p = g.from_enu(&EnuPoint::new(0.0, 0.0), &origin()).unwrap();
        let err = GeoTrajectory::new(vec![(0.0, p), (0.0, p)], 1.0).unwrap_err();
        assert_eq!(err, EvalError::NonMonotonicTimestamps);
    }

    #[test]
    fn nearest_neighbor_errors_on_empty() {
        assert_eq!(
            nearest_neighbor_index(&EnuPoint::new(0.0, 0.0), &[]),
            Err(EvalError::EmptyInput("points"))
        );
    }

    #[test]
    fn identical_trajectories_align_in_one_iteration() {
        let g = geodesy();
        let t = arc(50.0, 1.0, (0.0, 0.0));
        let out = icp_translate(&t, &t, &IcpParams::default(), &g).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.translation.norm() < 1e-9);
    }

    #[test]
    fn recovers_injected_shift_on_curved_trajectory() {
        // Truth: quarter circle of radius 50 m at 1 Hz. Estimate: same arc at
        // 10 Hz shifted by (+5, -3) m. ICP must shift it back by (-5, +3).
        let g = geodesy();
        let truth = arc(50.0, 1.0, (0.0, 0.0));
        let est = arc(50.0, 10.0, (5.0, -3.0));
        let out = icp_translate(&est, &truth, &IcpParams::default(), &g).unwrap();
        assert!(
            (out.translation.east_m + 5.0).abs() < 0.1,
            "east translation {}",
            out.translation.east_m
        );
        assert!(
            (out.translation.north_m - 3.0).abs() < 0.1,
            "north translation {}",
            out.translation.north_m
        );
    }

    #[test]
    fn icp_is_idempotent() {
        let g = geodesy();
        let truth = arc(50.0, 1.0, (0.0, 0.0));
        let est = arc(50.0, 10.0, (5.0, -3.0));
        let p = IcpParams::default();
        let once = icp_translate(&est, &truth, &p, &g).unwrap();
        let twice = icp_translate(&once.aligned, &truth, &p, &g).unwrap();
        assert!(twice.translation.norm() < 10.0 * p.convergence_epsilon_m);
    }

    #[test]
    fn straight_line_recovers_cross_track_only() {
        // North-running line shifted both along and across track: only the
        // cross-track (east) component is observable.
        let g = geodesy();
        let line: Vec<(f64, f64)> = (0..200).map(|i| (0.0, f64::from(i))).collect();
        let truth = traj_from_enu(&line, 1.0);
        let shifted: Vec<(f64, f64)> = (0..200).map(|i| (4.0, f64::from(i) + 7.0)).collect();
        let est = traj_from_enu(&shifted, 1.0);
        let out = icp_translate(&est, &truth, &IcpParams::default(), &g).unwrap();
        assert!(
            (out.translation.east_m + 4.0).abs() < 0.1,
            "cross-track residual {}",
            out.translation.east_m
        );
        // Along-track may drift; the final error must still be small because
        // the line slides along itself.
        let report = compute_errors(&out.aligned, &truth, &g).unwrap();
        assert!(report.mean_error_m < 0.5);
    }

    #[test]
    fn random_shifts_recovered_within_tolerance() {
        let g = geodesy();
        let truth = arc(60.0, 2.0, (0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let dx = rng.random_range(-10.0..10.0);
            let dy = rng.random_range(-10.0..10.0);
            let est = arc(60.0, 10.0, (dx, dy));
            let out = icp_translate(&est, &truth, &IcpParams::default(), &g).unwrap();
            assert!(
                (out.translation.east_m + dx).abs() < 0.1
                    && (out.translation.north_m + dy).abs() < 0.1,
                "shift ({dx}, {dy}) recovered as ({}, {})",
                out.translation.east_m,
                out.translation.north_m
            );
        }
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let g = geodesy();
        let t = arc(50.0, 1.0, (0.0, 0.0));
        let report = compute_errors(&t, &t, &g).unwrap();
        assert!(report.mean_error_m < 1e-12);
        assert!(report.std_error_m < 1e-12);
        assert_eq!(report.per_point_errors.len(), t.len());
    }

    #[test]
    fn constant_cross_track_offset_without_icp() {
        // 1 m east offset from a north-running line: every point is 1 m from
        // its nearest truth point, so mean 1 and std 0.
        let g = geodesy();
        let line: Vec<(f64, f64)> = (0..100).map(|i| (0.0, f64::from(i))).collect();
        let truth = traj_from_enu(&line, 1.0);
        let offset: Vec<(f64, f64)> = (0..100).map(|i| (1.0, f64::from(i))).collect();
        let est = traj_from_enu(&offset, 1.0);
        let report = compute_errors(&est, &truth, &g).unwrap();
        assert!((report.mean_error_m - 1.0).abs() < 1e-4);
        assert!(report.std_error_m < 1e-4);
    }

    #[test]
    fn errors_invariant_under_common_translation() {
        let g = geodesy();
        let truth = arc(50.0, 1.0, (0.0, 0.0));
        let est = arc(50.0, 10.0, (2.0, 1.0));
        let a = compute_errors(&est, &truth, &g).unwrap();
        let truth_shift = arc(50.0, 1.0, (100.0, -50.0));
        let est_shift = arc(50.0, 10.0, (102.0, -49.0));
        let b = compute_errors(&est_shift, &truth_shift, &g).unwrap();
        assert!((a.mean_error_m - b.mean_error_m).abs() < 1e-4);
        assert!((a.std_error_m - b.std_error_m).abs() < 1e-4);
    }

    #[test]
    fn no_switches_for_constant_assignment() {
        let frames: Vec<Vec<(u64, u64)>> = (0..100).map(|_| vec![(0, 10), (1, 11)]).collect();
        let report = count_id_switches(&frames, 1000.0);
        assert_eq!(report.switches, 0);
        assert_eq!(report.per_500m, 0.0);
    }

    #[test]
    fn single_swap_held_counts_two_switches() {
        let mut frames: Vec<Vec<(u64, u64)>> = (0..50).map(|_| vec![(0, 10), (1, 11)]).collect();
        frames.extend((0..50).map(|_| vec![(0, 11), (1, 10)]));
        let report = count_id_switches(&frames, 500.0);
        assert_eq!(report.switches, 2);
        assert!((report.per_500m - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gaps_do_not_reset_the_last_id() {
        let frames = vec![
            vec![(0, 10)],
            vec![],
            vec![],
            vec![(0, 10)],
            vec![(0, 12)],
        ];
        let report = count_id_switches(&frames, 500.0);
        assert_eq!(report.switches, 1);
    }
}
