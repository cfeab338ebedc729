//! Scenario runner and experiment harness: loads a JSON config, executes the
//! full loop (simulate, project, track, align, fuse), evaluates the result
//! against ground truth, and writes CSV logs plus JSON reports.
//!
//! Outputs per run: `truth.csv`, `estimates.csv`, `fused.csv`, `report.json`,
//! and `manifest.json`. All CSV content is a pure function of the config and
//! seed; only the manifest carries wall-clock timings.

use crate::evaluation::{
    count_id_switches, evaluate_trajectories, GeoTrajectory, IcpParams, IdSwitchReport,
};
use crate::geodesy::{GeoPoint, GeodesyParams};
use crate::pipeline::{EstimateRow, Pipeline, PipelineError, PipelineParams};
use crate::simulator::{SimError, Simulator};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("output {0} already exists; pass --force to overwrite")]
    WouldOverwrite(PathBuf),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("evaluation error: {0}")]
    Eval(String),
}

impl RunError {
    /// Process exit code: 1 for usage and config problems, 2 for runtime
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::WouldOverwrite(_) => 1,
            _ => 2,
        }
    }
}

/// One JSON file drives a whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: crate::simulator::ScenarioConfig,
    pub pipeline: PipelineParams,
    pub icp: IcpParams,
}

impl RunConfig {
    pub fn from_str(text: &str) -> Result<Self, RunError> {
        let config: RunConfig = serde_json::from_str(text)
            .map_err(|e| RunError::Config(format!("failed to parse config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.scenario
            .validate()
            .map_err(|e| RunError::Config(format!("scenario: {e}")))?;
        self.pipeline
            .tracker
            .validate()
            .map_err(|e| RunError::Config(format!("pipeline.tracker: {e}")))?;
        self.pipeline
            .alignment
            .validate()
            .map_err(|e| RunError::Config(format!("pipeline.alignment: {e}")))?;
        self.pipeline
            .ekf
            .validate()
            .map_err(|e| RunError::Config(format!("pipeline.ekf: {e}")))?;
        self.icp
            .validate()
            .map_err(|e| RunError::Config(format!("icp: {e}")))?;
        Ok(())
    }

    pub fn canonical_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Loads and validates a config file, returning the raw text for hashing.
pub fn load_config(path: &Path) -> Result<(RunConfig, String), RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config = RunConfig::from_str(&text)?;
    Ok((config, text))
}

/// Per-robot evaluation entry in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotReport {
    pub robot_id: u64,
    pub global_ids: Vec<u64>,
    pub points: usize,
    pub mean_error_m: Option<f64>,
    pub std_error_m: Option<f64>,
    pub translation_east_m: f64,
    pub translation_north_m: f64,
    pub icp_iterations: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroneSwitches {
    pub drone_id: u32,
    pub switches: u32,
    pub per_500m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct IdSwitchSummary {
    pub per_drone: Vec<DroneSwitches>,
    pub mean_per_500m: f64,
}

/// The run-level evaluation written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mean_error_m: f64,
    pub std_error_m: f64,
    pub num_points: usize,
    pub per_robot: Vec<RobotReport>,
    pub id_switches: IdSwitchSummary,
    pub per_point_errors: Vec<f64>,
}

/// Run metadata written to `manifest.json`; the only output that is not a
/// pure function of config and seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub seed: u64,
    pub parameters: RunConfig,
    pub outputs: BTreeMap<String, String>,
    pub stage_seconds: BTreeMap<String, f64>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedRow {
    pub tick: u64,
    pub global_id: u64,
    pub filtered: GeoPoint,
    pub raw: GeoPoint,
    pub total_confidence: f64,
}

/// Everything a simulated run produces before file IO.
pub struct ScenarioData {
    pub truth_rows: Vec<(u64, u64, GeoPoint, f64)>,
    pub estimates: Vec<EstimateRow>,
    pub fused_rows: Vec<FusedRow>,
    /// Per drone, per frame: (robot, global id) assignment pairs.
    pub assignments: Vec<Vec<Vec<(u64, u64)>>>,
    pub gid_to_robot: BTreeMap<u64, u64>,
    pub robot_trajectories: Vec<GeoTrajectory>,
    pub frame_rate_hz: f64,
    pub simulate_seconds: f64,
    pub pipeline_seconds: f64,
}

/// Simulates a scenario and runs the estimation pipeline over every frame,
/// without touching the filesystem.
pub fn simulate_and_track(config: &RunConfig) -> Result<ScenarioData, RunError> {
    config.validate()?;
    let geodesy = GeodesyParams::default();
    let mut sim = Simulator::new(&config.scenario)?;
    let drone_ids: Vec<u32> = (0..config.scenario.n_drones).collect();
    let mut pipeline = Pipeline::new(&drone_ids, config.pipeline, geodesy)?;

    let ticks = sim.total_ticks();
    let mut estimates = Vec::new();
    let mut fused_rows = Vec::new();
    let mut assignments: Vec<Vec<Vec<(u64, u64)>>> =
        vec![Vec::with_capacity(ticks as usize); drone_ids.len()];
    let mut simulate_seconds = 0.0;
    let mut pipeline_seconds = 0.0;

    for tick in 0..ticks {
        let t0 = Instant::now();
        let frame = sim.render_frame(tick)?;
        simulate_seconds += t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let mut records = pipeline.process_frame(&frame)?;
        estimates.extend(records.estimates.drain(..));
        for fe in &records.fused {
            if let Some(raw) = fe.raw_fused {
                fused_rows.push(FusedRow {
                    tick: fe.tick,
                    global_id: fe.global_id,
                    filtered: fe.filtered,
                    raw,
                    total_confidence: fe.total_confidence,
                });
            }
        }
        for (j, frame_assignments) in records.assignments.drain(..).enumerate() {
            assignments[j].push(frame_assignments);
        }
        pipeline_seconds += t1.elapsed().as_secs_f64();
    }

    let t2 = Instant::now();
    let robot_trajectories: Vec<GeoTrajectory> = (0..config.scenario.n_robots as usize)
        .map(|r| sim.robot_trajectory(r))
        .collect::<Result<_, _>>()?;
    let truth_rows = robot_trajectories
        .iter()
        .enumerate()
        .flat_map(|(robot, traj)| {
            traj.samples().iter().map(move |(t, p)| {
                let tick = (t * config.scenario.frame_rate_hz).round() as u64;
                (tick, robot as u64, *p, *t)
            })
        })
        .collect();
    simulate_seconds += t2.elapsed().as_secs_f64();

    Ok(ScenarioData {
        truth_rows,
        estimates,
        fused_rows,
        assignments,
        gid_to_robot: pipeline.global_id_robot_map(),
        robot_trajectories,
        frame_rate_hz: config.scenario.frame_rate_hz,
        simulate_seconds,
        pipeline_seconds,
    })
}

/// Evaluates a finished run: per robot, the fused trajectory (fragments
/// joined in tick order) is ICP-aligned against that robot's ground truth
/// and scored; ID switches are counted per drone.
pub fn evaluate_run(data: &ScenarioData, icp: &IcpParams) -> Result<RunReport, RunError> {
    let geodesy = GeodesyParams::default();

    // Per robot: tick -> best fused row (highest confidence, then lowest id).
    let mut per_robot: BTreeMap<u64, BTreeMap<u64, FusedRow>> = BTreeMap::new();
    for row in &data.fused_rows {
        let Some(&robot) = data.gid_to_robot.get(&row.global_id) else {
            continue;
        };
        per_robot
            .entry(robot)
            .or_default()
            .entry(row.tick)
            .and_modify(|existing| {
                let better = row.total_confidence > existing.total_confidence
                    || (row.total_confidence == existing.total_confidence
                        && row.global_id < existing.global_id);
                if better {
                    *existing = *row;
                }
            })
            .or_insert(*row);
    }

    let mut per_robot_reports = Vec::new();
    let mut all_errors = Vec::new();
    for (robot, truth) in data.robot_trajectories.iter().enumerate() {
        let robot = robot as u64;
        let rows = per_robot.get(&robot);
        let global_ids: Vec<u64> = data
            .gid_to_robot
            .iter()
            .filter(|&(_, &r)| r == robot)
            .map(|(&gid, _)| gid)
            .collect();
        let Some(rows) = rows.filter(|r| !r.is_empty()) else {
            per_robot_reports.push(RobotReport {
                robot_id: robot,
                global_ids,
                points: 0,
                mean_error_m: None,
                std_error_m: None,
                translation_east_m: 0.0,
                translation_north_m: 0.0,
                icp_iterations: 0,
            });
            continue;
        };
        let samples: Vec<(f64, GeoPoint)> = rows
            .iter()
            .map(|(&tick, row)| (tick as f64 / data.frame_rate_hz, row.filtered))
            .collect();
        let estimated = GeoTrajectory::new(samples, data.frame_rate_hz)
            .map_err(|e| RunError::Eval(e.to_string()))?;
        let report = evaluate_trajectories(&estimated, truth, icp, &geodesy)
            .map_err(|e| RunError::Eval(e.to_string()))?;
        all_errors.extend(report.per_point_errors.iter().copied());
        per_robot_reports.push(RobotReport {
            robot_id: robot,
            global_ids,
            points: report.per_point_errors.len(),
            mean_error_m: Some(report.mean_error_m),
            std_error_m: Some(report.std_error_m),
            translation_east_m: report.applied_translation.east_m,
            translation_north_m: report.applied_translation.north_m,
            icp_iterations: report.iterations_used,
        });
    }

    let geodesy_ref = &geodesy;
    let total_travel: f64 = data
        .robot_trajectories
        .iter()
        .map(|t| t.path_length_m(geodesy_ref))
        .sum();
    let per_drone: Vec<DroneSwitches> = data
        .assignments
        .iter()
        .enumerate()
        .map(|(j, frames)| {
            let IdSwitchReport { switches, per_500m } = count_id_switches(frames, total_travel);
            DroneSwitches {
                drone_id: j as u32,
                switches,
                per_500m,
            }
        })
        .collect();
    let mean_per_500m = if per_drone.is_empty() {
        0.0
    } else {
        per_drone.iter().map(|d| d.per_500m).sum::<f64>() / per_drone.len() as f64
    };

    let n = all_errors.len();
    let (mean, std) = if n == 0 {
        (0.0, 0.0)
    } else {
        let mean = all_errors.iter().sum::<f64>() / n as f64;
        let var = all_errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n as f64;
        (mean, var.sqrt())
    };

    Ok(RunReport {
        mean_error_m: mean,
        std_error_m: std,
        num_points: n,
        per_robot: per_robot_reports,
        id_switches: IdSwitchSummary {
            per_drone,
            mean_per_500m,
        },
        per_point_errors: all_errors,
    })
}

/// Convenience: simulate, track, and evaluate without writing files.
pub fn run_scenario_in_memory(config: &RunConfig) -> Result<RunReport, RunError> {
    let data = simulate_and_track(config)?;
    evaluate_run(&data, &config.icp)
}

const RUN_OUTPUTS: [&str; 5] = [
    "truth.csv",
    "estimates.csv",
    "fused.csv",
    "report.json",
    "manifest.json",
];

fn guard_outputs(out_dir: &Path, names: &[&str], force: bool) -> Result<(), RunError> {
    if force {
        return Ok(());
    }
    for name in names {
        let path = out_dir.join(name);
        if path.exists() {
            return Err(RunError::WouldOverwrite(path));
        }
    }
    Ok(())
}

fn sha256_hex(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Executes a full scenario run and writes all artifacts into `out_dir`.
pub fn run_scenario(
    config: &RunConfig,
    config_text: &str,
    out_dir: &Path,
    force: bool,
) -> Result<(RunReport, RunManifest), RunError> {
    let total_start = Instant::now();
    std::fs::create_dir_all(out_dir)?;
    guard_outputs(out_dir, &RUN_OUTPUTS, force)?;

    let data = simulate_and_track(config)?;

    let eval_start = Instant::now();
    let report = evaluate_run(&data, &config.icp)?;
    let evaluate_seconds = eval_start.elapsed().as_secs_f64();

    let write_start = Instant::now();
    write_truth_csv(&out_dir.join("truth.csv"), &data)?;
    write_estimates_csv(&out_dir.join("estimates.csv"), &data)?;
    write_fused_csv(&out_dir.join("fused.csv"), &data)?;
    let report_json = serde_json::to_string_pretty(&report)
        .map_err(|e| RunError::Eval(format!("report serialization: {e}")))?;
    std::fs::write(out_dir.join("report.json"), report_json)?;
    let write_seconds = write_start.elapsed().as_secs_f64();

    let mut stage_seconds = BTreeMap::new();
    stage_seconds.insert("simulate".to_string(), data.simulate_seconds);
    stage_seconds.insert("track_fuse".to_string(), data.pipeline_seconds);
    stage_seconds.insert("evaluate".to_string(), evaluate_seconds);
    stage_seconds.insert("write".to_string(), write_seconds);

    let outputs: BTreeMap<String, String> = RUN_OUTPUTS
        .iter()
        .map(|name| (name.to_string(), out_dir.join(name).display().to_string()))
        .collect();

    let manifest = RunManifest {
        config_sha256: sha256_hex(config_text),
        seed: config.scenario.seed,
        parameters: config.clone(),
        outputs,
        stage_seconds,
        total_seconds: total_start.elapsed().as_secs_f64(),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| RunError::Eval(format!("manifest serialization: {e}")))?;
    std::fs::write(out_dir.join("manifest.json"), manifest_json)?;

    Ok((report, manifest))
}

fn write_truth_csv(path: &Path, data: &ScenarioData) -> Result<(), RunError> {
    let mut out = String::from("tick,robot_id,lat,lon,timestamp_s\n");
    let mut rows = data.truth_rows.clone();
    rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    for (tick, robot, p, t) in rows {
        out.push_str(&format!(
            "{tick},{robot},{:.9},{:.9},{t:.3}\n",
            p.lat_deg, p.lon_deg
        ));
    }
    Ok(std::fs::write(path, out)?)
}

fn write_estimates_csv(path: &Path, data: &ScenarioData) -> Result<(), RunError> {
    let mut out = String::from("tick,drone_id,global_id,lat,lon,confidence\n");
    let mut rows = data.estimates.clone();
    rows.sort_by_key(|r| (r.tick, r.drone_id, r.global_id));
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.9},{:.9},{:.4}\n",
            r.tick, r.drone_id, r.global_id, r.position.lat_deg, r.position.lon_deg, r.confidence
        ));
    }
    Ok(std::fs::write(path, out)?)
}

fn write_fused_csv(path: &Path, data: &ScenarioData) -> Result<(), RunError> {
    let mut out = String::from("tick,global_id,lat,lon,raw_lat,raw_lon,total_confidence\n");
    let mut rows = data.fused_rows.clone();
    rows.sort_by_key(|r| (r.tick, r.global_id));
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.9},{:.9},{:.9},{:.9},{:.4}\n",
            r.tick,
            r.global_id,
            r.filtered.lat_deg,
            r.filtered.lon_deg,
            r.raw.lat_deg,
            r.raw.lon_deg,
            r.total_confidence
        ));
    }
    Ok(std::fs::write(path, out)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatcherRow {
    pub matcher: String,
    pub switches_per_500m: f64,
    pub mean_error_m: f64,
}

/// Runs the identical scenario twice with a shared seed: once with IOU-only
/// matching and once with the hybrid weights, and writes `comparison.csv`.
pub fn compare_matchers(
    config: &RunConfig,
    out_dir: &Path,
    force: bool,
) -> Result<Vec<MatcherRow>, RunError> {
    std::fs::create_dir_all(out_dir)?;
    guard_outputs(out_dir, &["comparison.csv"], force)?;

    let variants = [("iou", 1.0, 0.0), ("hybrid", 0.7, 0.3)];
    let mut rows = Vec::new();
    for (name, iou_w, geo_w) in variants {
        let mut variant = config.clone();
        variant.pipeline.tracker.iou_weight = iou_w;
        variant.pipeline.tracker.geo_weight = geo_w;
        let text = variant.canonical_text();
        let (report, _) = run_scenario(&variant, &text, &out_dir.join(name), force)?;
        rows.push(MatcherRow {
            matcher: name.to_string(),
            switches_per_500m: report.id_switches.mean_per_500m,
            mean_error_m: report.mean_error_m,
        });
    }

    let mut out = String::from("matcher,switches_per_500m,mean_error_m\n");
    for row in &rows {
        out.push_str(&format!(
            "{},{:.4},{:.6}\n",
            row.matcher, row.switches_per_500m, row.mean_error_m
        ));
    }
    std::fs::write(out_dir.join("comparison.csv"), out)?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub n_drones: u32,
    pub mean_error_m: f64,
    pub std_error_m: f64,
}

/// Sweeps the drone count (3, 2, 1) over a block of seeds and writes
/// `sweep.csv` with the seed-averaged mean error per count. The std column
/// is the seed-to-seed spread of the per-run means.
pub fn sweep_drones(
    config: &RunConfig,
    out_dir: &Path,
    n_seeds: u32,
    force: bool,
) -> Result<Vec<SweepRow>, RunError> {
    std::fs::create_dir_all(out_dir)?;
    guard_outputs(out_dir, &["sweep.csv"], force)?;

    let mut rows = Vec::new();
    for n_drones in [3u32, 2, 1] {
        let mut means = Vec::new();
        for k in 0..n_seeds {
            let mut variant = config.clone();
            variant.scenario.n_drones = n_drones;
            variant.scenario.seed = config.scenario.seed.wrapping_add(u64::from(k));
            let text = variant.canonical_text();
            let run_dir = out_dir.join(format!("drones{n_drones}_seed{}", variant.scenario.seed));
            let (report, _) = run_scenario(&variant, &text, &run_dir, force)?;
            means.push(report.mean_error_m);
        }
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / means.len() as f64;
        rows.push(SweepRow {
            n_drones,
            mean_error_m: mean,
            std_error_m: var.sqrt(),
        });
    }

    let mut out = String::from("n_drones,mean_error_m,std_error_m\n");
    for row in &rows {
        out.push_str(&format!(
            "{},{:.6},{:.6}\n",
            row.n_drones, row.mean_error_m, row.std_error_m
        ));
    }
    std::fs::write(out_dir.join("sweep.csv"), out)?;
    Ok(rows)
}

#[derive(Debug, Deserialize)]
struct TruthCsvRow {
    tick: u64,
    robot_id: u64,
    lat: f64,
    lon: f64,
    timestamp_s: f64,
}

#[derive(Debug, Deserialize)]
struct FusedCsvRow {
    tick: u64,
    global_id: u64,
    lat: f64,
    lon: f64,
    #[allow(dead_code)]
    raw_lat: f64,
    #[allow(dead_code)]
    raw_lon: f64,
    total_confidence: f64,
}

/// Standalone evaluation of two existing CSV logs: pairs each fused global-ID
/// trajectory with the geographically closest truth robot, ICP-aligns, and
/// writes `report.json` into `out_dir`.
pub fn evaluate_csv_files(
    truth_csv: &Path,
    fused_csv: &Path,
    icp: &IcpParams,
    out_dir: &Path,
    force: bool,
) -> Result<RunReport, RunError> {
    std::fs::create_dir_all(out_dir)?;
    guard_outputs(out_dir, &["report.json"], force)?;
    let geodesy = GeodesyParams::default();

    let mut truth_points: BTreeMap<u64, Vec<(f64, GeoPoint)>> = BTreeMap::new();
    let mut reader = csv::Reader::from_path(truth_csv)
        .map_err(|e| RunError::Config(format!("cannot read {}: {e}", truth_csv.display())))?;
    for row in reader.deserialize() {
        let row: TruthCsvRow =
            row.map_err(|e| RunError::Config(format!("bad truth row: {e}")))?;
        let point = GeoPoint::new(row.lat, row.lon)
            .map_err(|e| RunError::Config(format!("truth row tick {}: {e}", row.tick)))?;
        truth_points
            .entry(row.robot_id)
            .or_default()
            .push((row.timestamp_s, point));
    }

    let mut fused_points: BTreeMap<u64, BTreeMap<u64, (GeoPoint, f64)>> = BTreeMap::new();
    let mut reader = csv::Reader::from_path(fused_csv)
        .map_err(|e| RunError::Config(format!("cannot read {}: {e}", fused_csv.display())))?;
    for row in reader.deserialize() {
        let row: FusedCsvRow =
            row.map_err(|e| RunError::Config(format!("bad fused row: {e}")))?;
        let point = GeoPoint::new(row.lat, row.lon)
            .map_err(|e| RunError::Config(format!("fused row tick {}: {e}", row.tick)))?;
        fused_points
            .entry(row.global_id)
            .or_default()
            .insert(row.tick, (point, row.total_confidence));
    }

    // Pair each global ID with the truth robot whose centroid is nearest.
    let truth_centroids: BTreeMap<u64, GeoPoint> = truth_points
        .iter()
        .filter_map(|(&robot, pts)| {
            let points: Vec<GeoPoint> = pts.iter().map(|(_, p)| *p).collect();
            GeodesyParams::mean_point(&points).map(|c| (robot, c))
        })
        .collect();
    let mut gid_to_robot = BTreeMap::new();
    for (&gid, ticks) in &fused_points {
        let points: Vec<GeoPoint> = ticks.values().map(|(p, _)| *p).collect();
        let Some(centroid) = GeodesyParams::mean_point(&points) else {
            continue;
        };
        let nearest = truth_centroids
            .iter()
            .min_by(|(_, a), (_, b)| {
                geodesy
                    .haversine_distance(&centroid, a)
                    .partial_cmp(&geodesy.haversine_distance(&centroid, b))
                    .unwrap()
            })
            .map(|(&robot, _)| robot);
        if let Some(robot) = nearest {
            gid_to_robot.insert(gid, robot);
        }
    }

    let mut per_robot_reports = Vec::new();
    let mut all_errors = Vec::new();
    for (&robot, samples) in &truth_points {
        let mut truth_samples = samples.clone();
        truth_samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let truth = GeoTrajectory::new(truth_samples, 1.0)
            .map_err(|e| RunError::Eval(format!("truth robot {robot}: {e}")))?;

        // Join this robot's fused fragments, best confidence per tick.
        let mut merged: BTreeMap<u64, (GeoPoint, f64, u64)> = BTreeMap::new();
        for (&gid, ticks) in &fused_points {
            if gid_to_robot.get(&gid) != Some(&robot) {
                continue;
            }
            for (&tick, &(point, conf)) in ticks {
                merged
                    .entry(tick)
                    .and_modify(|existing| {
                        if conf > existing.1 || (conf == existing.1 && gid < existing.2) {
                            *existing = (point, conf, gid);
                        }
                    })
                    .or_insert((point, conf, gid));
            }
        }
        let global_ids: Vec<u64> = gid_to_robot
            .iter()
            .filter(|&(_, &r)| r == robot)
            .map(|(&g, _)| g)
            .collect();
        if merged.is_empty() {
            per_robot_reports.push(RobotReport {
                robot_id: robot,
                global_ids,
                points: 0,
                mean_error_m: None,
                std_error_m: None,
                translation_east_m: 0.0,
                translation_north_m: 0.0,
                icp_iterations: 0,
            });
            continue;
        }
        let samples: Vec<(f64, GeoPoint)> = merged
            .iter()
            .map(|(&tick, &(p, _, _))| (tick as f64, p))
            .collect();
        let estimated = GeoTrajectory::new(samples, 1.0)
            .map_err(|e| RunError::Eval(format!("fused robot {robot}: {e}")))?;
        let report = evaluate_trajectories(&estimated, &truth, icp, &geodesy)
            .map_err(|e| RunError::Eval(e.to_string()))?;
        all_errors.extend(report.per_point_errors.iter().copied());
        per_robot_reports.push(RobotReport {
            robot_id: robot,
            global_ids,
            points: report.per_point_errors.len(),
            mean_error_m: Some(report.mean_error_m),
            std_error_m: Some(report.std_error_m),
            translation_east_m: report.applied_translation.east_m,
            translation_north_m: report.applied_translation.north_m,
            icp_iterations: report.iterations_used,
        });
    }

    let n = all_errors.len();
    let (mean, std) = if n == 0 {
        (0.0, 0.0)
    } else {
        let mean = all_errors.iter().sum::<f64>() / n as f64;
        let var = all_errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n as f64;
        (mean, var.sqrt())
    };
    let report = RunReport {
        mean_error_m: mean,
        std_error_m: std,
        num_points: n,
        per_robot: per_robot_reports,
        id_switches: IdSwitchSummary::default(),
        per_point_errors: all_errors,
    };
    let report_json = serde_json::to_string_pretty(&report)
        .map_err(|e| RunError::Eval(format!("report serialization: {e}")))?;
    let mut file = std::fs::File::create(out_dir.join("report.json"))?;
    file.write_all(report_json.as_bytes())?;
    Ok(report)
}
