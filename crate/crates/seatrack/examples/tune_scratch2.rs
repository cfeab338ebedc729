// Scratch probe: locate hybrid-matcher ID switches in the turbulence scenario.

use seatrack::runner::{simulate_and_track, RunConfig};

fn main() {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(302);
    let mut cfg = RunConfig::default();
    cfg.scenario.noise.pixel_sigma_px = 2.0;
    cfg.scenario.noise.shake_sigma_px = 40.0;
    cfg.scenario.noise.gust_prob = 0.1;
    cfg.scenario.noise.dropout_prob = 0.05;
    cfg.scenario.noise.confidence_range = (0.55, 0.95);
    cfg.scenario.robot_spacing_m = 80.0;
    cfg.scenario.drone_altitude_min_m = 65.0;
    cfg.scenario.drone_altitude_max_m = 85.0;
    cfg.pipeline.tracker.geo_gate_m = 250.0;
    cfg.scenario.seed = seed;

    let data = simulate_and_track(&cfg).unwrap();
    for (j, frames) in data.assignments.iter().enumerate() {
        let mut last: std::collections::BTreeMap<u64, u64> = Default::default();
        for (tick, frame) in frames.iter().enumerate() {
            for &(robot, gid) in frame {
                if let Some(prev) = last.insert(robot, gid) {
                    if prev != gid {
                        println!("drone {j} tick {tick}: robot {robot} {prev} -> {gid}");
                    }
                }
            }
        }
    }
    // Also dump how many detections each drone made per frame around switches
    println!("done");
}
