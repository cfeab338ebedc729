// Scratch probe: full per-tick view of tracker state around hybrid switches.

use seatrack::geodesy::GeodesyParams;
use seatrack::pipeline::{Pipeline, PipelineParams};
use seatrack::runner::RunConfig;
use seatrack::simulator::Simulator;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(302);
    let lo: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(590);
    let hi: u64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(610);
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

    let g = GeodesyParams::default();
    let mut sim = Simulator::new(&cfg.scenario).unwrap();
    let mut params = PipelineParams::default();
    params.tracker = cfg.pipeline.tracker;
    let mut pipeline = Pipeline::new(&[0, 1, 2], params, g).unwrap();
    for tick in 0..sim.total_ticks().min(hi + 1) {
        let frame = sim.render_frame(tick).unwrap();
        let rec = pipeline.process_frame(&frame).unwrap();
        if tick < lo || tick > hi {
            continue;
        }
        println!("== tick {tick}");
        for (j, obs) in frame.observations.iter().enumerate() {
            let labels = &frame.truth_labels[j];
            let dets: Vec<String> = obs
                .detections
                .iter()
                .zip(labels)
                .map(|(d, r)| format!("r{r}@({:.0},{:.0}) c{:.2}", d.bbox.center_x_px, d.bbox.center_y_px, d.confidence))
                .collect();
            let tracks: Vec<String> = pipeline.trackers()[j]
                .tracks()
                .iter()
                .map(|t| {
                    let d0 = g.haversine_distance(&t.filtered_geo, &frame.truth[0].1);
                    let d1 = g.haversine_distance(&t.filtered_geo, &frame.truth[1].1);
                    format!(
                        "id{} {:?} box({:.0},{:.0}) d0={d0:.1} d1={d1:.1}",
                        t.global_id,
                        t.state,
                        t.predicted_bbox().center_x_px,
                        t.predicted_bbox().center_y_px
                    )
                })
                .collect();
            println!("  drone{j} dets[{}] tracks[{}] assigns{:?}", dets.join("; "), tracks.join("; "), rec.assignments[j]);
        }
    }
}
